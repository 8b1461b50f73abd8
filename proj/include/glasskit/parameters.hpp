#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "glasskit/ops.hpp"
#include "glasskit/rng.hpp"

namespace glasskit::nn {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  std::vector<T> momentum;
};

/// Named non-trainable state saved alongside parameters (norm running stats).
template <class T>
struct Buffer {
  std::string name;
  std::vector<T>* values;
};

/// Owns every trainable tensor of a network, in registration order.
template <class T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  /// Zero-mean normal with std sqrt(2 / fan_in).
  Tensor<T> normal(const std::string& name, Shape shape, int fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max(fan_in, 1)));
    std::vector<T> values(nn::numel(shape));
    for (auto& v : values) v = static_cast<T>(dist(rng_));
    return add(name, std::move(shape), std::move(values));
  }

  Tensor<T> constant(const std::string& name, Shape shape, T value) {
    const auto count = nn::numel(shape);
    return add(name, std::move(shape), std::vector<T>(count, value));
  }

  BatchNormStats<T>& norm_stats(const std::string& name, int channels) {
    claim(name + ".running_mean");
    claim(name + ".running_var");
    stats_.push_back({name, BatchNormStats<T>(channels)});
    return stats_.back().second;
  }

  std::deque<Parameter<T>>& parameters() { return params_; }
  const std::deque<Parameter<T>>& parameters() const { return params_; }

  std::vector<Buffer<T>> buffers() {
    std::vector<Buffer<T>> out;
    for (auto& [name, s] : stats_) {
      out.push_back({name + ".running_mean", &s.running_mean});
      out.push_back({name + ".running_var", &s.running_var});
    }
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  void claim(const std::string& name) {
    if (!names_.insert(name).second) throw InvalidInput("duplicate parameter name: " + name);
  }

  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> values) {
    claim(name);
    auto t = Tensor<T>::from(std::move(shape), std::move(values), true);
    params_.push_back({name, t, std::vector<T>(t.numel(), T(0))});
    return t;
  }

  Rng rng_;
  std::deque<Parameter<T>> params_;
  std::deque<std::pair<std::string, BatchNormStats<T>>> stats_;
  std::unordered_set<std::string> names_;
};

}  // namespace glasskit::nn
