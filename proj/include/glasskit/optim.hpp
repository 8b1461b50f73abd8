#pragma once

#include "glasskit/parameters.hpp"

namespace glasskit::nn {

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// v <- momentum * v + (grad + weight_decay * w);  w <- w - lr * v. Clears grads.
template <class T>
void sgd_step(std::deque<Parameter<T>>& params, double lr, SgdOptions opt = {}) {
  for (auto& p : params)
    if (!p.tensor.has_grad()) throw InvalidInput("sgd_step: parameter " + p.name + " has no gradient");
  const T m = static_cast<T>(opt.momentum), wd = static_cast<T>(opt.weight_decay), rate = static_cast<T>(lr);
  for (auto& p : params) {
    auto w = p.tensor.mutable_values();
    auto g = p.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      p.momentum[i] = m * p.momentum[i] + (g[i] + wd * w[i]);
      w[i] -= rate * p.momentum[i];
    }
    p.tensor.zero_grad();
  }
}

template <class T>
void sgd_step(ParameterStore<T>& store, double lr, SgdOptions opt = {}) {
  sgd_step(store.parameters(), lr, opt);
}

}  // namespace glasskit::nn
