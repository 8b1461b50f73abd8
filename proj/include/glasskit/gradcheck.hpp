#pragma once

// Central finite-difference verification of analytic gradients, in double.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "glasskit/losses.hpp"
#include "glasskit/network.hpp"
#include "glasskit/rng.hpp"

namespace glasskit::nn {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  double denominator_floor = 1e-6;
  std::size_t max_coords_per_tensor = 24;
  // The whole-network loss carries ~1e-14 of rounding noise, so a difference
  // quotient cannot resolve gradients much below 1e-5 in relative terms.
  double network_denominator_floor = 1e-4;
  std::size_t network_coords_per_tensor = 6;
};

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a ReLU kink
  bool passed = false;
  // Coordinate with the largest error: input index, flat offset, both estimates.
  std::size_t worst_input = 0, worst_index = 0;
  double worst_analytic = 0, worst_numeric = 0;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares d(loss)/d(input) from backward() against central differences on a
/// sample of coordinates of every input. `loss` rebuilds the graph on each call.
inline GradcheckResult check_gradients(const std::string& name, std::vector<Tensor<double>> inputs,
                                       const std::function<Tensor<double>()>& loss, Rng& rng,
                                       const GradcheckOptions& opt = {}) {
  GradcheckResult r{name};
  for (auto& t : inputs) t.zero_grad();
  KinkMonitor::start();
  auto l = loss();
  const auto base_pattern = KinkMonitor::stop();
  backward(l);
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs)
    analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                       : std::vector<double>(t.numel(), 0.0));

  auto probe = [&](double& slot, double value, std::uint64_t& pattern) {
    const double saved = slot;
    slot = value;
    NoGradGuard guard;
    KinkMonitor::start();
    const double f = loss().item();
    pattern = KinkMonitor::stop();
    slot = saved;
    return f;
  };

  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& t = inputs[ti];
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opt.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      double& slot = t.mutable_data()[i];
      const double x = slot;
      std::uint64_t up_pattern = 0, down_pattern = 0;
      const double up = probe(slot, x + opt.step, up_pattern);
      const double down = probe(slot, x - opt.step, down_pattern);
      if (up_pattern != base_pattern || down_pattern != base_pattern) {
        ++r.skipped;
        continue;
      }
      const double numeric = (up - down) / (2 * opt.step);
      const double err = relative_error(analytic[ti][i], numeric, opt.denominator_floor);
      if (err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst_input = ti;
        r.worst_index = i;
        r.worst_analytic = analytic[ti][i];
        r.worst_numeric = numeric;
      }
      ++r.checked;
    }
  }
  for (auto& t : inputs) t.zero_grad();
  r.passed = r.checked > 0 && r.max_rel_error <= opt.tolerance;
  return r;
}

namespace detail {

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return Tensor<double>::from(std::move(shape), std::move(v), true);
}

/// Fixed random projection so that vector-valued ops reduce to a scalar with
/// non-trivial upstream gradients.
inline Tensor<double> project(const Tensor<double>& y, const Tensor<double>& weights) {
  return sum(mul(y, weights));
}

}  // namespace detail

/// Reduced configuration used for the end-to-end check on 16x16 inputs.
inline NetworkConfig gradcheck_network_config() {
  NetworkConfig cfg;
  cfg.input_size = 16;
  cfg.encoder_channels = {8, 8, 8, 8, 8};
  cfg.decoder_width = 8;
  cfg.se_reduction = 4;
  return cfg;
}

/// The full layer-by-layer suite. Results are in a fixed order; `log`, when
/// given, receives one line per check.
inline std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, std::ostream* log = nullptr,
                                                        const GradcheckOptions& opt = {}) {
  using detail::project;
  using detail::random_tensor;
  using D = double;
  using TD = Tensor<D>;
  Rng rng(derive_seed(seed, "gradcheck"));
  std::vector<GradcheckResult> results;
  auto run = [&](const std::string& name, std::vector<TD> inputs, const std::function<TD()>& loss) {
    results.push_back(check_gradients(name, std::move(inputs), loss, rng, opt));
    const auto& r = results.back();
    if (log)
      *log << (r.passed ? "ok   " : "FAIL ") << r.name << "  max_rel_err " << r.max_rel_error << "  checked "
           << r.checked << "  skipped " << r.skipped << '\n';
  };

  for (int dil : {1, 2, 4, 8, 16}) {
    const int size = std::max(6, dil + 3);
    auto x = random_tensor(rng, {2, 3, size, size});
    auto w = random_tensor(rng, {4, 3, 3, 3});
    auto b = random_tensor(rng, {4});
    auto proj = random_tensor(rng, {2, 4, size, size}).detach();
    run("conv2d dilation " + std::to_string(dil), {x, w, b},
        [=] { return project(conv2d(x, w, b, {1, dil, dil}), proj); });
  }
  {
    auto x = random_tensor(rng, {2, 3, 7, 7});
    auto w = random_tensor(rng, {5, 3, 3, 3});
    auto proj = random_tensor(rng, {2, 5, 4, 4}).detach();
    run("conv2d stride 2", {x, w}, [=] { return project(conv2d(x, w, TD(), {2, 1, 1}), proj); });
  }
  {
    auto x = random_tensor(rng, {2, 4, 5, 5});
    auto w = random_tensor(rng, {3, 4, 1, 1});
    auto b = random_tensor(rng, {3});
    auto proj = random_tensor(rng, {2, 3, 5, 5}).detach();
    run("conv2d pointwise", {x, w, b}, [=] { return project(conv2d(x, w, b, {}), proj); });
  }
  for (bool training : {true, false}) {
    auto x = random_tensor(rng, {3, 4, 3, 3});
    auto gamma = random_tensor(rng, {4}, 0.5, 1.5);
    auto beta = random_tensor(rng, {4});
    auto proj = random_tensor(rng, {3, 4, 3, 3}).detach();
    auto stats = std::make_shared<BatchNormStats<D>>(4);
    for (int c = 0; c < 4; ++c) {
      stats->running_mean[c] = uniform(rng, -0.5, 0.5);
      stats->running_var[c] = uniform(rng, 0.5, 2.0);
    }
    run(training ? "batch_norm train" : "batch_norm eval", {x, gamma, beta},
        [=] { return project(batch_norm(x, gamma, beta, *stats, training), proj); });
  }
  {
    auto x = random_tensor(rng, {2, 3, 4, 4}, -6, 6);
    auto proj = random_tensor(rng, {2, 3, 4, 4}).detach();
    run("sigmoid", {x}, [=] { return project(sigmoid(x), proj); });
    run("relu", {x}, [=] { return project(relu(x), proj); });
  }
  {
    auto a = random_tensor(rng, {2, 3, 4, 4});
    auto b = random_tensor(rng, {2, 1, 4, 4});
    auto c = random_tensor(rng, {2, 3, 1, 1});
    auto proj = random_tensor(rng, {2, 3, 4, 4}).detach();
    run("add broadcast", {a, b}, [=] { return project(add(a, b), proj); });
    run("mul broadcast channel", {a, b}, [=] { return project(mul(a, b), proj); });
    run("mul broadcast spatial", {a, c}, [=] { return project(mul(a, c), proj); });
  }
  {
    auto a = random_tensor(rng, {2, 2, 3, 3});
    auto b = random_tensor(rng, {2, 3, 3, 3});
    auto proj = random_tensor(rng, {2, 5, 3, 3}).detach();
    run("concat_channels", {a, b}, [=] { return project(concat_channels<D>({a, b}), proj); });
  }
  {
    auto x = random_tensor(rng, {2, 2, 3, 5});
    auto up = random_tensor(rng, {2, 2, 7, 8}).detach();
    auto down = random_tensor(rng, {2, 2, 2, 3}).detach();
    run("bilinear_resize up", {x}, [=] { return project(bilinear_resize(x, 7, 8), up); });
    run("bilinear_resize down", {x}, [=] { return project(bilinear_resize(x, 2, 3), down); });
  }
  {
    auto x = random_tensor(rng, {2, 3, 4, 5});
    auto proj = random_tensor(rng, {2, 3, 1, 1}).detach();
    run("global_avg_pool", {x}, [=] { return project(global_avg_pool(x), proj); });
  }
  {
    auto x = random_tensor(rng, {3, 4});
    auto w = random_tensor(rng, {4, 5});
    auto b = random_tensor(rng, {5});
    auto proj = random_tensor(rng, {3, 5}).detach();
    run("linear", {x, w, b}, [=] { return project(linear(x, w, b), proj); });
  }
  {
    auto store = std::make_shared<ParameterStore<D>>(derive_seed(seed, "gradcheck.se"));
    auto se = std::make_shared<SeBlock<D>>(*store, "se", 4, 2);
    for (auto& p : store->parameters())
      for (auto& v : p.tensor.mutable_values()) v += uniform(rng, -0.3, 0.3);
    auto x = random_tensor(rng, {2, 4, 3, 3});
    auto proj = random_tensor(rng, {2, 4, 3, 3}).detach();
    std::vector<TD> inputs{x};
    for (auto& p : store->parameters()) inputs.push_back(p.tensor);
    run("se_block", inputs, [=] { return project((*se)(x), proj); });
  }
  {
    auto logits = random_tensor(rng, {2, 1, 4, 4}, -4, 4);
    auto target = random_tensor(rng, {2, 1, 4, 4}, 0, 1).detach();
    auto probs = random_tensor(rng, {2, 1, 4, 4}, 0.05, 0.95);
    run("bce_loss", {logits}, [=] { return bce_loss(logits, target); });
    run("iou_loss", {probs}, [=] { return iou_loss(probs, target); });
  }
  {
    const Shape map{2, 1, 5, 5};
    PredictionBundle<D> bundle;
    std::vector<TD> inputs;
    bundle.interior_map = random_tensor(rng, map, -3, 3);
    inputs.push_back(bundle.interior_map);
    for (std::size_t k = 0; k < kBoundaryBranches; ++k) inputs.push_back(bundle.boundary_maps.emplace_back(random_tensor(rng, map, -3, 3)));
    for (std::size_t k = 0; k < kGlassBranches; ++k) inputs.push_back(bundle.glass_maps.emplace_back(random_tensor(rng, map, -3, 3)));
    bundle.final_map = random_tensor(rng, map, -3, 3);
    inputs.push_back(bundle.final_map);
    SupervisionSet<D> sup;
    sup.glass = random_tensor(rng, map, 0, 1).detach();
    for (auto& v : sup.glass.mutable_values()) v = v < 0.5 ? 0 : 1;
    sup.inner = random_tensor(rng, map, 0, 1).detach();
    for (std::size_t i = 0; i < sup.inner.numel(); ++i) sup.inner.mutable_data()[i] *= sup.glass.data()[i];
    sup.boundary = TD::zeros(map);
    for (std::size_t i = 0; i < sup.inner.numel(); ++i)
      sup.boundary.mutable_data()[i] = sup.glass.data()[i] - sup.inner.data()[i];
    run("total_loss", inputs,
        [=] { return total_loss(bundle, sup, kGlassBranches, kBoundaryBranches).total_tensor; });
  }
  {
    auto net = std::make_shared<GlassNet<D>>(gradcheck_network_config(), derive_seed(seed, "gradcheck.net"));
    // Non-zero biases and affine offsets so no parameter sits at a trivial point.
    for (auto& p : net->parameters().parameters())
      for (auto& v : p.tensor.mutable_values()) v += uniform(rng, -0.1, 0.1);
    auto image = random_tensor(rng, {2, 3, 16, 16}, 0, 1);
    SupervisionSet<D> sup;
    const Shape map{2, 1, 16, 16};
    sup.glass = TD::zeros(map);
    sup.inner = TD::zeros(map);
    sup.boundary = TD::zeros(map);
    for (int b = 0; b < 2; ++b)
      for (int y = 4; y < 12; ++y)
        for (int x = 3 + b; x < 13; ++x) {
          const std::size_t i = (static_cast<std::size_t>(b) * 16 + y) * 16 + x;
          const double d = std::min({y - 3, 12 - y, x - 2 - b, 13 - x}) / 4.0;
          sup.glass.mutable_data()[i] = 1;
          sup.inner.mutable_data()[i] = std::min(d, 1.0);
          sup.boundary.mutable_data()[i] = 1 - std::min(d, 1.0);
        }
    std::vector<TD> inputs{image};
    for (auto& p : net->parameters().parameters()) inputs.push_back(p.tensor);
    auto net_opt = opt;
    net_opt.max_coords_per_tensor = opt.network_coords_per_tensor;
    net_opt.denominator_floor = opt.network_denominator_floor;
    results.push_back(check_gradients(
        "glassnet 16x16 end to end", inputs,
        [=] { return network_loss(*net, net->forward(image, true), sup).total_tensor; }, rng, net_opt));
    const auto& r = results.back();
    if (log)
      *log << (r.passed ? "ok   " : "FAIL ") << r.name << "  max_rel_err " << r.max_rel_error << "  checked "
           << r.checked << "  skipped " << r.skipped << '\n';
  }
  return results;
}

inline bool all_passed(const std::vector<GradcheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const GradcheckResult& r) { return r.passed; });
}

}  // namespace glasskit::nn
