#pragma once

// Stream supervision: BCE + IoU on interior, glass and final maps, BCE alone on
// boundary maps, summed without weights.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "glasskit/ops.hpp"

namespace glasskit::nn {

/// Every supervised logit map of one forward pass, each [B,1,H,W] at input resolution.
template <class T>
struct PredictionBundle {
  Tensor<T> interior_map;  // undefined when the interior stream is disabled
  std::vector<Tensor<T>> boundary_maps;
  std::vector<Tensor<T>> glass_maps;
  Tensor<T> final_map;
  Tensor<T> glass_feature;  // glass-stream feature before fusion

  std::size_t supervised_count() const {
    return (interior_map.defined() ? 1 : 0) + boundary_maps.size() + glass_maps.size() + (final_map.defined() ? 1 : 0);
  }
};

/// Targets at prediction resolution, each [B,1,H,W].
template <class T>
struct SupervisionSet {
  Tensor<T> glass;
  Tensor<T> inner;
  Tensor<T> boundary;
};

template <class T>
struct LossBreakdown {
  T l_inner = 0, l_boundary = 0, l_glass = 0, l_final = 0, total = 0;
  int terms = 0;  // individual bce/iou evaluations summed into total
  Tensor<T> total_tensor;
};

namespace detail {
template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw InvalidInput(std::string(op) + ": prediction " + to_string(a.shape()) + " vs target " + to_string(b.shape()));
}
}  // namespace detail

/// Mean binary cross-entropy on logits, natural log, in the fused stable form
/// max(x,0) - x*g + log(1 + exp(-|x|)). Targets may be soft.
template <class T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  detail::require_same(logits, target, "bce_loss");
  const std::size_t n = logits.numel();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T x = logits.data()[i], g = target.data()[i];
    total += std::max(x, T(0)) - x * g + std::log1p(std::exp(-std::abs(x)));
  }
  auto back = [n](Node<T>& self) {
    auto* gx = grad_target(self, 0);
    if (!gx) return;
    auto& d = gx->grad_buffer();
    const T* x = self.inputs[0]->value.data();
    const T* g = self.inputs[1]->value.data();
    const T scale = self.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) d[i] += scale * (stable_sigmoid(x[i]) - g[i]);
  };
  return make_result<T>({1}, {total / static_cast<T>(n)}, {logits, target}, back);
}

/// Soft IoU loss 1 - sum(p*g) / sum(p + g - p*g), per image, averaged over the
/// batch. An image where both maps are empty contributes 0.
template <class T>
Tensor<T> iou_loss(const Tensor<T>& probs, const Tensor<T>& target) {
  detail::require_same(probs, target, "iou_loss");
  const int batch = probs.rank() == 4 ? probs.dim(0) : 1;
  const std::size_t plane = probs.numel() / batch;
  std::vector<T> inter(batch, 0), uni(batch, 0);
  T total = 0;
  for (int b = 0; b < batch; ++b) {
    for (std::size_t i = b * plane; i < (b + 1) * plane; ++i) {
      const T p = probs.data()[i], g = target.data()[i];
      inter[b] += p * g;
      uni[b] += p + g - p * g;
    }
    if (uni[b] > T(0)) total += T(1) - inter[b] / uni[b];
  }
  auto back = [=](Node<T>& self) {
    auto* gp = grad_target(self, 0);
    if (!gp) return;
    auto& d = gp->grad_buffer();
    const T* g = self.inputs[1]->value.data();
    const T scale = self.grad[0] / static_cast<T>(batch);
    for (int b = 0; b < batch; ++b) {
      if (!(uni[b] > T(0))) continue;
      const T u2 = uni[b] * uni[b];
      for (std::size_t i = b * plane; i < (b + 1) * plane; ++i)
        d[i] -= scale * (g[i] * uni[b] - inter[b] * (T(1) - g[i])) / u2;
    }
  };
  return make_result<T>({1}, {total / static_cast<T>(batch)}, {probs, target}, back);
}

/// BCE + IoU of one logit map against one target.
template <class T>
Tensor<T> bce_iou_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  return add(bce_loss(logits, target), iou_loss(sigmoid(logits), target));
}

/// Four-term stream loss; disabled streams contribute exact zeros.
template <class T>
LossBreakdown<T> total_loss(const PredictionBundle<T>& bundle, const SupervisionSet<T>& sup, std::size_t n_glass,
                            std::size_t n_boundary) {
  if (bundle.glass_maps.size() != n_glass || bundle.boundary_maps.size() != n_boundary)
    throw InvalidInput("total_loss: bundle has " + std::to_string(bundle.glass_maps.size()) + " glass / " +
                       std::to_string(bundle.boundary_maps.size()) + " boundary maps, expected " +
                       std::to_string(n_glass) + " / " + std::to_string(n_boundary));
  if (!bundle.final_map.defined()) throw InvalidInput("total_loss: bundle has no final map");
  LossBreakdown<T> out;
  const auto zero = Tensor<T>::scalar(T(0));

  Tensor<T> inner = zero;
  if (bundle.interior_map.defined()) {
    inner = bce_iou_loss(bundle.interior_map, sup.inner);
    out.terms += 2;
  }
  Tensor<T> boundary = zero;
  for (std::size_t k = 0; k < n_boundary; ++k) {
    auto term = bce_loss(bundle.boundary_maps[k], sup.boundary);
    boundary = k == 0 ? term : add(boundary, term);
    out.terms += 1;
  }
  Tensor<T> glass = zero;
  for (std::size_t k = 0; k < n_glass; ++k) {
    auto term = bce_iou_loss(bundle.glass_maps[k], sup.glass);
    glass = k == 0 ? term : add(glass, term);
    out.terms += 2;
  }
  Tensor<T> fin = bce_iou_loss(bundle.final_map, sup.glass);
  out.terms += 2;

  out.total_tensor = add(add(add(inner, boundary), glass), fin);
  out.l_inner = inner.item();
  out.l_boundary = boundary.item();
  out.l_glass = glass.item();
  out.l_final = fin.item();
  out.total = out.total_tensor.item();
  return out;
}

/// One progress line: "iter k lr v l_inner a l_boundary b l_glass c l_final d total t".
template <class T>
std::string format_loss_line(int iter, double lr, const LossBreakdown<T>& l) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "iter %d lr %.6g l_inner %.6f l_boundary %.6f l_glass %.6f l_final %.6f total %.6f",
                iter, lr, static_cast<double>(l.l_inner), static_cast<double>(l.l_boundary),
                static_cast<double>(l.l_glass), static_cast<double>(l.l_final), static_cast<double>(l.total));
  return buf;
}

}  // namespace glasskit::nn
