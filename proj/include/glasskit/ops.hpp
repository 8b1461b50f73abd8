#pragma once

// Differentiable operators over nn::Tensor. Image tensors are NCHW.

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "glasskit/tensor.hpp"

namespace glasskit::nn {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

namespace detail {
inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank)
    throw InvalidInput(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
}
}  // namespace detail

/// Records the sign pattern of every ReLU input while active. Finite-difference
/// checks compare patterns to tell whether a perturbation crossed a kink.
class KinkMonitor {
 public:
  static bool active() { return state().active; }
  static void start() { state() = {true, 1469598103934665603ull}; }
  static std::uint64_t stop() {
    state().active = false;
    return state().hash;
  }
  static void mix(std::uint64_t bit) {
    auto& s = state();
    s.hash = (s.hash ^ bit) * 1099511628211ull;
  }

 private:
  struct State {
    bool active = false;
    std::uint64_t hash = 0;
  };
  static State& state() {
    thread_local State s;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Convolution

struct Conv2dSpec {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

inline int conv_out_extent(int in, int kernel, const Conv2dSpec& s) {
  return (in + 2 * s.padding - s.dilation * (kernel - 1) - 1) / s.stride + 1;
}

namespace detail {

template <class T>
void im2col(const T* x, int channels, int h, int w, int k, const Conv2dSpec& s, int oh, int ow, T* col) {
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * plane;
        const int x_off = kj * s.dilation - s.padding;
        for (int oy = 0; oy < oh; ++oy) {
          T* out = row + static_cast<std::size_t>(oy) * ow;
          const int iy = oy * s.stride - s.padding + ki * s.dilation;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + ow, T(0));
            continue;
          }
          const T* in = x + (static_cast<std::size_t>(c) * h + iy) * w;
          if (s.stride == 1) {
            const int lo = std::clamp(-x_off, 0, ow);
            const int hi = std::clamp(w - x_off, lo, ow);
            std::fill(out, out + lo, T(0));
            if (hi > lo) std::memcpy(out + lo, in + lo + x_off, sizeof(T) * (hi - lo));
            std::fill(out + hi, out + ow, T(0));
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * s.stride + x_off;
              out[ox] = (ix >= 0 && ix < w) ? in[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, int channels, int h, int w, int k, const Conv2dSpec& s, int oh, int ow, T* x) {
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * plane;
        const int x_off = kj * s.dilation - s.padding;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.padding + ki * s.dilation;
          if (iy < 0 || iy >= h) continue;
          const T* in = row + static_cast<std::size_t>(oy) * ow;
          T* out = x + (static_cast<std::size_t>(c) * h + iy) * w;
          if (s.stride == 1) {
            const int lo = std::clamp(-x_off, 0, ow);
            const int hi = std::clamp(w - x_off, lo, ow);
            for (int ox = lo; ox < hi; ++ox) out[ox + x_off] += in[ox];
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * s.stride + x_off;
              if (ix >= 0 && ix < w) out[ix] += in[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation with optional dilation. weight is [Cout, Cin, k, k];
/// bias ([Cout]) may be left undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dSpec spec) {
  detail::require_rank(x.shape(), 4, "conv2d input");
  detail::require_rank(weight.shape(), 4, "conv2d weight");
  if (spec.stride < 1 || spec.dilation < 1 || spec.padding < 0)
    throw InvalidInput("conv2d: stride and dilation must be positive, padding non-negative");
  const int batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin || weight.dim(3) != k)
    throw InvalidInput("conv2d: weight " + to_string(weight.shape()) + " does not match input " + to_string(x.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout))
    throw InvalidInput("conv2d: bias must be [" + std::to_string(cout) + "]");
  const int oh = conv_out_extent(h, k, spec), ow = conv_out_extent(w, k, spec);
  if (oh < 1 || ow < 1) throw InvalidInput("conv2d: kernel does not fit the padded input");

  const int kdim = cin * k * k;
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  const bool pointwise = k == 1 && spec.stride == 1 && spec.padding == 0;
  std::vector<T> out(static_cast<std::size_t>(batch) * cout * plane);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(kdim) * plane);
  Eigen::Map<const RowMatrix<T>> wm(weight.data(), cout, kdim);
  for (int n = 0; n < batch; ++n) {
    const T* xn = x.data() + static_cast<std::size_t>(n) * cin * h * w;
    if (!pointwise) detail::im2col(xn, cin, h, w, k, spec, oh, ow, col.data());
    Eigen::Map<const RowMatrix<T>> cm(pointwise ? xn : col.data(), kdim, plane);
    Eigen::Map<RowMatrix<T>> ym(out.data() + static_cast<std::size_t>(n) * cout * plane, cout, plane);
    ym.noalias() = wm * cm;
    if (bias.defined()) ym.colwise() += Eigen::Map<const ColVector<T>>(bias.data(), cout);
  }

  auto back = [=](Node<T>& self) {
    Node<T>* gx = grad_target(self, 0);
    Node<T>* gw = grad_target(self, 1);
    Node<T>* gb = self.inputs.size() > 2 ? grad_target(self, 2) : nullptr;
    const T* xv = self.inputs[0]->value.data();
    Eigen::Map<const RowMatrix<T>> wm(self.inputs[1]->value.data(), cout, kdim);
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(kdim) * plane);
    std::vector<T> dcol(pointwise || !gx ? 0 : static_cast<std::size_t>(kdim) * plane);
    for (int n = 0; n < batch; ++n) {
      Eigen::Map<const RowMatrix<T>> dy(self.grad.data() + static_cast<std::size_t>(n) * cout * plane, cout, plane);
      const T* xn = xv + static_cast<std::size_t>(n) * cin * h * w;
      if (gw) {
        if (!pointwise) detail::im2col(xn, cin, h, w, k, spec, oh, ow, col.data());
        Eigen::Map<const RowMatrix<T>> cm(pointwise ? xn : col.data(), kdim, plane);
        Eigen::Map<RowMatrix<T>> dw(gw->grad_buffer().data(), cout, kdim);
        dw.noalias() += dy * cm.transpose();
      }
      if (gb) {
        auto& db = gb->grad_buffer();
        for (int o = 0; o < cout; ++o) {
          T acc = 0;
          for (std::size_t p = 0; p < plane; ++p) acc += dy(o, p);
          db[o] += acc;
        }
      }
      if (gx) {
        T* dxn = gx->grad_buffer().data() + static_cast<std::size_t>(n) * cin * h * w;
        if (pointwise) {
          Eigen::Map<RowMatrix<T>>(dxn, kdim, plane).noalias() += wm.transpose() * dy;
        } else {
          Eigen::Map<RowMatrix<T>>(dcol.data(), kdim, plane).noalias() = wm.transpose() * dy;
          detail::col2im(dcol.data(), cin, h, w, k, spec, oh, ow, dxn);
        }
      }
    }
  };
  return make_result<T>({batch, cout, oh, ow}, std::move(out), {x, weight, bias}, back);
}

// ---------------------------------------------------------------------------
// Batch normalization

template <class T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  explicit BatchNormStats(int channels = 0) : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

/// Per-channel standardization then affine. Training mode normalizes with batch
/// statistics and folds them into `stats` (unbiased variance, momentum 0.1);
/// eval mode uses the running estimates.
template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormStats<T>& stats,
                     bool training, T momentum = T(0.1), T eps = T(1e-5)) {
  detail::require_rank(x.shape(), 4, "batch_norm");
  const int batch = x.dim(0), channels = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const auto nc = static_cast<std::size_t>(channels);
  if (gamma.numel() != nc || beta.numel() != nc || stats.running_mean.size() != nc || stats.running_var.size() != nc)
    throw InvalidInput("batch_norm: input has " + std::to_string(channels) + " channels, parameters have " +
                       std::to_string(gamma.numel()));
  const std::size_t count = static_cast<std::size_t>(batch) * plane;
  const T* xv = x.data();
  std::vector<T> out(x.numel()), means(channels), inv_std(channels);

  auto base_of = [=](int n, int c) { return (static_cast<std::size_t>(n) * channels + c) * plane; };
  for (int c = 0; c < channels; ++c) {
    T mean, var;
    if (training) {
      T sum = 0;
      for (int n = 0; n < batch; ++n)
        for (std::size_t i = 0, b = base_of(n, c); i < plane; ++i) sum += xv[b + i];
      mean = sum / static_cast<T>(count);
      T sq = 0;
      for (int n = 0; n < batch; ++n)
        for (std::size_t i = 0, b = base_of(n, c); i < plane; ++i) sq += (xv[b + i] - mean) * (xv[b + i] - mean);
      var = sq / static_cast<T>(count);
      const T unbiased = count > 1 ? sq / static_cast<T>(count - 1) : var;
      stats.running_mean[c] = (T(1) - momentum) * stats.running_mean[c] + momentum * mean;
      stats.running_var[c] = (T(1) - momentum) * stats.running_var[c] + momentum * unbiased;
    } else {
      mean = stats.running_mean[c];
      var = stats.running_var[c];
    }
    means[c] = mean;
    inv_std[c] = T(1) / std::sqrt(var + eps);
    const T g = gamma.data()[c] * inv_std[c], b = beta.data()[c];
    for (int n = 0; n < batch; ++n)
      for (std::size_t i = 0, o = base_of(n, c); i < plane; ++i) out[o + i] = g * (xv[o + i] - mean) + b;
  }

  auto back = [=](Node<T>& self) {
    Node<T>* gx = grad_target(self, 0);
    Node<T>* gg = grad_target(self, 1);
    Node<T>* gb = grad_target(self, 2);
    const T* dy = self.grad.data();
    const T* xin = self.inputs[0]->value.data();
    const T* gam = self.inputs[1]->value.data();
    const T m = static_cast<T>(count);
    for (int c = 0; c < channels; ++c) {
      const T mean = means[c], is = inv_std[c];
      T sum_dy = 0, sum_dy_xh = 0;
      for (int n = 0; n < batch; ++n)
        for (std::size_t i = 0, o = base_of(n, c); i < plane; ++i) {
          sum_dy += dy[o + i];
          sum_dy_xh += dy[o + i] * (xin[o + i] - mean) * is;
        }
      if (gg) gg->grad_buffer()[c] += sum_dy_xh;
      if (gb) gb->grad_buffer()[c] += sum_dy;
      if (!gx) continue;
      auto& dx = gx->grad_buffer();
      const T scale = gam[c] * is;
      for (int n = 0; n < batch; ++n)
        for (std::size_t i = 0, o = base_of(n, c); i < plane; ++i) {
          if (training) {
            const T xh = (xin[o + i] - mean) * is;
            dx[o + i] += scale * (dy[o + i] - sum_dy / m - xh * sum_dy_xh / m);
          } else {
            dx[o + i] += scale * dy[o + i];
          }
        }
    }
  };
  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta}, back);
}

// ---------------------------------------------------------------------------
// Pointwise

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const T* v = x.data();
  const bool monitor = KinkMonitor::active();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = v[i] > T(0) ? v[i] : T(0);
    if (monitor) KinkMonitor::mix(v[i] > T(0) ? 2 : 1);
  }
  auto back = [](Node<T>& self) {
    auto& dx = self.inputs[0]->grad_buffer();
    const auto& in = self.inputs[0]->value;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (in[i] > T(0)) dx[i] += self.grad[i];
  };
  return make_result<T>(x.shape(), std::move(out), {x}, back);
}

template <class T>
T stable_sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(x.data()[i]);
  auto back = [](Node<T>& self) {
    auto& dx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T s = self.value[i];
      dx[i] += self.grad[i] * s * (T(1) - s);
    }
  };
  return make_result<T>(x.shape(), std::move(out), {x}, back);
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  auto back = [factor](Node<T>& self) {
    auto& dx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * factor;
  };
  return make_result<T>(x.shape(), std::move(out), {x}, back);
}

namespace detail {

// Operand extents must equal the result extent or be 1 along every axis.
struct BroadcastPlan {
  Shape out;
  std::array<int, 4> extent{1, 1, 1, 1};
  std::array<std::size_t, 4> stride_a{}, stride_b{};
};

inline BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size() || a.size() > 4 || a.empty())
    throw InvalidInput(std::string(op) + ": cannot broadcast " + to_string(a) + " with " + to_string(b));
  BroadcastPlan p;
  p.out.resize(a.size());
  const std::size_t pad = 4 - a.size();
  std::size_t sa = 1, sb = 1;
  for (int i = static_cast<int>(a.size()) - 1; i >= 0; --i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1)
      throw InvalidInput(std::string(op) + ": cannot broadcast " + to_string(a) + " with " + to_string(b));
    p.out[i] = std::max(a[i], b[i]);
    p.extent[pad + i] = p.out[i];
    p.stride_a[pad + i] = a[i] == 1 ? 0 : sa;
    p.stride_b[pad + i] = b[i] == 1 ? 0 : sb;
    sa *= a[i];
    sb *= b[i];
  }
  return p;
}

template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  std::size_t o = 0;
  for (int i0 = 0; i0 < p.extent[0]; ++i0)
    for (int i1 = 0; i1 < p.extent[1]; ++i1)
      for (int i2 = 0; i2 < p.extent[2]; ++i2) {
        std::size_t ia = i0 * p.stride_a[0] + i1 * p.stride_a[1] + i2 * p.stride_a[2];
        std::size_t ib = i0 * p.stride_b[0] + i1 * p.stride_b[1] + i2 * p.stride_b[2];
        for (int i3 = 0; i3 < p.extent[3]; ++i3, ++o, ia += p.stride_a[3], ib += p.stride_b[3]) f(o, ia, ib);
      }
}

}  // namespace detail

/// Elementwise sum with size-1 broadcasting on either operand.
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto back = [](Node<T>& self) {
      for (std::size_t k = 0; k < 2; ++k)
        if (auto* g = grad_target(self, k)) {
          auto& d = g->grad_buffer();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
        }
    };
    return make_result<T>(a.shape(), std::move(out), {a, b}, back);
  }
  const auto plan = detail::plan_broadcast(a.shape(), b.shape(), "add");
  std::vector<T> out(numel(plan.out));
  detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = a.data()[ia] + b.data()[ib];
  });
  auto back = [plan](Node<T>& self) {
    Node<T>* ga = grad_target(self, 0);
    Node<T>* gb = grad_target(self, 1);
    T* da = ga ? ga->grad_buffer().data() : nullptr;
    T* db = gb ? gb->grad_buffer().data() : nullptr;
    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (da) da[ia] += self.grad[o];
      if (db) db[ib] += self.grad[o];
    });
  };
  return make_result<T>(plan.out, std::move(out), {a, b}, back);
}

/// Elementwise product with size-1 broadcasting on either operand.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto plan = detail::plan_broadcast(a.shape(), b.shape(), "mul");
  std::vector<T> out(numel(plan.out));
  detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = a.data()[ia] * b.data()[ib];
  });
  auto back = [plan](Node<T>& self) {
    Node<T>* ga = grad_target(self, 0);
    Node<T>* gb = grad_target(self, 1);
    T* da = ga ? ga->grad_buffer().data() : nullptr;
    T* db = gb ? gb->grad_buffer().data() : nullptr;
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    detail::for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (da) da[ia] += self.grad[o] * bv[ib];
      if (db) db[ib] += self.grad[o] * av[ia];
    });
  };
  return make_result<T>(plan.out, std::move(out), {a, b}, back);
}

/// Stack NCHW tensors along the channel axis.
template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw InvalidInput("concat_channels: nothing to concatenate");
  detail::require_rank(parts[0].shape(), 4, "concat_channels");
  const int batch = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<int> offsets;
  int channels = 0;
  for (const auto& p : parts) {
    detail::require_rank(p.shape(), 4, "concat_channels");
    if (p.dim(0) != batch || p.dim(2) != h || p.dim(3) != w)
      throw InvalidInput("concat_channels: " + to_string(p.shape()) + " does not match " + to_string(parts[0].shape()));
    offsets.push_back(channels);
    channels += p.dim(1);
  }
  std::vector<T> out(static_cast<std::size_t>(batch) * channels * plane);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t chunk = static_cast<std::size_t>(parts[k].dim(1)) * plane;
    for (int n = 0; n < batch; ++n)
      std::copy_n(parts[k].data() + n * chunk, chunk, out.data() + (static_cast<std::size_t>(n) * channels + offsets[k]) * plane);
  }
  auto back = [=](Node<T>& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node<T>* g = grad_target(self, k);
      if (!g) continue;
      auto& d = g->grad_buffer();
      const std::size_t chunk = static_cast<std::size_t>(g->shape[1]) * plane;
      for (int n = 0; n < batch; ++n) {
        const T* src = self.grad.data() + (static_cast<std::size_t>(n) * channels + offsets[k]) * plane;
        for (std::size_t i = 0; i < chunk; ++i) d[n * chunk + i] += src[i];
      }
    }
  };
  return make_result<T>({batch, channels, h, w}, std::move(out), parts, back);
}

// ---------------------------------------------------------------------------
// Resampling and pooling

namespace detail {
struct LinearTap {
  int lo, hi;
  double frac;
};

// Half-pixel-centre source taps (align_corners = false).
inline std::vector<LinearTap> bilinear_taps(int in, int out) {
  std::vector<LinearTap> taps(out);
  const double ratio = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(src);
    if (lo > in - 1) lo = in - 1;
    const int hi = lo < in - 1 ? lo + 1 : lo;
    taps[i] = {lo, hi, src - lo};
  }
  return taps;
}
}  // namespace detail

template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w) {
  detail::require_rank(x.shape(), 4, "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw InvalidInput("bilinear_resize: output extents must be positive");
  const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h == out_h && w == out_w) {
    auto back = [](Node<T>& self) {
      auto& d = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    };
    return make_result<T>(x.shape(), std::vector<T>(x.values().begin(), x.values().end()), {x}, back);
  }
  const auto ty = detail::bilinear_taps(h, out_h), tx = detail::bilinear_taps(w, out_w);
  std::vector<T> out(static_cast<std::size_t>(planes) * out_h * out_w);
  for (int p = 0; p < planes; ++p) {
    const T* src = x.data() + static_cast<std::size_t>(p) * h * w;
    T* dst = out.data() + static_cast<std::size_t>(p) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const T fy = static_cast<T>(ty[oy].frac);
      const T* r0 = src + static_cast<std::size_t>(ty[oy].lo) * w;
      const T* r1 = src + static_cast<std::size_t>(ty[oy].hi) * w;
      for (int ox = 0; ox < out_w; ++ox) {
        const T fx = static_cast<T>(tx[ox].frac);
        const T top = r0[tx[ox].lo] * (T(1) - fx) + r0[tx[ox].hi] * fx;
        const T bot = r1[tx[ox].lo] * (T(1) - fx) + r1[tx[ox].hi] * fx;
        dst[static_cast<std::size_t>(oy) * out_w + ox] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  auto back = [=](Node<T>& self) {
    auto& d = self.inputs[0]->grad_buffer();
    for (int p = 0; p < planes; ++p) {
      T* gsrc = d.data() + static_cast<std::size_t>(p) * h * w;
      const T* g = self.grad.data() + static_cast<std::size_t>(p) * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const T fy = static_cast<T>(ty[oy].frac);
        T* r0 = gsrc + static_cast<std::size_t>(ty[oy].lo) * w;
        T* r1 = gsrc + static_cast<std::size_t>(ty[oy].hi) * w;
        for (int ox = 0; ox < out_w; ++ox) {
          const T fx = static_cast<T>(tx[ox].frac);
          const T v = g[static_cast<std::size_t>(oy) * out_w + ox];
          r0[tx[ox].lo] += v * (T(1) - fy) * (T(1) - fx);
          r0[tx[ox].hi] += v * (T(1) - fy) * fx;
          r1[tx[ox].lo] += v * fy * (T(1) - fx);
          r1[tx[ox].hi] += v * fy * fx;
        }
      }
    }
  };
  return make_result<T>({x.dim(0), x.dim(1), out_h, out_w}, std::move(out), {x}, back);
}

/// [B,C,H,W] -> [B,C,1,1] channel means.
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 4, "global_avg_pool");
  const int planes = x.dim(0) * x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<T> out(planes);
  for (int p = 0; p < planes; ++p) {
    T sum = 0;
    for (std::size_t i = 0; i < plane; ++i) sum += x.data()[p * plane + i];
    out[p] = sum / static_cast<T>(plane);
  }
  auto back = [=](Node<T>& self) {
    auto& d = self.inputs[0]->grad_buffer();
    for (int p = 0; p < planes; ++p) {
      const T g = self.grad[p] / static_cast<T>(plane);
      for (std::size_t i = 0; i < plane; ++i) d[p * plane + i] += g;
    }
  };
  return make_result<T>({x.dim(0), x.dim(1), 1, 1}, std::move(out), {x}, back);
}

/// x[B,C] * weight[C,C'] + bias[C'].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require_rank(x.shape(), 2, "linear input");
  detail::require_rank(weight.shape(), 2, "linear weight");
  const int batch = x.dim(0), cin = x.dim(1), cout = weight.dim(1);
  if (weight.dim(0) != cin) throw InvalidInput("linear: weight " + to_string(weight.shape()) + " vs input " + to_string(x.shape()));
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(cout)) throw InvalidInput("linear: bias size mismatch");
  std::vector<T> out(static_cast<std::size_t>(batch) * cout);
  Eigen::Map<RowMatrix<T>> y(out.data(), batch, cout);
  y.noalias() = Eigen::Map<const RowMatrix<T>>(x.data(), batch, cin) * Eigen::Map<const RowMatrix<T>>(weight.data(), cin, cout);
  if (bias.defined()) y.rowwise() += Eigen::Map<const ColVector<T>>(bias.data(), cout).transpose();
  auto back = [=](Node<T>& self) {
    Eigen::Map<const RowMatrix<T>> dy(self.grad.data(), batch, cout);
    if (auto* gx = grad_target(self, 0))
      Eigen::Map<RowMatrix<T>>(gx->grad_buffer().data(), batch, cin).noalias() +=
          dy * Eigen::Map<const RowMatrix<T>>(self.inputs[1]->value.data(), cin, cout).transpose();
    if (auto* gw = grad_target(self, 1))
      Eigen::Map<RowMatrix<T>>(gw->grad_buffer().data(), cin, cout).noalias() +=
          Eigen::Map<const RowMatrix<T>>(self.inputs[0]->value.data(), batch, cin).transpose() * dy;
    if (self.inputs.size() > 2)
      if (auto* gb = grad_target(self, 2)) {
        auto& db = gb->grad_buffer();
        for (int o = 0; o < cout; ++o) {
          T acc = 0;
          for (int n = 0; n < batch; ++n) acc += dy(n, o);
          db[o] += acc;
        }
      }
  };
  return make_result<T>({batch, cout}, std::move(out), {x, weight, bias}, back);
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw InvalidInput("reshape: " + to_string(x.shape()) + " to " + to_string(shape));
  auto back = [](Node<T>& self) {
    auto& d = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  };
  return make_result<T>(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()), {x}, back);
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.values()) s += v;
  auto back = [](Node<T>& self) {
    auto& d = self.inputs[0]->grad_buffer();
    for (auto& v : d) v += self.grad[0];
  };
  return make_result<T>({1}, {s}, {x}, back);
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

}  // namespace glasskit::nn
