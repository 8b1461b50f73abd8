#pragma once

// Label decoupling: a binary glass mask is split into an interior-diffusion map
// (large at the pane centre) and a boundary-diffusion map (large near the pane
// edge) through an exact Euclidean distance transform. The two maps sum to the
// mask.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "glasskit/binary_io.hpp"
#include "glasskit/error.hpp"
#include "glasskit/grid.hpp"

namespace glasskit {

/// Per-pixel Euclidean distance to the nearest background pixel, 0 on background.
using DistanceMap = Grid<double>;

struct DecoupledLabels {
  Grid<float> interior;  // BL
  Grid<float> boundary;  // DL
};

inline void validate_mask(const BinaryMask& mask) {
  if (mask.height < 1 || mask.width < 1) throw InvalidInput("mask must be at least 1x1");
  if (mask.size() != static_cast<std::size_t>(mask.height) * mask.width)
    throw InvalidInput("mask storage does not match its extents");
  for (auto v : mask.values)
    if (v > 1) throw InvalidInput("mask values must be 0 or 1");
}

namespace detail {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) on one line of
// squared distances. `f` is read with stride, results written to `out`.
inline void envelope_1d(const std::int64_t* f, std::size_t stride, int n, std::int64_t* out,
                        std::size_t out_stride, std::vector<int>& v, std::vector<double>& z) {
  v.resize(n);
  z.resize(n + 1);
  auto fv = [&](int q) { return f[q * stride]; };
  // Crossing of the parabolas rooted at p and q. Inputs are small integers, so
  // the division never flips a decision at an integer abscissa.
  auto cross = [&](int q, int p) {
    return static_cast<double>((fv(q) + std::int64_t(q) * q) - (fv(p) + std::int64_t(p) * p)) /
           (2.0 * (q - p));
  };
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = cross(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = cross(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const std::int64_t d = q - v[k];
    out[q * out_stride] = d * d + fv(v[k]);
  }
}

}  // namespace detail

/// Exact squared Euclidean distance transform. Pixels outside the frame count as
/// background, so all-foreground masks still produce finite values.
inline Grid<std::int64_t> squared_distance_transform(const BinaryMask& mask) {
  validate_mask(mask);
  const int h = mask.height, w = mask.width;
  // Pass 1, per column: 1-D distance to the nearest background row, with virtual
  // background rows at -1 and h.
  Grid<std::int64_t> col(h, w);
  for (int x = 0; x < w; ++x) {
    int last = -1;
    for (int y = 0; y < h; ++y) {
      if (mask(y, x) == 0) last = y;
      col(y, x) = y - last;
    }
    last = h;
    for (int y = h - 1; y >= 0; --y) {
      if (mask(y, x) == 0) last = y;
      const std::int64_t d = std::min<std::int64_t>(col(y, x), last - y);
      col(y, x) = d * d;
    }
  }
  // Pass 2, per row: lower envelope over the padded row. Index 0 and w+1 are
  // the virtual background columns.
  Grid<std::int64_t> out(h, w);
  std::vector<std::int64_t> line(w + 2), env(w + 2);
  std::vector<int> v;
  std::vector<double> z;
  for (int y = 0; y < h; ++y) {
    line[0] = 0;
    line[w + 1] = 0;
    for (int x = 0; x < w; ++x) line[x + 1] = col(y, x);
    detail::envelope_1d(line.data(), 1, w + 2, env.data(), 1, v, z);
    for (int x = 0; x < w; ++x) out(y, x) = mask(y, x) ? env[x + 1] : 0;
  }
  return out;
}

inline DistanceMap euclidean_distance_transform(const BinaryMask& mask) {
  const auto sq = squared_distance_transform(mask);
  DistanceMap d(sq.height, sq.width);
  for (std::size_t i = 0; i < sq.size(); ++i) d.values[i] = std::sqrt(static_cast<double>(sq.values[i]));
  return d;
}

/// Min-max normalization to [0,1]; a constant map becomes all zeros.
inline DistanceMap normalize_distance_map(const DistanceMap& d) {
  DistanceMap out(d.height, d.width, 0.0);
  if (d.empty()) return out;
  const auto [lo, hi] = std::minmax_element(d.values.begin(), d.values.end());
  const double min = *lo, range = *hi - *lo;
  if (range == 0.0) return out;
  for (std::size_t i = 0; i < d.size(); ++i) out.values[i] = (d.values[i] - min) / range;
  return out;
}

inline DecoupledLabels decouple(const BinaryMask& mask) {
  const auto norm = normalize_distance_map(euclidean_distance_transform(mask));
  DecoupledLabels labels{Grid<float>(mask.height, mask.width, 0.f), Grid<float>(mask.height, mask.width, 0.f)};
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.values[i]) continue;
    labels.interior.values[i] = static_cast<float>(norm.values[i]);
    labels.boundary.values[i] = static_cast<float>(1.0 - norm.values[i]);
  }
  return labels;
}

// GLDT sidecar: "GLDT", u32 height, u32 width, row-major f32 payload, little-endian.

inline void write_gldt(const std::string& path, const Grid<float>& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  binary::write_magic(os, "GLDT");
  binary::write_u32(os, static_cast<std::uint32_t>(map.height));
  binary::write_u32(os, static_cast<std::uint32_t>(map.width));
  for (float v : map.values) binary::write_f32(os, v);
  if (!os) throw IoError("write failed: " + path);
}

inline Grid<float> read_gldt(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  try {
    binary::expect_magic(is, "GLDT");
    const auto h = binary::read_u32(is);
    const auto w = binary::read_u32(is);
    if (h == 0 || w == 0 || h > (1u << 16) || w > (1u << 16)) throw IoError("implausible extents");
    Grid<float> map(static_cast<int>(h), static_cast<int>(w));
    for (auto& v : map.values) v = binary::read_f32(is);
    return map;
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace glasskit
