#pragma once

// Procedural glass scenes. A smooth, cluttered background is rendered once;
// each pane shows that same background through a tinted, slightly blurred
// layer with an optional specular streak, surrounded by an opaque frame. The
// mask covers pane interiors only.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "glasskit/error.hpp"
#include "glasskit/image_io.hpp"
#include "glasskit/rng.hpp"

namespace glasskit {

struct SceneConfig {
  int size = 64;
  std::array<int, 2> glass_count_range{1, 3};
  std::array<int, 2> frame_width_range{2, 4};
  std::array<double, 2> tint_alpha_range{0.25, 0.5};
  std::array<int, 2> blur_radius_range{1, 2};
  double highlight_probability = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (size < 8) throw InvalidInput("data.size must be at least 8");
    auto ordered = [](const auto& r, auto lo, const char* what) {
      if (r[0] < lo || r[1] < r[0]) throw InvalidInput(std::string(what) + " must be a well-ordered range");
    };
    ordered(glass_count_range, 0, "data.glass_count_range");
    ordered(frame_width_range, 1, "data.frame_width_range");
    ordered(blur_radius_range, 0, "data.blur_radius_range");
    ordered(tint_alpha_range, 0.0, "data.tint_alpha_range");
    if (tint_alpha_range[1] > 1.0) throw InvalidInput("data.tint_alpha_range must lie in [0,1]");
    if (!(highlight_probability >= 0.0 && highlight_probability <= 1.0))
      throw InvalidInput("data.highlight_probability must lie in [0,1]");
  }
};

struct Scene {
  RgbImage image;
  BinaryMask mask;
};

namespace detail {

using Color = std::array<float, 3>;

inline Color random_color(Rng& rng) {
  return {static_cast<float>(uniform(rng)), static_cast<float>(uniform(rng)), static_cast<float>(uniform(rng))};
}

inline RgbImage render_background(int size, Rng& rng) {
  RgbImage img(size, size);
  // Smooth colour field: random lattice, bilinearly interpolated.
  constexpr int kLattice = 4;
  std::vector<Color> lattice((kLattice + 1) * (kLattice + 1));
  for (auto& c : lattice) c = random_color(rng);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double gy = static_cast<double>(y) / size * kLattice, gx = static_cast<double>(x) / size * kLattice;
      const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
      const double fy = gy - y0, fx = gx - x0;
      for (int c = 0; c < 3; ++c) {
        auto l = [&](int yy, int xx) { return lattice[yy * (kLattice + 1) + xx][c]; };
        img.at(c, y, x) = static_cast<float>((1 - fy) * ((1 - fx) * l(y0, x0) + fx * l(y0, x0 + 1)) +
                                             fy * ((1 - fx) * l(y0 + 1, x0) + fx * l(y0 + 1, x0 + 1)));
      }
    }
  // Clutter: rectangles and discs.
  const int shapes = uniform_int(rng, 4, 10);
  for (int s = 0; s < shapes; ++s) {
    const auto col = random_color(rng);
    const bool disc = uniform(rng) < 0.5;
    const double cx = uniform(rng, 0, size), cy = uniform(rng, 0, size);
    const double rx = uniform(rng, 0.05, 0.25) * size, ry = disc ? rx : uniform(rng, 0.05, 0.25) * size;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (inside)
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
      }
  }
  for (auto& v : img.values) v = std::clamp(v + static_cast<float>(uniform(rng, -0.03, 0.03)), 0.f, 1.f);
  return img;
}

inline RgbImage box_blur(const RgbImage& src, int radius) {
  if (radius <= 0) return src;
  RgbImage tmp(src.height, src.width), out(src.height, src.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) {
        float s = 0;
        int n = 0;
        for (int k = std::max(0, x - radius); k <= std::min(src.width - 1, x + radius); ++k, ++n) s += src.at(c, y, k);
        tmp.at(c, y, x) = s / n;
      }
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) {
        float s = 0;
        int n = 0;
        for (int k = std::max(0, y - radius); k <= std::min(src.height - 1, y + radius); ++k, ++n) s += tmp.at(c, k, x);
        out.at(c, y, x) = s / n;
      }
  }
  return out;
}

struct Pane {
  double cx, cy, half_w, half_h, angle;
  int frame;
  // Axis-aligned bounds of the rotated outer rectangle.
  double x0, y0, x1, y1;
};

}  // namespace detail

/// Deterministic in (cfg.seed, index).
inline Scene synth_scene(const SceneConfig& cfg, std::uint64_t index) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "scene", index));
  const int size = cfg.size;
  const RgbImage background = detail::render_background(size, rng);
  Scene scene{background, BinaryMask(size, size, 0)};

  const int count = uniform_int(rng, cfg.glass_count_range[0], cfg.glass_count_range[1]);
  std::vector<detail::Pane> panes;
  for (int p = 0; p < count; ++p) {
    for (int attempt = 0; attempt < 30; ++attempt) {
      detail::Pane pane;
      pane.frame = uniform_int(rng, cfg.frame_width_range[0], cfg.frame_width_range[1]);
      pane.half_w = uniform(rng, 0.3, 0.65) * size / 2;
      pane.half_h = uniform(rng, 0.3, 0.65) * size / 2;
      pane.angle = uniform(rng) < 0.5 ? uniform(rng, -0.17, 0.17) : 0.0;
      const double ca = std::abs(std::cos(pane.angle)), sa = std::abs(std::sin(pane.angle));
      const double ex = pane.half_w * ca + pane.half_h * sa, ey = pane.half_w * sa + pane.half_h * ca;
      if (2 * ex >= size - 2 || 2 * ey >= size - 2) continue;
      pane.cx = uniform(rng, ex + 1, size - ex - 1);
      pane.cy = uniform(rng, ey + 1, size - ey - 1);
      pane.x0 = pane.cx - ex;
      pane.x1 = pane.cx + ex;
      pane.y0 = pane.cy - ey;
      pane.y1 = pane.cy + ey;
      const bool overlaps = std::any_of(panes.begin(), panes.end(), [&](const detail::Pane& o) {
        return pane.x0 < o.x1 + 2 && o.x0 < pane.x1 + 2 && pane.y0 < o.y1 + 2 && o.y0 < pane.y1 + 2;
      });
      if (!overlaps) {
        panes.push_back(pane);
        break;
      }
    }
  }

  for (const auto& pane : panes) {
    const float alpha = static_cast<float>(uniform(rng, cfg.tint_alpha_range[0], cfg.tint_alpha_range[1]));
    const detail::Color tint{static_cast<float>(uniform(rng, 0.45, 0.75)), static_cast<float>(uniform(rng, 0.7, 0.95)),
                             static_cast<float>(uniform(rng, 0.75, 1.0))};
    const float shade = static_cast<float>(uniform(rng) < 0.5 ? uniform(rng, 0.05, 0.3) : uniform(rng, 0.6, 0.85));
    const detail::Color frame_color{shade, shade * static_cast<float>(uniform(rng, 0.9, 1.1)), shade};
    const RgbImage seen = detail::box_blur(background, uniform_int(rng, cfg.blur_radius_range[0], cfg.blur_radius_range[1]));
    const bool highlight = uniform(rng) < cfg.highlight_probability;
    const double streak_slope = uniform(rng, 0.5, 2.0), streak_offset = uniform(rng, -0.5, 0.5) * pane.half_w;
    const double streak_width = uniform(rng, 1.0, 3.0);
    const double cs = std::cos(pane.angle), sn = std::sin(pane.angle);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dx = x + 0.5 - pane.cx, dy = y + 0.5 - pane.cy;
        const double u = cs * dx + sn * dy, v = -sn * dx + cs * dy;
        if (std::abs(u) > pane.half_w || std::abs(v) > pane.half_h) continue;
        const bool interior = std::abs(u) <= pane.half_w - pane.frame && std::abs(v) <= pane.half_h - pane.frame;
        if (!interior) {
          for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = frame_color[c];
          continue;
        }
        float glow = 0.f;
        if (highlight) {
          const double d = std::abs(u - streak_slope * v - streak_offset) / std::sqrt(1 + streak_slope * streak_slope);
          if (d < streak_width) glow = static_cast<float>(0.35 * (1.0 - d / streak_width));
        }
        for (int c = 0; c < 3; ++c)
          scene.image.at(c, y, x) = std::clamp((1 - alpha) * seen.at(c, y, x) + alpha * tint[c] + glow, 0.f, 1.f);
        scene.mask(y, x) = 1;
      }
  }
  return scene;
}

}  // namespace glasskit
