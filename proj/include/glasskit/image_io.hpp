#pragma once

// 8-bit PNG I/O through libpng's simplified API. RGB images are held planar
// (CHW) in [0,1]; masks read any value >= 128 as foreground.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "glasskit/error.hpp"
#include "glasskit/grid.hpp"

namespace glasskit {

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<float> values;  // [3][H][W]

  RgbImage() = default;
  RgbImage(int h, int w, float fill = 0.f) : height(h), width(w), values(static_cast<std::size_t>(3) * h * w, fill) {}

  float& at(int c, int y, int x) { return values[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return values[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// [0,1] -> [0,255] with round-half-up.
inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v * 255.0 + 0.5), 0.0, 255.0));
}

namespace detail {

inline std::vector<std::uint8_t> read_png(const std::string& path, std::uint32_t format, int& h, int& w) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError(path + ": " + msg);
  }
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError(path + ": " + msg);
  }
  h = static_cast<int>(img.height);
  w = static_cast<int>(img.width);
  return buf;
}

inline void write_png(const std::string& path, std::uint32_t format, int h, int w, const std::uint8_t* data) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError(path + ": " + msg);
  }
}

}  // namespace detail

inline RgbImage load_image(const std::string& path) {
  int h = 0, w = 0;
  const auto buf = detail::read_png(path, PNG_FORMAT_RGB, h, w);
  RgbImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.f;
  return img;
}

inline void save_image(const std::string& path, const RgbImage& img) {
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(img.height) * img.width * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) buf[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] = to_byte(img.at(c, y, x));
  detail::write_png(path, PNG_FORMAT_RGB, img.height, img.width, buf.data());
}

/// Raw single-channel 8-bit values.
inline Grid<std::uint8_t> load_gray(const std::string& path) {
  Grid<std::uint8_t> g;
  g.values = detail::read_png(path, PNG_FORMAT_GRAY, g.height, g.width);
  return g;
}

inline void save_gray(const std::string& path, const Grid<std::uint8_t>& g) {
  detail::write_png(path, PNG_FORMAT_GRAY, g.height, g.width, g.values.data());
}

inline BinaryMask load_mask(const std::string& path) {
  auto g = load_gray(path);
  for (auto& v : g.values) v = v >= 128 ? 1 : 0;
  return g;
}

inline void save_mask(const std::string& path, const BinaryMask& mask) {
  Grid<std::uint8_t> g(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.size(); ++i) g.values[i] = mask.values[i] ? 255 : 0;
  save_gray(path, g);
}

/// Map in [0,1] written as 8-bit grey with round-half-up.
template <class V>
void save_unit_map(const std::string& path, const Grid<V>& map) {
  Grid<std::uint8_t> g(map.height, map.width);
  for (std::size_t i = 0; i < map.size(); ++i) g.values[i] = to_byte(static_cast<double>(map.values[i]));
  save_gray(path, g);
}

/// 8-bit grey read back as probabilities v/255.
inline Grid<double> load_unit_map(const std::string& path) {
  const auto g = load_gray(path);
  Grid<double> out(g.height, g.width);
  for (std::size_t i = 0; i < g.size(); ++i) out.values[i] = g.values[i] / 255.0;
  return out;
}

}  // namespace glasskit
