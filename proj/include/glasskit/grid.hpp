#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace glasskit {

/// Row-major 2-D array. The common carrier for masks, distance maps and predictions.
template <class T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(int h, int w, T fill = T{})
      : height(h), width(w), values(static_cast<std::size_t>(h < 0 ? 0 : h) * (w < 0 ? 0 : w), fill) {}

  T& operator()(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }

  template <class U>
  bool same_shape(const Grid<U>& other) const {
    return height == other.height && width == other.width;
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Ground-truth glass mask, values in {0,1} (1 = glass).
using BinaryMask = Grid<std::uint8_t>;

}  // namespace glasskit
