#pragma once

#include <cstddef>
#include <vector>

namespace dctx {

/// Row-major 2-D sample array.
template <typename T>
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Plane() = default;
  Plane(int h, int w, T fill = T{})
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  T& operator()(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int y, int x) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }

  std::size_t size() const { return data.size(); }
  bool operator==(const Plane&) const = default;
};

using RealPlane = Plane<double>;
using IntPlane = Plane<int>;

}  // namespace dctx
