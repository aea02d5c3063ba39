#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "docs/error.hpp"

namespace docs {

/// Binary h x w raster, row-major; 1 marks foreground.
struct Mask {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t height, std::size_t width, std::uint8_t fill = 0)
      : h(height), w(width), bits(height * width, fill) {}

  std::size_t size() const { return bits.size(); }
  std::uint8_t& operator()(std::size_t y, std::size_t x) { return bits[y * w + x]; }
  std::uint8_t operator()(std::size_t y, std::size_t x) const { return bits[y * w + x]; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }

  Mask flipped() const {
    Mask out(h, w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out(y, x) = (*this)(y, w - 1 - x);
    return out;
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

inline void require_same_dims(const Mask& a, const Mask& b, const char* what) {
  if (a.h != b.h || a.w != b.w)
    throw shape_error(std::string(what) + ": mask dims " + std::to_string(a.h) + "x" +
                      std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                      std::to_string(b.w));
}

}  // namespace docs
