#pragma once

#include <algorithm>
#include <cmath>

#include "docs/tensor.hpp"

namespace docs {

/// Bilinear resampling of every channel to out_h x out_w, with pixel
/// centers aligned (half-pixel convention) and edge clamping.
template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& x, std::size_t out_h, std::size_t out_w) {
  const Shape& s = x.shape();
  if (out_h == 0 || out_w == 0 || s.h == 0 || s.w == 0) throw shape_error("resize_bilinear: empty dims");
  BasicTensor<T> y(Shape{s.n, s.c, out_h, out_w});
  const double sy = static_cast<double>(s.h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(s.w) / static_cast<double>(out_w);
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = x.ptr() + nc * s.plane();
    T* dst = y.ptr() + nc * out_h * out_w;
    for (std::size_t r = 0; r < out_h; ++r) {
      const double fy = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, static_cast<double>(s.h - 1));
      const auto y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, s.h - 1);
      const double ay = fy - static_cast<double>(y0);
      for (std::size_t c = 0; c < out_w; ++c) {
        const double fx = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, static_cast<double>(s.w - 1));
        const auto x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, s.w - 1);
        const double ax = fx - static_cast<double>(x0);
        const double top = (1 - ax) * src[y0 * s.w + x0] + ax * src[y0 * s.w + x1];
        const double bot = (1 - ax) * src[y1 * s.w + x0] + ax * src[y1 * s.w + x1];
        dst[r * out_w + c] = static_cast<T>((1 - ay) * top + ay * bot);
      }
    }
  }
  return y;
}

}  // namespace docs
