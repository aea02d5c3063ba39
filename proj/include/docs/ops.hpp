#pragma once

// Differentiable tensor operations used by the co-segmentation network.
// Every op is a pure function; backward functions take the forward inputs
// and the upstream gradient and return fresh gradient tensors.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "docs/error.hpp"
#include "docs/mask.hpp"
#include "docs/tensor.hpp"

namespace docs {

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride,
                                std::size_t pad) {
  if (stride < 1) throw shape_error("stride must be >= 1");
  if (in + 2 * pad < k)
    throw shape_error("kernel " + std::to_string(k) + " larger than padded input " +
                      std::to_string(in + 2 * pad));
  return (in + 2 * pad - k) / stride + 1;
}

inline std::size_t deconv_out_dim(std::size_t in, std::size_t k, std::size_t stride,
                                  std::size_t pad) {
  if (stride < 1) throw shape_error("stride must be >= 1");
  if ((in - 1) * stride + k < 2 * pad + 1) throw shape_error("transposed conv output empty");
  return (in - 1) * stride + k - 2 * pad;
}

template <typename T>
struct ConvGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dw;
  std::vector<T> db;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Caps the im2col scratch buffer (elements) for large feature maps.
inline constexpr std::size_t kMaxColsElements = std::size_t{1} << 23;

struct Geometry {
  std::size_t channels, height, width;  // the "image" side
  std::size_t k, stride, pad;
  std::size_t out_h, out_w;             // the "column" side
};

// Output columns [lo, hi) whose input column ox*stride + kk - pad is inside [0, width).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t width, std::size_t kk,
                                                       std::size_t stride, std::size_t pad) {
  const long off = static_cast<long>(kk) - static_cast<long>(pad);
  const long s = static_cast<long>(stride);
  long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  long hi = (static_cast<long>(width) - 1 - off);
  hi = hi < 0 ? 0 : hi / s + 1;
  lo = std::min<long>(lo, static_cast<long>(out));
  hi = std::clamp<long>(hi, lo, static_cast<long>(out));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// cols[(c*k + ky)*k + kx][(oy - row0)*out_w + ox] = img[c][oy*s - p + ky][ox*s - p + kx]
template <typename T>
void im2col(const T* img, const Geometry& g, std::size_t row0, std::size_t row1, T* cols) {
  const std::size_t ncols = (row1 - row0) * g.out_w;
  for (std::size_t kx = 0; kx < g.k; ++kx) {
    const auto [lo, hi] = valid_range(g.out_w, g.width, kx, g.stride, g.pad);
    const long xoff = static_cast<long>(kx) - static_cast<long>(g.pad);
    for (std::size_t c = 0; c < g.channels; ++c) {
      const T* plane = img + c * g.height * g.width;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        T* dst = cols + ((c * g.k + ky) * g.k + kx) * ncols;
        for (std::size_t oy = row0; oy < row1; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          T* row = dst + (oy - row0) * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(row, row + g.out_w, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.width;
          std::fill(row, row + lo, T{0});
          if (g.stride == 1) {
            std::copy_n(src + static_cast<long>(lo) + xoff, hi - lo, row + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox)
              row[ox] = src[static_cast<long>(ox * g.stride) + xoff];
          }
          std::fill(row + hi, row + g.out_w, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col over the full row range: accumulates cols into img.
template <typename T>
void col2im(const T* cols, const Geometry& g, T* img) {
  const std::size_t ncols = g.out_h * g.out_w;
  for (std::size_t kx = 0; kx < g.k; ++kx) {
    const auto [lo, hi] = valid_range(g.out_w, g.width, kx, g.stride, g.pad);
    const long xoff = static_cast<long>(kx) - static_cast<long>(g.pad);
    for (std::size_t c = 0; c < g.channels; ++c) {
      T* plane = img + c * g.height * g.width;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const T* src = cols + ((c * g.k + ky) * g.k + kx) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const T* row = src + oy * g.out_w;
          if (g.stride == 1) {
            T* d = dst + static_cast<long>(lo) + xoff;
            for (std::size_t ox = lo; ox < hi; ++ox) d[ox - lo] += row[ox];
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) dst[static_cast<long>(ox * g.stride) + xoff] += row[ox];
          }
        }
      }
    }
  }
}

// Per-thread scratch reused across calls to avoid reallocating im2col buffers.
template <typename T>
std::vector<T>& scratch_buffer(int slot) {
  thread_local std::vector<T> buffers[2];
  return buffers[slot];
}

inline bool is_pointwise(const Geometry& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

template <typename T>
void check_conv_args(const BasicTensor<T>& x, const BasicTensor<T>& weight, std::size_t bias_size,
                     std::size_t weight_in_channels, std::size_t out_channels, const char* op) {
  const Shape& ws = weight.shape();
  if (ws.h != ws.w) throw shape_error(std::string(op) + ": only square kernels supported, got " + ws.str());
  if (x.shape().c != weight_in_channels)
    throw shape_error(std::string(op) + ": input " + x.shape().str() + " incompatible with weight " +
                      ws.str());
  if (bias_size != out_channels)
    throw shape_error(std::string(op) + ": bias length " + std::to_string(bias_size) +
                      " does not match weight " + ws.str());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: weight [outC, inC, k, k]

/// Reference convolution by direct loops. Used as the oracle for conv2d.
template <typename T>
BasicTensor<T> conv2d_direct(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                             std::type_identity_t<std::span<const T>> bias, std::size_t stride, std::size_t pad) {
  const Shape& ws = weight.shape();
  detail::check_conv_args(x, weight, bias.size(), ws.c, ws.n, "conv2d");
  const Shape& xs = x.shape();
  const std::size_t k = ws.h;
  const std::size_t oh = conv_out_dim(xs.h, k, stride, pad);
  const std::size_t ow = conv_out_dim(xs.w, k, stride, pad);
  BasicTensor<T> y(Shape{xs.n, ws.n, oh, ow});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < ws.n; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T acc = bias[co];
          for (std::size_t ci = 0; ci < xs.c; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              if (iy < 0 || iy >= static_cast<long>(xs.h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (ix < 0 || ix >= static_cast<long>(xs.w)) continue;
                acc += x.at(n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                       weight.at(co, ci, ky, kx);
              }
            }
          y.at(n, co, oy, ox) = acc;
        }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_direct_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                                    const BasicTensor<T>& dy, std::size_t stride, std::size_t pad) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const std::size_t k = ws.h;
  ConvGrads<T> g{BasicTensor<T>(xs), BasicTensor<T>(ws), std::vector<T>(ws.n, T{0})};
  const Shape& ys = dy.shape();
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < ws.n; ++co)
      for (std::size_t oy = 0; oy < ys.h; ++oy)
        for (std::size_t ox = 0; ox < ys.w; ++ox) {
          const T d = dy.at(n, co, oy, ox);
          g.db[co] += d;
          for (std::size_t ci = 0; ci < xs.c; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              if (iy < 0 || iy >= static_cast<long>(xs.h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (ix < 0 || ix >= static_cast<long>(xs.w)) continue;
                const auto yy = static_cast<std::size_t>(iy), xx = static_cast<std::size_t>(ix);
                g.dx.at(n, ci, yy, xx) += d * weight.at(co, ci, ky, kx);
                g.dw.at(co, ci, ky, kx) += d * x.at(n, ci, yy, xx);
              }
            }
        }
  return g;
}

/// 2-D convolution (cross-correlation) via im2col + GEMM.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      std::type_identity_t<std::span<const T>> bias, std::size_t stride, std::size_t pad) {
  const Shape& ws = weight.shape();
  detail::check_conv_args(x, weight, bias.size(), ws.c, ws.n, "conv2d");
  const Shape& xs = x.shape();
  const std::size_t k = ws.h;
  const detail::Geometry g{xs.c, xs.h, xs.w, k, stride, pad, conv_out_dim(xs.h, k, stride, pad),
                           conv_out_dim(xs.w, k, stride, pad)};
  const std::size_t kdim = xs.c * k * k;
  const std::size_t npix = g.out_h * g.out_w;
  BasicTensor<T> y(Shape{xs.n, ws.n, g.out_h, g.out_w});
  detail::ConstMatMap<T> wmat(weight.ptr(), static_cast<long>(ws.n), static_cast<long>(kdim));

  const std::size_t rows_per_chunk =
      std::max<std::size_t>(1, std::min(g.out_h, detail::kMaxColsElements / std::max<std::size_t>(1, kdim * g.out_w)));
  std::vector<T>& cols = detail::scratch_buffer<T>(0);
  std::vector<T>& chunk = detail::scratch_buffer<T>(1);
  for (std::size_t n = 0; n < xs.n; ++n) {
    T* yn = y.item(n);
    if (detail::is_pointwise(g)) {
      detail::ConstMatMap<T> xm(x.item(n), static_cast<long>(xs.c), static_cast<long>(npix));
      detail::MatMap<T> ym(yn, static_cast<long>(ws.n), static_cast<long>(npix));
      ym.noalias() = wmat * xm;
    } else {
      for (std::size_t r0 = 0; r0 < g.out_h; r0 += rows_per_chunk) {
        const std::size_t r1 = std::min(g.out_h, r0 + rows_per_chunk);
        const std::size_t ncols = (r1 - r0) * g.out_w;
        cols.resize(kdim * ncols);
        detail::im2col(x.item(n), g, r0, r1, cols.data());
        detail::ConstMatMap<T> cm(cols.data(), static_cast<long>(kdim), static_cast<long>(ncols));
        if (r0 == 0 && r1 == g.out_h) {
          detail::MatMap<T> ym(yn, static_cast<long>(ws.n), static_cast<long>(npix));
          ym.noalias() = wmat * cm;
        } else {
          chunk.resize(ws.n * ncols);
          detail::MatMap<T> om(chunk.data(), static_cast<long>(ws.n), static_cast<long>(ncols));
          om.noalias() = wmat * cm;
          for (std::size_t co = 0; co < ws.n; ++co)
            std::copy_n(chunk.data() + co * ncols, ncols, yn + co * npix + r0 * g.out_w);
        }
      }
    }
    for (std::size_t co = 0; co < ws.n; ++co) {
      T* p = yn + co * npix;
      for (std::size_t i = 0; i < npix; ++i) p[i] += bias[co];
    }
  }
  return y;
}

/// Gradients of conv2d with respect to input, weight and bias.
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                             const BasicTensor<T>& dy, std::size_t stride, std::size_t pad,
                             bool want_dx = true) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const std::size_t k = ws.h;
  const detail::Geometry g{xs.c, xs.h, xs.w, k, stride, pad, conv_out_dim(xs.h, k, stride, pad),
                           conv_out_dim(xs.w, k, stride, pad)};
  if (dy.shape() != Shape{xs.n, ws.n, g.out_h, g.out_w})
    throw shape_error("conv2d_backward: upstream gradient " + dy.shape().str() +
                      " does not match output of input " + xs.str() + " and weight " + ws.str());
  const std::size_t kdim = xs.c * k * k;
  const std::size_t npix = g.out_h * g.out_w;
  ConvGrads<T> out{want_dx ? BasicTensor<T>(xs) : BasicTensor<T>(), BasicTensor<T>(ws),
                   std::vector<T>(ws.n, T{0})};
  detail::ConstMatMap<T> wmat(weight.ptr(), static_cast<long>(ws.n), static_cast<long>(kdim));
  detail::MatMap<T> dwmat(out.dw.ptr(), static_cast<long>(ws.n), static_cast<long>(kdim));
  std::vector<T>& cols = detail::scratch_buffer<T>(0);
  std::vector<T>& dcols = detail::scratch_buffer<T>(1);
  if (!detail::is_pointwise(g)) {
    cols.resize(kdim * npix);
    dcols.resize(kdim * npix);
  }
  for (std::size_t n = 0; n < xs.n; ++n) {
    detail::ConstMatMap<T> dym(dy.item(n), static_cast<long>(ws.n), static_cast<long>(npix));
    const T* colsrc = x.item(n);
    if (!detail::is_pointwise(g)) {
      detail::im2col(x.item(n), g, 0, g.out_h, cols.data());
      colsrc = cols.data();
    }
    detail::ConstMatMap<T> cm(colsrc, static_cast<long>(kdim), static_cast<long>(npix));
    dwmat.noalias() += dym * cm.transpose();
    for (std::size_t co = 0; co < ws.n; ++co) {
      const T* p = dy.item(n) + co * npix;
      T s{0};
      for (std::size_t i = 0; i < npix; ++i) s += p[i];
      out.db[co] += s;
    }
    if (want_dx) {
      if (detail::is_pointwise(g)) {
        detail::MatMap<T> dxm(out.dx.item(n), static_cast<long>(xs.c), static_cast<long>(npix));
        dxm.noalias() = wmat.transpose() * dym;
      } else {
        detail::MatMap<T> dcm(dcols.data(), static_cast<long>(kdim), static_cast<long>(npix));
        dcm.noalias() = wmat.transpose() * dym;
        detail::col2im(dcols.data(), g, out.dx.item(n));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// transposed_conv2d: weight [inC, outC, k, k], the adjoint of conv2d with the
// same weight tensor and configuration.

template <typename T>
BasicTensor<T> transposed_conv2d_direct(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                                        std::type_identity_t<std::span<const T>> bias, std::size_t stride,
                                        std::size_t pad) {
  const Shape& ws = weight.shape();
  detail::check_conv_args(x, weight, bias.size(), ws.n, ws.c, "transposed_conv2d");
  const Shape& xs = x.shape();
  const std::size_t k = ws.h;
  const std::size_t oh = deconv_out_dim(xs.h, k, stride, pad);
  const std::size_t ow = deconv_out_dim(xs.w, k, stride, pad);
  BasicTensor<T> y(Shape{xs.n, ws.c, oh, ow});
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t co = 0; co < ws.c; ++co)
      std::fill_n(y.item(n) + co * oh * ow, oh * ow, bias[co]);
    for (std::size_t ci = 0; ci < xs.c; ++ci)
      for (std::size_t iy = 0; iy < xs.h; ++iy)
        for (std::size_t ix = 0; ix < xs.w; ++ix) {
          const T v = x.at(n, ci, iy, ix);
          for (std::size_t co = 0; co < ws.c; ++co)
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long oy = static_cast<long>(iy * stride + ky) - static_cast<long>(pad);
              if (oy < 0 || oy >= static_cast<long>(oh)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ox = static_cast<long>(ix * stride + kx) - static_cast<long>(pad);
                if (ox < 0 || ox >= static_cast<long>(ow)) continue;
                y.at(n, co, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox)) +=
                    v * weight.at(ci, co, ky, kx);
              }
            }
        }
  }
  return y;
}

template <typename T>
BasicTensor<T> transposed_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                                 std::type_identity_t<std::span<const T>> bias, std::size_t stride, std::size_t pad) {
  const Shape& ws = weight.shape();
  detail::check_conv_args(x, weight, bias.size(), ws.n, ws.c, "transposed_conv2d");
  const Shape& xs = x.shape();
  const std::size_t k = ws.h;
  const std::size_t oh = deconv_out_dim(xs.h, k, stride, pad);
  const std::size_t ow = deconv_out_dim(xs.w, k, stride, pad);
  // The output plays the "image" role of the matching forward convolution.
  const detail::Geometry g{ws.c, oh, ow, k, stride, pad, xs.h, xs.w};
  const std::size_t kdim = ws.c * k * k;
  const std::size_t npix = xs.h * xs.w;
  BasicTensor<T> y(Shape{xs.n, ws.c, oh, ow});
  detail::ConstMatMap<T> wmat(weight.ptr(), static_cast<long>(ws.n), static_cast<long>(kdim));
  std::vector<T>& cols = detail::scratch_buffer<T>(0);
  if (!detail::is_pointwise(g)) cols.resize(kdim * npix);
  for (std::size_t n = 0; n < xs.n; ++n) {
    detail::ConstMatMap<T> xm(x.item(n), static_cast<long>(xs.c), static_cast<long>(npix));
    T* yn = y.item(n);
    if (detail::is_pointwise(g)) {
      detail::MatMap<T> ym(yn, static_cast<long>(ws.c), static_cast<long>(npix));
      ym.noalias() = wmat.transpose() * xm;
    } else {
      detail::MatMap<T> cm(cols.data(), static_cast<long>(kdim), static_cast<long>(npix));
      cm.noalias() = wmat.transpose() * xm;
      detail::col2im(cols.data(), g, yn);
    }
    for (std::size_t co = 0; co < ws.c; ++co) {
      T* p = yn + co * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) p[i] += bias[co];
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> transposed_conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                                        const BasicTensor<T>& dy, std::size_t stride,
                                        std::size_t pad, bool want_dx = true) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const std::size_t k = ws.h;
  const std::size_t oh = deconv_out_dim(xs.h, k, stride, pad);
  const std::size_t ow = deconv_out_dim(xs.w, k, stride, pad);
  if (dy.shape() != Shape{xs.n, ws.c, oh, ow})
    throw shape_error("transposed_conv2d_backward: upstream gradient " + dy.shape().str() +
                      " does not match output of input " + xs.str() + " and weight " + ws.str());
  const detail::Geometry g{ws.c, oh, ow, k, stride, pad, xs.h, xs.w};
  const std::size_t kdim = ws.c * k * k;
  const std::size_t npix = xs.h * xs.w;
  ConvGrads<T> out{want_dx ? BasicTensor<T>(xs) : BasicTensor<T>(), BasicTensor<T>(ws),
                   std::vector<T>(ws.c, T{0})};
  detail::ConstMatMap<T> wmat(weight.ptr(), static_cast<long>(ws.n), static_cast<long>(kdim));
  detail::MatMap<T> dwmat(out.dw.ptr(), static_cast<long>(ws.n), static_cast<long>(kdim));
  std::vector<T>& cols = detail::scratch_buffer<T>(0);
  if (!detail::is_pointwise(g)) cols.resize(kdim * npix);
  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* colsrc = dy.item(n);
    if (!detail::is_pointwise(g)) {
      detail::im2col(dy.item(n), g, 0, xs.h, cols.data());
      colsrc = cols.data();
    }
    detail::ConstMatMap<T> cm(colsrc, static_cast<long>(kdim), static_cast<long>(npix));
    detail::ConstMatMap<T> xm(x.item(n), static_cast<long>(xs.c), static_cast<long>(npix));
    dwmat.noalias() += xm * cm.transpose();
    for (std::size_t co = 0; co < ws.c; ++co) {
      const T* p = dy.item(n) + co * oh * ow;
      T s{0};
      for (std::size_t i = 0; i < oh * ow; ++i) s += p[i];
      out.db[co] += s;
    }
    if (want_dx) {
      detail::MatMap<T> dxm(out.dx.item(n), static_cast<long>(xs.c), static_cast<long>(npix));
      dxm.noalias() = wmat * cm;
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> transposed_conv2d_direct_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                                               const BasicTensor<T>& dy, std::size_t stride,
                                               std::size_t pad) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const std::size_t k = ws.h;
  const std::size_t oh = dy.shape().h, ow = dy.shape().w;
  ConvGrads<T> g{BasicTensor<T>(xs), BasicTensor<T>(ws), std::vector<T>(ws.c, T{0})};
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t co = 0; co < ws.c; ++co)
      for (std::size_t i = 0; i < oh * ow; ++i) g.db[co] += dy.item(n)[co * oh * ow + i];
    for (std::size_t ci = 0; ci < xs.c; ++ci)
      for (std::size_t iy = 0; iy < xs.h; ++iy)
        for (std::size_t ix = 0; ix < xs.w; ++ix)
          for (std::size_t co = 0; co < ws.c; ++co)
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long oy = static_cast<long>(iy * stride + ky) - static_cast<long>(pad);
              if (oy < 0 || oy >= static_cast<long>(oh)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ox = static_cast<long>(ix * stride + kx) - static_cast<long>(pad);
                if (ox < 0 || ox >= static_cast<long>(ow)) continue;
                const T d = dy.at(n, co, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox));
                g.dx.at(n, ci, iy, ix) += d * weight.at(ci, co, ky, kx);
                g.dw.at(ci, co, ky, kx) += d * x.at(n, ci, iy, ix);
              }
            }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Max pooling. argmax holds, per output element, the flat in-plane index of
// the winning input; ties go to the first maximum in row-major order.

template <typename T>
struct PoolResult {
  BasicTensor<T> y;
  std::vector<std::uint32_t> argmax;
};

template <typename T>
PoolResult<T> maxpool2d(const BasicTensor<T>& x, std::size_t k = 2, std::size_t stride = 2) {
  const Shape& xs = x.shape();
  if (k < 1 || stride < 1) throw shape_error("maxpool2d: kernel and stride must be >= 1");
  if (xs.h % stride != 0 || xs.w % stride != 0)
    throw shape_error("maxpool2d: spatial dims of " + xs.str() + " not divisible by stride " +
                      std::to_string(stride));
  const std::size_t oh = conv_out_dim(xs.h, k, stride, 0);
  const std::size_t ow = conv_out_dim(xs.w, k, stride, 0);
  PoolResult<T> r{BasicTensor<T>(Shape{xs.n, xs.c, oh, ow}), {}};
  r.argmax.resize(r.y.size());
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const T* plane = x.ptr() + nc * xs.plane();
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = oy * stride * xs.w + ox * stride;
        T bv = plane[best];
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t idx = (oy * stride + ky) * xs.w + ox * stride + kx;
            if (plane[idx] > bv) {
              bv = plane[idx];
              best = idx;
            }
          }
        r.y[o] = bv;
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                                  const BasicTensor<T>& dy) {
  if (argmax.size() != dy.size()) throw shape_error("maxpool2d_backward: argmax/gradient size mismatch");
  BasicTensor<T> dx(input_shape);
  const std::size_t out_plane = dy.shape().plane();
  for (std::size_t o = 0; o < dy.size(); ++o) {
    const std::size_t nc = o / out_plane;
    dx[nc * input_shape.plane() + argmax[o]] += dy[o];
  }
  return dx;
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

// Subgradient at 0 is 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  require_same_shape(x, dy, "relu_backward");
  BasicTensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

/// Softmax across channels at every pixel, max-subtracted.
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& x) {
  const Shape& s = x.shape();
  if (s.c < 2) throw shape_error("softmax_channels: need >= 2 channels, got " + s.str());
  BasicTensor<T> y(s);
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* xi = x.item(n);
    T* yi = y.item(n);
    for (std::size_t p = 0; p < plane; ++p) {
      T m = xi[p];
      for (std::size_t c = 1; c < s.c; ++c) m = std::max(m, xi[c * plane + p]);
      T sum{0};
      for (std::size_t c = 0; c < s.c; ++c) {
        const T e = std::exp(xi[c * plane + p] - m);
        yi[c * plane + p] = e;
        sum += e;
      }
      for (std::size_t c = 0; c < s.c; ++c) yi[c * plane + p] /= sum;
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> parts) {
  if (parts.empty()) throw shape_error("concat_channels: no inputs");
  const Shape& s0 = parts[0]->shape();
  std::size_t channels = 0;
  for (const auto* p : parts) {
    const Shape& s = p->shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw shape_error("concat_channels: " + s.str() + " incompatible with " + s0.str());
    channels += s.c;
  }
  BasicTensor<T> y(Shape{s0.n, channels, s0.h, s0.w});
  for (std::size_t n = 0; n < s0.n; ++n) {
    T* dst = y.item(n);
    for (const auto* p : parts) dst = std::copy_n(p->item(n), p->shape().item(), dst);
  }
  return y;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const BasicTensor<T>* parts[] = {&a, &b};
  return concat_channels<T>(std::span<const BasicTensor<T>* const>(parts));
}

/// Inverse of concat_channels: splits x into consecutive channel groups.
template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& x, std::span<const std::size_t> sizes) {
  const Shape& s = x.shape();
  std::size_t total = 0;
  for (auto c : sizes) total += c;
  if (total != s.c)
    throw shape_error("split_channels: sizes sum to " + std::to_string(total) + " but input is " + s.str());
  std::vector<BasicTensor<T>> out;
  out.reserve(sizes.size());
  for (auto c : sizes) out.emplace_back(Shape{s.n, c, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* src = x.item(n);
    for (auto& part : out) {
      std::copy_n(src, part.shape().item(), part.item(n));
      src += part.shape().item();
    }
  }
  return out;
}

/// Per-pixel L2 normalization across channels.
template <typename T>
BasicTensor<T> l2_normalize_channels(const BasicTensor<T>& x, T eps = T(1e-6)) {
  const Shape& s = x.shape();
  BasicTensor<T> y(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < s.plane(); ++p) {
      T ss{0};
      for (std::size_t c = 0; c < s.c; ++c) ss += x.item(n)[c * s.plane() + p] * x.item(n)[c * s.plane() + p];
      const T inv = T{1} / std::sqrt(ss + eps);
      for (std::size_t c = 0; c < s.c; ++c) y.item(n)[c * s.plane() + p] = x.item(n)[c * s.plane() + p] * inv;
    }
  return y;
}

template <typename T>
BasicTensor<T> l2_normalize_channels_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy,
                                              T eps = T(1e-6)) {
  const Shape& s = x.shape();
  BasicTensor<T> dx(s);
  const std::size_t P = s.plane();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < P; ++p) {
      const T* xi = x.item(n);
      const T* gi = dy.item(n);
      T ss{0}, dot{0};
      for (std::size_t c = 0; c < s.c; ++c) {
        ss += xi[c * P + p] * xi[c * P + p];
        dot += xi[c * P + p] * gi[c * P + p];
      }
      const T norm2 = ss + eps;
      const T inv = T{1} / std::sqrt(norm2);
      for (std::size_t c = 0; c < s.c; ++c)
        dx.item(n)[c * P + p] = inv * (gi[c * P + p] - xi[c * P + p] * dot / norm2);
    }
  return dx;
}

// ---------------------------------------------------------------------------
// Binary cross entropy on 2-channel (background, foreground) maps.

inline constexpr double kProbClamp = 1e-7;

template <typename T>
void check_loss_args(const Shape& s, const Mask& target, const char* op) {
  if (s.n != 1 || s.c != 2)
    throw shape_error(std::string(op) + ": expected 1x2xHxW probabilities, got " + s.str());
  if (s.h != target.h || s.w != target.w)
    throw shape_error(std::string(op) + ": prediction " + s.str() + " vs target " +
                      std::to_string(target.h) + "x" + std::to_string(target.w));
}

/// Mean over pixels of -log p[target]; probabilities clamped to [1e-7, 1-1e-7].
template <typename T>
T cross_entropy_loss(const BasicTensor<T>& p, const Mask& target) {
  check_loss_args<T>(p.shape(), target, "cross_entropy_loss");
  const std::size_t P = p.shape().plane();
  const T lo = static_cast<T>(kProbClamp), hi = static_cast<T>(1.0 - kProbClamp);
  double sum = 0.0;
  for (std::size_t i = 0; i < P; ++i) {
    const T q = std::clamp(p[(target.bits[i] ? P : 0) + i], lo, hi);
    sum -= std::log(static_cast<double>(q));
  }
  return static_cast<T>(sum / static_cast<double>(P));
}

template <typename T>
struct LossAndGrad {
  T loss;
  BasicTensor<T> dlogits;
};

/// Softmax + cross entropy fused; gradient w.r.t. the logits is (p - onehot)/P.
template <typename T>
LossAndGrad<T> softmax_cross_entropy(const BasicTensor<T>& logits, const Mask& target) {
  check_loss_args<T>(logits.shape(), target, "softmax_cross_entropy");
  BasicTensor<T> p = softmax_channels(logits);
  const T loss = cross_entropy_loss(p, target);
  const std::size_t P = p.shape().plane();
  const T scale = T{1} / static_cast<T>(P);
  for (std::size_t i = 0; i < P; ++i) {
    const bool fg = target.bits[i] != 0;
    p[i] = (p[i] - (fg ? T{0} : T{1})) * scale;
    p[P + i] = (p[P + i] - (fg ? T{1} : T{0})) * scale;
  }
  return {loss, std::move(p)};
}

}  // namespace docs
