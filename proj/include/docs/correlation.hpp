#pragma once

// Mutual correlation layer. For every position (i, j) of feature map A and
// every displacement (dy, dx) inside a D x D window, channel
// k = (dy + R) * D + (dx + R), R = (D - 1) / 2, holds the raw inner product
//   C(k, i, j) = sum_ch A(ch, i, j) * B(ch, i + dy, j + dx),
// with zero where (i + dy, j + dx) falls outside B.

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <string>
#include <utility>

#include "docs/error.hpp"
#include "docs/ops.hpp"
#include "docs/tensor.hpp"

namespace docs {

struct Offset {
  int dy = 0;
  int dx = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

/// Window side covering every displacement between two w x h maps.
constexpr int patch_size_for(int w, int h) {
  if (w < 1 || h < 1) throw shape_error("patch_size_for: dims must be >= 1");
  return 2 * std::max(w - 1, h - 1) + 1;
}

constexpr int offset_to_index(int dy, int dx, int D) {
  if (D < 1 || D % 2 == 0) throw shape_error("offset_to_index: D must be odd and positive");
  const int r = (D - 1) / 2;
  if (dy < -r || dy > r || dx < -r || dx > r)
    throw shape_error("offset (" + std::to_string(dy) + "," + std::to_string(dx) +
                      ") outside window of size " + std::to_string(D));
  return (dy + r) * D + (dx + r);
}

constexpr Offset index_to_offset(int k, int D) {
  if (D < 1 || D % 2 == 0) throw shape_error("index_to_offset: D must be odd and positive");
  if (k < 0 || k >= D * D)
    throw shape_error("correlation index " + std::to_string(k) + " outside [0, " +
                      std::to_string(D * D) + ")");
  const int r = (D - 1) / 2;
  return Offset{k / D - r, k % D - r};
}

template <typename T>
struct BasicCorrelationMap {
  BasicTensor<T> data;  // (n, D*D, h, w)
  int D = 1;
  Shape source;  // shape of the features it was computed from
};

using CorrelationMap = BasicCorrelationMap<float>;

// Counts forward correlation calls; lets tests assert that the concat
// ablation never reaches this layer.
inline std::atomic<std::uint64_t>& correlation_call_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

namespace detail {

template <typename T>
void check_correlation_args(const BasicTensor<T>& a, const BasicTensor<T>& b, int D) {
  if (a.shape() != b.shape())
    throw shape_error("mutual_correlate: feature shapes differ: " + a.shape().str() + " vs " +
                      b.shape().str());
  if (D < 1 || D % 2 == 0) throw shape_error("mutual_correlate: D must be odd, got " + std::to_string(D));
}

}  // namespace detail

/// Reference implementation: five nested loops (i, j, dy, dx, channel).
template <typename T>
BasicCorrelationMap<T> mutual_correlate_naive(const BasicTensor<T>& fa, const BasicTensor<T>& fb, int D) {
  detail::check_correlation_args(fa, fb, D);
  correlation_call_counter().fetch_add(1, std::memory_order_relaxed);
  const Shape& s = fa.shape();
  const int r = (D - 1) / 2;
  const int H = static_cast<int>(s.h), W = static_cast<int>(s.w);
  BasicCorrelationMap<T> out{BasicTensor<T>(Shape{s.n, static_cast<std::size_t>(D * D), s.h, s.w}), D, s};
  for (std::size_t n = 0; n < s.n; ++n)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int m = i + dy, q = j + dx;
            if (m < 0 || m >= H || q < 0 || q >= W) continue;
            T acc{0};
            for (std::size_t c = 0; c < s.c; ++c)
              acc += fa.at(n, c, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                     fb.at(n, c, static_cast<std::size_t>(m), static_cast<std::size_t>(q));
            out.data.at(n, static_cast<std::size_t>((dy + r) * D + (dx + r)), static_cast<std::size_t>(i),
                        static_cast<std::size_t>(j)) = acc;
          }
  return out;
}

/// Optimized implementation: one GEMM G = A^T B over all position pairs,
/// then a scatter of G into displacement channels.
template <typename T>
BasicCorrelationMap<T> mutual_correlate(const BasicTensor<T>& fa, const BasicTensor<T>& fb, int D) {
  detail::check_correlation_args(fa, fb, D);
  correlation_call_counter().fetch_add(1, std::memory_order_relaxed);
  const Shape& s = fa.shape();
  const int r = (D - 1) / 2;
  const int H = static_cast<int>(s.h), W = static_cast<int>(s.w);
  const long P = static_cast<long>(s.plane());
  BasicCorrelationMap<T> out{BasicTensor<T>(Shape{s.n, static_cast<std::size_t>(D * D), s.h, s.w}), D, s};
  detail::RowMat<T> gram;
  for (std::size_t n = 0; n < s.n; ++n) {
    detail::ConstMatMap<T> am(fa.item(n), static_cast<long>(s.c), P);
    detail::ConstMatMap<T> bm(fb.item(n), static_cast<long>(s.c), P);
    gram.noalias() = am.transpose() * bm;  // gram(p, q) = <A(p), B(q)>
    T* dst = out.data.item(n);
    for (int dy = -r; dy <= r; ++dy) {
      const int i0 = std::max(0, -dy), i1 = std::min(H, H - dy);
      for (int dx = -r; dx <= r; ++dx) {
        const int j0 = std::max(0, -dx), j1 = std::min(W, W - dx);
        T* plane = dst + static_cast<std::size_t>((dy + r) * D + (dx + r)) * static_cast<std::size_t>(P);
        for (int i = i0; i < i1; ++i) {
          const T* grow = gram.data() + static_cast<long>(i * W) * P + (i + dy) * W + dx;
          for (int j = j0; j < j1; ++j) plane[i * W + j] = grow[static_cast<long>(j) * P + j];
        }
      }
    }
  }
  return out;
}

template <typename T>
struct CorrelationGrads {
  BasicTensor<T> dfa;
  BasicTensor<T> dfb;
};

/// Adjoint of mutual_correlate with respect to both feature maps.
template <typename T>
CorrelationGrads<T> mutual_correlate_backward(const BasicTensor<T>& dc, const BasicTensor<T>& fa,
                                              const BasicTensor<T>& fb, int D) {
  detail::check_correlation_args(fa, fb, D);
  const Shape& s = fa.shape();
  if (dc.shape() != Shape{s.n, static_cast<std::size_t>(D * D), s.h, s.w})
    throw shape_error("mutual_correlate_backward: gradient " + dc.shape().str() +
                      " inconsistent with features " + s.str() + " and D=" + std::to_string(D));
  const int r = (D - 1) / 2;
  const int H = static_cast<int>(s.h), W = static_cast<int>(s.w);
  const long P = static_cast<long>(s.plane());
  CorrelationGrads<T> g{BasicTensor<T>(s), BasicTensor<T>(s)};
  detail::RowMat<T> dgram(P, P);
  for (std::size_t n = 0; n < s.n; ++n) {
    dgram.setZero();
    const T* src = dc.item(n);
    for (int dy = -r; dy <= r; ++dy) {
      const int i0 = std::max(0, -dy), i1 = std::min(H, H - dy);
      for (int dx = -r; dx <= r; ++dx) {
        const int j0 = std::max(0, -dx), j1 = std::min(W, W - dx);
        const T* plane = src + static_cast<std::size_t>((dy + r) * D + (dx + r)) * static_cast<std::size_t>(P);
        for (int i = i0; i < i1; ++i) {
          T* grow = dgram.data() + static_cast<long>(i * W) * P + (i + dy) * W + dx;
          for (int j = j0; j < j1; ++j) grow[static_cast<long>(j) * P + j] = plane[i * W + j];
        }
      }
    }
    detail::ConstMatMap<T> am(fa.item(n), static_cast<long>(s.c), P);
    detail::ConstMatMap<T> bm(fb.item(n), static_cast<long>(s.c), P);
    detail::MatMap<T> dam(g.dfa.item(n), static_cast<long>(s.c), P);
    detail::MatMap<T> dbm(g.dfb.item(n), static_cast<long>(s.c), P);
    dam.noalias() = bm * dgram.transpose();
    dbm.noalias() = am * dgram;
  }
  return g;
}

/// Loop form of the backward pass, used to validate the GEMM version.
template <typename T>
CorrelationGrads<T> mutual_correlate_backward_naive(const BasicTensor<T>& dc, const BasicTensor<T>& fa,
                                                    const BasicTensor<T>& fb, int D) {
  detail::check_correlation_args(fa, fb, D);
  const Shape& s = fa.shape();
  const int r = (D - 1) / 2;
  const int H = static_cast<int>(s.h), W = static_cast<int>(s.w);
  CorrelationGrads<T> g{BasicTensor<T>(s), BasicTensor<T>(s)};
  for (std::size_t n = 0; n < s.n; ++n)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int m = i + dy, q = j + dx;
            if (m < 0 || m >= H || q < 0 || q >= W) continue;
            const T d = dc.at(n, static_cast<std::size_t>((dy + r) * D + (dx + r)), static_cast<std::size_t>(i),
                              static_cast<std::size_t>(j));
            for (std::size_t c = 0; c < s.c; ++c) {
              g.dfa.at(n, c, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) +=
                  d * fb.at(n, c, static_cast<std::size_t>(m), static_cast<std::size_t>(q));
              g.dfb.at(n, c, static_cast<std::size_t>(m), static_cast<std::size_t>(q)) +=
                  d * fa.at(n, c, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            }
          }
  return g;
}

}  // namespace docs
