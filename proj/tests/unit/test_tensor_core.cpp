#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <tuple>

#include "docs/gradcheck.hpp"
#include "docs/gradcheck_suite.hpp"
#include "docs/ops.hpp"
#include "docs/optim.hpp"
#include "docs/rng.hpp"
#include "docs/tensor.hpp"

using namespace docs;

namespace {

// ---- oracles (independent of the library's reference loops) -------------

// Convolution as a sum over every (output, input, tap) triple, accumulated
// in double.
template <typename T>
BasicTensor<double> conv_oracle(const BasicTensor<T>& x, const BasicTensor<T>& w, const std::vector<T>& b,
                                int stride, int pad) {
  const int N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  const int O = w.shape().n, K = w.shape().h;
  const int OH = (H + 2 * pad - K) / stride + 1, OW = (W + 2 * pad - K) / stride + 1;
  BasicTensor<double> y(Shape{std::size_t(N), std::size_t(O), std::size_t(OH), std::size_t(OW)});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o)
      for (int r = 0; r < OH; ++r)
        for (int c = 0; c < OW; ++c) {
          double acc = b.empty() ? 0.0 : double(b[o]);
          for (int i = 0; i < C; ++i)
            for (int u = 0; u < K; ++u)
              for (int v = 0; v < K; ++v) {
                const int yy = r * stride - pad + u, xx = c * stride - pad + v;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                acc += double(x.at(n, i, yy, xx)) * double(w.at(o, i, u, v));
              }
          y.at(n, o, r, c) = acc;
        }
  return y;
}

// Transposed convolution as a scatter: each input pixel stamps its kernel
// onto the output. Weight layout [inC, outC, k, k].
template <typename T>
BasicTensor<double> deconv_oracle(const BasicTensor<T>& x, const BasicTensor<T>& w, const std::vector<T>& b,
                                  int stride, int pad) {
  const int N = x.shape().n, C = x.shape().c, H = x.shape().h, W = x.shape().w;
  const int O = w.shape().c, K = w.shape().h;
  const int OH = (H - 1) * stride - 2 * pad + K, OW = (W - 1) * stride - 2 * pad + K;
  BasicTensor<double> y(Shape{std::size_t(N), std::size_t(O), std::size_t(OH), std::size_t(OW)});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o)
      for (int r = 0; r < OH; ++r)
        for (int c = 0; c < OW; ++c) y.at(n, o, r, c) = b.empty() ? 0.0 : double(b[o]);
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < C; ++i)
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
          for (int o = 0; o < O; ++o)
            for (int u = 0; u < K; ++u)
              for (int v = 0; v < K; ++v) {
                const int yy = r * stride - pad + u, xx = c * stride - pad + v;
                if (yy < 0 || yy >= OH || xx < 0 || xx >= OW) continue;
                y.at(n, o, yy, xx) += double(x.at(n, i, r, c)) * double(w.at(i, o, u, v));
              }
  return y;
}

Tensor random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

std::vector<float> random_vec(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

// Largest |a - ref| over the largest |ref|.
template <typename A, typename B>
double scaled_diff(const BasicTensor<A>& a, const BasicTensor<B>& ref) {
  EXPECT_EQ(a.shape(), ref.shape());
  double d = 0, s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(double(a[i]) - double(ref[i])));
    s = std::max(s, std::abs(double(ref[i])));
  }
  return s > 0 ? d / s : d;
}

double inner(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

}  // namespace

// ---- Tensor / ParamStore --------------------------------------------------

TEST(Tensor, DataLengthMatchesShape) {
  Tensor t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  EXPECT_THROW(Tensor(Shape{1, 1, 2, 2}, std::vector<float>(3)), shape_error);
}

TEST(Tensor, GradBufferMatchesData) {
  Tensor t(Shape{1, 2, 3, 3});
  EXPECT_FALSE(t.has_grad());
  t.ensure_grad();
  EXPECT_EQ(t.grad().size(), t.size());
}

TEST(Tensor, RowMajorWidthFastest) {
  Tensor t(Shape{1, 2, 2, 3});
  std::iota(t.data().begin(), t.data().end(), 0.0f);
  EXPECT_EQ(t.at(0, 0, 0, 1), 1.0f);
  EXPECT_EQ(t.at(0, 0, 1, 0), 3.0f);
  EXPECT_EQ(t.at(0, 1, 0, 0), 6.0f);
}

TEST(ParamStore, NamesAreUnique) {
  ParamStore s;
  s.add("enc.conv1.w", Tensor(Shape{1, 1, 1, 1}));
  EXPECT_THROW(s.add("enc.conv1.w", Tensor(Shape{1, 1, 1, 1})), shape_error);
  EXPECT_THROW(s.get("missing"), shape_error);
}

// ---- conv2d ---------------------------------------------------------------

TEST(Conv2d, ZeroInputPassesOnlyBias) {
  Tensor x(Shape{1, 1, 3, 3});
  Tensor w(Shape{1, 1, 3, 3}, 0.7f);
  const std::vector<float> b{0.5f};
  const Tensor y = conv2d(x, w, b, 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (float v : y.data()) EXPECT_EQ(v, 0.5f);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  Rng rng(1);
  const Tensor x = random_tensor(rng, {1, 1, 4, 5});
  const Tensor w(Shape{1, 1, 1, 1}, 1.0f);
  EXPECT_EQ(conv2d(x, w, std::vector<float>{0.0f}, 1, 0), x);
}

TEST(Conv2d, HandSumOfAllEntries) {
  const Tensor x(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor w(Shape{1, 1, 3, 3}, 1.0f);
  const Tensor y = conv2d(x, w, std::vector<float>{0.0f}, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 45.0f);
}

TEST(Conv2d, OutputDimsFollowFormula) {
  for (std::size_t dim : {5u, 6u, 9u})
    for (std::size_t k : {1u, 3u, 4u})
      for (std::size_t stride : {1u, 2u})
        for (std::size_t pad : {0u, 1u, 2u}) {
          if (dim + 2 * pad < k) continue;
          Tensor x(Shape{1, 2, dim, dim});
          Tensor w(Shape{3, 2, k, k});
          const Tensor y = conv2d(x, w, std::vector<float>(3), stride, pad);
          const std::size_t expect = (dim + 2 * pad - k) / stride + 1;
          EXPECT_EQ(y.shape(), (Shape{1, 3, expect, expect}));
        }
}

TEST(Conv2d, ShapeMismatchNamesBothShapes) {
  Tensor x(Shape{1, 3, 5, 5});
  Tensor w(Shape{2, 4, 3, 3});
  try {
    conv2d(x, w, std::vector<float>(2), 1, 1);
    FAIL() << "expected shape_error";
  } catch (const shape_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("1x3x5x5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2x4x3x3"), std::string::npos) << msg;
  }
  EXPECT_THROW(conv2d(Tensor(Shape{1, 4, 5, 5}), w, std::vector<float>(2), 0, 1), shape_error);
}

TEST(Conv2d, MatchesOracleOnRandomConfigs) {
  Rng rng(7);
  struct Cfg { std::size_t n, c, h, w, o, k, stride, pad; };
  for (const Cfg& c : {Cfg{1, 2, 5, 5, 3, 3, 1, 1}, Cfg{2, 3, 8, 7, 4, 3, 2, 1}, Cfg{1, 5, 9, 9, 2, 1, 1, 0},
                       Cfg{1, 4, 6, 6, 3, 4, 2, 1}, Cfg{1, 16, 12, 12, 8, 3, 1, 0}}) {
    const Tensor x = random_tensor(rng, {c.n, c.c, c.h, c.w});
    const Tensor w = random_tensor(rng, {c.o, c.c, c.k, c.k});
    const auto b = random_vec(rng, c.o);
    const auto ref = conv_oracle(x, w, b, int(c.stride), int(c.pad));
    EXPECT_LT(scaled_diff(conv2d(x, w, b, c.stride, c.pad), ref), 1e-5);
    EXPECT_LT(scaled_diff(conv2d_direct(x, w, b, c.stride, c.pad), ref), 1e-5);
  }
}

TEST(Conv2d, BackwardMatchesDirectBackward) {
  Rng rng(8);
  const Tensor x = random_tensor(rng, {2, 3, 7, 7});
  const Tensor w = random_tensor(rng, {4, 3, 3, 3});
  const Tensor dy = random_tensor(rng, {2, 4, 4, 4});
  const auto g = conv2d_backward(x, w, dy, 2, 1);
  const auto r = conv2d_direct_backward(x, w, dy, 2, 1);
  EXPECT_LT(scaled_diff(g.dx, r.dx), 1e-5);
  EXPECT_LT(scaled_diff(g.dw, r.dw), 1e-5);
  for (std::size_t i = 0; i < g.db.size(); ++i) EXPECT_NEAR(g.db[i], r.db[i], 1e-4);
}

TEST(Conv2d, ForwardIsDeterministic) {
  Rng rng(9);
  const Tensor x = random_tensor(rng, {1, 8, 16, 16});
  const Tensor w = random_tensor(rng, {8, 8, 3, 3});
  const auto b = random_vec(rng, 8);
  EXPECT_EQ(conv2d(x, w, b, 1, 1), conv2d(x, w, b, 1, 1));
}

// ---- transposed_conv2d ----------------------------------------------------

TEST(TransposedConv2d, Stride2DoublesSize) {
  Tensor x(Shape{1, 1, 2, 2}, 1.0f);
  Tensor w(Shape{1, 1, 4, 4}, 1.0f);
  EXPECT_EQ(transposed_conv2d(x, w, std::vector<float>{0.0f}, 2, 1).shape(), (Shape{1, 1, 4, 4}));
}

TEST(TransposedConv2d, EqualsConvInputGradient) {
  Rng rng(10);
  // Deconv weight [inC=3, outC=2] is the conv weight [outC=3, inC=2].
  const Tensor w = random_tensor(rng, {3, 2, 4, 4});
  const Tensor x = random_tensor(rng, {1, 3, 5, 5});
  const Tensor deconv = transposed_conv2d(x, w, std::vector<float>(2, 0.0f), 2, 1);
  const Tensor conv_in(Shape{1, 2, deconv.shape().h, deconv.shape().w});
  const auto g = conv2d_backward(conv_in, w, x, 2, 1);
  EXPECT_LT(scaled_diff(deconv, g.dx), 1e-6);
}

TEST(TransposedConv2d, ZeroWeightsGiveBias) {
  Rng rng(11);
  const Tensor x = random_tensor(rng, {1, 2, 3, 3});
  const Tensor w(Shape{2, 3, 4, 4});
  const std::vector<float> b{0.25f, -1.0f, 3.0f};
  const Tensor y = transposed_conv2d(x, w, b, 2, 1);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < y.shape().plane(); ++i) EXPECT_EQ(y[c * y.shape().plane() + i], b[c]);
}

TEST(TransposedConv2d, MatchesScatterOracle) {
  Rng rng(12);
  for (auto [stride, pad, k] : {std::tuple{2, 1, 4}, std::tuple{1, 1, 3}, std::tuple{2, 0, 2}}) {
    const Tensor x = random_tensor(rng, {2, 3, 5, 4});
    const Tensor w = random_tensor(rng, {3, 4, std::size_t(k), std::size_t(k)});
    const auto b = random_vec(rng, 4);
    const auto ref = deconv_oracle(x, w, b, stride, pad);
    EXPECT_LT(scaled_diff(transposed_conv2d(x, w, b, stride, pad), ref), 1e-5);
    EXPECT_LT(scaled_diff(transposed_conv2d_direct(x, w, b, stride, pad), ref), 1e-5);
  }
}

TEST(TransposedConv2d, BackwardMatchesDirectBackward) {
  Rng rng(13);
  const Tensor x = random_tensor(rng, {1, 3, 4, 4});
  const Tensor w = random_tensor(rng, {3, 2, 4, 4});
  const Tensor dy = random_tensor(rng, {1, 2, 8, 8});
  const auto g = transposed_conv2d_backward(x, w, dy, 2, 1);
  const auto r = transposed_conv2d_direct_backward(x, w, dy, 2, 1);
  EXPECT_LT(scaled_diff(g.dx, r.dx), 1e-5);
  EXPECT_LT(scaled_diff(g.dw, r.dw), 1e-5);
}

// Property: <conv(x), y> = <x, conv^T(y)> for matching configurations.
TEST(TransposedConv2d, AdjointIdentity) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const std::size_t k = 2 + rng.index(3), stride = 1 + rng.index(2), pad = rng.index(k);
    const std::size_t ci = 1 + rng.index(4), co = 1 + rng.index(4);
    // Choose h with (h + 2p - k) divisible by the stride so that the
    // transposed conv reproduces the conv input size.
    const std::size_t h = k + stride * (1 + rng.index(4)) - 2 * pad + 2 * stride;
    const Tensor w = random_tensor(rng, {co, ci, k, k});
    const Tensor x = random_tensor(rng, {1, ci, h, h});
    const Tensor cx = conv2d(x, w, std::vector<float>(co, 0.0f), stride, pad);
    const Tensor y = random_tensor(rng, cx.shape());
    const Tensor ty = transposed_conv2d(y, w, std::vector<float>(ci, 0.0f), stride, pad);
    ASSERT_EQ(ty.shape(), x.shape());
    const double lhs = inner(cx, y), rhs = inner(x, ty);
    EXPECT_NEAR(lhs, rhs, 1e-5 * std::max({1.0, std::abs(lhs), std::abs(rhs)})) << "seed " << seed;
  }
}

// ---- maxpool --------------------------------------------------------------

TEST(MaxPool, PicksWindowMax) {
  const Tensor x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  const auto r = maxpool2d(x);
  ASSERT_EQ(r.y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(r.y[0], 4.0f);
}

TEST(MaxPool, TiesRouteToFirstElement) {
  const Tensor x(Shape{1, 1, 4, 4}, 2.0f);
  const auto r = maxpool2d(x);
  for (float v : r.y.data()) EXPECT_EQ(v, 2.0f);
  const Tensor dy(r.y.shape(), 1.0f);
  const Tensor dx = maxpool2d_backward<float>(x.shape(), r.argmax, dy);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(dx.at(0, 0, y, c), (y % 2 == 0 && c % 2 == 0) ? 1.0f : 0.0f);
}

TEST(MaxPool, MatchesWindowScan) {
  Rng rng(14);
  const Tensor x = random_tensor(rng, {2, 3, 4, 6});
  const auto r = maxpool2d(x);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          float m = -1e30f;
          for (std::size_t u = 0; u < 2; ++u)
            for (std::size_t v = 0; v < 2; ++v) m = std::max(m, x.at(n, c, 2 * i + u, 2 * j + v));
          EXPECT_EQ(r.y.at(n, c, i, j), m);
        }
}

TEST(MaxPool, RejectsNonDivisibleDims) {
  EXPECT_THROW(maxpool2d(Tensor(Shape{1, 1, 5, 4})), shape_error);
}

// ---- relu / softmax / concat ----------------------------------------------

TEST(Relu, Elementwise) {
  const Tensor x(Shape{1, 1, 1, 3}, {-1, 0, 2});
  EXPECT_EQ(relu(x), Tensor(Shape{1, 1, 1, 3}, {0, 0, 2}));
  // Subgradient at 0 is 0.
  EXPECT_EQ(relu_backward(x, Tensor(x.shape(), 1.0f)), Tensor(Shape{1, 1, 1, 3}, {0, 0, 1}));
}

TEST(Relu, AllNegativeGivesZeroOutputAndGradient) {
  const Tensor x(Shape{1, 2, 2, 2}, -0.5f);
  const Tensor y = relu(x);
  const Tensor dx = relu_backward(x, Tensor(x.shape(), 3.0f));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
  for (float v : dx.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Softmax, EqualChannelsGiveHalf) {
  const Tensor p = softmax_channels(Tensor(Shape{1, 2, 3, 3}, 1.5f));
  for (float v : p.data()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  const Tensor p = softmax_channels(Tensor(Shape{1, 2, 1, 1}, {0.0f, 20.0f}));
  EXPECT_NEAR(p[0], std::exp(-20.0), 1e-10);
  EXPECT_NEAR(p[1], 1.0, 1e-7);
  const Tensor q = softmax_channels(Tensor(Shape{1, 2, 1, 1}, {1000.0f, -1000.0f}));
  EXPECT_TRUE(q.all_finite());
}

TEST(Softmax, PixelSumsAreOne) {
  Rng rng(15);
  for (std::size_t c : {2u, 3u, 7u}) {
    const Tensor p = softmax_channels(random_tensor(rng, {2, c, 5, 5}, -10, 10));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 25; ++i) {
        double s = 0;
        for (std::size_t k = 0; k < c; ++k) {
          const float v = p[(n * c + k) * 25 + i];
          EXPECT_GT(v, 0.0f);
          EXPECT_LT(v, 1.0f);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
  }
}

TEST(Concat, SinglePartIsIdentity) {
  Rng rng(16);
  const Tensor a = random_tensor(rng, {1, 3, 4, 4});
  const Tensor* parts[] = {&a};
  EXPECT_EQ(concat_channels<float>(parts), a);
}

TEST(Concat, PreservesPartOrder) {
  const Tensor a(Shape{1, 2, 4, 4}, 1.0f), b(Shape{1, 3, 4, 4}, 2.0f);
  const Tensor c = concat_channels(a, b);
  ASSERT_EQ(c.shape(), (Shape{1, 5, 4, 4}));
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(c.at(0, k, 1, 2), k < 2 ? 1.0f : 2.0f);
}

TEST(Concat, SplitRoundTripIsBitExact) {
  Rng rng(17);
  const Tensor a = random_tensor(rng, {2, 2, 3, 3}), b = random_tensor(rng, {2, 5, 3, 3});
  const std::size_t sizes[] = {2, 5};
  const auto parts = split_channels(concat_channels(a, b), std::span<const std::size_t>(sizes));
  EXPECT_EQ(parts[0], a);
  EXPECT_EQ(parts[1], b);
}

TEST(Concat, RejectsSpatialMismatch) {
  EXPECT_THROW(concat_channels(Tensor(Shape{1, 1, 4, 4}), Tensor(Shape{1, 1, 4, 5})), shape_error);
  EXPECT_THROW(concat_channels(Tensor(Shape{1, 1, 4, 4}), Tensor(Shape{2, 1, 4, 4})), shape_error);
}

// ---- cross entropy ---------------------------------------------------------

TEST(CrossEntropy, OneHotCorrectIsNearZero) {
  Mask m(2, 2);
  m.bits = {1, 0, 0, 1};
  Tensor p(Shape{1, 2, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) {
    p[i] = m.bits[i] ? 0.0f : 1.0f;
    p[4 + i] = m.bits[i] ? 1.0f : 0.0f;
  }
  const float loss = cross_entropy_loss(p, m);
  EXPECT_GE(loss, 0.0f);
  EXPECT_LT(loss, 1e-6f);
}

TEST(CrossEntropy, HalfEverywhereIsLn2) {
  Mask m(3, 3);
  m.bits = {1, 0, 1, 0, 1, 0, 1, 1, 0};
  EXPECT_NEAR(cross_entropy_loss(Tensor(Shape{1, 2, 3, 3}, 0.5f), m), std::log(2.0), 1e-6);
}

TEST(CrossEntropy, ClampsSaturatedWrongPrediction) {
  Mask m(1, 1);
  m.bits = {1};
  const float loss = cross_entropy_loss(Tensor(Shape{1, 2, 1, 1}, {1.0f, 0.0f}), m);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, -std::log(1e-7), 1e-3);
}

TEST(CrossEntropy, FusedGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const auto& r : gradcheck_cross_entropy(seed)) EXPECT_LT(r.report.max_rel_error, 1e-4) << r.name;
}

TEST(CrossEntropy, RejectsDimMismatch) {
  EXPECT_THROW(cross_entropy_loss(Tensor(Shape{1, 2, 3, 3}, 0.5f), Mask(3, 4)), shape_error);
  EXPECT_THROW(softmax_cross_entropy(Tensor(Shape{1, 2, 3, 3}), Mask(2, 3)), shape_error);
}

// ---- Adam -----------------------------------------------------------------

TEST(Adam, ZeroGradientNoDecayLeavesParams) {
  Rng rng(18);
  ParamStore s;
  s.add("w", random_tensor(rng, {2, 3, 3, 3}));
  const Tensor before = s.get("w");
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  for (int i = 0; i < 3; ++i) adam_step(s, s.zero_grads(), cfg);
  EXPECT_EQ(s.get("w"), before);
  EXPECT_EQ(s.step(), 3);
}

TEST(Adam, FirstStepClosedForm) {
  // t=1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  for (double g : {0.3, -2.0, 5e-3}) {
    ParamStore s;
    s.add("w", Tensor(Shape{1, 1, 1, 1}, 1.0f));
    GradMap<float> grads;
    grads.emplace("w", Tensor(Shape{1, 1, 1, 1}, static_cast<float>(g)));
    AdamConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;
    adam_step(s, grads, cfg);
    const double expect = 1.0 - cfg.lr * g / (std::abs(g) + cfg.eps);
    EXPECT_NEAR(s.get("w")[0], expect, 1e-6);
    EXPECT_NEAR(s.get("w")[0], 1.0 - cfg.lr * (g > 0 ? 1 : -1), 1e-5);
  }
}

TEST(Adam, WeightDecayIsAddedToGradient) {
  ParamStore s;
  s.add("w", Tensor(Shape{1, 1, 1, 1}, 2.0f));
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  adam_step(s, s.zero_grads(), cfg);
  // Effective gradient 0.5 * 2 = 1 > 0, so the first step is -lr.
  EXPECT_NEAR(s.get("w")[0], 1.9, 1e-6);
}

TEST(Adam, DescendsQuadratic) {
  ParamStore s;
  s.add("w", Tensor(Shape{1, 1, 1, 1}, 1.0f));
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  for (int i = 0; i < 100; ++i) {
    GradMap<float> g;
    g.emplace("w", Tensor(Shape{1, 1, 1, 1}, 2.0f * s.get("w")[0]));
    adam_step(s, g, cfg);
  }
  EXPECT_LT(std::abs(s.get("w")[0]), 0.5f);
  EXPECT_EQ(s.step(), 100);
}

TEST(Adam, MissingGradientRejected) {
  ParamStore s;
  s.add("a", Tensor(Shape{1, 1, 1, 1}));
  s.add("b", Tensor(Shape{1, 1, 1, 1}));
  GradMap<float> g;
  g.emplace("a", Tensor(Shape{1, 1, 1, 1}));
  EXPECT_THROW(adam_step(s, g, AdamConfig{}), shape_error);
  g.emplace("b", Tensor(Shape{1, 1, 1, 2}));
  EXPECT_THROW(adam_step(s, g, AdamConfig{}), shape_error);
}

TEST(Adam, MomentsMatchParameterShapes) {
  ParamStore s;
  s.add("w", Tensor(Shape{2, 1, 3, 3}, 1.0f));
  adam_step(s, s.zero_grads(), AdamConfig{});
  EXPECT_EQ(s.entries()[0].m.shape(), s.get("w").shape());
  EXPECT_EQ(s.entries()[0].v.shape(), s.get("w").shape());
}

// ---- gradcheck ------------------------------------------------------------

TEST(Gradcheck, LinearFunction) {
  BasicTensor<double> x(Shape{1, 1, 2, 3});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * double(i) - 0.2;
  auto f = [](const BasicTensor<double>& v) {
    double s = 0;
    for (double e : v.data()) s += 3.0 * e;
    return s;
  };
  const std::vector<double> analytic(x.size(), 3.0);
  EXPECT_LT(finite_diff_gradcheck(f, x, analytic), 1e-8);
}

TEST(Gradcheck, DetectsWrongGradient) {
  BasicTensor<double> x(Shape{1, 1, 1, 3}, 1.0);
  auto f = [](const BasicTensor<double>& v) { return v[0] * v[0] + v[1] + v[2]; };
  const std::vector<double> wrong{1.0, 1.0, 1.0};  // d/dx0 is 2
  const auto r = finite_diff_gradcheck_report(f, x, wrong);
  EXPECT_GT(r.max_rel_error, 0.4);
  EXPECT_EQ(r.worst_index, 0u);
}

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(gradcheck_rel_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(gradcheck_rel_error(1e-9, 0.0), 1e-9 / 1e-6);
  EXPECT_DOUBLE_EQ(gradcheck_rel_error(2.0, 1.0), 0.5);
}

// Property: every differentiable op passes on several random seeds.
TEST(Gradcheck, AllOpsAcrossSeeds) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed)
    for (const auto& op : {"conv", "deconv", "ce", "pointwise"})
      for (const auto& r : run_gradcheck(op, seed))
        EXPECT_LT(r.report.max_rel_error, 1e-4) << r.name << " seed " << seed;
}

TEST(Gradcheck, ConvOnRandomInput) {
  const auto rs = gradcheck_conv(42);
  ASSERT_EQ(rs.size(), 3u);
  for (const auto& r : rs) EXPECT_LT(r.report.max_rel_error, 1e-4) << r.name;
}
