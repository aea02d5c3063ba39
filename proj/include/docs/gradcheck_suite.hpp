#pragma once

// Finite-difference checks of every differentiable op at small sizes, in
// double precision. Each check reduces the op's output to a scalar through
// a fixed random projection <r, op(x)> so all output coordinates matter.

#include <string>
#include <vector>

#include "docs/correlation.hpp"
#include "docs/gradcheck.hpp"
#include "docs/network.hpp"
#include "docs/ops.hpp"
#include "docs/rng.hpp"

namespace docs {

inline constexpr double kGradcheckTolerance = 1e-4;

struct NamedGradcheck {
  std::string name;
  GradcheckReport report;
  bool passed() const { return report.max_rel_error < kGradcheckTolerance; }
};

namespace detail {

using DTensor = BasicTensor<double>;

inline DTensor random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  DTensor t(s);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double dot(const DTensor& a, const DTensor& b) {
  require_same_shape(a, b, "gradcheck projection");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> to_vec(const DTensor& t) { return {t.data().begin(), t.data().end()}; }

inline Mask random_mask(Rng& rng, std::size_t h, std::size_t w) {
  Mask m(h, w);
  for (auto& b : m.bits) b = rng.coin() ? 1 : 0;
  return m;
}

}  // namespace detail

// Step used for op-level checks. Small enough that a ReLU or max-pool
// switch inside the step is unlikely at these sizes, large enough that
// round-off stays far below the tolerance in double precision.
inline constexpr double kGradcheckEps = 1e-6;

inline std::vector<NamedGradcheck> gradcheck_conv(std::uint64_t seed) {
  using namespace detail;
  Rng rng(mix_seed(seed, 101));
  const auto x = random_tensor(rng, {1, 2, 5, 5});
  const auto w = random_tensor(rng, {3, 2, 3, 3});
  const auto b = random_tensor(rng, {3, 1, 1, 1});
  const auto r = random_tensor(rng, {1, 3, 5, 5});
  const auto g = conv2d_backward(x, w, r, 1, 1);
  auto fx = [&](const DTensor& v) { return dot(r, conv2d(v, w, b.data(), 1, 1)); };
  auto fw = [&](const DTensor& v) { return dot(r, conv2d(x, v, b.data(), 1, 1)); };
  auto fb = [&](const DTensor& v) { return dot(r, conv2d(x, w, v.data(), 1, 1)); };
  return {{"conv2d/x", finite_diff_gradcheck_report(fx, x, to_vec(g.dx), kGradcheckEps)},
          {"conv2d/w", finite_diff_gradcheck_report(fw, w, to_vec(g.dw), kGradcheckEps)},
          {"conv2d/b", finite_diff_gradcheck_report(fb, b, g.db, kGradcheckEps)}};
}

inline std::vector<NamedGradcheck> gradcheck_deconv(std::uint64_t seed) {
  using namespace detail;
  Rng rng(mix_seed(seed, 102));
  const auto x = random_tensor(rng, {1, 2, 3, 3});
  const auto w = random_tensor(rng, {2, 3, 4, 4});
  const auto b = random_tensor(rng, {3, 1, 1, 1});
  const auto r = random_tensor(rng, {1, 3, 6, 6});
  const auto g = transposed_conv2d_backward(x, w, r, 2, 1);
  auto fx = [&](const DTensor& v) { return dot(r, transposed_conv2d(v, w, b.data(), 2, 1)); };
  auto fw = [&](const DTensor& v) { return dot(r, transposed_conv2d(x, v, b.data(), 2, 1)); };
  auto fb = [&](const DTensor& v) { return dot(r, transposed_conv2d(x, w, v.data(), 2, 1)); };
  return {{"transposed_conv2d/x", finite_diff_gradcheck_report(fx, x, to_vec(g.dx), kGradcheckEps)},
          {"transposed_conv2d/w", finite_diff_gradcheck_report(fw, w, to_vec(g.dw), kGradcheckEps)},
          {"transposed_conv2d/b", finite_diff_gradcheck_report(fb, b, g.db, kGradcheckEps)}};
}

inline std::vector<NamedGradcheck> gradcheck_corr(std::uint64_t seed) {
  using namespace detail;
  Rng rng(mix_seed(seed, 103));
  const int D = 7;
  const auto a = random_tensor(rng, {1, 3, 4, 4});
  const auto b = random_tensor(rng, {1, 3, 4, 4});
  const auto r = random_tensor(rng, {1, 49, 4, 4});
  const auto g = mutual_correlate_backward(r, a, b, D);
  auto fa = [&](const DTensor& v) { return dot(r, mutual_correlate(v, b, D).data); };
  auto fb = [&](const DTensor& v) { return dot(r, mutual_correlate(a, v, D).data); };
  return {{"mutual_correlate/fA", finite_diff_gradcheck_report(fa, a, to_vec(g.dfa), kGradcheckEps)},
          {"mutual_correlate/fB", finite_diff_gradcheck_report(fb, b, to_vec(g.dfb), kGradcheckEps)}};
}

inline std::vector<NamedGradcheck> gradcheck_cross_entropy(std::uint64_t seed) {
  using namespace detail;
  Rng rng(mix_seed(seed, 104));
  const auto z = random_tensor(rng, {1, 2, 4, 4}, -3.0, 3.0);
  const Mask m = random_mask(rng, 4, 4);
  const auto lg = softmax_cross_entropy(z, m);
  auto f = [&](const DTensor& v) { return cross_entropy_loss(softmax_channels(v), m); };
  return {{"softmax_cross_entropy/logits", finite_diff_gradcheck_report(f, z, to_vec(lg.dlogits), kGradcheckEps)}};
}

inline std::vector<NamedGradcheck> gradcheck_pointwise(std::uint64_t seed) {
  using namespace detail;
  Rng rng(mix_seed(seed, 105));
  std::vector<NamedGradcheck> out;
  {
    // Keep ReLU inputs away from the kink.
    auto x = random_tensor(rng, {1, 2, 4, 4});
    for (auto& v : x.data())
      if (std::abs(v) < 1e-3) v = 0.5;
    const auto r = random_tensor(rng, x.shape());
    const auto dx = relu_backward(x, r);
    auto f = [&](const DTensor& v) { return dot(r, relu(v)); };
    out.push_back({"relu", finite_diff_gradcheck_report(f, x, to_vec(dx), kGradcheckEps)});
  }
  {
    const auto x = random_tensor(rng, {1, 2, 4, 4});
    const auto r = random_tensor(rng, {1, 2, 2, 2});
    const auto pr = maxpool2d(x);
    const auto dx = maxpool2d_backward<double>(x.shape(), pr.argmax, r);
    auto f = [&](const DTensor& v) { return dot(r, maxpool2d(v).y); };
    out.push_back({"maxpool2d", finite_diff_gradcheck_report(f, x, to_vec(dx), kGradcheckEps)});
  }
  {
    const auto x = random_tensor(rng, {1, 3, 3, 3});
    const auto r = random_tensor(rng, x.shape());
    const auto dx = l2_normalize_channels_backward(x, r);
    auto f = [&](const DTensor& v) { return dot(r, l2_normalize_channels(v)); };
    out.push_back({"l2_normalize_channels", finite_diff_gradcheck_report(f, x, to_vec(dx), kGradcheckEps)});
  }
  return out;
}

/// Squeeze stage (1x1 conv + ReLU) with respect to its input and weights.
inline std::vector<NamedGradcheck> gradcheck_squeeze(std::uint64_t seed) {
  using namespace detail;
  NetworkConfig cfg = NetworkConfig::tiny();
  const auto params = init_params<double>(cfg, seed);
  Rng rng(mix_seed(seed, 106));
  const auto x = random_tensor(rng, {1, cfg.feature_channels(), 4, 4}, 0.0, 1.0);
  const auto r = random_tensor(rng, {1, cfg.squeeze_channels, 4, 4});
  const auto seq = squeeze_layers(cfg);
  Tape<double> tape;
  run_sequence(seq, x, params, &tape);
  GradMap<double> grads = params.zero_grads();
  const auto dx = backprop_sequence(seq, tape, r, params, grads);
  auto fx = [&](const DTensor& v) { return dot(r, run_sequence(seq, v, params)); };
  std::vector<NamedGradcheck> out{{"squeeze/x", finite_diff_gradcheck_report(fx, x, to_vec(dx), kGradcheckEps)}};
  for (const auto& e : params.entries()) {
    if (e.name.rfind("squeeze", 0) != 0) continue;
    auto fw = [&](const DTensor& v) {
      auto p = params;
      p.get(e.name) = v;
      return dot(r, run_sequence(seq, x, p));
    };
    out.push_back({"squeeze/" + e.name, finite_diff_gradcheck_report(fw, e.value, to_vec(grads.at(e.name)), kGradcheckEps)});
  }
  return out;
}

/// Total pair loss of the tiny network (16x16 inputs) with respect to every
/// parameter blob, sampling up to `per_param` coordinates per blob.
inline std::vector<NamedGradcheck> gradcheck_e2e(std::uint64_t seed, Fusion fusion = Fusion::correlation,
                                                 std::size_t per_param = 24) {
  using namespace detail;
  NetworkConfig cfg = NetworkConfig::tiny();
  cfg.fusion = fusion;
  auto params = init_params<double>(cfg, seed);
  Rng rng(mix_seed(seed, 107));
  const auto ia = random_tensor(rng, {1, 3, 16, 16}, 0.0, 1.0);
  const auto ib = random_tensor(rng, {1, 3, 16, 16}, 0.0, 1.0);
  const Mask ma = random_mask(rng, 16, 16), mb = random_mask(rng, 16, 16);
  GradMap<double> grads = params.zero_grads();
  pair_loss_and_grads(ia, ib, ma, mb, params, cfg, grads);
  std::vector<NamedGradcheck> out;
  for (auto& e : params.entries()) {
    std::vector<std::size_t> coords;
    for (std::size_t i = 0; i < std::min(per_param, e.value.size()); ++i) coords.push_back(rng.index(e.value.size()));
    const std::string name = e.name;
    auto f = [&](const DTensor& v) {
      auto saved = params.get(name);
      params.get(name) = v;
      const double loss = pair_loss(ia, ib, ma, mb, params, cfg);
      params.get(name) = std::move(saved);
      return loss;
    };
    const auto analytic = to_vec(grads.at(name));
    out.push_back({"e2e/" + name, finite_diff_gradcheck_report(f, e.value, analytic, kGradcheckEps, coords)});
  }
  return out;
}

inline const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops{"conv", "deconv", "corr", "ce", "pointwise", "squeeze", "e2e"};
  return ops;
}

/// Dispatches by op name; throws shape_error for unknown names.
inline std::vector<NamedGradcheck> run_gradcheck(const std::string& op, std::uint64_t seed) {
  if (op == "conv") return gradcheck_conv(seed);
  if (op == "deconv") return gradcheck_deconv(seed);
  if (op == "corr") return gradcheck_corr(seed);
  if (op == "ce") return gradcheck_cross_entropy(seed);
  if (op == "pointwise") return gradcheck_pointwise(seed);
  if (op == "squeeze") return gradcheck_squeeze(seed);
  if (op == "e2e") return gradcheck_e2e(seed);
  throw shape_error("unknown gradcheck op '" + op + "'");
}

}  // namespace docs
