#pragma once

// Group co-segmentation: pair every image with K partners and threshold the
// per-pixel median of its foreground probabilities.

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "docs/error.hpp"
#include "docs/mask.hpp"
#include "docs/network.hpp"
#include "docs/parallel.hpp"
#include "docs/rng.hpp"

namespace docs {

struct PairStrategy {
  enum class Kind { all, random_k } kind = Kind::all;
  std::size_t k = 0;
  std::uint64_t seed = 0;

  static PairStrategy all() { return {}; }
  static PairStrategy random_k(std::size_t k, std::uint64_t seed) { return {Kind::random_k, k, seed}; }
};

struct Pairing {
  std::size_t image = 0;
  std::size_t partner = 0;
  friend bool operator==(const Pairing&, const Pairing&) = default;
};

/// Ordered pairings, grouped by image. `all` gives every partner != n;
/// random_k draws k distinct partners per image from a seeded generator.
inline std::vector<Pairing> pair_plan(std::size_t n_images, const PairStrategy& strategy) {
  if (n_images < 2) throw shape_error("pair_plan: need at least 2 images, got " + std::to_string(n_images));
  std::vector<Pairing> plan;
  if (strategy.kind == PairStrategy::Kind::all) {
    for (std::size_t n = 0; n < n_images; ++n)
      for (std::size_t p = 0; p < n_images; ++p)
        if (p != n) plan.push_back({n, p});
    return plan;
  }
  if (strategy.k < 1 || strategy.k > n_images - 1)
    throw shape_error("pair_plan: k=" + std::to_string(strategy.k) + " outside [1, " +
                      std::to_string(n_images - 1) + "]");
  Rng rng(strategy.seed);
  for (std::size_t n = 0; n < n_images; ++n) {
    std::vector<std::size_t> others;
    for (std::size_t p = 0; p < n_images; ++p)
      if (p != n) others.push_back(p);
    for (std::size_t j = 0; j < strategy.k; ++j) std::swap(others[j], others[j + rng.index(others.size() - j)]);
    others.resize(strategy.k);
    std::sort(others.begin(), others.end());
    for (std::size_t p : others) plan.push_back({n, p});
  }
  return plan;
}

/// Foreground probability raster (h x w), row-major.
struct ProbMap {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<float> values;
};

inline constexpr double kDefaultSigma = 0.5;

/// Per-pixel median over the maps, foreground where median > sigma. For
/// even counts the median is the mean of the two central values.
inline Mask aggregate_median(const std::vector<ProbMap>& maps, double sigma = kDefaultSigma) {
  if (maps.empty()) throw shape_error("aggregate_median: no probability maps");
  const std::size_t h = maps[0].h, w = maps[0].w;
  for (const auto& m : maps)
    if (m.h != h || m.w != w || m.values.size() != h * w)
      throw shape_error("aggregate_median: map dims " + std::to_string(m.h) + "x" + std::to_string(m.w) +
                        " vs " + std::to_string(h) + "x" + std::to_string(w));
  const std::size_t K = maps.size();
  Mask out(h, w);
  std::vector<float> v(K);
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t k = 0; k < K; ++k) v[k] = maps[k].values[i];
    std::sort(v.begin(), v.end());
    const double med = K % 2 ? static_cast<double>(v[K / 2])
                             : 0.5 * (static_cast<double>(v[K / 2 - 1]) + static_cast<double>(v[K / 2]));
    out.bits[i] = med > sigma ? 1 : 0;
  }
  return out;
}

inline ProbMap foreground_map(const Tensor& probs) {
  const Shape& s = probs.shape();
  if (s.n != 1 || s.c != 2) throw shape_error("foreground_map: expected 1x2xHxW, got " + s.str());
  ProbMap m{s.h, s.w, std::vector<float>(probs.ptr() + s.plane(), probs.ptr() + 2 * s.plane())};
  return m;
}

inline Mask threshold(const ProbMap& m, double sigma = kDefaultSigma) {
  Mask out(m.h, m.w);
  for (std::size_t i = 0; i < m.values.size(); ++i) out.bits[i] = m.values[i] > sigma ? 1 : 0;
  return out;
}

struct GroupImageResult {
  std::vector<ProbMap> maps;          // one per pairing, in plan order
  std::vector<std::size_t> partners;  // partner index per map
  Mask mask;
};

struct GroupResult {
  std::vector<Pairing> plan;
  std::vector<GroupImageResult> images;
};

/// Runs forward_pair for every ordered pairing (n, partner); only image n's
/// side feeds n's map pool. Pairings run in parallel; results are stored by
/// plan index so the outcome does not depend on the thread count.
inline GroupResult run_group(const std::vector<Tensor>& images, const ParamStore& params, const NetworkConfig& cfg,
                             const PairStrategy& strategy, double sigma = kDefaultSigma, int threads = 1) {
  GroupResult res;
  res.plan = pair_plan(images.size(), strategy);
  std::vector<ProbMap> maps(res.plan.size());
  parallel_for(res.plan.size(), threads, [&](std::size_t i) {
    const auto& pr = res.plan[i];
    maps[i] = foreground_map(forward_pair(images[pr.image], images[pr.partner], params, cfg).pa);
  });
  res.images.resize(images.size());
  for (std::size_t i = 0; i < res.plan.size(); ++i) {
    auto& slot = res.images[res.plan[i].image];
    slot.maps.push_back(std::move(maps[i]));
    slot.partners.push_back(res.plan[i].partner);
  }
  for (auto& im : res.images) im.mask = aggregate_median(im.maps, sigma);
  return res;
}

}  // namespace docs
