#pragma once

#include <cmath>

#include "docs/tensor.hpp"

namespace docs {

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
};

/// One Adam update with bias correction. Weight decay is added to the
/// gradient as an L2 term (coupled), not applied to the weights directly.
template <typename T>
void adam_step(BasicParamStore<T>& store, const GradMap<T>& grads, const AdamConfig& cfg) {
  for (const auto& e : store.entries()) {
    auto it = grads.find(e.name);
    if (it == grads.end()) throw shape_error("adam_step: missing gradient for '" + e.name + "'");
    if (it->second.shape() != e.value.shape())
      throw shape_error("adam_step: gradient for '" + e.name + "' has shape " +
                        it->second.shape().str() + ", parameter is " + e.value.shape().str());
  }
  const long t = store.step() + 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps), wd = static_cast<T>(cfg.weight_decay);
  const T ic1 = static_cast<T>(1.0 / c1), ic2 = static_cast<T>(1.0 / c2);
  for (auto& e : store.entries()) {
    const auto& g = grads.at(e.name);
    if (e.m.size() != e.value.size()) e.m = BasicTensor<T>(e.value.shape());
    if (e.v.size() != e.value.size()) e.v = BasicTensor<T>(e.value.shape());
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const T gi = g[i] + wd * e.value[i];
      e.m[i] = b1 * e.m[i] + (T{1} - b1) * gi;
      e.v[i] = b2 * e.v[i] + (T{1} - b2) * gi * gi;
      const T mhat = e.m[i] * ic1;
      const T vhat = e.v[i] * ic2;
      e.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  store.set_step(t);
}

}  // namespace docs
