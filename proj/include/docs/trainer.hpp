#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "docs/checkpoint.hpp"
#include "docs/dataset.hpp"
#include "docs/group.hpp"
#include "docs/metrics.hpp"
#include "docs/network.hpp"
#include "docs/optim.hpp"
#include "docs/parallel.hpp"
#include "docs/rng.hpp"

namespace docs {

/// A training or evaluation pair; the tensors and masks are borrowed.
struct PairRef {
  const Tensor* image_a = nullptr;
  const Tensor* image_b = nullptr;
  const Mask* mask_a = nullptr;
  const Mask* mask_b = nullptr;
};

struct TrainOptions {
  AdamConfig adam;
  std::size_t batch_pairs = 10;
  std::size_t iterations = 5000;
  std::uint64_t seed = 1;
  bool augment = true;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::size_t eval_every = 0;
  std::size_t log_every = 50;
  int threads = 1;
  std::filesystem::path out;  // empty: keep everything in memory
};

struct TrainProgress {
  std::size_t iteration = 0;
  double loss = 0.0;  // mean L_A + L_B over the batch
  std::optional<double> val_jaccard;
};

struct TrainResult {
  std::vector<double> losses;  // per iteration
  std::vector<std::pair<std::size_t, double>> val_jaccard;
};

/// Thresholded predictions for a list of pairs, computed in parallel and
/// stored by index.
inline std::pair<std::vector<Mask>, std::vector<Mask>> predict_pairs(const std::vector<PairRef>& pairs,
                                                                     const ParamStore& params,
                                                                     const NetworkConfig& cfg, int threads = 1,
                                                                     double sigma = kDefaultSigma) {
  std::vector<Mask> ma(pairs.size()), mb(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    auto p = forward_pair(*pairs[i].image_a, *pairs[i].image_b, params, cfg);
    ma[i] = threshold(foreground_map(p.pa), sigma);
    mb[i] = threshold(foreground_map(p.pb), sigma);
  });
  return {std::move(ma), std::move(mb)};
}

/// Mean Jaccard and precision over both sides of every pair.
inline EvalReport evaluate_pairs(const std::vector<PairRef>& pairs, const ParamStore& params,
                                 const NetworkConfig& cfg, int threads = 1) {
  auto [pa, pb] = predict_pairs(pairs, params, cfg, threads);
  EvalReport rep;
  rep.pairs = pairs.size();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    rep.add({std::to_string(i) + "/A", "all", precision(pa[i], *pairs[i].mask_a), jaccard(pa[i], *pairs[i].mask_a)});
    rep.add({std::to_string(i) + "/B", "all", precision(pb[i], *pairs[i].mask_b), jaccard(pb[i], *pairs[i].mask_b)});
  }
  rep.finalize();
  return rep;
}

/// Mini-batch Adam on L_A + L_B. Batches are drawn from a seeded shuffle of
/// the pairs (reshuffled each epoch). Each batch slot writes its own
/// gradient buffer; buffers are summed in slot order, so the update does
/// not depend on the thread count.
inline TrainResult train(ParamStore& params, const NetworkConfig& cfg, const std::vector<PairRef>& pairs,
                         const TrainOptions& opt, const std::vector<PairRef>& val = {},
                         const std::function<void(const TrainProgress&)>& on_progress = {}) {
  if (pairs.empty()) throw data_error("train: no training pairs");
  if (opt.batch_pairs == 0) throw shape_error("train: batch size must be positive");
  namespace fs = std::filesystem;
  std::ofstream loss_log;
  if (!opt.out.empty()) {
    fs::create_directories(opt.out);
    loss_log.open(opt.out / "loss.tsv", std::ios::binary | std::ios::trunc);
    loss_log.precision(9);
    loss_log << "iteration\tloss\tval_jaccard\n";
  }
  auto save = [&](const std::string& name) {
    if (!opt.out.empty()) save_checkpoint(opt.out / name, cfg, params);
  };

  Rng order_rng(mix_seed(opt.seed, 11));
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  order_rng.shuffle(order);
  std::size_t cursor = 0;

  const std::size_t B = opt.batch_pairs;
  std::vector<GradMap<float>> slot_grads(B, params.zero_grads());
  std::vector<double> slot_loss(B);
  GradMap<float> total = params.zero_grads();
  const float scale = 1.0f / static_cast<float>(B);

  TrainResult result;
  for (std::size_t it = 1; it <= opt.iterations; ++it) {
    std::vector<std::size_t> batch(B);
    for (auto& b : batch) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      b = order[cursor++];
    }
    parallel_for(B, opt.threads, [&](std::size_t j) {
      for (auto& [_, g] : slot_grads[j]) g.fill(0.0f);
      const PairRef& p = pairs[batch[j]];
      if (opt.augment) {
        Rng rng(mix_seed(mix_seed(opt.seed, 13), (it - 1) * B + j));
        const auto s = augment_pair(PairSample{*p.image_a, *p.image_b, *p.mask_a, *p.mask_b}, rng);
        slot_loss[j] = pair_loss_and_grads(s.image_a, s.image_b, s.mask_a, s.mask_b, params, cfg, slot_grads[j], scale);
      } else {
        slot_loss[j] = pair_loss_and_grads(*p.image_a, *p.image_b, *p.mask_a, *p.mask_b, params, cfg, slot_grads[j], scale);
      }
    });
    double loss = 0.0;
    for (std::size_t j = 0; j < B; ++j) loss += slot_loss[j];
    loss /= static_cast<double>(B);
    for (auto& [name, g] : total) {
      g.fill(0.0f);
      for (std::size_t j = 0; j < B; ++j) {
        const auto& src = slot_grads[j].at(name);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += src[i];
      }
      if (!g.all_finite()) throw numeric_error("non-finite gradient for '" + name + "' at iteration " + std::to_string(it));
    }
    if (!std::isfinite(loss)) throw numeric_error("non-finite loss at iteration " + std::to_string(it));
    adam_step(params, total, opt.adam);
    for (const auto& e : params.entries())
      if (!e.value.all_finite())
        throw numeric_error("non-finite parameter '" + e.name + "' after iteration " + std::to_string(it));
    result.losses.push_back(loss);

    TrainProgress prog{it, loss, std::nullopt};
    if (opt.eval_every && !val.empty() && it % opt.eval_every == 0) {
      prog.val_jaccard = evaluate_pairs(val, params, cfg, opt.threads).mean_jaccard;
      result.val_jaccard.emplace_back(it, *prog.val_jaccard);
    }
    if (loss_log.is_open()) {
      loss_log << it << '\t' << loss << '\t';
      if (prog.val_jaccard) loss_log << *prog.val_jaccard;
      loss_log << '\n';
    }
    if (opt.checkpoint_every && it % opt.checkpoint_every == 0 && it != opt.iterations) {
      save("checkpoint_" + std::to_string(it) + ".docs");
      save("last.docs");
    }
    if (on_progress && (prog.val_jaccard || (opt.log_every && it % opt.log_every == 0) || it == opt.iterations))
      on_progress(prog);
  }
  save("final.docs");
  save("last.docs");
  return result;
}

}  // namespace docs
