#pragma once

// Precision (pixel accuracy over foreground and background) and Jaccard
// (foreground IoU), with per-group and overall aggregation.

#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "docs/dataset.hpp"
#include "docs/error.hpp"
#include "docs/mask.hpp"
#include "docs/png_io.hpp"

namespace docs {

/// Percentage of pixels where pred and gt agree.
inline double precision(const Mask& pred, const Mask& gt) {
  require_same_dims(pred, gt, "precision");
  if (pred.size() == 0) throw shape_error("precision: empty masks");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) agree += (pred.bits[i] != 0) == (gt.bits[i] != 0);
  return 100.0 * static_cast<double>(agree) / static_cast<double>(pred.size());
}

/// Foreground intersection over union; two empty masks score 1.
inline double jaccard(const Mask& pred, const Mask& gt) {
  require_same_dims(pred, gt, "jaccard");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct EvalItem {
  std::string item;   // e.g. "test/00003/A"
  std::string group;  // common-class key, e.g. "2,5"
  double precision = 0.0;
  double jaccard = 0.0;
};

struct GroupMean {
  std::size_t count = 0;
  double precision = 0.0;
  double jaccard = 0.0;
};

struct EvalReport {
  std::vector<EvalItem> items;
  std::map<std::string, GroupMean> groups;
  double mean_precision = 0.0;
  double mean_jaccard = 0.0;
  std::size_t pairs = 0;

  void add(EvalItem it) { items.push_back(std::move(it)); }

  // Recomputes arithmetic means per group and overall.
  void finalize() {
    groups.clear();
    double p = 0.0, j = 0.0;
    for (const auto& it : items) {
      auto& g = groups[it.group];
      ++g.count;
      g.precision += it.precision;
      g.jaccard += it.jaccard;
      p += it.precision;
      j += it.jaccard;
    }
    for (auto& [_, g] : groups) {
      g.precision /= static_cast<double>(g.count);
      g.jaccard /= static_cast<double>(g.count);
    }
    const auto n = static_cast<double>(items.size());
    mean_precision = items.empty() ? 0.0 : p / n;
    mean_jaccard = items.empty() ? 0.0 : j / n;
  }

  /// item<TAB>P<TAB>J lines, one per pair side.
  void write_tsv(std::ostream& os) const {
    char buf[64];
    for (const auto& it : items) {
      std::snprintf(buf, sizeof buf, "\t%.4f\t%.6f\n", it.precision, it.jaccard);
      os << it.item << buf;
    }
  }

  void write_table(std::ostream& os) const {
    char buf[160];
    os << "# means are arithmetic over pair sides (each pair contributes A and B)\n";
    std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s\n", "group", "sides", "P(%)", "J");
    os << buf;
    for (const auto& [name, g] : groups) {
      std::snprintf(buf, sizeof buf, "%-16s %8zu %8.2f %8.4f\n", name.c_str(), g.count, g.precision, g.jaccard);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%-16s %8zu %8.2f %8.4f\n", "overall", items.size(), mean_precision,
                  mean_jaccard);
    os << buf;
    os << "pairs evaluated: " << pairs << "\n";
  }
};

inline std::string class_key(const std::set<int>& classes) {
  std::string s;
  for (int c : classes) s += (s.empty() ? "" : ",") + std::to_string(c);
  return s;
}

/// Scores one pair side per (record, side) from in-memory masks.
inline EvalReport evaluate_records(const std::vector<PairRecord>& records, const std::vector<Mask>& pred_a,
                                   const std::vector<Mask>& pred_b, const std::string& prefix = "") {
  if (pred_a.size() != records.size() || pred_b.size() != records.size())
    throw shape_error("evaluate_records: prediction count does not match records");
  EvalReport rep;
  rep.pairs = records.size();
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto key = class_key(records[r].common_classes);
    const std::string base = prefix + std::to_string(r);
    rep.add({base + "/A", key, precision(pred_a[r], records[r].mask_a), jaccard(pred_a[r], records[r].mask_a)});
    rep.add({base + "/B", key, precision(pred_b[r], records[r].mask_b), jaccard(pred_b[r], records[r].mask_b)});
  }
  rep.finalize();
  return rep;
}

/// Scores predictions stored as <pred_dir>/<basename of each GT mask path>.
inline EvalReport evaluate_manifest(const std::filesystem::path& pred_dir, const Manifest& manifest) {
  std::vector<Mask> pa, pb;
  pa.reserve(manifest.records.size());
  pb.reserve(manifest.records.size());
  auto load = [&](const PairRecord& r, std::size_t idx, const std::string& gt_path, char side) {
    const auto p = pred_dir / std::filesystem::path(gt_path).filename();
    if (gt_path.empty() || !std::filesystem::exists(p))
      throw data_error("missing prediction '" + p.string() + "' for " + to_string(manifest.split) + " record " +
                       std::to_string(idx) + " (" + r.id_a + ", " + r.id_b + ") side " + side);
    return read_mask_png(p);
  };
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    pa.push_back(load(r, i, r.mask_a_path, 'A'));
    pb.push_back(load(r, i, r.mask_b_path, 'B'));
  }
  return evaluate_records(manifest.records, pa, pb, to_string(manifest.split) + "/");
}

}  // namespace docs
