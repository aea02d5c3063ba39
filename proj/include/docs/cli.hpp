#pragma once

// Command-line front end. Commands are plain functions so tests can call
// them in-process; run_cli maps exceptions to exit codes
// (0 ok, 1 usage, 2 data, 3 numeric).

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "docs/checkpoint.hpp"
#include "docs/correlation.hpp"
#include "docs/dataset.hpp"
#include "docs/dataset_io.hpp"
#include "docs/gradcheck_suite.hpp"
#include "docs/group.hpp"
#include "docs/metrics.hpp"
#include "docs/pmap.hpp"
#include "docs/png_io.hpp"
#include "docs/resize.hpp"
#include "docs/run_config.hpp"
#include "docs/trainer.hpp"

namespace docs::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

class usage_error : public std::runtime_error {
 public:
  explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  fs::path out;
  std::uint64_t seed = 1;
  std::size_t images = 500;
  std::size_t pairs = 3000;
  std::optional<std::size_t> eval_pairs;  // per val/test split; default pairs / 10
  bool force = false;
};

inline Dataset cmd_synth(const SynthOptions& o, std::ostream& log) {
  if (fs::exists(o.out) && !fs::is_empty(o.out)) {
    if (!o.force) throw usage_error("output directory '" + o.out.string() + "' is not empty (use --force)");
    for (const char* sub : {"images", "labels", "masks"}) fs::remove_all(o.out / sub);
    for (Split s : {Split::train, Split::val, Split::test}) fs::remove(o.out / manifest_filename(s));
  }
  DatasetOptions d;
  d.n_images = o.images;
  d.train_pairs = o.pairs;
  d.eval_pairs = o.eval_pairs.value_or(std::max<std::size_t>(1, o.pairs / 10));
  d.seeds = DatasetSeeds{mix_seed(o.seed, 1), mix_seed(o.seed, 2)};
  Dataset ds = make_splits(d);
  write_dataset(o.out, ds);
  log << "wrote " << ds.images.size() << " images to " << o.out.string() << "\n";
  for (const auto& m : ds.manifests) log << "  " << to_string(m.split) << ": " << m.records.size() << " pairs\n";
  return ds;
}

// ---------------------------------------------------------------------------
// train

struct LoadedSplit {
  Manifest manifest;
  std::vector<PairRef> pairs;
};

// Loads a split's manifest and its images (through the shared cache) and
// checks that every image matches the network input size.
inline LoadedSplit load_split(const fs::path& data, Split split, ImageCache& cache, const NetworkConfig& cfg) {
  LoadedSplit s;
  s.manifest = read_manifest(data, split);
  for (const auto& r : s.manifest.records) {
    for (const auto* id : {&r.id_a, &r.id_b}) {
      const Tensor& t = cache.get(*id);
      if (t.shape().h != cfg.input_size || t.shape().w != cfg.input_size)
        throw data_error("image '" + *id + "' is " + std::to_string(t.shape().h) + "x" + std::to_string(t.shape().w) +
                         ", network expects " + std::to_string(cfg.input_size));
    }
  }
  for (const auto& r : s.manifest.records) s.pairs.push_back({&cache.get(r.id_a), &cache.get(r.id_b), &r.mask_a, &r.mask_b});
  return s;
}

inline TrainResult cmd_train(const RunConfig& rc, int threads, std::ostream& log) {
  if (rc.data.empty()) throw usage_error("train: no data directory (--data or 'data' in the config)");
  if (rc.out.empty()) throw usage_error("train: no output directory (--out or 'out' in the config)");
  const NetworkConfig cfg = rc.network();
  const fs::path out(rc.out);
  fs::create_directories(out);
  {
    std::ofstream echo(out / "config.txt", std::ios::binary);
    echo << rc.serialize();
  }
  ImageCache cache(rc.data);
  auto train_split = load_split(rc.data, Split::train, cache, cfg);
  LoadedSplit val_split;
  if (rc.eval_every) val_split = load_split(rc.data, Split::val, cache, cfg);

  ParamStore params = init_params(cfg, rc.seed);
  TrainOptions opt;
  opt.adam = rc.adam();
  opt.batch_pairs = rc.batch_pairs;
  opt.iterations = rc.iterations;
  opt.seed = rc.seed;
  opt.augment = rc.augment;
  opt.checkpoint_every = rc.checkpoint_every;
  opt.eval_every = rc.eval_every;
  opt.log_every = rc.log_every;
  opt.threads = threads;
  opt.out = out;
  log << "training " << to_string(cfg.topology) << "/" << to_string(cfg.fusion) << " on "
      << train_split.pairs.size() << " pairs, " << params.parameter_count() << " parameters\n";
  const auto t0 = std::chrono::steady_clock::now();
  try {
    auto res = train(params, cfg, train_split.pairs, opt, val_split.pairs, [&](const TrainProgress& p) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char buf[160];
      std::snprintf(buf, sizeof buf, "iter %6zu  loss %.5f  %7.1fs", p.iteration, p.loss, secs);
      log << buf;
      if (p.val_jaccard) log << "  val J " << *p.val_jaccard;
      log << "\n" << std::flush;
    });
    log << "final checkpoint: " << (out / "final.docs").string() << "\n";
    return res;
  } catch (const numeric_error& e) {
    throw numeric_error(std::string(e.what()) + "; last good checkpoint is " +
                        (fs::exists(out / "last.docs") ? (out / "last.docs").string() : std::string("(none yet)")));
  }
}

// ---------------------------------------------------------------------------
// infer / predict

// Foreground probability of `image` at its own resolution; images of other
// sizes are resized to the network input and the map is resized back.
struct SideOutput {
  ProbMap prob;
  Mask mask;
};

inline Tensor fit_to_network(const Tensor& image, const NetworkConfig& cfg, const std::string& label, std::ostream& log) {
  if (image.shape().h == cfg.input_size && image.shape().w == cfg.input_size) return image;
  log << "resizing " << label << " from " << image.shape().h << "x" << image.shape().w << " to " << cfg.input_size
      << "x" << cfg.input_size << " (bilinear)\n";
  return resize_bilinear(image, cfg.input_size, cfg.input_size);
}

inline ProbMap fit_back(const ProbMap& m, std::size_t h, std::size_t w) {
  if (m.h == h && m.w == w) return m;
  Tensor t(Shape{1, 1, m.h, m.w}, m.values);
  const Tensor r = resize_bilinear(t, h, w);
  return ProbMap{h, w, std::vector<float>(r.data().begin(), r.data().end())};
}

struct InferOptions {
  fs::path ckpt;
  fs::path image_a;
  fs::path image_b;
  fs::path out;
  bool dump_prob = false;
  double sigma = kDefaultSigma;
};

inline std::pair<SideOutput, SideOutput> cmd_infer(const InferOptions& o, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(o.ckpt);
  const Tensor a = read_png_rgb(o.image_a), b = read_png_rgb(o.image_b);
  const auto p = forward_pair(fit_to_network(a, ck.config, "image A", log), fit_to_network(b, ck.config, "image B", log),
                              ck.params, ck.config);
  SideOutput sa{fit_back(foreground_map(p.pa), a.shape().h, a.shape().w), {}};
  SideOutput sb{fit_back(foreground_map(p.pb), b.shape().h, b.shape().w), {}};
  sa.mask = threshold(sa.prob, o.sigma);
  sb.mask = threshold(sb.prob, o.sigma);
  fs::create_directories(o.out);
  write_mask_png(o.out / "A_mask.png", sa.mask);
  write_mask_png(o.out / "B_mask.png", sb.mask);
  if (o.dump_prob) {
    write_pmap(o.out / "A_prob.pmap", sa.prob);
    write_pmap(o.out / "B_prob.pmap", sb.prob);
  }
  log << "wrote " << (o.out / "A_mask.png").string() << " and " << (o.out / "B_mask.png").string() << "\n";
  return {std::move(sa), std::move(sb)};
}

struct PredictOptions {
  fs::path ckpt;
  fs::path data;
  Split split = Split::test;
  fs::path out;
};

/// Predicts every record of a split; masks are named after the basename of
/// the corresponding ground-truth mask so `eval` can pair them up.
inline void cmd_predict(const PredictOptions& o, int threads, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(o.ckpt);
  ImageCache cache(o.data);
  const auto s = load_split(o.data, o.split, cache, ck.config);
  auto [pa, pb] = predict_pairs(s.pairs, ck.params, ck.config, threads);
  fs::create_directories(o.out);
  for (std::size_t i = 0; i < s.pairs.size(); ++i) {
    const auto& r = s.manifest.records[i];
    write_mask_png(o.out / fs::path(r.mask_a_path).filename(), pa[i]);
    write_mask_png(o.out / fs::path(r.mask_b_path).filename(), pb[i]);
  }
  log << "wrote " << 2 * s.pairs.size() << " masks to " << o.out.string() << "\n";
}

// ---------------------------------------------------------------------------
// group

struct GroupOptions {
  fs::path ckpt;
  fs::path dir;
  fs::path out;
  std::string k = "all";
  std::uint64_t seed = 1;
  double sigma = kDefaultSigma;
  bool dump_prob = false;
};

inline PairStrategy parse_strategy(const std::string& k, std::uint64_t seed) {
  if (k == "all") return PairStrategy::all();
  try {
    std::size_t pos = 0;
    const auto v = std::stoul(k, &pos);
    if (pos == k.size() && v >= 1) return PairStrategy::random_k(v, seed);
  } catch (const std::exception&) {
  }
  throw usage_error("--k must be 'all' or a positive integer, got '" + k + "'");
}

inline GroupResult cmd_group(const GroupOptions& o, int threads, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(o.ckpt);
  std::vector<fs::path> files;
  if (!fs::is_directory(o.dir)) throw data_error("'" + o.dir.string() + "' is not a directory");
  for (const auto& e : fs::directory_iterator(o.dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.size() < 2) throw data_error("group needs at least 2 PNG images in '" + o.dir.string() + "'");
  const PairStrategy strategy = parse_strategy(o.k, o.seed);
  std::vector<Tensor> originals, inputs;
  for (const auto& f : files) {
    originals.push_back(read_png_rgb(f));
    inputs.push_back(fit_to_network(originals.back(), ck.config, f.filename().string(), log));
  }
  GroupResult res = run_group(inputs, ck.params, ck.config, strategy, o.sigma, threads);
  fs::create_directories(o.out);
  std::ofstream plan(o.out / "pairs.log", std::ios::binary);
  plan << "# k=" << o.k << " sigma=" << o.sigma << " pairings=" << res.plan.size() << "\n";
  for (const auto& pr : res.plan)
    plan << files[pr.image].filename().string() << '\t' << files[pr.partner].filename().string() << '\n';
  for (std::size_t n = 0; n < files.size(); ++n) {
    auto& im = res.images[n];
    const auto& s = originals[n].shape();
    for (auto& m : im.maps) m = fit_back(m, s.h, s.w);
    im.mask = aggregate_median(im.maps, o.sigma);
    const std::string stem = files[n].stem().string();
    write_mask_png(o.out / (stem + "_mask.png"), im.mask);
    if (o.dump_prob)
      for (std::size_t k = 0; k < im.maps.size(); ++k)
        write_pmap(o.out / (stem + "_" + files[im.partners[k]].stem().string() + ".pmap"), im.maps[k]);
  }
  log << "ran " << res.plan.size() << " forward passes over " << files.size() << " images\n";
  return res;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  fs::path pred;
  fs::path data;
  Split split = Split::test;
  fs::path out;  // defaults to pred
};

inline EvalReport cmd_eval(const EvalOptions& o, std::ostream& log) {
  const Manifest m = read_manifest(o.data, o.split);
  EvalReport rep = evaluate_manifest(o.pred, m);
  const fs::path out = o.out.empty() ? o.pred : o.out;
  fs::create_directories(out);
  std::ofstream table(out / "report.txt", std::ios::binary);
  rep.write_table(table);
  std::ofstream tsv(out / "report.tsv", std::ios::binary);
  rep.write_tsv(tsv);
  rep.write_table(log);
  return rep;
}

// ---------------------------------------------------------------------------
// gradcheck / bench

inline bool cmd_gradcheck(const std::string& op, std::uint64_t seed, std::ostream& log) {
  std::vector<NamedGradcheck> results;
  if (op == "all") {
    for (const auto& name : gradcheck_ops())
      for (auto& r : run_gradcheck(name, seed)) results.push_back(std::move(r));
  } else {
    results = run_gradcheck(op, seed);
  }
  bool ok = true;
  double worst = 0.0;
  char buf[200];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-36s max rel error %.3e  %s\n", r.name.c_str(), r.report.max_rel_error,
                  r.passed() ? "PASS" : "FAIL");
    log << buf;
    ok = ok && r.passed();
    worst = std::max(worst, r.report.max_rel_error);
  }
  std::snprintf(buf, sizeof buf, "gradcheck %s: max relative error %.3e (tolerance %.0e) %s\n", op.c_str(), worst,
                kGradcheckTolerance, ok ? "PASS" : "FAIL");
  log << buf;
  return ok;
}

/// Largest |a - b| divided by the largest |reference| entry.
template <typename T>
double max_scaled_diff(const BasicTensor<T>& a, const BasicTensor<T>& ref) {
  require_same_shape(a, ref, "max_scaled_diff");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) - static_cast<double>(ref[i])));
    scale = std::max(scale, std::abs(static_cast<double>(ref[i])));
  }
  return scale > 0.0 ? diff / scale : diff;
}

inline constexpr double kCorrAgreement = 1e-5;

struct BenchOptions {
  std::string op = "corr";
  std::vector<std::size_t> sizes{16};
  std::size_t channels = 1024;
  std::string impl = "both";
  std::size_t runs = 5;
  std::uint64_t seed = 1;
};

struct BenchRow {
  std::size_t size = 0;
  std::size_t channels = 0;
  int D = 0;
  std::optional<double> naive_ms;
  std::optional<double> opt_ms;
  double agreement = 0.0;
};

inline std::vector<BenchRow> cmd_bench(const BenchOptions& o, std::ostream& log) {
  if (o.op != "corr") throw usage_error("bench: only --op corr is supported");
  if (o.runs < 5) throw usage_error("bench: --runs must be at least 5");
  std::vector<BenchRow> rows;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%6s %8s %4s %12s %12s %10s\n", "size", "channels", "D", "naive_ms", "opt_ms", "agreement");
  log << buf;
  for (std::size_t s : o.sizes) {
    Rng rng(mix_seed(o.seed, s));
    Tensor fa(Shape{1, o.channels, s, s}), fb(Shape{1, o.channels, s, s});
    for (auto& v : fa.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto& v : fb.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const int D = patch_size_for(static_cast<int>(s), static_cast<int>(s));
    BenchRow row{s, o.channels, D, std::nullopt, std::nullopt, 0.0};
    // Agreement is checked before any timing.
    row.agreement = max_scaled_diff(mutual_correlate(fa, fb, D).data, mutual_correlate_naive(fa, fb, D).data);
    if (row.agreement > kCorrAgreement)
      throw numeric_error("bench: optimized and naive correlation disagree (" + std::to_string(row.agreement) + ")");
    auto time_ms = [&](auto&& fn) {
      std::vector<double> t;
      for (std::size_t r = 0; r < o.runs; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        auto c = fn();
        const auto t1 = std::chrono::steady_clock::now();
        if (c.data.size() == 0) throw numeric_error("bench: empty result");
        t.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      std::sort(t.begin(), t.end());
      return t[t.size() / 2];
    };
    if (o.impl == "naive" || o.impl == "both") row.naive_ms = time_ms([&] { return mutual_correlate_naive(fa, fb, D); });
    if (o.impl == "opt" || o.impl == "both") row.opt_ms = time_ms([&] { return mutual_correlate(fa, fb, D); });
    auto fmt = [](std::optional<double> v) { return v ? std::to_string(*v) : std::string("-"); };
    std::snprintf(buf, sizeof buf, "%6zu %8zu %4d %12s %12s %10.2e\n", s, o.channels, D, fmt(row.naive_ms).c_str(),
                  fmt(row.opt_ms).c_str(), row.agreement);
    log << buf;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------

inline Split parse_split_arg(const std::string& s) {
  try {
    return parse_split(s);
  } catch (const data_error& e) {
    throw usage_error(e.what());
  }
}

/// Parses argv and runs one command. Output goes to `out`, diagnostics to
/// `err`. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Deep object co-segmentation: synthetic data, training, inference, evaluation"};
  app.require_subcommand(1);
  int threads = threads_from_env();
  app.add_option("--threads", threads, "Worker threads (default DOCS_THREADS or 1)")->check(CLI::PositiveNumber);

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic co-segmentation dataset");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--seed", synth.seed, "Generator seed");
  c_synth->add_option("--images", synth.images, "Number of images across all splits");
  c_synth->add_option("--pairs", synth.pairs, "Maximum training pairs");
  c_synth->add_option("--eval-pairs", synth.eval_pairs, "Maximum pairs per val/test split (default pairs/10)");
  c_synth->add_flag("--force", synth.force, "Overwrite an existing dataset");

  RunConfig rc;
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> t_data, t_out, t_fusion, t_topology;
  std::optional<std::size_t> t_iters, t_eval_every;
  std::optional<double> t_lr;
  std::optional<std::uint64_t> t_seed;
  auto* c_train = app.add_subcommand("train", "Train a network on a synthesized dataset");
  c_train->add_option("--data", t_data, "Dataset directory");
  c_train->add_option("--config", config_path, "Run config file (key = value)");
  c_train->add_option("--out", t_out, "Run directory");
  c_train->add_option("--set", overrides, "Override a config key: key=value (repeatable)");
  c_train->add_option("--iterations", t_iters, "Training iterations");
  c_train->add_option("--lr", t_lr, "Learning rate");
  c_train->add_option("--seed", t_seed, "Seed for initialization and batching");
  c_train->add_option("--fusion", t_fusion, "correlation | concat");
  c_train->add_option("--topology", t_topology, "toy | paper | tiny");
  c_train->add_option("--eval-every", t_eval_every, "Validate every N iterations (0 = never)");

  InferOptions infer;
  auto* c_infer = app.add_subcommand("infer", "Co-segment one image pair");
  c_infer->add_option("--ckpt", infer.ckpt, "Checkpoint")->required();
  c_infer->add_option("imageA", infer.image_a, "First image (PNG)")->required();
  c_infer->add_option("imageB", infer.image_b, "Second image (PNG)")->required();
  c_infer->add_option("--out", infer.out, "Output directory")->required();
  c_infer->add_flag("--dump-prob", infer.dump_prob, "Also write PMAP probability rasters");
  c_infer->add_option("--sigma", infer.sigma, "Foreground threshold");

  PredictOptions predict;
  std::string predict_split = "test";
  auto* c_predict = app.add_subcommand("predict", "Predict masks for every pair of a dataset split");
  c_predict->add_option("--ckpt", predict.ckpt, "Checkpoint")->required();
  c_predict->add_option("--data", predict.data, "Dataset directory")->required();
  c_predict->add_option("--split", predict_split, "train | val | test");
  c_predict->add_option("--out", predict.out, "Output directory")->required();

  GroupOptions group;
  auto* c_group = app.add_subcommand("group", "Co-segment a group of images by median aggregation");
  c_group->add_option("--ckpt", group.ckpt, "Checkpoint")->required();
  c_group->add_option("--dir", group.dir, "Directory of PNG images")->required();
  c_group->add_option("--out", group.out, "Output directory")->required();
  c_group->add_option("--k", group.k, "Partners per image: 'all' or a count");
  c_group->add_option("--seed", group.seed, "Seed for random partner selection");
  c_group->add_option("--sigma", group.sigma, "Median threshold");
  c_group->add_flag("--dump-prob", group.dump_prob, "Write every pairing's probability raster");

  EvalOptions eval;
  std::string eval_split = "test";
  auto* c_eval = app.add_subcommand("eval", "Score predicted masks against a dataset split");
  c_eval->add_option("--pred", eval.pred, "Prediction directory")->required();
  c_eval->add_option("--data", eval.data, "Dataset directory")->required();
  c_eval->add_option("--split", eval_split, "train | val | test");
  c_eval->add_option("--out", eval.out, "Report directory (default: --pred)");

  std::string gc_op;
  std::uint64_t gc_seed = 1;
  std::vector<std::string> gc_choices = gradcheck_ops();
  gc_choices.push_back("all");
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  c_gc->add_option("--op", gc_op, "Operation")->required()->check(CLI::IsMember(gc_choices));
  c_gc->add_option("--seed", gc_seed, "Seed");

  BenchOptions bench;
  auto* c_bench = app.add_subcommand("bench", "Time the correlation kernels");
  c_bench->add_option("--op", bench.op, "Kernel")->check(CLI::IsMember({"corr"}));
  c_bench->add_option("--size", bench.sizes, "Feature map side(s)");
  c_bench->add_option("--channels", bench.channels, "Feature channels");
  c_bench->add_option("--impl", bench.impl, "naive | opt | both")->check(CLI::IsMember({"naive", "opt", "both"}));
  c_bench->add_option("--runs", bench.runs, "Timed runs per implementation (>= 5)");
  c_bench->add_option("--seed", bench.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c_synth) {
      cmd_synth(synth, out);
    } else if (*c_train) {
      if (!config_path.empty()) rc.load(config_path);
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw usage_error("--set expects key=value, got '" + kv + "'");
        rc.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (t_data) rc.data = *t_data;
      if (t_out) rc.out = *t_out;
      if (t_iters) rc.iterations = *t_iters;
      if (t_lr) rc.lr = *t_lr;
      if (t_seed) rc.seed = *t_seed;
      if (t_fusion) rc.set("fusion", *t_fusion);
      if (t_topology) rc.set("topology", *t_topology);
      if (t_eval_every) rc.eval_every = *t_eval_every;
      cmd_train(rc, threads, out);
    } else if (*c_infer) {
      cmd_infer(infer, out);
    } else if (*c_predict) {
      predict.split = parse_split_arg(predict_split);
      cmd_predict(predict, threads, out);
    } else if (*c_group) {
      cmd_group(group, threads, out);
    } else if (*c_eval) {
      eval.split = parse_split_arg(eval_split);
      cmd_eval(eval, out);
    } else if (*c_gc) {
      if (!cmd_gradcheck(gc_op, gc_seed, out)) return kNumeric;
    } else if (*c_bench) {
      cmd_bench(bench, out);
    }
  } catch (const usage_error& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const numeric_error& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}

}  // namespace docs::cli
