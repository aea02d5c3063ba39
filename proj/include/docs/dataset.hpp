#pragma once

// Synthetic multi-class scenes and co-segmentation pair construction.
//
// Every scene is a textured "stuff" background with a few "thing" objects.
// A class is a fixed (shape, hue family) combination, so class identity is
// visible in the pixels. Pairs keep only the classes present in both images
// as foreground.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "docs/error.hpp"
#include "docs/mask.hpp"
#include "docs/rng.hpp"
#include "docs/tensor.hpp"

namespace docs {

inline constexpr int kDatasetVersion = 1;
inline constexpr int kNumClasses = 8;

enum class ShapeKind { circle, square, triangle };

struct ClassStyle {
  ShapeKind shape;
  double hue;  // center of the hue family, in [0, 1)
};

// Class ids are 1..kNumClasses; 0 is background.
inline ClassStyle class_style(int class_id) {
  // One hue family per class so class identity does not hinge on a shape/colour conjunction.
  static const std::array<ClassStyle, kNumClasses> styles{{
      {ShapeKind::circle, 0.00},
      {ShapeKind::square, 0.08},
      {ShapeKind::circle, 0.16},
      {ShapeKind::triangle, 0.33},
      {ShapeKind::square, 0.48},
      {ShapeKind::triangle, 0.62},
      {ShapeKind::circle, 0.75},
      {ShapeKind::triangle, 0.88},
  }};
  if (class_id < 1 || class_id > kNumClasses)
    throw shape_error("class id " + std::to_string(class_id) + " outside 1.." + std::to_string(kNumClasses));
  return styles[static_cast<std::size_t>(class_id - 1)];
}

enum class FillTexture { flat, stripes, speckle };

struct SceneObject {
  int class_id = 1;
  ShapeKind shape = ShapeKind::circle;
  double scale = 0.15;  // radius as a fraction of the canvas side
  double cx = 32.0;     // center, pixels
  double cy = 32.0;
  double rotation = 0.0;  // radians; ignored for circles
  FillTexture texture = FillTexture::flat;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int canvas = 64;
  std::vector<SceneObject> objects;  // drawn in order; later objects on top
};

/// Per-pixel class ids (0 = background), row-major.
struct LabelRaster {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> ids;

  std::set<int> classes() const {
    std::set<int> s;
    for (auto v : ids)
      if (v) s.insert(v);
    return s;
  }
  Mask mask_of(const std::set<int>& cls) const {
    Mask m(h, w);
    for (std::size_t i = 0; i < ids.size(); ++i) m.bits[i] = cls.count(ids[i]) ? 1 : 0;
    return m;
  }
  friend bool operator==(const LabelRaster&, const LabelRaster&) = default;
};

struct Scene {
  Tensor image;  // 1 x 3 x s x s, values k/255
  LabelRaster labels;
};

namespace detail {

// Bounding radius (pixels) of an object, used for the inside-canvas check.
inline double bounding_radius(const SceneObject& o, int canvas) {
  const double r = o.scale * canvas;
  switch (o.shape) {
    case ShapeKind::circle: return r;
    case ShapeKind::square: return r * 0.85 * std::numbers::sqrt2;
    case ShapeKind::triangle: return r * 1.25;
  }
  return r;
}

inline bool inside_object(const SceneObject& o, int canvas, double px, double py) {
  const double r = o.scale * canvas;
  const double dx = px - o.cx, dy = py - o.cy;
  const double c = std::cos(-o.rotation), s = std::sin(-o.rotation);
  const double x = c * dx - s * dy, y = s * dx + c * dy;
  switch (o.shape) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= r * r;
    case ShapeKind::square: {
      const double a = 0.85 * r;
      return std::abs(x) <= a && std::abs(y) <= a;
    }
    case ShapeKind::triangle: {
      // Equilateral with circumradius 1.25 r: three half-planes whose
      // outward normals are 120 degrees apart, each at distance R / 2.
      const double R = 1.25 * r;
      for (int k = 0; k < 3; ++k) {
        const double ang = -std::numbers::pi / 2 + k * 2 * std::numbers::pi / 3;
        if (x * std::cos(ang) + y * std::sin(ang) > R / 2) return false;
      }
      return true;
    }
  }
  return false;
}

inline std::vector<std::uint8_t> rasterize(const SceneObject& o, int canvas) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(canvas * canvas), 0);
  for (int y = 0; y < canvas; ++y)
    for (int x = 0; x < canvas; ++x)
      m[static_cast<std::size_t>(y * canvas + x)] = inside_object(o, canvas, x + 0.5, y + 0.5) ? 1 : 0;
  return m;
}

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int i = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

inline float quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::lround(c * 255.0)) / 255.0f;
}

}  // namespace detail

/// Renders a scene. Deterministic in spec.seed; labels carry the topmost
/// object's class id.
inline Scene generate_scene(const SceneSpec& spec) {
  const int s = spec.canvas;
  if (s < 4) throw shape_error("generate_scene: canvas too small");
  for (const auto& o : spec.objects) {
    class_style(o.class_id);  // validates the id
    const double br = detail::bounding_radius(o, s);
    if (o.cx - br < 0 || o.cy - br < 0 || o.cx + br > s || o.cy + br > s)
      throw shape_error("generate_scene: object of class " + std::to_string(o.class_id) +
                        " extends outside the canvas (seed " + std::to_string(spec.seed) + ")");
  }
  Rng rng(mix_seed(spec.seed, 7));
  const std::size_t S = static_cast<std::size_t>(s);
  std::vector<double> rgb(3 * S * S);

  // Background: low-saturation gradient plus smooth value noise.
  const double h0 = rng.uniform(), h1 = h0 + rng.uniform(-0.15, 0.15);
  const auto c0 = detail::hsv_to_rgb(h0, rng.uniform(0.0, 0.25), rng.uniform(0.3, 0.8));
  const auto c1 = detail::hsv_to_rgb(h1, rng.uniform(0.0, 0.25), rng.uniform(0.3, 0.8));
  const double ang = rng.uniform(0.0, 2 * std::numbers::pi);
  const double gx = std::cos(ang), gy = std::sin(ang);
  constexpr int grid = 5;
  std::array<double, (grid + 1) * (grid + 1)> lattice{};
  for (auto& v : lattice) v = rng.uniform(-0.12, 0.12);
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / s, v = (static_cast<double>(y) + 0.5) / s;
      const double t = std::clamp(0.5 + (u - 0.5) * gx + (v - 0.5) * gy, 0.0, 1.0);
      const double fx = u * grid, fy = v * grid;
      const int ix = std::min(grid - 1, static_cast<int>(fx)), iy = std::min(grid - 1, static_cast<int>(fy));
      const double ax = fx - ix, ay = fy - iy;
      auto L = [&](int a, int b) { return lattice[static_cast<std::size_t>(b * (grid + 1) + a)]; };
      const double noise = (1 - ax) * (1 - ay) * L(ix, iy) + ax * (1 - ay) * L(ix + 1, iy) +
                           (1 - ax) * ay * L(ix, iy + 1) + ax * ay * L(ix + 1, iy + 1);
      for (std::size_t c = 0; c < 3; ++c)
        rgb[c * S * S + y * S + x] = (1 - t) * c0[c] + t * c1[c] + noise;
    }

  LabelRaster labels{S, S, std::vector<std::uint8_t>(S * S, 0)};
  for (const auto& o : spec.objects) {
    const ClassStyle st = class_style(o.class_id);
    const auto col = detail::hsv_to_rgb(st.hue + rng.uniform(-0.03, 0.03), rng.uniform(0.65, 0.95),
                                        rng.uniform(0.6, 0.95));
    const double period = rng.uniform(3.0, 6.0), phase = rng.uniform(0.0, 6.3);
    const double sa = std::sin(o.rotation + 0.7), ca = std::cos(o.rotation + 0.7);
    const auto mask = detail::rasterize(o, s);
    for (std::size_t i = 0; i < S * S; ++i) {
      if (!mask[i]) continue;
      const double x = static_cast<double>(i % S), y = static_cast<double>(i / S);
      double shade = 1.0;
      switch (o.texture) {
        case FillTexture::flat: break;
        case FillTexture::stripes:
          shade = 1.0 + 0.12 * std::sin(2 * std::numbers::pi * (x * ca + y * sa) / period + phase);
          break;
        case FillTexture::speckle: shade = 1.0 + rng.uniform(-0.1, 0.1); break;
      }
      for (std::size_t c = 0; c < 3; ++c) rgb[c * S * S + i] = col[c] * shade;
      labels.ids[i] = static_cast<std::uint8_t>(o.class_id);
    }
  }

  Tensor image(Shape{1, 3, S, S});
  for (std::size_t i = 0; i < rgb.size(); ++i) image[i] = detail::quantize(rgb[i] + rng.uniform(-0.03, 0.03));
  return Scene{std::move(image), std::move(labels)};
}

struct SceneOptions {
  int canvas = 64;
  int min_objects = 1;
  int max_objects = 3;
  double min_scale = 0.13;
  double max_scale = 0.22;
  double max_overlap = 0.3;  // of either object's area
  int placement_retries = 200;
  std::optional<int> required_class;  // always include this class
  std::set<int> excluded_classes;     // never use these
};

/// Samples a random scene layout: distinct classes, objects fully inside
/// the canvas, pairwise overlap at most max_overlap of each object's area.
inline SceneSpec random_scene_spec(std::uint64_t seed, const SceneOptions& opt = {}) {
  Rng rng(mix_seed(seed, 3));
  SceneSpec spec{seed, opt.canvas, {}};
  std::vector<int> pool;
  for (int c = 1; c <= kNumClasses; ++c)
    if (!opt.excluded_classes.count(c) && c != opt.required_class.value_or(0)) pool.push_back(c);
  rng.shuffle(pool);
  const int n = opt.min_objects + static_cast<int>(rng.index(static_cast<std::size_t>(opt.max_objects - opt.min_objects + 1)));
  std::vector<int> classes;
  if (opt.required_class) classes.push_back(*opt.required_class);
  for (int c : pool)
    if (static_cast<int>(classes.size()) < std::max(n, opt.required_class ? 1 : 0)) classes.push_back(c);
  rng.shuffle(classes);

  std::vector<std::vector<std::uint8_t>> placed;
  for (int cls : classes) {
    const ClassStyle st = class_style(cls);
    bool ok = false;
    for (int attempt = 0; attempt < opt.placement_retries && !ok; ++attempt) {
      SceneObject o;
      o.class_id = cls;
      o.shape = st.shape;
      o.scale = rng.uniform(opt.min_scale, opt.max_scale);
      o.rotation = rng.uniform(0.0, 2 * std::numbers::pi);
      o.texture = static_cast<FillTexture>(rng.index(3));
      const double br = detail::bounding_radius(o, opt.canvas);
      if (2 * br >= opt.canvas) continue;
      o.cx = rng.uniform(br, opt.canvas - br);
      o.cy = rng.uniform(br, opt.canvas - br);
      auto m = detail::rasterize(o, opt.canvas);
      const auto area = static_cast<double>(std::count(m.begin(), m.end(), 1));
      bool fits = area > 0;
      for (const auto& other : placed) {
        std::size_t inter = 0;
        for (std::size_t i = 0; i < m.size(); ++i) inter += (m[i] & other[i]);
        const auto other_area = static_cast<double>(std::count(other.begin(), other.end(), 1));
        if (inter > opt.max_overlap * area || inter > opt.max_overlap * other_area) {
          fits = false;
          break;
        }
      }
      if (fits) {
        placed.push_back(std::move(m));
        spec.objects.push_back(o);
        ok = true;
      }
    }
    if (!ok)
      throw data_error("could not place object of class " + std::to_string(cls) + " after " +
                       std::to_string(opt.placement_retries) + " attempts (seed " + std::to_string(seed) + ")");
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Pairs and splits

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw data_error("unknown split '" + s + "'");
}

struct PairRecord {
  std::string id_a;
  std::string id_b;
  std::set<int> common_classes;
  Mask mask_a;
  Mask mask_b;
  // Relative paths, filled when the record is written to or read from disk.
  std::string mask_a_path;
  std::string mask_b_path;
};

struct ImageEntry {
  std::string id;
  Scene scene;
};

/// All unordered pairs (a, b) with a shared class, uniformly subsampled to
/// at most max_pairs, in index order.
inline std::vector<PairRecord> sample_pairs(const std::vector<ImageEntry>& images, Rng& rng, std::size_t max_pairs) {
  if (images.size() < 2) throw data_error("sample_pairs: need at least 2 images, got " + std::to_string(images.size()));
  std::vector<std::set<int>> classes;
  classes.reserve(images.size());
  for (const auto& im : images) classes.push_back(im.scene.labels.classes());
  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  for (std::size_t i = 0; i < images.size(); ++i)
    for (std::size_t j = i + 1; j < images.size(); ++j) {
      std::set<int> common;
      std::set_intersection(classes[i].begin(), classes[i].end(), classes[j].begin(), classes[j].end(),
                            std::inserter(common, common.end()));
      if (!common.empty()) candidates.emplace_back(i, j);
    }
  if (candidates.size() > max_pairs) {
    // Partial Fisher-Yates: the first max_pairs slots become a uniform sample.
    for (std::size_t k = 0; k < max_pairs; ++k)
      std::swap(candidates[k], candidates[k + rng.index(candidates.size() - k)]);
    candidates.resize(max_pairs);
    std::sort(candidates.begin(), candidates.end());
  }
  std::vector<PairRecord> out;
  out.reserve(candidates.size());
  for (auto [i, j] : candidates) {
    PairRecord r;
    r.id_a = images[i].id;
    r.id_b = images[j].id;
    std::set_intersection(classes[i].begin(), classes[i].end(), classes[j].begin(), classes[j].end(),
                          std::inserter(r.common_classes, r.common_classes.end()));
    r.mask_a = images[i].scene.labels.mask_of(r.common_classes);
    r.mask_b = images[j].scene.labels.mask_of(r.common_classes);
    out.push_back(std::move(r));
  }
  return out;
}

struct Manifest {
  Split split = Split::train;
  std::vector<PairRecord> records;
  std::uint64_t seed = 0;
  int version = kDatasetVersion;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSeeds {
  std::uint64_t scenes = 1;
  std::uint64_t pairs = 2;
};

/// Pool sizes for n images; val and test are rounded, train takes the rest.
inline std::array<std::size_t, 3> split_sizes(std::size_t n_images, const SplitRatios& r) {
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw data_error("split ratios must sum to 1");
  const auto nv = static_cast<std::size_t>(std::llround(static_cast<double>(n_images) * r.val));
  const auto nt = static_cast<std::size_t>(std::llround(static_cast<double>(n_images) * r.test));
  if (nv + nt > n_images) throw data_error("split ratios leave no training images");
  return {n_images - nv - nt, nv, nt};
}

inline std::string image_id(std::size_t index) {
  std::ostringstream os;
  os << "img_" << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

struct Dataset {
  std::vector<ImageEntry> images;  // all splits, train pool first
  std::array<Manifest, 3> manifests;
  DatasetSeeds seeds;

  const ImageEntry& image(const std::string& id) const {
    for (const auto& im : images)
      if (im.id == id) return im;
    throw data_error("unknown image id '" + id + "'");
  }
};

struct DatasetOptions {
  std::size_t n_images = 500;
  std::size_t train_pairs = 3000;
  std::size_t eval_pairs = 300;  // per val/test split
  SplitRatios ratios;
  DatasetSeeds seeds;
  SceneOptions scene;
};

/// Builds disjoint train/val/test image pools and samples pairs inside each.
inline Dataset make_splits(const DatasetOptions& opt) {
  const auto sizes = split_sizes(opt.n_images, opt.ratios);
  for (std::size_t k = 0; k < 3; ++k)
    if (sizes[k] < 2)
      throw data_error("split '" + to_string(static_cast<Split>(k)) + "' has " + std::to_string(sizes[k]) +
                       " images; at least 2 are needed to form pairs");
  Dataset ds;
  ds.seeds = opt.seeds;
  ds.images.reserve(opt.n_images);
  for (std::size_t i = 0; i < opt.n_images; ++i) {
    const std::uint64_t seed = mix_seed(opt.seeds.scenes, i);
    ds.images.push_back(ImageEntry{image_id(i), generate_scene(random_scene_spec(seed, opt.scene))});
  }
  std::size_t begin = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<ImageEntry> pool(ds.images.begin() + static_cast<long>(begin),
                                 ds.images.begin() + static_cast<long>(begin + sizes[k]));
    begin += sizes[k];
    const std::uint64_t pair_seed = mix_seed(opt.seeds.pairs, k);
    Rng rng(pair_seed);
    Manifest m;
    m.split = static_cast<Split>(k);
    m.seed = pair_seed;
    m.records = sample_pairs(pool, rng, k == 0 ? opt.train_pairs : opt.eval_pairs);
    ds.manifests[k] = std::move(m);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Augmentation

struct PairSample {
  Tensor image_a;
  Tensor image_b;
  Mask mask_a;
  Mask mask_b;
};

inline Tensor flip_horizontal(const Tensor& x) {
  const Shape& s = x.shape();
  Tensor y(s);
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc)
    for (std::size_t r = 0; r < s.h; ++r)
      for (std::size_t c = 0; c < s.w; ++c)
        y[(nc * s.h + r) * s.w + c] = x[(nc * s.h + r) * s.w + (s.w - 1 - c)];
  return y;
}

inline constexpr double kMaxBrightnessJitter = 0.1;

/// Independent horizontal flip per side (image and mask together) and a
/// per-image brightness offset in [-0.1, 0.1] applied to the image only.
inline PairSample augment_pair(const PairSample& in, Rng& rng) {
  PairSample out = in;
  auto side = [&](Tensor& img, Mask& mask) {
    if (rng.coin()) {
      img = flip_horizontal(img);
      mask = mask.flipped();
    }
    const auto delta = static_cast<float>(rng.uniform(-kMaxBrightnessJitter, kMaxBrightnessJitter));
    for (auto& v : img.data()) v = std::clamp(v + delta, 0.0f, 1.0f);
  };
  side(out.image_a, out.mask_a);
  side(out.image_b, out.mask_b);
  return out;
}

// ---------------------------------------------------------------------------
// Groups for multi-image co-segmentation

struct GroupImage {
  std::string id;
  Scene scene;
  Mask truth;  // pixels of classes present in every non-outlier image
};

/// n images that all contain `common_class`, followed by `outliers` images
/// without it. Ground truth is the common class's pixels (empty for
/// outliers).
inline std::vector<GroupImage> make_group(std::uint64_t seed, std::size_t n, int common_class,
                                          std::size_t outliers = 0, SceneOptions opt = {}) {
  std::vector<GroupImage> out;
  for (std::size_t i = 0; i < n + outliers; ++i) {
    SceneOptions o = opt;
    const bool outlier = i >= n;
    if (outlier) {
      o.excluded_classes.insert(common_class);
    } else {
      o.required_class = common_class;
    }
    auto scene = generate_scene(random_scene_spec(mix_seed(seed, 1000 + i), o));
    Mask truth = scene.labels.mask_of(outlier ? std::set<int>{} : std::set<int>{common_class});
    out.push_back(GroupImage{"g" + std::to_string(i), std::move(scene), std::move(truth)});
  }
  return out;
}

}  // namespace docs
