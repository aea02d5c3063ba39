#pragma once

// On-disk dataset layout:
//   images/<id>.png        8-bit RGB
//   labels/<id>.png        8-bit class-id raster (0 = background)
//   masks/<split>_<idx>_{A,B}.png   0 / 255 ground-truth masks
//   manifest_<split>.tsv   split, idA, idB, common classes, mask paths
//   dataset.txt            generator parameters

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "docs/dataset.hpp"
#include "docs/png_io.hpp"

namespace docs {

namespace fs = std::filesystem;

inline std::string manifest_filename(Split s) { return "manifest_" + to_string(s) + ".tsv"; }

inline fs::path image_path(const fs::path& data_dir, const std::string& id) {
  return data_dir / "images" / (id + ".png");
}

inline std::string mask_relpath(Split s, std::size_t index, char side) {
  std::ostringstream os;
  os << "masks/" << to_string(s) << "_" << std::setw(5) << std::setfill('0') << index << "_" << side << ".png";
  return os.str();
}

inline std::set<int> parse_class_list(const std::string& csv) {
  std::set<int> out;
  std::istringstream is(csv);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.insert(std::stoi(tok));
    } catch (const std::exception&) {
      throw data_error("bad class list '" + csv + "'");
    }
  }
  return out;
}

inline void write_manifest(std::ostream& os, const Manifest& m) {
  os << "# docs manifest version=" << m.version << " seed=" << m.seed << "\n";
  for (const auto& r : m.records) {
    std::string cls;
    for (int c : r.common_classes) cls += (cls.empty() ? "" : ",") + std::to_string(c);
    os << to_string(m.split) << '\t' << r.id_a << '\t' << r.id_b << '\t' << cls << '\t' << r.mask_a_path << '\t'
       << r.mask_b_path << '\n';
  }
}

/// Writes images, label rasters, masks and manifests under `dir`. Mask paths
/// in the manifests are relative to `dir`.
inline void write_dataset(const fs::path& dir, Dataset& ds) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  fs::create_directories(dir / "masks");
  for (const auto& im : ds.images) {
    write_png_rgb(image_path(dir, im.id), im.scene.image);
    write_png_gray(dir / "labels" / (im.id + ".png"),
                   GrayImage{im.scene.labels.h, im.scene.labels.w, im.scene.labels.ids});
  }
  for (auto& m : ds.manifests) {
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      auto& r = m.records[i];
      r.mask_a_path = mask_relpath(m.split, i, 'A');
      r.mask_b_path = mask_relpath(m.split, i, 'B');
      write_mask_png(dir / r.mask_a_path, r.mask_a);
      write_mask_png(dir / r.mask_b_path, r.mask_b);
    }
    std::ofstream os(dir / manifest_filename(m.split), std::ios::binary);
    write_manifest(os, m);
    if (!os) throw data_error("cannot write manifest in '" + dir.string() + "'");
  }
  std::ofstream info(dir / "dataset.txt", std::ios::binary);
  info << "version = " << kDatasetVersion << "\nsceneSeed = " << ds.seeds.scenes << "\npairSeed = " << ds.seeds.pairs
       << "\nimages = " << ds.images.size() << "\n";
}

/// Parses a manifest and loads its ground-truth masks (paths relative to
/// data_dir).
inline Manifest read_manifest(const fs::path& data_dir, Split split) {
  const fs::path path = data_dir / manifest_filename(split);
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("missing manifest '" + path.string() + "'");
  Manifest m;
  m.split = split;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto v = line.find("version=");
      const auto s = line.find("seed=");
      try {
        if (v != std::string::npos) m.version = std::stoi(line.substr(v + 8));
        if (s != std::string::npos) m.seed = std::stoull(line.substr(s + 5));
      } catch (const std::exception&) {
        throw data_error(path.string() + ": malformed header");
      }
      continue;
    }
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, '\t')) f.push_back(tok);
    if (f.size() != 6)
      throw data_error(path.string() + ":" + std::to_string(lineno) + ": expected 6 tab-separated fields, got " +
                       std::to_string(f.size()));
    if (parse_split(f[0]) != split)
      throw data_error(path.string() + ":" + std::to_string(lineno) + ": record of split '" + f[0] + "'");
    PairRecord r;
    r.id_a = f[1];
    r.id_b = f[2];
    r.common_classes = parse_class_list(f[3]);
    r.mask_a_path = f[4];
    r.mask_b_path = f[5];
    r.mask_a = read_mask_png(data_dir / r.mask_a_path);
    r.mask_b = read_mask_png(data_dir / r.mask_b_path);
    m.records.push_back(std::move(r));
  }
  if (m.version != kDatasetVersion)
    throw data_error(path.string() + ": unsupported manifest version " + std::to_string(m.version));
  return m;
}

/// Lazily loads images by id and keeps them for reuse.
class ImageCache {
 public:
  explicit ImageCache(fs::path data_dir) : dir_(std::move(data_dir)) {}

  const Tensor& get(const std::string& id) {
    auto it = cache_.find(id);
    if (it == cache_.end()) it = cache_.emplace(id, read_png_rgb(image_path(dir_, id))).first;
    return it->second;
  }

 private:
  fs::path dir_;
  std::map<std::string, Tensor> cache_;
};

}  // namespace docs
