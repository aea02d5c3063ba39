#pragma once

// Checkpoint layout, all integers little-endian:
//   "DOCS" | u32 version | u32 config length | config text
//   then per parameter until EOF:
//   u32 name length | name (utf-8) | u32 rank | rank x u64 dims | f32 values

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "docs/error.hpp"
#include "docs/network.hpp"
#include "docs/tensor.hpp"

namespace docs {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'D', 'O', 'C', 'S'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Checkpoint {
  NetworkConfig config;
  ParamStore params;
};

namespace detail {

template <typename U>
void put(std::vector<char>& out, U v) {
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.insert(out.end(), b, b + sizeof(U));
}

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}
  bool done() const { return pos_ == buf_.size(); }
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void read_into(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw data_error(what_ + ": truncated checkpoint");
  }
  const std::vector<char>& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<char> encode_checkpoint(const NetworkConfig& cfg, const ParamStore& params) {
  std::vector<char> out(kCheckpointMagic, kCheckpointMagic + 4);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  const std::string blob = cfg.serialize();
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(blob.size()));
  out.insert(out.end(), blob.begin(), blob.end());
  for (const auto& e : params.entries()) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    const Shape& s = e.value.shape();
    detail::put<std::uint32_t>(out, 4);
    for (std::uint64_t d : {s.n, s.c, s.h, s.w}) detail::put<std::uint64_t>(out, d);
    const auto* p = reinterpret_cast<const char*>(e.value.ptr());
    out.insert(out.end(), p, p + e.value.size() * sizeof(float));
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<char>& buf, const std::string& what = "checkpoint") {
  detail::Reader r(buf, what);
  if (r.bytes(4) != std::string(kCheckpointMagic, 4)) throw data_error(what + ": not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw data_error(what + ": checkpoint version " + std::to_string(version) + ", this build reads version " +
                     std::to_string(kCheckpointVersion));
  Checkpoint ck;
  ck.config = NetworkConfig::deserialize(r.bytes(r.get<std::uint32_t>()));
  while (!r.done()) {
    std::string name = r.bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 4) throw data_error(what + ": parameter '" + name + "' has rank " + std::to_string(rank));
    std::uint64_t dims[4] = {1, 1, 1, 1};
    for (std::uint32_t i = 0; i < rank; ++i) dims[4 - rank + i] = r.get<std::uint64_t>();
    Tensor t(Shape{dims[0], dims[1], dims[2], dims[3]});
    r.read_into(t.ptr(), t.size() * sizeof(float));
    ck.params.add(std::move(name), std::move(t));
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const NetworkConfig& cfg, const ParamStore& params) {
  const auto buf = encode_checkpoint(cfg, params);
  // Write to a sibling and rename so an interrupted write never replaces a
  // good checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw data_error("cannot write checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open checkpoint '" + path.string() + "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  auto ck = decode_checkpoint(buf, path.string());
  // Every parameter the config expects must be present with its shape.
  const auto expected = init_params(ck.config, 0);
  for (const auto& e : expected.entries()) {
    if (!ck.params.contains(e.name)) throw data_error(path.string() + ": missing parameter '" + e.name + "'");
    if (ck.params.get(e.name).shape() != e.value.shape())
      throw data_error(path.string() + ": parameter '" + e.name + "' has shape " +
                       ck.params.get(e.name).shape().str() + ", config expects " + e.value.shape().str());
  }
  return ck;
}

}  // namespace docs
