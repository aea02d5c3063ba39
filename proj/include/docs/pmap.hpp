#pragma once

// Probability raster: "PMAP" | u32 h | u32 w | u32 reserved (0) | h*w f32,
// little-endian, row-major. Keeps full precision for median aggregation.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <vector>

#include "docs/error.hpp"
#include "docs/group.hpp"

namespace docs {

static_assert(std::endian::native == std::endian::little, "PMAP I/O assumes a little-endian host");

inline void write_pmap(const std::filesystem::path& path, const ProbMap& m) {
  if (m.values.size() != m.h * m.w) throw shape_error("write_pmap: buffer size mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  const std::uint32_t header[3] = {static_cast<std::uint32_t>(m.h), static_cast<std::uint32_t>(m.w), 0};
  os.write("PMAP", 4);
  os.write(reinterpret_cast<const char*>(header), sizeof header);
  os.write(reinterpret_cast<const char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * 4));
  if (!os) throw data_error("cannot write '" + path.string() + "'");
}

inline ProbMap read_pmap(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open '" + path.string() + "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 16 || std::memcmp(buf.data(), "PMAP", 4) != 0)
    throw data_error("'" + path.string() + "' is not a PMAP raster");
  std::uint32_t header[3];
  std::memcpy(header, buf.data() + 4, sizeof header);
  ProbMap m{header[0], header[1], {}};
  if (buf.size() != 16 + m.h * m.w * 4)
    throw data_error("'" + path.string() + "': size does not match " + std::to_string(m.h) + "x" +
                     std::to_string(m.w) + " header");
  m.values.resize(m.h * m.w);
  std::memcpy(m.values.data(), buf.data() + 16, m.values.size() * 4);
  return m;
}

}  // namespace docs
