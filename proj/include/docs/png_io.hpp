#pragma once

// 8-bit PNG read/write through libpng's simplified API.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "docs/error.hpp"
#include "docs/mask.hpp"
#include "docs/tensor.hpp"

namespace docs {

struct GrayImage {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> pixels;
};

namespace detail {

inline void png_write(const std::filesystem::path& path, std::uint32_t format, std::size_t h, std::size_t w,
                      const void* buffer) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = format;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buffer, 0, nullptr))
    throw data_error("cannot write PNG '" + path.string() + "': " + img.message);
}

template <typename Buffer>
Buffer png_read(const std::filesystem::path& path, std::uint32_t format, std::size_t& h, std::size_t& w) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw data_error("cannot read PNG '" + path.string() + "': " + img.message);
  img.format = format;
  Buffer buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw data_error("cannot decode PNG '" + path.string() + "': " + img.message);
  }
  h = img.height;
  w = img.width;
  return buf;
}

}  // namespace detail

/// Writes a 1x3xHxW tensor with values in [0, 1] as 8-bit RGB.
inline void write_png_rgb(const std::filesystem::path& path, const Tensor& image) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3) throw shape_error("write_png_rgb: expected 1x3xHxW, got " + s.str());
  std::vector<std::uint8_t> buf(3 * s.plane());
  for (std::size_t p = 0; p < s.plane(); ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(image[c * s.plane() + p], 0.0f, 1.0f);
      buf[3 * p + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  detail::png_write(path, PNG_FORMAT_RGB, s.h, s.w, buf.data());
}

/// Reads any PNG as RGB, returned as a 1x3xHxW tensor of k/255 values.
inline Tensor read_png_rgb(const std::filesystem::path& path) {
  std::size_t h = 0, w = 0;
  const auto buf = detail::png_read<std::vector<std::uint8_t>>(path, PNG_FORMAT_RGB, h, w);
  Tensor t(Shape{1, 3, h, w});
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t c = 0; c < 3; ++c) t[c * h * w + p] = static_cast<float>(buf[3 * p + c]) / 255.0f;
  return t;
}

inline void write_png_gray(const std::filesystem::path& path, const GrayImage& g) {
  if (g.pixels.size() != g.h * g.w) throw shape_error("write_png_gray: buffer size mismatch");
  detail::png_write(path, PNG_FORMAT_GRAY, g.h, g.w, g.pixels.data());
}

inline GrayImage read_png_gray(const std::filesystem::path& path) {
  GrayImage g;
  g.pixels = detail::png_read<std::vector<std::uint8_t>>(path, PNG_FORMAT_GRAY, g.h, g.w);
  return g;
}

/// Masks are stored as 0 / 255; any nonzero byte reads back as foreground.
inline void write_mask_png(const std::filesystem::path& path, const Mask& m) {
  GrayImage g{m.h, m.w, std::vector<std::uint8_t>(m.size())};
  for (std::size_t i = 0; i < m.size(); ++i) g.pixels[i] = m.bits[i] ? 255 : 0;
  write_png_gray(path, g);
}

inline Mask read_mask_png(const std::filesystem::path& path) {
  const auto g = read_png_gray(path);
  Mask m(g.h, g.w);
  for (std::size_t i = 0; i < m.size(); ++i) m.bits[i] = g.pixels[i] ? 1 : 0;
  return m;
}

}  // namespace docs
