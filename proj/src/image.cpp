// SPDX-License-Identifier: Apache-2.0

#include "sgia/image.hpp"

#include <png.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "sgia/error.hpp"

namespace sgia {

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw DataError("encode_png: malformed image buffer");
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, image.pixels.data(), 0,
                                 nullptr))
    throw DataError(std::string("encode_png: ") + desc.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, image.pixels.data(), 0,
                                 nullptr))
    throw DataError(std::string("encode_png: ") + desc.message);
  out.resize(size);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size()))
    throw DataError(std::string("decode_png: ") + desc.message);
  desc.format = PNG_FORMAT_RGB;
  Image image(static_cast<int>(desc.width), static_cast<int>(desc.height));
  if (!png_image_finish_read(&desc, nullptr, image.pixels.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw DataError(std::string("decode_png: ") + desc.message);
  }
  return image;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  static std::atomic<unsigned> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot rename into " + path.string());
  }
}

Image read_png(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_png(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_file_atomic(path, encode_png(image));
}

float sample_bilinear(const Image& image, double x, double y, int c) {
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const double x0f = std::floor(fx);
  const double y0f = std::floor(fy);
  const double wx = fx - x0f;
  const double wy = fy - y0f;
  const int x0 = static_cast<int>(x0f);
  const int y0 = static_cast<int>(y0f);
  auto px = [&](int xi, int yi) -> double {
    xi = std::clamp(xi, 0, image.width - 1);
    yi = std::clamp(yi, 0, image.height - 1);
    return image.at(xi, yi, c);
  };
  if (wx == 0.0 && wy == 0.0) return static_cast<float>(px(x0, y0));
  const double top = px(x0, y0) * (1.0 - wx) + px(x0 + 1, y0) * wx;
  const double bottom = px(x0, y0 + 1) * (1.0 - wx) + px(x0 + 1, y0 + 1) * wx;
  return static_cast<float>(top * (1.0 - wy) + bottom * wy);
}

namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

Image resize_bilinear(const Image& image, int width, int height) {
  if (width <= 0 || height <= 0) throw DataError("resize: non-positive size");
  if (width == image.width && height == image.height) return image;
  Image out(width, height);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) = to_u8(sample_bilinear(image, (x + 0.5) * sx, (y + 0.5) * sy, c));
  return out;
}

Image warp_affine(const Image& image, const AffineParams& p) {
  Image out(image.width, image.height);
  const double cx = image.width / 2.0;
  const double cy = image.height / 2.0;
  const double rad = p.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double tx = p.shift_x * image.width;
  const double ty = p.shift_y * image.height;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double u = (x + 0.5 - cx - tx) / p.scale;
      const double v = (y + 0.5 - cy - ty) / p.scale;
      // inverse rotation
      const double sxp = cx + cs * u + sn * v;
      const double syp = cy - sn * u + cs * v;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = to_u8(sample_bilinear(image, sxp, syp, c));
    }
  }
  return out;
}

Image adjust_color(const Image& image, double gain, double hue_deg) {
  if (gain == 1.0 && hue_deg == 0.0) return image;
  // Rotation about the (1,1,1) axis (Rodrigues form).
  const double rad = hue_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad) / std::sqrt(3.0);
  const double k = (1.0 - cs) / 3.0;
  const double m[3][3] = {{cs + k, k - sn, k + sn},
                          {k + sn, cs + k, k - sn},
                          {k - sn, k + sn, cs + k}};
  Image out(image.width, image.height);
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t p = 0; p < n; ++p) {
    const double r = image.pixels[p * 3 + 0];
    const double g = image.pixels[p * 3 + 1];
    const double b = image.pixels[p * 3 + 2];
    for (int c = 0; c < 3; ++c)
      out.pixels[p * 3 + c] = to_u8(gain * (m[c][0] * r + m[c][1] * g + m[c][2] * b));
  }
  return out;
}

}  // namespace sgia
