// SPDX-License-Identifier: Apache-2.0
//
// 8-bit RGB images, lossless PNG I/O and the geometric/photometric
// resampling primitives shared by the augmentor and the trainer transforms.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace sgia {

struct Resolution {
  int width = 0;
  int height = 0;

  friend bool operator==(const Resolution&, const Resolution&) = default;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved RGB

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {}

  Resolution resolution() const { return {width, height}; }
  bool empty() const { return pixels.empty(); }

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// PNG codec. Encoding is deterministic (no time chunks, fixed compression),
// so equal images always produce equal bytes.
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);

Image read_png(const std::filesystem::path& path);
// Writes through a temporary file and renames, so readers never observe a
// partially written frame.
void write_png(const std::filesystem::path& path, const Image& image);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);

// Bilinear sample of channel c at continuous coordinates (pixel centers at
// integer + 0.5), clamping to the border.
float sample_bilinear(const Image& image, double x, double y, int c);

Image resize_bilinear(const Image& image, int width, int height);

// Inverse-mapped similarity transform about the image center: output pixel
// p samples source pixel center + R(-angle) (p - center - shift) / scale.
// An identity transform reproduces the input exactly.
struct AffineParams {
  double rotation_deg = 0.0;
  double shift_x = 0.0;  // fraction of width
  double shift_y = 0.0;  // fraction of height
  double scale = 1.0;
};
Image warp_affine(const Image& image, const AffineParams& params);

// Multiplies every channel by `gain` and rotates hue about the gray axis by
// `hue_deg`. gain=1, hue_deg=0 is the identity.
Image adjust_color(const Image& image, double gain, double hue_deg);

}  // namespace sgia
