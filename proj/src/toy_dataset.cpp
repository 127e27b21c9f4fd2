// SPDX-License-Identifier: Apache-2.0

#include "sgia/toy_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sgia/error.hpp"
#include "sgia/rng.hpp"

namespace sgia {

namespace {

constexpr const char* kNames[kGlyphClasses] = {"disk",  "square",  "triangle", "plus",  "ring",
                                               "bar",   "diamond", "cross",    "ell",   "dots"};

// Shapes live in [-1, 1]^2 with y pointing up.
bool inside(int cls, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  const double r = std::hypot(u, v);
  switch (cls) {
    case 0: return r < 0.6;
    case 1: return au < 0.5 && av < 0.5;
    case 2: return v > -0.5 && v < 0.6 && au < 0.6 * (0.6 - v);
    case 3: return (au < 0.15 && av < 0.62) || (av < 0.15 && au < 0.62);
    case 4: return r > 0.36 && r < 0.62;
    case 5: return au < 0.68 && av < 0.18;
    case 6: return au + av < 0.68;
    case 7: {
      const double a = std::abs(u + v) / std::numbers::sqrt2, b = std::abs(u - v) / std::numbers::sqrt2;
      return (a < 0.14 && b < 0.62) || (b < 0.14 && a < 0.62);
    }
    case 8: return (u > -0.5 && u < -0.2 && v > -0.55 && v < 0.6) ||
                   (u > -0.5 && u < 0.45 && v > -0.55 && v < -0.25);
    case 9: return std::hypot(u - 0.36, v) < 0.24 || std::hypot(u + 0.36, v) < 0.24;
    default: return false;
  }
}

}  // namespace

const char* glyph_name(int cls) {
  if (cls < 0 || cls >= kGlyphClasses) throw ConfigError("glyph class out of range");
  return kNames[cls];
}

Image render_glyph(int cls, int size, const TrajectoryParams& pose, const GlyphStyle& style) {
  if (cls < 0 || cls >= kGlyphClasses) throw ConfigError("glyph class out of range");
  if (size <= 0) throw ConfigError("glyph size must be positive");
  Image img(size, size);
  Rng noise(style.noise_seed);
  const double theta = -pose.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double extent = pose.scale * style.size_jitter;
  constexpr int kSub = 3;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = (x + (sx + 0.5) / kSub) / size * 2.0 - 1.0 - 2.0 * pose.shift_x;
          const double py = 1.0 - (y + (sy + 0.5) / kSub) / size * 2.0 + 2.0 * pose.shift_y;
          const double u = (c * px - s * py) / extent;
          const double v = (s * px + c * py) / extent;
          hits += inside(cls, u, v);
        }
      }
      const double cover = static_cast<double>(hits) / (kSub * kSub);
      const int jitter =
          style.noise > 0 ? static_cast<int>(noise.uniform_int(0, 2 * style.noise)) - style.noise : 0;
      for (int ch = 0; ch < 3; ++ch) {
        const double value = cover * style.fg[ch] + (1.0 - cover) * (style.bg[ch] + jitter);
        img.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
      }
    }
  }
  if (pose.brightness == 1.0 && pose.hue_deg == 0.0) return img;
  return adjust_color(img, pose.brightness, pose.hue_deg);
}

ToyDataset make_toy_dataset(const std::filesystem::path& dir, const ToyDatasetConfig& config) {
  if (config.train_per_class < 1 || config.test_per_class < 1)
    throw ConfigError("toy dataset needs at least one train and one test image per class");
  config.test_variation.validate();
  std::filesystem::create_directories(dir / "images");

  ToyDataset out;
  out.manifest.name = "toy-glyphs";
  out.manifest.class_count = kGlyphClasses;
  out.manifest.base_dir = dir;
  const auto& tv = config.test_variation;
  ImageId next = 1;
  for (int cls = 0; cls < kGlyphClasses; ++cls) {
    const int total = config.train_per_class + config.test_per_class;
    for (int n = 0; n < total; ++n) {
      const bool test = n >= config.train_per_class;
      Rng rng(hash_seed({config.seed, static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(n)}));
      GlyphStyle style;
      for (int ch = 0; ch < 3; ++ch) style.fg[ch] = static_cast<std::uint8_t>(rng.uniform_int(160, 255));
      for (int ch = 0; ch < 3; ++ch) style.bg[ch] = static_cast<std::uint8_t>(rng.uniform_int(40, 100));
      style.size_jitter = rng.uniform(0.92, 1.08);
      style.noise_seed = rng.next_u64();
      TrajectoryParams pose;
      if (test) {
        pose.rotation_deg = rng.uniform(-tv.rotation_deg, tv.rotation_deg);
        pose.shift_x = rng.uniform(-tv.translation, tv.translation);
        pose.shift_y = rng.uniform(-tv.translation, tv.translation);
        pose.scale = rng.uniform(1.0 - tv.scale, 1.0 + tv.scale);
        pose.brightness = rng.uniform(1.0 - tv.brightness, 1.0 + tv.brightness);
        pose.hue_deg = rng.uniform(-tv.hue_deg, tv.hue_deg);
      }
      const std::string rel = std::string("images/") + kNames[cls] + "_" + (test ? "test" : "train") +
                              "_" + std::to_string(n) + ".png";
      write_png(dir / rel, render_glyph(cls, config.image_size, pose, style));
      out.manifest.records.push_back(
          {next, rel, cls, config.image_size, config.image_size});
      (test ? out.split.test_ids : out.split.train_ids).push_back(next);
      ++next;
    }
  }
  out.split.seed = config.seed;
  out.manifest_path = dir / "manifest.tsv";
  out.split_path = dir / "split.txt";
  save_manifest(out.manifest_path, out.manifest);
  save_split(out.split_path, out.split);
  return out;
}

}  // namespace sgia
