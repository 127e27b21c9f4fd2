// SPDX-License-Identifier: Apache-2.0
//
// Rendered 10-class glyph dataset for desk-scale studies. Train-pool images
// show each glyph upright and centred; test images add pose and lighting
// variation drawn from a TrajectoryConfig.
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sgia/augmentor.hpp"
#include "sgia/dataset.hpp"
#include "sgia/image.hpp"

namespace sgia {

inline constexpr int kGlyphClasses = 10;

const char* glyph_name(int cls);

struct GlyphStyle {
  std::uint8_t fg[3] = {230, 200, 60};
  std::uint8_t bg[3] = {70, 70, 80};
  double size_jitter = 1.0;  // multiplies the glyph extent
  std::uint64_t noise_seed = 0;
  int noise = 6;  // per-pixel background noise amplitude
};

// Renders class `cls` at the given pose (3x3 supersampled), then applies
// the pose's brightness and hue.
Image render_glyph(int cls, int size, const TrajectoryParams& pose, const GlyphStyle& style);

struct ToyDatasetConfig {
  int image_size = 40;
  int train_per_class = 8;
  int test_per_class = 20;
  TrajectoryConfig test_variation{30.0, 0.12, 0.2, 0.35, 30.0};
  std::uint64_t seed = 0;
};

struct ToyDataset {
  DatasetManifest manifest;
  SplitSpec split;  // full split: canonical pool -> train, varied -> test
  std::filesystem::path manifest_path;
  std::filesystem::path split_path;
};

// Writes images/, manifest.tsv and split.txt under `dir`.
ToyDataset make_toy_dataset(const std::filesystem::path& dir, const ToyDatasetConfig& config);

}  // namespace sgia
