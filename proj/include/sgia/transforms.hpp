// SPDX-License-Identifier: Apache-2.0
//
// Image -> network input tensors.
//
// Train: optional random-resized-crop (area fraction in [scale_min,
// scale_max], log-uniform aspect in [ratio_min, ratio_max], ten attempts
// then a center fallback) or a plain resize, followed by an optional
// horizontal flip with probability 1/2.
// Test: resize the shorter side to round(8 S / 7), center-crop S x S.
#pragma once

#include <string>
#include <vector>

#include "sgia/image.hpp"
#include "sgia/rng.hpp"

namespace sgia {

// CHW float tensor, values (pixel / 255 - 0.5) / 0.25.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w) {}

  std::size_t size() const { return data.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

enum class BaseAug { kNone, kRandomResizedCrop };

std::string to_string(BaseAug aug);
BaseAug base_aug_from_string(const std::string& s);

struct TransformSpec {
  int size = 224;
  BaseAug base_aug = BaseAug::kRandomResizedCrop;
  double scale_min = 0.5;
  double scale_max = 1.0;
  double ratio_min = 3.0 / 4.0;
  double ratio_max = 4.0 / 3.0;
  bool hflip = true;

  void validate() const;
  // round(8 S / 7): 256 for S = 224.
  int test_resize() const;
};

struct CropBox {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  friend bool operator==(const CropBox&, const CropBox&) = default;
};

// Crop sampled the way torchvision's RandomResizedCrop samples it.
CropBox random_resized_crop_box(int width, int height, const TransformSpec& spec, Rng& rng);

// Bilinear resample of the source box to out_w x out_h, optionally mirrored.
Tensor crop_resize_to_tensor(const Image& image, double box_x, double box_y, double box_w,
                             double box_h, int out_w, int out_h, bool flip = false);

Tensor resize_to_tensor(const Image& image, int width, int height);

Tensor train_transform(const Image& image, const TransformSpec& spec, Rng& rng);
Tensor test_transform(const Image& image, const TransformSpec& spec);

}  // namespace sgia
