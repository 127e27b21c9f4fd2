// SPDX-License-Identifier: Apache-2.0

#include "sgia/transforms.hpp"

#include <algorithm>
#include <cmath>

#include "sgia/error.hpp"

namespace sgia {

std::string to_string(BaseAug aug) { return aug == BaseAug::kNone ? "None" : "RRC"; }

BaseAug base_aug_from_string(const std::string& s) {
  if (s == "None" || s == "none") return BaseAug::kNone;
  if (s == "RRC" || s == "rrc") return BaseAug::kRandomResizedCrop;
  throw ConfigError("unknown base augmentation '" + s + "' (None or RRC)");
}

void TransformSpec::validate() const {
  if (size <= 0) throw ConfigError("transform size must be positive");
  if (!(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0))
    throw ConfigError("RRC scale must satisfy 0 < min <= max <= 1");
  if (!(ratio_min > 0.0 && ratio_min <= ratio_max))
    throw ConfigError("RRC ratio must satisfy 0 < min <= max");
}

int TransformSpec::test_resize() const {
  return static_cast<int>(std::lround(8.0 * size / 7.0));
}

CropBox random_resized_crop_box(int width, int height, const TransformSpec& spec, Rng& rng) {
  const double area = static_cast<double>(width) * height;
  const double log_lo = std::log(spec.ratio_min);
  const double log_hi = std::log(spec.ratio_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(spec.scale_min, spec.scale_max);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= width && h <= height) {
      const int y = static_cast<int>(rng.uniform_int(0, height - h));
      const int x = static_cast<int>(rng.uniform_int(0, width - w));
      return {x, y, w, h};
    }
  }
  const double in_ratio = static_cast<double>(width) / height;
  int w = width;
  int h = height;
  if (in_ratio < spec.ratio_min) {
    h = static_cast<int>(std::lround(w / spec.ratio_min));
  } else if (in_ratio > spec.ratio_max) {
    w = static_cast<int>(std::lround(h * spec.ratio_max));
  }
  return {(width - w) / 2, (height - h) / 2, w, h};
}

namespace {

constexpr float kMean = 0.5f;
constexpr float kInvStd = 4.0f;  // 1 / 0.25

}  // namespace

Tensor crop_resize_to_tensor(const Image& image, double box_x, double box_y, double box_w,
                             double box_h, int out_w, int out_h, bool flip) {
  Tensor t(3, out_h, out_w);
  const double sx = box_w / out_w;
  const double sy = box_h / out_h;
  const std::size_t plane = static_cast<std::size_t>(out_w) * out_h;
  for (int y = 0; y < out_h; ++y) {
    const double src_y = box_y + (y + 0.5) * sy;
    for (int x = 0; x < out_w; ++x) {
      const int ox = flip ? out_w - 1 - x : x;
      const double src_x = box_x + (x + 0.5) * sx;
      for (int c = 0; c < 3; ++c) {
        const float v = sample_bilinear(image, src_x, src_y, c) / 255.0f;
        t.data[c * plane + static_cast<std::size_t>(y) * out_w + ox] = (v - kMean) * kInvStd;
      }
    }
  }
  return t;
}

Tensor resize_to_tensor(const Image& image, int width, int height) {
  return crop_resize_to_tensor(image, 0.0, 0.0, image.width, image.height, width, height);
}

Tensor train_transform(const Image& image, const TransformSpec& spec, Rng& rng) {
  CropBox box{0, 0, image.width, image.height};
  if (spec.base_aug == BaseAug::kRandomResizedCrop)
    box = random_resized_crop_box(image.width, image.height, spec, rng);
  // The flip coin is always tossed so the stream length does not depend on
  // the configuration.
  const bool flip = rng.uniform01() < 0.5 && spec.hflip;
  return crop_resize_to_tensor(image, box.x, box.y, box.width, box.height, spec.size, spec.size,
                               flip);
}

Tensor test_transform(const Image& image, const TransformSpec& spec) {
  const int shorter = spec.test_resize();
  int rw, rh;
  if (image.width <= image.height) {
    rw = shorter;
    rh = static_cast<int>(std::lround(static_cast<double>(image.height) * shorter / image.width));
  } else {
    rh = shorter;
    rw = static_cast<int>(std::lround(static_cast<double>(image.width) * shorter / image.height));
  }
  const int S = spec.size;
  const int ox = static_cast<int>(std::lround((rw - S) / 2.0));
  const int oy = static_cast<int>(std::lround((rh - S) / 2.0));
  // Crop box in resized coordinates mapped back to source coordinates.
  const double fx = static_cast<double>(image.width) / rw;
  const double fy = static_cast<double>(image.height) / rh;
  return crop_resize_to_tensor(image, ox * fx, oy * fy, S * fx, S * fy, S, S);
}

}  // namespace sgia
