// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "sgia/dataset.hpp"
#include "sgia/image.hpp"
#include "sgia/rng.hpp"

namespace sgia::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "sgia-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

inline Image noise_image(int w, int h, std::uint64_t seed) {
  Image img(w, h);
  Rng rng(seed);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

// Manifest of `per_class` noise images for each of `classes` classes, written
// to dir/img/. Ids run class-major.
inline DatasetManifest write_noise_dataset(const std::filesystem::path& dir, int classes,
                                           int per_class, int size = 16) {
  DatasetManifest m;
  m.name = "noise";
  m.class_count = classes;
  m.base_dir = dir;
  std::filesystem::create_directories(dir / "img");
  ImageId id = 1;
  for (int c = 0; c < classes; ++c) {
    for (int n = 0; n < per_class; ++n, ++id) {
      const std::string rel = "img/" + std::to_string(id) + ".png";
      write_png(dir / rel, noise_image(size, size, id));
      m.records.push_back({id, rel, c, size, size});
    }
  }
  save_manifest(dir / "manifest.tsv", m);
  return m;
}

}  // namespace sgia::test
