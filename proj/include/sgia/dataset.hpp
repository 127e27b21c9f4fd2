// SPDX-License-Identifier: Apache-2.0
//
// Real-image manifests and train/test/few-shot splits.
//
// Manifest text format:
//
//   #manifest name=<name> class_count=<C> sep=<tab|comma>
//   <id><sep><path><sep><label>[<sep><width><sep><height>]
//   ...
//
// Blank lines and lines starting with "//" are ignored. Ids are dense,
// 1-based and listed in order; paths are relative to the manifest file.
//
// Split text format:
//
//   shots: <s>      (optional)
//   seed: <n>       (optional)
//   train:
//   <id>
//   ...
//   test:
//   <id>
//   ...
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sgia {

using ImageId = std::uint32_t;

struct ImageRecord {
  ImageId id = 0;
  std::string path;
  int label = 0;
  int width = 0;   // 0 when not recorded
  int height = 0;  // 0 when not recorded
};

struct DatasetManifest {
  std::string name;
  int class_count = 0;
  std::vector<ImageRecord> records;  // records[i - 1].id == i
  std::filesystem::path base_dir;    // directory the paths are relative to

  std::size_t size() const { return records.size(); }
  const ImageRecord& record(ImageId id) const;
  std::filesystem::path image_path(ImageId id) const;
  std::vector<ImageId> ids_of_class(int label) const;
};

DatasetManifest parse_manifest(const std::string& text,
                               const std::filesystem::path& base_dir = {});
DatasetManifest load_manifest(const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& manifest, char sep = '\t');
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Throws DataError on any invariant violation.
void check_manifest(const DatasetManifest& manifest);

struct SplitSpec {
  std::vector<ImageId> train_ids;  // ascending
  std::vector<ImageId> test_ids;   // ascending
  std::optional<int> shots_per_class;
  std::uint64_t seed = 0;
};

SplitSpec parse_split(const std::string& text);
SplitSpec load_split(const std::filesystem::path& path);
std::string format_split(const SplitSpec& split);
void save_split(const std::filesystem::path& path, const SplitSpec& split);

// Disjointness, id range and (for few-shot splits) per-class shot counts.
void check_split(const DatasetManifest& manifest, const SplitSpec& split);

// Every id not in test_ids becomes a train id.
SplitSpec make_full_split(const DatasetManifest& manifest, std::vector<ImageId> test_ids);

// Seeded few-shot draw. For each class c in ascending order, the class's
// non-test ids are sorted ascending and a partial Fisher-Yates shuffle driven
// by Rng(hash_seed({seed, c})) selects `shots` of them: for t in [0, shots),
// swap(cand[t], cand[uniform_int(t, n - 1)]). The union is returned sorted.
SplitSpec make_few_shot_split(const DatasetManifest& manifest, int shots,
                              std::uint64_t seed, std::vector<ImageId> test_ids);

}  // namespace sgia
