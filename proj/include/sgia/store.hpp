// SPDX-License-Identifier: Apache-2.0
//
// On-disk store of synthetic frame sequences indexed by (i, j, k):
// real image i in 1..N, sequence j in 1..M, frame k in 1..K.
//
//   <root>/meta.json
//   <root>/<i:06d>/<j:03d>/<k:03d>.png
//
// meta.json records the shape, the provider id and its metadata verbatim,
// the store-wide frame resolution and per-sequence generation seeds. Meta
// updates take an exclusive flock on <root>/meta.lock; writers of distinct
// (i, j) sequences may run concurrently.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgia/image.hpp"

namespace sgia {

struct StoreShape {
  std::uint32_t n = 0;  // real images
  std::uint32_t m = 0;  // sequences per image
  std::uint32_t k = 0;  // frames per sequence

  friend bool operator==(const StoreShape&, const StoreShape&) = default;
};

struct FrameIndex {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  std::uint32_t k = 0;

  friend bool operator==(const FrameIndex&, const FrameIndex&) = default;
  friend auto operator<=>(const FrameIndex&, const FrameIndex&) = default;
};

std::string to_string(const FrameIndex& idx);

struct SequenceInfo {
  std::uint64_t seed = 0;
  Resolution resolution;
};

struct StoreMeta {
  StoreShape shape;
  std::string provider_id;
  nlohmann::json provider_meta = nlohmann::json::object();
  std::optional<Resolution> frame_resolution;  // declared store-wide, if any
  // keyed by "i/j"
  std::map<std::string, SequenceInfo> sequences;
};

struct ResolutionIssue {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  std::string detail;
};

struct UndecodableFrame {
  FrameIndex index;
  std::string detail;
};

struct StoreReport {
  std::vector<FrameIndex> missing;
  std::vector<ResolutionIssue> resolution_issues;
  std::vector<UndecodableFrame> undecodable;
  // Reserved for per-frame quality flags; nothing populates it yet.
  std::vector<std::string> quality_flags;

  bool complete() const {
    return missing.empty() && resolution_issues.empty() && undecodable.empty();
  }
  std::string summary() const;
  nlohmann::json to_json() const;
};

class SequenceStore {
 public:
  // Creates the root directory and meta.json. Fails if a store with a
  // different shape already exists there; reopens an identical one.
  // frame_resolution declares one resolution for every frame of the store
  // (providers with a fixed output size); without it only per-sequence
  // consistency is enforced.
  static SequenceStore create(const std::filesystem::path& root, StoreShape shape,
                              const std::string& provider_id,
                              const nlohmann::json& provider_meta = nlohmann::json::object(),
                              std::optional<Resolution> frame_resolution = {});
  static SequenceStore open(const std::filesystem::path& root);
  static bool exists(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  const StoreShape& shape() const { return shape_; }
  std::filesystem::path frame_path(const FrameIndex& idx) const;
  std::filesystem::path sequence_dir(std::uint32_t i, std::uint32_t j) const;

  // Writes all K frames of sequence (i, j) and records its seed. Frames must
  // share one resolution.
  void put_sequence(std::uint32_t i, std::uint32_t j, std::span<const Image> frames,
                    std::uint64_t seed);

  // Raw frame write without meta bookkeeping (ingestion path); pair with
  // record_sequence once a sequence's frames are in place.
  void put_frame_bytes(const FrameIndex& idx, std::span<const std::uint8_t> png_bytes);
  void record_sequence(std::uint32_t i, std::uint32_t j, const SequenceInfo& info);

  Image get(const FrameIndex& idx) const;
  std::vector<std::uint8_t> get_bytes(const FrameIndex& idx) const;
  bool contains(const FrameIndex& idx) const;

  // Fresh read of meta.json under a shared lock.
  StoreMeta meta() const;
  void check_index(const FrameIndex& idx) const;

 private:
  SequenceStore(std::filesystem::path root, StoreShape shape)
      : root_(std::move(root)), shape_(shape) {}

  std::filesystem::path meta_path() const { return root_ / "meta.json"; }
  std::filesystem::path lock_path() const { return root_ / "meta.lock"; }

  std::filesystem::path root_;
  StoreShape shape_;
};

StoreReport validate_store(const SequenceStore& store);

nlohmann::json meta_to_json(const StoreMeta& meta);
StoreMeta meta_from_json(const nlohmann::json& j);

}  // namespace sgia
