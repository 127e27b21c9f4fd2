// SPDX-License-Identifier: Apache-2.0
//
// Sequence generation behind a provider contract, plus the two ways a
// store gets filled: running a provider over a manifest, or ingesting frames
// that an external generator already produced.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgia/dataset.hpp"
#include "sgia/error.hpp"
#include "sgia/image.hpp"
#include "sgia/store.hpp"

namespace sgia {

// Raised for any failure inside a provider; carries what is needed to
// reproduce the call.
class ProviderError : public Error {
 public:
  ProviderError(std::string provider_id, std::uint64_t seed, const std::string& what)
      : Error("provider '" + provider_id + "' (seed " + std::to_string(seed) + "): " + what),
        provider_id_(std::move(provider_id)),
        seed_(seed) {}

  const std::string& provider_id() const { return provider_id_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::string provider_id_;
  std::uint64_t seed_;
};

class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;

  virtual std::string provider_id() const = 0;
  // Frame resolution produced for a given input.
  virtual Resolution native_resolution(const Image& input) const = 0;
  virtual bool deterministic() const = 0;
  // Set when every output has the same resolution regardless of input.
  virtual std::optional<Resolution> fixed_resolution() const { return std::nullopt; }
  // Exactly `frames` images at native_resolution(image), all depicting the
  // same label as `image`.
  virtual std::vector<Image> generate(const Image& image, int frames,
                                      std::uint64_t seed) const = 0;
  // Recorded verbatim in the store meta.
  virtual nlohmann::json describe() const { return nlohmann::json::object(); }
};

struct GeneratedSequence {
  std::vector<Image> frames;
  std::uint64_t seed = 0;
};

// Validates K and the provider's output count/resolution, and wraps any
// failure in ProviderError.
GeneratedSequence generate_sequence(const GenerationProvider& provider, const Image& image,
                                    int frames, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Toy parametric-trajectory provider

// Ranges are symmetric about the identity transform:
//   rotation in [-rotation_deg, rotation_deg]
//   shift_x, shift_y in [-translation, translation] (fraction of extent)
//   scale in [1 - scale, 1 + scale]
//   brightness gain in [1 - brightness, 1 + brightness]
//   hue offset in [-hue_deg, hue_deg]
struct TrajectoryConfig {
  double rotation_deg = 15.0;
  double translation = 0.1;
  double scale = 0.1;
  double brightness = 0.2;
  double hue_deg = 20.0;

  static TrajectoryConfig identity() { return {0, 0, 0, 0, 0}; }
  void validate() const;
  nlohmann::json to_json() const;
  static TrajectoryConfig from_json(const nlohmann::json& j);
};

struct TrajectoryParams {
  double rotation_deg = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
  double scale = 1.0;
  double brightness = 1.0;
  double hue_deg = 0.0;
};

// Endpoints drawn from Rng(seed): first the six start parameters in the field
// order of TrajectoryParams, then the six end parameters, each uniform over
// its range.
std::pair<TrajectoryParams, TrajectoryParams> trajectory_endpoints(const TrajectoryConfig& config,
                                                                   std::uint64_t seed);

// p_k = start + (k-1)/(K-1) * (end - start), k = 1..K; K = 1 yields the start.
std::vector<TrajectoryParams> trajectory_params(const TrajectoryConfig& config, int frames,
                                                std::uint64_t seed);

Image apply_trajectory_params(const Image& image, const TrajectoryParams& params);

// Frames of the trajectory applied to `image` (resized first when
// output_resolution is set and differs).
std::vector<Image> toy_trajectory_generate(const Image& image, const TrajectoryConfig& config,
                                           int frames, std::uint64_t seed,
                                           std::optional<Resolution> output_resolution = {});

class ToyTrajectoryProvider final : public GenerationProvider {
 public:
  static constexpr const char* kId = "toy-trajectory";

  explicit ToyTrajectoryProvider(TrajectoryConfig config = {},
                                 std::optional<Resolution> output_resolution = {});

  std::string provider_id() const override { return kId; }
  Resolution native_resolution(const Image& input) const override;
  bool deterministic() const override { return true; }
  std::optional<Resolution> fixed_resolution() const override { return output_resolution_; }
  std::vector<Image> generate(const Image& image, int frames,
                              std::uint64_t seed) const override;
  nlohmann::json describe() const override;

  const TrajectoryConfig& config() const { return config_; }

 private:
  TrajectoryConfig config_;
  std::optional<Resolution> output_resolution_;
};

// Named provider registry used by configuration (`provider = "<id>"`).
class ProviderRegistry {
 public:
  using Factory = std::function<std::unique_ptr<GenerationProvider>(const nlohmann::json&)>;

  static ProviderRegistry& instance();

  void add(const std::string& id, Factory factory);
  bool contains(const std::string& id) const;
  std::vector<std::string> ids() const;
  std::unique_ptr<GenerationProvider> make(const std::string& id,
                                           const nlohmann::json& options = {}) const;

 private:
  ProviderRegistry();
  std::map<std::string, Factory> factories_;
};

// ---------------------------------------------------------------------------
// Store population

struct SequenceFailure {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  std::uint64_t seed = 0;
  std::string message;
};

struct PopulateResult {
  SequenceStore store;
  StoreReport report;
  std::vector<SequenceFailure> failures;
};

struct PopulateOptions {
  std::uint64_t base_seed = 0;
  unsigned workers = 1;
};

// Fills an N x M x K store at `root`, one provider call per (i, j) with seed
// sequence_seed(base_seed, i, j). Failures are collected per sequence and the
// remaining work continues.
PopulateResult populate_store(const GenerationProvider& provider, const DatasetManifest& manifest,
                              std::uint32_t m, std::uint32_t k,
                              const std::filesystem::path& root,
                              const PopulateOptions& options = {});

struct IngestResult {
  SequenceStore store;
  StoreReport report;
};

// Imports precomputed frames from `source`. The source either follows the
// store layout (<i:06d>/<j:03d>/<k:03d>.png) or contains mapping.txt with
// lines "<source-path> <i> <j> <k>" (paths relative to `source`). Provider
// metadata in source/provider_meta.json is recorded verbatim. Files that do
// not map into 1..N x 1..M x 1..K raise a StoreError listing all of them;
// missing frames only show up in the report. `dest` may equal `source` for a
// store-layout dump, in which case frames stay in place.
IngestResult ingest_precomputed(const std::filesystem::path& source,
                                const std::filesystem::path& dest,
                                const DatasetManifest& manifest, std::uint32_t m,
                                std::uint32_t k);

}  // namespace sgia
