// SPDX-License-Identifier: Apache-2.0
//
// Real/synthetic balancing loader. Each training slot emits the real image
// x_i with probability 1 - alpha, otherwise a synthetic frame (i, j, k) with
// j ~ U{1..M} and k ~ U{1..K}.
//
// Every slot owns a private random stream seeded by
// hash_seed({seed, epoch, slot_index}) and always consumes the same four
// draws in this order: image draw (used only in fully-uniform mode),
// Bernoulli draw, j draw, k draw. A plan is therefore a pure function of
// its inputs and can be materialized slot-by-slot in any order.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgia/dataset.hpp"
#include "sgia/rng.hpp"
#include "sgia/store.hpp"

namespace sgia {

enum class SamplingMode {
  kEpochPermutation,  // each train id once per epoch in seeded order
  kFullyUniform,      // i ~ U(train_ids) independently per slot
};

std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& s);

struct BalancingConfig {
  double alpha = 0.5;
  std::uint32_t m = 1;
  std::uint32_t k = 32;
  SamplingMode mode = SamplingMode::kEpochPermutation;

  void validate() const;
};

struct SampleRef {
  enum class Kind : std::uint8_t { kReal, kSynthetic };

  Kind kind = Kind::kReal;
  ImageId i = 0;
  std::uint32_t j = 0;  // 0 for real refs
  std::uint32_t k = 0;  // 0 for real refs

  static SampleRef real(ImageId i) { return {Kind::kReal, i, 0, 0}; }
  static SampleRef synthetic(ImageId i, std::uint32_t j, std::uint32_t k) {
    return {Kind::kSynthetic, i, j, k};
  }
  bool is_synthetic() const { return kind == Kind::kSynthetic; }

  friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

struct EpochPlan {
  std::vector<SampleRef> slots;
  std::uint64_t seed = 0;
  std::uint32_t epoch = 0;
  BalancingConfig config;

  friend bool operator==(const EpochPlan& a, const EpochPlan& b) {
    return a.slots == b.slots && a.seed == b.seed && a.epoch == b.epoch;
  }
};

// Seed of slot `slot_index` in epoch `epoch`.
inline std::uint64_t slot_seed(std::uint64_t seed, std::uint32_t epoch, std::uint64_t slot_index) {
  return hash_seed({seed, epoch, slot_index});
}

// One slot decision for image i: consumes the Bernoulli, j and k draws from
// `rng` regardless of the outcome.
SampleRef sample_slot(ImageId i, const BalancingConfig& cfg, Rng& rng);

struct PlanOptions {
  std::uint32_t epoch = 0;
  unsigned workers = 1;  // parallel slot materialization; result is identical
};

// Builds one epoch of slots. `store` may be null only when alpha == 0; with
// alpha > 0 it must be complete for every train id and its K must equal
// cfg.k (cfg.m may be smaller than the store's M).
EpochPlan plan_epoch(std::span<const ImageId> train_ids, const SequenceStore* store,
                     const BalancingConfig& cfg, std::uint64_t seed,
                     const PlanOptions& options = {});

// Same plan without consulting a store. Callers must have checked the store
// themselves (or alpha == 0).
EpochPlan plan_epoch_unchecked(std::span<const ImageId> train_ids, const BalancingConfig& cfg,
                               std::uint64_t seed, const PlanOptions& options = {});

// Throws IncompleteStoreError unless every (i, j, k) with i in train_ids,
// j <= cfg.m, k <= cfg.k is present, or ConfigError on a shape mismatch.
void check_store_for_plan(std::span<const ImageId> train_ids, const SequenceStore& store,
                          const BalancingConfig& cfg);

// Fraction of synthetic slots. Throws on an empty plan.
double empirical_alpha(const EpochPlan& plan);

// Audit format: one line per slot, "slot_index kind i [j k]" with kind in
// {real, synthetic}, preceded by a "# plan seed=<s> epoch=<e> alpha=<a>
// M=<m> K=<k> mode=<mode>" header.
std::string format_plan(const EpochPlan& plan);
EpochPlan parse_plan(const std::string& text);
void write_plan(const std::filesystem::path& path, const EpochPlan& plan);

}  // namespace sgia
