// SPDX-License-Identifier: Apache-2.0
//
// Fine-tuning stages and the two-stage bridging protocol:
//
//   bridging       <- fine-tune(pretrained, mixed loader at rate alpha)
//   classification <- fine-tune(bridging,   real-only loader)
//
// plus the head-then-full variant used for large backbones.
#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgia/dataset.hpp"
#include "sgia/model.hpp"
#include "sgia/sampler.hpp"
#include "sgia/schedule.hpp"
#include "sgia/store.hpp"
#include "sgia/transforms.hpp"

namespace sgia {

struct TrainConfig {
  double lr0 = 0.01;
  double weight_decay = 1e-5;
  double momentum = 0.0;
  int batch_size = 16;
  int epochs = 128;
  int t0 = 1;
  int t_mult = 2;
  double lr_min = 0.0;
  bool eval_every_epoch = true;
  std::uint64_t seed = 0;

  void validate() const;
  CosineRestartSchedule schedule() const { return {lr0, lr_min, t0, t_mult}; }
  nlohmann::json to_json() const;
  // Keys absent from j keep the values of `base`.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;     // mean over the epoch's samples
  double test_accuracy = 0.0;  // [0, 1]; NaN when not evaluated
  double lr = 0.0;             // at the first step of the epoch
  std::size_t slots = 0;
  std::size_t synthetic_slots = 0;
};

struct StageResult {
  std::string stage;
  std::vector<EpochStats> epochs;
  double best_accuracy = 0.0;  // max over evaluated epochs, [0, 1]
  int best_epoch = -1;
  double wall_time_s = 0.0;

  // One JSON object per epoch, newline-terminated.
  std::string to_jsonl() const;
  static StageResult from_jsonl(const std::string& stage, const std::string& text);
};

struct LabeledImage {
  Image image;
  int label = 0;
};
using TestSet = std::vector<LabeledImage>;

TestSet load_test_set(const DatasetManifest& manifest, std::span<const ImageId> ids);

// Top-1 accuracy with the deterministic test transform.
double evaluate(const Classifier& model, const TestSet& test_set, const TransformSpec& transforms);

// Resolves plan slots to decoded images; decoded images are cached.
class SampleSource {
 public:
  SampleSource(const DatasetManifest& manifest, const SequenceStore* store)
      : manifest_(&manifest), store_(store) {}

  const Image& image(const SampleRef& ref) const;
  int label(const SampleRef& ref) const { return manifest_->record(ref.i).label; }
  const DatasetManifest& manifest() const { return *manifest_; }

 private:
  const DatasetManifest* manifest_;
  const SequenceStore* store_;
  mutable std::map<std::uint32_t, Image> real_cache_;
  mutable std::map<FrameIndex, Image> synthetic_cache_;
};

using PlanSource = std::function<EpochPlan(std::uint32_t epoch)>;

// Per-epoch plans over train_ids. With alpha > 0 the store is checked once
// up front; with alpha == 0 the store is never consulted.
PlanSource make_plan_source(std::vector<ImageId> train_ids, const SequenceStore* store,
                            const BalancingConfig& cfg, std::uint64_t seed);

struct StageOptions {
  std::string name = "stage";
  // Called with every plan right after it is produced.
  std::function<void(const EpochPlan&)> on_plan;
  std::function<void(const EpochStats&)> on_epoch;
};

struct StageOutcome {
  ModelHandle model;
  StageResult result;
};

// One fine-tuning run. Mini-batches follow the plan's slot order; the
// learning rate follows the cosine restart schedule per step (fractional
// epochs); each slot's transform randomness comes from
// hash_seed({plan.seed, epoch, slot, transform-stream}). Throws
// TrainingDiverged on a non-finite loss. epochs == 0 returns the model
// unchanged.
StageOutcome train_stage(ModelHandle model, const PlanSource& plans, const SampleSource& source,
                         const TrainConfig& cfg, const TransformSpec& transforms,
                         const TestSet& test_set, const StageOptions& options = {});

struct TwoStageInputs {
  const DatasetManifest* manifest = nullptr;
  const SequenceStore* store = nullptr;  // may be null when alpha == 0
  SplitSpec split;
  TransformSpec transforms;
  const TestSet* test_set = nullptr;  // loaded from split.test_ids when null
};

struct TwoStageOptions {
  // Stage 2 uses the stage-1 config unless overridden.
  std::optional<TrainConfig> second_stage;
  std::function<void(const std::string& stage, const EpochPlan&)> on_plan;
  std::function<void(const std::string& stage, const EpochStats&)> on_epoch;
};

struct TwoStageResult {
  ModelHandle first;   // bridging model (or head-trained model)
  ModelHandle second;  // classification model
  StageResult first_result;
  StageResult second_result;
};

std::uint64_t stage_plan_seed(std::uint64_t run_seed, int stage);

// Single-stage training on the alpha-mixed loader.
StageOutcome run_single(const ModelHandle& model_pre, const TrainConfig& cfg,
                        const BalancingConfig& alpha_cfg, const TwoStageInputs& in,
                        const TwoStageOptions& options = {});

// Bridging transfer: stage 1 on the alpha-mixed loader, stage 2 on a
// real-only, store-free loader.
TwoStageResult run_btl(const ModelHandle& model_pre, const TrainConfig& cfg,
                       const BalancingConfig& alpha_cfg, const TwoStageInputs& in,
                       const TwoStageOptions& options = {});

// Step 1 trains only the head on the alpha-mixed loader; step 2 fine-tunes
// the full network on real images.
TwoStageResult run_two_step(const ModelHandle& model_pre, const TrainConfig& cfg,
                            const BalancingConfig& alpha_cfg, const TwoStageInputs& in,
                            const TwoStageOptions& options = {});

}  // namespace sgia
