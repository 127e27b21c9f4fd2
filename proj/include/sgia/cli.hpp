// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration and the `sgia` command-line front end.
//
// Config is one JSON document with sections
//
//   dataset     manifest
//   split       file, shots ("full" or n), seed
//   provider    id, trajectory, output_resolution, dump, base_seed, workers
//   balancing   alpha, M, K, mode
//   train       lr0, weight_decay, momentum, batch_size, epochs, t0, t_mult,
//               lr_min, eval_every_epoch, seed
//   stage2      same keys as train; overrides for the second stage
//   transform   size, base_aug, scale_min, scale_max, ratio_min, ratio_max, hflip
//   model       backbone, init_seed, checkpoint
//   experiment  method, protocol, seeds, output, store
//   sweep       alpha, M, shots, include_baseline
//
// SGIA_<SECTION>_<KEY>=<value> overrides a key (value parsed as JSON when
// it parses, else taken as a string). Relative paths resolve against the
// config file's directory.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgia/metrics.hpp"
#include "sgia/sampler.hpp"
#include "sgia/trainer.hpp"
#include "sgia/transforms.hpp"

namespace sgia {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitRuntime = 2,
  kExitIncompleteStore = 3,
};

struct SplitConfig {
  std::filesystem::path file;
  int shots = 0;  // 0 means the file's own train ids
  std::optional<std::uint64_t> seed;  // few-shot draw seed; default: the run seed
};

struct ProviderConfig {
  std::string id = "toy-trajectory";
  nlohmann::json options = nlohmann::json::object();  // trajectory, output_resolution
  std::filesystem::path dump;                         // precomputed frames
  std::uint64_t base_seed = 0;
  unsigned workers = 1;
};

struct ModelConfig {
  std::string backbone = "small-cnn";
  std::optional<std::uint64_t> init_seed;  // default: derived from the run seed
  std::filesystem::path checkpoint;        // stands in for pretrained weights
};

struct SweepConfig {
  std::vector<double> alpha;
  std::vector<std::uint32_t> m;
  std::vector<int> shots;  // 0 means full
  bool include_baseline = true;
};

struct ExperimentConfig {
  std::filesystem::path manifest;
  SplitConfig split;
  ProviderConfig provider;
  BalancingConfig balancing;
  TrainConfig train;
  std::optional<TrainConfig> stage2;
  TransformSpec transform;
  ModelConfig model;
  Method method = Method::kSGIA;
  std::string protocol = "btl";  // single | btl | two-step
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output = "out";
  std::filesystem::path store;  // default <output>/store
  SweepConfig sweep;

  std::filesystem::path run_store() const { return output / "runs.jsonl"; }
  // Checks everything that can be checked without touching data files.
  void validate() const;
};

using Environment = std::map<std::string, std::string>;

Environment current_environment();

// Applies SGIA_<SECTION>_<KEY> overrides. Variables whose section is not a
// config section are ignored; an unknown key in a known section is a
// ConfigError.
nlohmann::json apply_env_overrides(nlohmann::json doc, const Environment& env);

ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path, const Environment& env);

// Resolves the split for a shots regime (0 = the file's train ids).
SplitSpec resolve_split(const ExperimentConfig& cfg, const DatasetManifest& manifest, int shots,
                        std::uint64_t run_seed);

// One training run; the record is not persisted.
struct RunOutcome {
  RunRecord record;
  std::vector<StageResult> stages;
  Network model;  // final classification model
};
RunOutcome execute_run(const ExperimentConfig& cfg, const DatasetManifest& manifest,
                       const SequenceStore* store, const TestSet& tests, int shots,
                       std::uint64_t seed);

// Entry point; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const Environment& env);
int run_cli(int argc, char** argv);

}  // namespace sgia
