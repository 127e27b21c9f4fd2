// SPDX-License-Identifier: Apache-2.0

#include "sgia/trainer.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "sgia/error.hpp"
#include "sgia/rng.hpp"

namespace sgia {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("train.lr0 must be positive");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum must be in [0, 1)");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  schedule().validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr0", lr0},     {"weight_decay", weight_decay},
          {"momentum", momentum}, {"batch_size", batch_size},
          {"epochs", epochs}, {"t0", t0},
          {"t_mult", t_mult}, {"lr_min", lr_min},
          {"eval_every_epoch", eval_every_epoch}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
  static const std::set<std::string> known = {"lr0",    "weight_decay", "momentum",
                                              "batch_size", "epochs",   "t0",
                                              "t_mult", "lr_min",       "eval_every_epoch",
                                              "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("train config: unknown key '" + key + "'");
  TrainConfig c = base;
  c.lr0 = j.value("lr0", c.lr0);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.momentum = j.value("momentum", c.momentum);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.t0 = j.value("t0", c.t0);
  c.t_mult = j.value("t_mult", c.t_mult);
  c.lr_min = j.value("lr_min", c.lr_min);
  c.eval_every_epoch = j.value("eval_every_epoch", c.eval_every_epoch);
  c.seed = j.value("seed", c.seed);
  return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

std::string StageResult::to_jsonl() const {
  std::ostringstream out;
  for (const auto& e : epochs) {
    nlohmann::json j{{"stage", stage},
                     {"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"lr", e.lr},
                     {"slots", e.slots},
                     {"synthetic_slots", e.synthetic_slots}};
    if (std::isnan(e.test_accuracy)) j["test_accuracy"] = nullptr;
    else j["test_accuracy"] = e.test_accuracy;
    out << j.dump() << '\n';
  }
  return out.str();
}

StageResult StageResult::from_jsonl(const std::string& stage, const std::string& text) {
  StageResult r;
  r.stage = stage;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    EpochStats e;
    e.epoch = j.at("epoch").get<int>();
    e.train_loss = j.at("train_loss").get<double>();
    e.lr = j.at("lr").get<double>();
    e.slots = j.value("slots", std::size_t{0});
    e.synthetic_slots = j.value("synthetic_slots", std::size_t{0});
    e.test_accuracy = j.at("test_accuracy").is_null()
                          ? std::numeric_limits<double>::quiet_NaN()
                          : j.at("test_accuracy").get<double>();
    if (!std::isnan(e.test_accuracy) && (r.best_epoch < 0 || e.test_accuracy > r.best_accuracy)) {
      r.best_accuracy = e.test_accuracy;
      r.best_epoch = e.epoch;
    }
    r.epochs.push_back(e);
  }
  return r;
}

TestSet load_test_set(const DatasetManifest& manifest, std::span<const ImageId> ids) {
  TestSet out;
  out.reserve(ids.size());
  for (const auto id : ids) out.push_back({read_png(manifest.image_path(id)), manifest.record(id).label});
  return out;
}

namespace {

double evaluate_tensors(const Classifier& model, const std::vector<Tensor>& inputs,
                        const std::vector<int>& labels) {
  std::size_t correct = 0;
  for (std::size_t n = 0; n < inputs.size(); ++n)
    if (model.predict(inputs[n]) == labels[n]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

constexpr std::uint64_t kTransformStream = 0x7472616e73ULL;

}  // namespace

double evaluate(const Classifier& model, const TestSet& test_set, const TransformSpec& transforms) {
  if (test_set.empty()) throw DataError("evaluate: empty test set");
  std::vector<Tensor> inputs;
  std::vector<int> labels;
  for (const auto& s : test_set) {
    inputs.push_back(test_transform(s.image, transforms));
    labels.push_back(s.label);
  }
  return evaluate_tensors(model, inputs, labels);
}

const Image& SampleSource::image(const SampleRef& ref) const {
  if (!ref.is_synthetic()) {
    auto it = real_cache_.find(ref.i);
    if (it == real_cache_.end())
      it = real_cache_.emplace(ref.i, read_png(manifest_->image_path(ref.i))).first;
    return it->second;
  }
  if (store_ == nullptr)
    throw StoreError("synthetic sample (" + std::to_string(ref.i) + "," + std::to_string(ref.j) +
                     "," + std::to_string(ref.k) + ") requested without a sequence store");
  const FrameIndex idx{ref.i, ref.j, ref.k};
  auto it = synthetic_cache_.find(idx);
  if (it == synthetic_cache_.end()) it = synthetic_cache_.emplace(idx, store_->get(idx)).first;
  return it->second;
}

PlanSource make_plan_source(std::vector<ImageId> train_ids, const SequenceStore* store,
                            const BalancingConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.alpha > 0.0) {
    if (store == nullptr) throw IncompleteStoreError("alpha > 0 requires a sequence store");
    check_store_for_plan(train_ids, *store, cfg);
  }
  return [ids = std::move(train_ids), cfg, seed](std::uint32_t epoch) {
    return plan_epoch_unchecked(ids, cfg, seed, {epoch, 1});
  };
}

StageOutcome train_stage(ModelHandle model, const PlanSource& plans, const SampleSource& source,
                         const TrainConfig& cfg, const TransformSpec& transforms,
                         const TestSet& test_set, const StageOptions& options) {
  StageOutcome outcome;
  outcome.result.stage = options.name;
  if (cfg.epochs == 0) {
    outcome.model = std::move(model);
    return outcome;
  }
  cfg.validate();
  transforms.validate();
  if (model.network.class_count() != source.manifest().class_count)
    throw ConfigError("model head width " + std::to_string(model.network.class_count()) +
                      " != class_count " + std::to_string(source.manifest().class_count));
  if (test_set.empty() && cfg.eval_every_epoch) throw DataError("train_stage: empty test set");

  const auto started = std::chrono::steady_clock::now();
  std::vector<Tensor> test_inputs;
  std::vector<int> test_labels;
  for (const auto& s : test_set) {
    test_inputs.push_back(test_transform(s.image, transforms));
    test_labels.push_back(s.label);
  }

  const auto schedule = cfg.schedule();
  const TrainableScope scope = model.trainable_scope;
  Network& net = model.network;
  for (auto& p : net.params()) p.velocity.clear();

  auto& result = outcome.result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const EpochPlan plan = plans(static_cast<std::uint32_t>(epoch));
    if (options.on_plan) options.on_plan(plan);
    EpochStats stats;
    stats.epoch = epoch;
    stats.slots = plan.slots.size();
    if (plan.slots.empty()) throw DataError("train_stage: empty epoch plan");

    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t batches = (plan.slots.size() + batch - 1) / batch;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const double lr = lr_at_epoch(epoch + static_cast<double>(b) / batches, schedule);
      if (b == 0) stats.lr = lr;
      net.zero_grad();
      const std::size_t begin = b * batch;
      const std::size_t end = std::min(plan.slots.size(), begin + batch);
      double batch_loss = 0.0;
      for (std::size_t s = begin; s < end; ++s) {
        const SampleRef& ref = plan.slots[s];
        if (ref.is_synthetic()) ++stats.synthetic_slots;
        Rng rng(hash_seed({plan.seed, plan.epoch, s, kTransformStream}));
        const Tensor input = train_transform(source.image(ref), transforms, rng);
        batch_loss += net.accumulate_gradients(input, source.label(ref), scope);
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss in " << options.name << " at epoch " << epoch << ", batch " << b
            << " (lr " << lr << ", seed " << cfg.seed << ")";
        throw TrainingDiverged(msg.str());
      }
      loss_sum += batch_loss;
      net.sgd_step(scope, static_cast<float>(lr), static_cast<float>(cfg.weight_decay),
                   static_cast<float>(cfg.momentum), 1.0f / static_cast<float>(end - begin));
    }
    stats.train_loss = loss_sum / static_cast<double>(plan.slots.size());

    const bool last = epoch + 1 == cfg.epochs;
    if (cfg.eval_every_epoch || last) {
      stats.test_accuracy = test_inputs.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : evaluate_tensors(net, test_inputs, test_labels);
    } else {
      stats.test_accuracy = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isnan(stats.test_accuracy) &&
        (result.best_epoch < 0 || stats.test_accuracy > result.best_accuracy)) {
      result.best_accuracy = stats.test_accuracy;
      result.best_epoch = epoch;
    }
    result.epochs.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);
  }
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  outcome.model = std::move(model);
  return outcome;
}

std::uint64_t stage_plan_seed(std::uint64_t run_seed, int stage) {
  return hash_seed({run_seed, static_cast<std::uint64_t>(stage)});
}

namespace {

struct Prepared {
  TestSet owned;
  const TestSet* tests = nullptr;
};

Prepared prepare(const TwoStageInputs& in) {
  if (in.manifest == nullptr) throw ConfigError("training requires a manifest");
  check_split(*in.manifest, in.split);
  if (in.split.train_ids.empty()) throw ConfigError("split has no train ids");
  Prepared p;
  if (in.test_set != nullptr) {
    p.tests = in.test_set;
  } else {
    p.owned = load_test_set(*in.manifest, in.split.test_ids);
    p.tests = &p.owned;
  }
  return p;
}

StageOptions stage_options(const std::string& name, const TwoStageOptions& options) {
  StageOptions so;
  so.name = name;
  if (options.on_plan) so.on_plan = [&options, name](const EpochPlan& p) { options.on_plan(name, p); };
  if (options.on_epoch)
    so.on_epoch = [&options, name](const EpochStats& e) { options.on_epoch(name, e); };
  return so;
}

// Stage 2 sees a real-only, store-free loader; every plan is audited.
StageOutcome real_only_stage(ModelHandle model, const TrainConfig& cfg,
                             const BalancingConfig& alpha_cfg, const TwoStageInputs& in,
                             const TestSet& tests, const std::string& name,
                             const TwoStageOptions& options) {
  BalancingConfig real_only = alpha_cfg;
  real_only.alpha = 0.0;
  const SampleSource source(*in.manifest, nullptr);
  auto base = make_plan_source(in.split.train_ids, nullptr, real_only,
                               stage_plan_seed(cfg.seed, 2));
  PlanSource audited = [base](std::uint32_t epoch) {
    EpochPlan plan = base(epoch);
    if (empirical_alpha(plan) != 0.0)
      throw std::logic_error("real-only stage produced a synthetic slot");
    return plan;
  };
  return train_stage(std::move(model), audited, source, cfg, in.transforms, tests,
                     stage_options(name, options));
}

}  // namespace

StageOutcome run_single(const ModelHandle& model_pre, const TrainConfig& cfg,
                        const BalancingConfig& alpha_cfg, const TwoStageInputs& in,
                        const TwoStageOptions& options) {
  cfg.validate();
  const auto prepared = prepare(in);
  const SampleSource source(*in.manifest, in.store);
  auto plans = make_plan_source(in.split.train_ids, in.store, alpha_cfg,
                                stage_plan_seed(cfg.seed, 1));
  return train_stage(model_pre, plans, source, cfg, in.transforms, *prepared.tests,
                     stage_options("single", options));
}

TwoStageResult run_btl(const ModelHandle& model_pre, const TrainConfig& cfg,
                       const BalancingConfig& alpha_cfg, const TwoStageInputs& in,
                       const TwoStageOptions& options) {
  cfg.validate();
  const TrainConfig cfg2 = options.second_stage.value_or(cfg);
  const auto prepared = prepare(in);

  const SampleSource source(*in.manifest, in.store);
  auto plans = make_plan_source(in.split.train_ids, in.store, alpha_cfg,
                                stage_plan_seed(cfg.seed, 1));
  ModelHandle pre = model_pre;
  pre.trainable_scope = TrainableScope::kFull;
  auto bridging = train_stage(pre, plans, source, cfg, in.transforms, *prepared.tests,
                              stage_options("bridging", options));
  auto classification = real_only_stage(bridging.model, cfg2, alpha_cfg, in, *prepared.tests,
                                        "classification", options);
  return {std::move(bridging.model), std::move(classification.model),
          std::move(bridging.result), std::move(classification.result)};
}

TwoStageResult run_two_step(const ModelHandle& model_pre, const TrainConfig& cfg,
                            const BalancingConfig& alpha_cfg, const TwoStageInputs& in,
                            const TwoStageOptions& options) {
  cfg.validate();
  const TrainConfig cfg2 = options.second_stage.value_or(cfg);
  const auto prepared = prepare(in);

  const SampleSource source(*in.manifest, in.store);
  auto plans = make_plan_source(in.split.train_ids, in.store, alpha_cfg,
                                stage_plan_seed(cfg.seed, 1));
  ModelHandle head = model_pre;
  head.trainable_scope = TrainableScope::kHeadOnly;
  auto head_step = train_stage(head, plans, source, cfg, in.transforms, *prepared.tests,
                               stage_options("head", options));
  ModelHandle full = head_step.model;
  full.trainable_scope = TrainableScope::kFull;
  auto full_step = real_only_stage(full, cfg2, alpha_cfg, in, *prepared.tests, "full", options);
  return {std::move(head_step.model), std::move(full_step.model), std::move(head_step.result),
          std::move(full_step.result)};
}

}  // namespace sgia
