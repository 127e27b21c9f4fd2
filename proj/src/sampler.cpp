// SPDX-License-Identifier: Apache-2.0

#include "sgia/sampler.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <thread>

#include "sgia/error.hpp"
#include "sgia/image.hpp"
#include "text_util.hpp"

namespace sgia {

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::kEpochPermutation ? "epoch-permutation" : "fully-uniform";
}

SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "epoch-permutation") return SamplingMode::kEpochPermutation;
  if (s == "fully-uniform") return SamplingMode::kFullyUniform;
  throw ConfigError("unknown sampling mode '" + s + "'");
}

void BalancingConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError("alpha must be in [0, 1], got " + std::to_string(alpha));
  if (m < 1) throw ConfigError("M must be >= 1");
  if (k < 1) throw ConfigError("K must be >= 1");
}

SampleRef sample_slot(ImageId i, const BalancingConfig& cfg, Rng& rng) {
  const double u = rng.uniform01();
  const auto j = static_cast<std::uint32_t>(rng.uniform_int(1, cfg.m));
  const auto k = static_cast<std::uint32_t>(rng.uniform_int(1, cfg.k));
  return u < cfg.alpha ? SampleRef::synthetic(i, j, k) : SampleRef::real(i);
}

namespace {

// Marker mixed into the permutation seed so it never collides with a slot.
constexpr std::uint64_t kPermutationStream = ~std::uint64_t{0};

std::vector<ImageId> epoch_order(std::span<const ImageId> train_ids, std::uint64_t seed,
                                 std::uint32_t epoch) {
  std::vector<ImageId> order(train_ids.begin(), train_ids.end());
  std::sort(order.begin(), order.end());
  Rng rng(hash_seed({seed, epoch, kPermutationStream}));
  for (std::int64_t t = static_cast<std::int64_t>(order.size()) - 1; t > 0; --t)
    std::swap(order[t], order[rng.uniform_int(0, t)]);
  return order;
}

}  // namespace

EpochPlan plan_epoch_unchecked(std::span<const ImageId> train_ids, const BalancingConfig& cfg,
                               std::uint64_t seed, const PlanOptions& options) {
  cfg.validate();
  if (train_ids.empty()) throw ConfigError("plan_epoch: empty train id set");

  EpochPlan plan;
  plan.seed = seed;
  plan.epoch = options.epoch;
  plan.config = cfg;

  std::vector<ImageId> sorted_ids(train_ids.begin(), train_ids.end());
  std::sort(sorted_ids.begin(), sorted_ids.end());
  const std::vector<ImageId> order = cfg.mode == SamplingMode::kEpochPermutation
                                         ? epoch_order(sorted_ids, seed, options.epoch)
                                         : std::vector<ImageId>{};
  const std::size_t count = sorted_ids.size();
  plan.slots.resize(count);

  auto fill = [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      Rng rng(slot_seed(seed, options.epoch, s));
      const auto drawn = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(count) - 1));
      const ImageId i =
          cfg.mode == SamplingMode::kEpochPermutation ? order[s] : sorted_ids[drawn];
      plan.slots[s] = sample_slot(i, cfg, rng);
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.workers, count));
  if (workers == 1) {
    fill(0, count);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (count + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(count, begin + chunk);
      if (begin < end) pool.emplace_back(fill, begin, end);
    }
  }
  return plan;
}

void check_store_for_plan(std::span<const ImageId> train_ids, const SequenceStore& store,
                          const BalancingConfig& cfg) {
  const auto& shape = store.shape();
  if (shape.k != cfg.k)
    throw ConfigError("balancing K=" + std::to_string(cfg.k) + " does not match store K=" +
                      std::to_string(shape.k));
  if (cfg.m > shape.m)
    throw ConfigError("balancing M=" + std::to_string(cfg.m) + " exceeds store M=" +
                      std::to_string(shape.m));
  std::vector<FrameIndex> missing;
  for (const ImageId i : train_ids) {
    if (i < 1 || i > shape.n)
      throw IncompleteStoreError("train id " + std::to_string(i) + " outside store N=" +
                                 std::to_string(shape.n));
    for (std::uint32_t j = 1; j <= cfg.m; ++j)
      for (std::uint32_t k = 1; k <= cfg.k; ++k)
        if (!std::filesystem::exists(store.frame_path({i, j, k}))) missing.push_back({i, j, k});
  }
  if (!missing.empty()) {
    std::string msg = "sequence store " + store.root().string() + " is incomplete (" +
                      std::to_string(missing.size()) + " missing frames, first " +
                      to_string(missing.front()) + "); run validate-store for the full report";
    throw IncompleteStoreError(msg);
  }
}

EpochPlan plan_epoch(std::span<const ImageId> train_ids, const SequenceStore* store,
                     const BalancingConfig& cfg, std::uint64_t seed, const PlanOptions& options) {
  cfg.validate();
  if (cfg.alpha > 0.0) {
    if (store == nullptr)
      throw IncompleteStoreError("alpha > 0 requires a sequence store");
    check_store_for_plan(train_ids, *store, cfg);
  }
  return plan_epoch_unchecked(train_ids, cfg, seed, options);
}

double empirical_alpha(const EpochPlan& plan) {
  if (plan.slots.empty()) throw Error("empirical_alpha: empty plan");
  const auto synthetic = std::count_if(plan.slots.begin(), plan.slots.end(),
                                       [](const SampleRef& r) { return r.is_synthetic(); });
  return static_cast<double>(synthetic) / static_cast<double>(plan.slots.size());
}

std::string format_plan(const EpochPlan& plan) {
  std::ostringstream out;
  char alpha[32];
  std::snprintf(alpha, sizeof(alpha), "%.17g", plan.config.alpha);
  out << "# plan seed=" << plan.seed << " epoch=" << plan.epoch << " alpha=" << alpha
      << " M=" << plan.config.m << " K=" << plan.config.k
      << " mode=" << to_string(plan.config.mode) << '\n';
  for (std::size_t s = 0; s < plan.slots.size(); ++s) {
    const auto& r = plan.slots[s];
    if (r.is_synthetic())
      out << s << " synthetic " << r.i << ' ' << r.j << ' ' << r.k << '\n';
    else
      out << s << " real " << r.i << '\n';
  }
  return out.str();
}

EpochPlan parse_plan(const std::string& text) {
  EpochPlan plan;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto where = "plan line " + std::to_string(line_no);
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    if (trimmed.starts_with("# plan")) {
      for (const auto& kv : detail::split_ws(trimmed.substr(6))) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw DataError(where + ": malformed header");
        const auto key = kv.substr(0, eq);
        const auto value = kv.substr(eq + 1);
        if (key == "seed") plan.seed = detail::parse_int<std::uint64_t>(value, where);
        else if (key == "epoch") plan.epoch = detail::parse_int<std::uint32_t>(value, where);
        else if (key == "alpha") plan.config.alpha = std::stod(value);
        else if (key == "M") plan.config.m = detail::parse_int<std::uint32_t>(value, where);
        else if (key == "K") plan.config.k = detail::parse_int<std::uint32_t>(value, where);
        else if (key == "mode") plan.config.mode = sampling_mode_from_string(value);
      }
      continue;
    }
    const auto f = detail::split_ws(trimmed);
    if (f.size() < 3) throw DataError(where + ": too few fields");
    if (detail::parse_int<std::size_t>(f[0], where) != plan.slots.size())
      throw DataError(where + ": slot indices must be consecutive from 0");
    const auto i = detail::parse_int<ImageId>(f[2], where);
    if (f[1] == "real" && f.size() == 3) {
      plan.slots.push_back(SampleRef::real(i));
    } else if (f[1] == "synthetic" && f.size() == 5) {
      plan.slots.push_back(SampleRef::synthetic(i, detail::parse_int<std::uint32_t>(f[3], where),
                                                detail::parse_int<std::uint32_t>(f[4], where)));
    } else {
      throw DataError(where + ": malformed slot");
    }
  }
  return plan;
}

void write_plan(const std::filesystem::path& path, const EpochPlan& plan) {
  const auto text = format_plan(plan);
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

}  // namespace sgia
