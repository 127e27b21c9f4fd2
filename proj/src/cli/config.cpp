// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "sgia/augmentor.hpp"
#include "sgia/cli.hpp"
#include "sgia/error.hpp"
#include "sgia/model.hpp"

extern char** environ;

namespace sgia {

namespace {

const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"dataset", {"manifest"}},
      {"split", {"file", "shots", "seed"}},
      {"provider", {"id", "trajectory", "output_resolution", "dump", "base_seed", "workers"}},
      {"balancing", {"alpha", "M", "K", "mode"}},
      {"train",
       {"lr0", "weight_decay", "momentum", "batch_size", "epochs", "t0", "t_mult", "lr_min",
        "eval_every_epoch", "seed"}},
      {"stage2",
       {"lr0", "weight_decay", "momentum", "batch_size", "epochs", "t0", "t_mult", "lr_min",
        "eval_every_epoch", "seed"}},
      {"transform",
       {"size", "base_aug", "scale_min", "scale_max", "ratio_min", "ratio_max", "hflip"}},
      {"model", {"backbone", "init_seed", "checkpoint"}},
      {"experiment", {"method", "protocol", "seeds", "output", "store"}},
      {"sweep", {"alpha", "M", "shots", "include_baseline"}},
  };
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

int parse_shots(const nlohmann::json& v) {
  if (v.is_string()) return shots_from_string(v.get<std::string>());
  if (v.is_number_integer() && v.get<int>() > 0) return v.get<int>();
  throw ConfigError("shots must be a positive integer or \"full\"");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get(const nlohmann::json& section, const char* name, const char* key, T fallback) {
  if (!section.contains(key)) return fallback;
  try {
    return section.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(name) + "." + key + ": wrong type");
  }
}

}  // namespace

Environment current_environment() {
  Environment env;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string kv = *e;
    const auto eq = kv.find('=');
    if (eq != std::string::npos && kv.rfind("SGIA_", 0) == 0) env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return env;
}

nlohmann::json apply_env_overrides(nlohmann::json doc, const Environment& env) {
  if (doc.is_null()) doc = nlohmann::json::object();
  for (const auto& [name, value] : env) {
    if (name.rfind("SGIA_", 0) != 0) continue;
    const std::string rest = name.substr(5);
    const auto us = rest.find('_');
    if (us == std::string::npos) continue;
    const std::string section = lower(rest.substr(0, us));
    const auto it = schema().find(section);
    if (it == schema().end()) continue;
    const std::string wanted = lower(rest.substr(us + 1));
    const auto key = std::find_if(it->second.begin(), it->second.end(),
                                  [&](const std::string& k) { return lower(k) == wanted; });
    if (key == it->second.end())
      throw ConfigError(name + ": no key '" + wanted + "' in section '" + section + "'");
    nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;
    doc[section][*key] = parsed;
  }
  return doc;
}

void ExperimentConfig::validate() const {
  if (manifest.empty()) throw ConfigError("dataset.manifest is required");
  if (split.file.empty()) throw ConfigError("split.file is required");
  if (split.shots < 0) throw ConfigError("split.shots must be positive or \"full\"");
  balancing.validate();
  train.validate();
  if (stage2) stage2->validate();
  transform.validate();
  const auto known = Network::known_backbones();
  if (std::find(known.begin(), known.end(), model.backbone) == known.end()) {
    std::string list;
    for (const auto& b : known) list += (list.empty() ? "" : ", ") + b;
    throw ConfigError("unknown backbone '" + model.backbone + "' (" + list + ")");
  }
  if (protocol != "single" && protocol != "btl" && protocol != "two-step")
    throw ConfigError("experiment.protocol must be single, btl or two-step");
  if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  if (output.empty()) throw ConfigError("experiment.output is required");
  if (provider.id != "precomputed" && !ProviderRegistry::instance().contains(provider.id)) {
    std::string list;
    for (const auto& id : ProviderRegistry::instance().ids()) list += id + ", ";
    throw ConfigError("unknown provider '" + provider.id + "' (" + list + "precomputed)");
  }
  if (provider.id == "precomputed" && provider.dump.empty())
    throw ConfigError("provider.dump is required for the precomputed provider");
  if (provider.workers < 1) throw ConfigError("provider.workers must be >= 1");
  for (double a : sweep.alpha)
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("sweep.alpha values must lie in [0, 1]");
  for (auto m : sweep.m)
    if (m < 1) throw ConfigError("sweep.M values must be >= 1");
}

ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [section, body] : doc.items()) {
    const auto it = schema().find(section);
    if (it == schema().end()) throw ConfigError("unknown config section '" + section + "'");
    if (!body.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, _] : body.items())
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
        throw ConfigError("unknown key '" + section + "." + key + "'");
  }
  const auto section = [&](const char* name) {
    return doc.contains(name) ? doc.at(name) : nlohmann::json::object();
  };

  ExperimentConfig c;
  const auto dataset = section("dataset");
  c.manifest = resolve(base_dir, get<std::string>(dataset, "dataset", "manifest", ""));

  const auto split = section("split");
  c.split.file = resolve(base_dir, get<std::string>(split, "split", "file", ""));
  if (split.contains("shots")) c.split.shots = parse_shots(split.at("shots"));
  if (split.contains("seed")) c.split.seed = get<std::uint64_t>(split, "split", "seed", 0);

  const auto provider = section("provider");
  c.provider.id = get<std::string>(provider, "provider", "id", c.provider.id);
  for (const char* k : {"trajectory", "output_resolution"})
    if (provider.contains(k)) c.provider.options[k] = provider.at(k);
  c.provider.dump = resolve(base_dir, get<std::string>(provider, "provider", "dump", ""));
  c.provider.base_seed = get<std::uint64_t>(provider, "provider", "base_seed", 0);
  c.provider.workers = get<unsigned>(provider, "provider", "workers", 1);

  const auto balancing = section("balancing");
  c.balancing.alpha = get<double>(balancing, "balancing", "alpha", c.balancing.alpha);
  c.balancing.m = get<std::uint32_t>(balancing, "balancing", "M", c.balancing.m);
  c.balancing.k = get<std::uint32_t>(balancing, "balancing", "K", c.balancing.k);
  if (balancing.contains("mode"))
    c.balancing.mode = sampling_mode_from_string(get<std::string>(balancing, "balancing", "mode", ""));

  try {
    c.train = TrainConfig::from_json(section("train"));
    if (doc.contains("stage2")) c.stage2 = TrainConfig::from_json(doc.at("stage2"), c.train);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }

  const auto transform = section("transform");
  c.transform.size = get<int>(transform, "transform", "size", c.transform.size);
  if (transform.contains("base_aug"))
    c.transform.base_aug = base_aug_from_string(get<std::string>(transform, "transform", "base_aug", ""));
  c.transform.scale_min = get<double>(transform, "transform", "scale_min", c.transform.scale_min);
  c.transform.scale_max = get<double>(transform, "transform", "scale_max", c.transform.scale_max);
  c.transform.ratio_min = get<double>(transform, "transform", "ratio_min", c.transform.ratio_min);
  c.transform.ratio_max = get<double>(transform, "transform", "ratio_max", c.transform.ratio_max);
  c.transform.hflip = get<bool>(transform, "transform", "hflip", c.transform.hflip);

  const auto model = section("model");
  c.model.backbone = get<std::string>(model, "model", "backbone", c.model.backbone);
  if (model.contains("init_seed")) c.model.init_seed = get<std::uint64_t>(model, "model", "init_seed", 0);
  c.model.checkpoint = resolve(base_dir, get<std::string>(model, "model", "checkpoint", ""));

  const auto experiment = section("experiment");
  if (experiment.contains("method"))
    c.method = method_from_string(get<std::string>(experiment, "experiment", "method", ""));
  c.protocol = get<std::string>(experiment, "experiment", "protocol", c.protocol);
  if (experiment.contains("seeds")) {
    const auto& s = experiment.at("seeds");
    c.seeds = s.is_array() ? get<std::vector<std::uint64_t>>(experiment, "experiment", "seeds", {})
                           : std::vector<std::uint64_t>{get<std::uint64_t>(experiment, "experiment", "seeds", 0)};
  }
  c.output = resolve(base_dir, get<std::string>(experiment, "experiment", "output", "out"));
  c.store = resolve(base_dir, get<std::string>(experiment, "experiment", "store", ""));
  if (c.store.empty()) c.store = c.output / "store";

  const auto sweep = section("sweep");
  c.sweep.alpha = get<std::vector<double>>(sweep, "sweep", "alpha", {});
  c.sweep.m = get<std::vector<std::uint32_t>>(sweep, "sweep", "M", {});
  if (sweep.contains("shots")) {
    if (!sweep.at("shots").is_array()) throw ConfigError("sweep.shots must be a list");
    for (const auto& v : sweep.at("shots")) c.sweep.shots.push_back(parse_shots(v));
  }
  c.sweep.include_baseline = get<bool>(sweep, "sweep", "include_baseline", true);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const Environment& env) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  doc = apply_env_overrides(std::move(doc), env);
  auto cfg = parse_config(doc, path.parent_path());
  return cfg;
}

SplitSpec resolve_split(const ExperimentConfig& cfg, const DatasetManifest& manifest, int shots,
                        std::uint64_t run_seed) {
  SplitSpec file = load_split(cfg.split.file);
  if (shots == 0) {
    check_split(manifest, file);
    return file;
  }
  return make_few_shot_split(manifest, shots, cfg.split.seed.value_or(run_seed), file.test_ids);
}

}  // namespace sgia
