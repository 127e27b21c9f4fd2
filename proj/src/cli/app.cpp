// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "sgia/augmentor.hpp"
#include "sgia/cli.hpp"
#include "sgia/error.hpp"
#include "sgia/toy_dataset.hpp"

namespace sgia {

namespace {

// Flags shared by the experiment commands; unset ones leave the config alone.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::uint32_t> m;
  std::string shots;
  bool force = false;
  unsigned parallel = 1;
  std::optional<std::size_t> limit;
};

ExperimentConfig resolve_config(const Overrides& o, const Environment& env) {
  if (o.config.empty()) throw ConfigError("--config is required");
  auto cfg = load_config(o.config, env);
  if (o.seed) cfg.seeds = {*o.seed};
  if (o.alpha) cfg.balancing.alpha = *o.alpha;
  if (o.m) cfg.balancing.m = *o.m;
  if (!o.shots.empty()) cfg.split.shots = shots_from_string(o.shots);
  cfg.validate();
  return cfg;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
  return s;
}

// Key fields of a run, before training.
RunRecord record_stub(const ExperimentConfig& cfg, const DatasetManifest& manifest, int shots,
                      std::uint64_t seed) {
  RunRecord r;
  r.dataset = manifest.name;
  r.backbone = cfg.model.backbone;
  r.base_aug = to_string(cfg.transform.base_aug);
  r.image_size = cfg.transform.size;
  r.method = cfg.method;
  r.shots = shots;
  r.seed = seed;
  r.protocol = cfg.protocol;
  if (cfg.method != Method::kBaseline) {
    r.alpha = cfg.balancing.alpha;
    r.m = cfg.balancing.m;
  }
  if (cfg.protocol != "single") r.stage2_epochs = cfg.stage2.value_or(cfg.train).epochs;
  return r;
}

std::filesystem::path run_dir(const ExperimentConfig& cfg, const RunRecord& r) {
  std::ostringstream name;
  name << r.dataset << "_" << r.backbone << "_" << r.base_aug << "_" << r.image_size << "_"
       << to_string(r.method) << "_" << r.protocol << "_a" << key_field(r, "alpha") << "_m" << r.m
       << "_" << shots_to_string(r.shots) << "_seed" << r.seed;
  return cfg.output / "runs" / sanitize(name.str());
}

ModelHandle initial_model(const ExperimentConfig& cfg, int class_count, std::uint64_t seed) {
  const std::uint64_t init_seed = cfg.model.init_seed.value_or(hash_seed({seed, 0x1417ULL}));
  if (cfg.model.checkpoint.empty())
    return make_model(cfg.model.backbone, cfg.transform.size, class_count, init_seed);
  ModelHandle h;
  h.backbone_id = cfg.model.backbone;
  h.pretrained_source = cfg.model.checkpoint.string();
  h.network = load_checkpoint(cfg.model.checkpoint);
  if (h.network.backbone_id() != cfg.model.backbone || h.network.input_size() != cfg.transform.size)
    throw ConfigError("checkpoint " + cfg.model.checkpoint.string() + " is a " +
                      h.network.backbone_id() + " at " + std::to_string(h.network.input_size()) +
                      "px, config wants " + cfg.model.backbone + " at " +
                      std::to_string(cfg.transform.size) + "px");
  if (h.network.class_count() != class_count) h.network.reset_head(class_count, init_seed);
  return h;
}

struct Prepared {
  DatasetManifest manifest;
  TestSet tests;
  std::optional<SequenceStore> store;
};

// Everything that can fail before compute: data files, splits, store.
Prepared prepare(const ExperimentConfig& cfg, const std::vector<int>& shots_list,
                 const std::vector<std::uint64_t>& seeds, bool needs_store, std::uint32_t max_m) {
  Prepared p;
  try {
    p.manifest = load_manifest(cfg.manifest);
    const auto file_split = load_split(cfg.split.file);
    for (int shots : shots_list)
      for (auto seed : seeds) resolve_split(cfg, p.manifest, shots, seed);
    p.tests = load_test_set(p.manifest, file_split.test_ids);
    if (p.tests.empty()) throw DataError("split " + cfg.split.file.string() + " has no test ids");
  } catch (const IncompleteStoreError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (needs_store) {
    if (!SequenceStore::exists(cfg.store))
      throw IncompleteStoreError("no sequence store at " + cfg.store.string() +
                                 "; run `sgia generate` first");
    p.store = SequenceStore::open(cfg.store);
    BalancingConfig check = cfg.balancing;
    check.m = max_m;
    for (int shots : shots_list)
      for (auto seed : seeds)
        check_store_for_plan(resolve_split(cfg, p.manifest, shots, seed).train_ids, *p.store, check);
  }
  return p;
}

}  // namespace

RunOutcome execute_run(const ExperimentConfig& cfg, const DatasetManifest& manifest,
                       const SequenceStore* store, const TestSet& tests, int shots,
                       std::uint64_t seed) {
  RunOutcome out;
  out.record = record_stub(cfg, manifest, shots, seed);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  TwoStageOptions options;
  if (cfg.stage2) {
    options.second_stage = *cfg.stage2;
    options.second_stage->seed = seed;
  }
  const TwoStageInputs in{&manifest, store, resolve_split(cfg, manifest, shots, seed),
                          cfg.transform, &tests};
  const auto model = initial_model(cfg, manifest.class_count, seed);

  // A baseline is the same protocol at alpha 0 (with BTL it is the
  // "baseline with BTL" reference).
  BalancingConfig balancing = cfg.balancing;
  TwoStageInputs run_in = in;
  if (cfg.method == Method::kBaseline) balancing.alpha = 0.0;
  if (balancing.alpha == 0.0) run_in.store = nullptr;
  if (cfg.protocol == "single") {
    auto stage = run_single(model, tc, balancing, run_in, options);
    out.stages.push_back(stage.result);
    out.model = std::move(stage.model.network);
  } else {
    auto result = cfg.protocol == "btl" ? run_btl(model, tc, balancing, run_in, options)
                                        : run_two_step(model, tc, balancing, run_in, options);
    out.stages.push_back(result.first_result);
    out.stages.push_back(result.second_result);
    out.model = std::move(result.second.network);
  }
  out.record.best_accuracy = 100.0 * out.stages.back().best_accuracy;
  return out;
}

namespace {

void persist_run(const ExperimentConfig& cfg, RunOutcome& run) {
  const auto dir = run_dir(cfg, run.record);
  std::filesystem::create_directories(dir);
  for (const auto& stage : run.stages) write_text(dir / (stage.stage + ".jsonl"), stage.to_jsonl());
  CheckpointInfo info{run.model.backbone_id(), run.model.class_count(), run.model.input_size(),
                      run.stages.back().stage, static_cast<int>(run.stages.back().epochs.size()),
                      run.record.seed};
  save_checkpoint(dir / "model.ckpt", run.model, info);
  run.record.stages = std::filesystem::relative(dir, cfg.output).string();
  write_text(dir / "record.json", run.record.to_json().dump(2) + "\n");
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

int cmd_train(const Overrides& o, const Environment& env, std::ostream& out) {
  const auto cfg = resolve_config(o, env);
  const bool needs_store = cfg.method != Method::kBaseline && cfg.balancing.alpha > 0.0;
  auto prepared = prepare(cfg, {cfg.split.shots}, cfg.seeds, needs_store, cfg.balancing.m);
  RunStore runs(cfg.run_store());
  const auto existing = runs.load();
  for (auto seed : cfg.seeds) {
    const auto key = record_stub(cfg, prepared.manifest, cfg.split.shots, seed).key();
    if (existing.contains(key) && !o.force)
      throw ConfigError("run already recorded: " + key.str() + " (use --force to overwrite)");
  }
  const SequenceStore* store = needs_store ? &*prepared.store : nullptr;
  for (auto seed : cfg.seeds) {
    auto run = execute_run(cfg, prepared.manifest, store, prepared.tests, cfg.split.shots, seed);
    persist_run(cfg, run);
    runs.append(run.record, o.force);
    out << "run " << run.record.key().str() << " best_accuracy=" << pct(run.record.best_accuracy)
        << "% dir=" << run.record.stages << "\n";
  }
  return kExitOk;
}

int cmd_generate(const Overrides& o, const Environment& env, std::ostream& out, std::ostream& err) {
  const auto cfg = resolve_config(o, env);
  DatasetManifest manifest;
  std::unique_ptr<GenerationProvider> provider;
  try {
    manifest = load_manifest(cfg.manifest);
    if (cfg.provider.id != "precomputed")
      provider = ProviderRegistry::instance().make(cfg.provider.id, cfg.provider.options);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const auto m = cfg.balancing.m, k = cfg.balancing.k;
  StoreReport report;
  std::size_t failures = 0;
  if (provider == nullptr) {
    report = ingest_precomputed(cfg.provider.dump, cfg.store, manifest, m, k).report;
  } else {
    auto result = populate_store(*provider, manifest, m, k, cfg.store,
                                 {cfg.provider.base_seed, cfg.provider.workers});
    report = std::move(result.report);
    failures = result.failures.size();
    for (const auto& f : result.failures)
      err << "sequence (" << f.i << "," << f.j << ") seed " << f.seed << ": " << f.message << "\n";
  }
  write_text(cfg.store / "report.json", report.to_json().dump(2) + "\n");
  out << "store " << cfg.store.string() << " N=" << manifest.size() << " M=" << m << " K=" << k
      << "\n" << report.summary() << "\n";
  return report.complete() && failures == 0 ? kExitOk : kExitIncompleteStore;
}

struct Cell {
  ExperimentConfig cfg;
  int shots = 0;
  std::uint64_t seed = 0;
  RunKey key;
};

int cmd_sweep(const Overrides& o, const Environment& env, std::ostream& out, std::ostream& err) {
  auto cfg = resolve_config(o, env);
  if (cfg.method == Method::kBaseline) throw ConfigError("sweep needs method GIA or SGIA");
  auto alphas = cfg.sweep.alpha.empty() ? std::vector<double>{cfg.balancing.alpha} : cfg.sweep.alpha;
  auto ms = cfg.sweep.m.empty() ? std::vector<std::uint32_t>{cfg.balancing.m} : cfg.sweep.m;
  auto shots_list = cfg.sweep.shots.empty() ? std::vector<int>{cfg.split.shots} : cfg.sweep.shots;
  if (o.alpha) alphas = {*o.alpha};
  if (o.m) ms = {*o.m};
  if (!o.shots.empty()) shots_list = {shots_from_string(o.shots)};
  const bool needs_store = std::any_of(alphas.begin(), alphas.end(), [](double a) { return a > 0.0; });
  const auto max_m = *std::max_element(ms.begin(), ms.end());
  auto prepared = prepare(cfg, shots_list, cfg.seeds, needs_store, max_m);

  RunStore runs(cfg.run_store());
  const auto existing = runs.load();
  std::vector<Cell> cells;
  std::size_t skipped = 0;
  auto add = [&](ExperimentConfig c, int shots, std::uint64_t seed) {
    const auto key = record_stub(c, prepared.manifest, shots, seed).key();
    if (existing.contains(key) && !o.force) {
      ++skipped;
      return;
    }
    cells.push_back({std::move(c), shots, seed, key});
  };
  for (int shots : shots_list) {
    for (auto seed : cfg.seeds) {
      if (cfg.sweep.include_baseline) {
        auto c = cfg;
        c.method = Method::kBaseline;
        c.protocol = "single";
        add(c, shots, seed);
      }
      for (auto m : ms) {
        for (double a : alphas) {
          auto c = cfg;
          c.balancing.alpha = a;
          c.balancing.m = m;
          add(c, shots, seed);
        }
      }
    }
  }
  const std::size_t budget = o.limit.value_or(cells.size());
  out << "sweep: " << cells.size() + skipped << " cells, " << skipped << " already recorded, "
      << std::min(budget, cells.size()) << " to run\n";

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex io;
  std::vector<std::string> failures;
  const SequenceStore* store = prepared.store ? &*prepared.store : nullptr;
  auto worker = [&] {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= cells.size() || idx >= budget) return;
      const Cell& cell = cells[idx];
      try {
        auto run = execute_run(cell.cfg, prepared.manifest,
                               cell.cfg.balancing.alpha > 0.0 && cell.cfg.method != Method::kBaseline
                                   ? store
                                   : nullptr,
                               prepared.tests, cell.shots, cell.seed);
        persist_run(cell.cfg, run);
        runs.append(run.record, o.force);
        ++done;
        std::lock_guard lock(io);
        out << "cell " << cell.key.str() << " best_accuracy=" << pct(run.record.best_accuracy)
            << "%\n";
      } catch (const std::exception& e) {
        std::lock_guard lock(io);
        failures.push_back(cell.key.str() + ": " + e.what());
        err << "cell " << cell.key.str() << " failed: " << e.what() << "\n";
      }
    }
  };
  const unsigned threads = std::max(1u, o.parallel);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!failures.empty()) {
    std::string text;
    for (const auto& f : failures) text += f + "\n";
    std::ofstream(cfg.output / "sweep_failures.log", std::ios::app) << text;
  }
  const auto table = runs.load();
  if (!table.empty()) {
    ReportSpec spec;
    write_text(cfg.output / "sweep_table.tsv", emit_report(table, spec));
  }
  out << "sweep: " << done.load() << " cells completed, " << failures.size() << " failed";
  if (budget < cells.size()) out << ", stopped after --limit " << budget;
  out << "\n";
  return failures.empty() ? kExitOk : kExitRuntime;
}

struct ReportArgs {
  std::string runs;
  std::string spec;
  std::string format;
  std::string kind;
  std::string axis;
  std::vector<std::string> group_by;
  std::string title;
  std::string out;
};

int cmd_report(const Overrides& o, const ReportArgs& a, const Environment& env, std::ostream& out) {
  std::filesystem::path runs_path = a.runs;
  if (runs_path.empty()) {
    if (o.config.empty()) throw ConfigError("report needs --runs or --config");
    runs_path = load_config(o.config, env).run_store();
  }
  nlohmann::json spec_doc = nlohmann::json::object();
  if (!a.spec.empty()) {
    std::ifstream in(a.spec);
    if (!in) throw ConfigError("cannot read report spec " + a.spec);
    spec_doc = nlohmann::json::parse(in, nullptr, false);
    if (spec_doc.is_discarded()) throw ConfigError("report spec " + a.spec + " is not valid JSON");
  }
  if (!a.format.empty()) spec_doc["format"] = a.format;
  if (!a.kind.empty()) spec_doc["kind"] = a.kind;
  if (!a.axis.empty()) spec_doc["axis"] = a.axis;
  if (!a.title.empty()) spec_doc["title"] = a.title;
  for (const auto& g : a.group_by) {
    std::vector<std::string> fields;
    std::stringstream ss(g);
    for (std::string f; std::getline(ss, f, ',');)
      if (!f.empty() && f != "all") fields.push_back(f);
    spec_doc["group_by"].push_back(fields);
  }
  const auto spec = ReportSpec::from_json(spec_doc);

  if (!std::filesystem::exists(runs_path)) throw DataError("run store " + runs_path.string() + " does not exist");
  const auto table = RunStore(runs_path).load();
  if (table.empty()) throw DataError("run store " + runs_path.string() + " is empty");

  if (spec.kind == "table") {
    const auto text = emit_report(table, spec);
    if (a.out.empty()) {
      out << text;
    } else {
      std::filesystem::create_directories(a.out);
      const auto path = std::filesystem::path(a.out) / ("report." + spec.format);
      write_text(path, text);
      out << "wrote " << path.string() << "\n";
    }
    return kExitOk;
  }
  if (a.out.empty()) throw ConfigError("curve reports need --out <dir>");
  std::filesystem::create_directories(a.out);
  std::set<int> regimes;
  for (const auto& r : table.rows()) regimes.insert(r.shots);
  for (int shots : regimes) {
    const auto part = table.filter([&](const RunRecord& r) { return r.shots == shots; });
    if (std::none_of(part.rows().begin(), part.rows().end(),
                     [](const RunRecord& r) { return r.method != Method::kBaseline; }))
      continue;
    ReportSpec s = spec;
    if (s.title.empty()) s.title = "accuracy vs " + to_string(s.axis) + ", shots=" + shots_to_string(shots);
    const auto path = std::filesystem::path(a.out) /
                      ("curve_" + to_string(s.axis) + "_shots-" + shots_to_string(shots) + "." + s.format);
    write_text(path, emit_report(part, s));
    out << "wrote " << path.string() << "\n";
  }
  return kExitOk;
}

int cmd_validate_store(const Overrides& o, const std::string& store_arg, bool as_json,
                       const Environment& env, std::ostream& out) {
  std::filesystem::path root = store_arg;
  if (root.empty()) {
    if (o.config.empty()) throw ConfigError("validate-store needs --store or --config");
    root = load_config(o.config, env).store;
  }
  if (!SequenceStore::exists(root))
    throw IncompleteStoreError("no sequence store at " + root.string());
  const auto store = SequenceStore::open(root);
  const auto report = validate_store(store);
  if (as_json) {
    out << report.to_json().dump(2) << "\n";
  } else {
    const auto& s = store.shape();
    out << "store " << root.string() << " N=" << s.n << " M=" << s.m << " K=" << s.k << "\n"
        << report.summary() << "\n";
  }
  return report.complete() ? kExitOk : kExitIncompleteStore;
}

struct ToyArgs {
  std::string out;
  std::uint64_t seed = 0;
  int train_per_class = 8;
  int test_per_class = 20;
  int image_size = 40;
};

int cmd_make_toy(const ToyArgs& a, std::ostream& out) {
  if (a.out.empty()) throw ConfigError("--out is required");
  ToyDatasetConfig c;
  c.seed = a.seed;
  c.train_per_class = a.train_per_class;
  c.test_per_class = a.test_per_class;
  c.image_size = a.image_size;
  const auto ds = make_toy_dataset(a.out, c);
  const auto config_path = std::filesystem::path(a.out) / "config.json";
  if (!std::filesystem::exists(config_path)) {
    const nlohmann::json doc = {
        {"dataset", {{"manifest", "manifest.tsv"}}},
        {"split", {{"file", "split.txt"}, {"shots", 5}}},
        {"provider", {{"id", ToyTrajectoryProvider::kId}, {"trajectory", c.test_variation.to_json()}}},
        {"balancing", {{"alpha", 0.5}, {"M", 1}, {"K", 32}}},
        {"train", {{"lr0", 0.01}, {"momentum", 0.9}, {"epochs", 63}}},
        {"transform", {{"size", 32}, {"base_aug", "RRC"}}},
        {"model", {{"backbone", "small-cnn"}}},
        {"experiment", {{"method", "SGIA"}, {"protocol", "btl"}, {"seeds", {0}}, {"output", "out"}}}};
    write_text(config_path, doc.dump(2) + "\n");
  }
  out << "toy dataset: " << ds.manifest.size() << " images, " << ds.split.train_ids.size()
      << " train pool, " << ds.split.test_ids.size() << " test\n"
      << "manifest " << ds.manifest_path.string() << "\nconfig " << config_path.string() << "\n";
  return kExitOk;
}

void add_experiment_flags(CLI::App* cmd, Overrides& o, bool with_limit) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required();
  cmd->add_option("--seed", o.seed, "run a single seed");
  cmd->add_option("--alpha", o.alpha, "balancing rate");
  cmd->add_option("--m", o.m, "sequences per image");
  cmd->add_option("--shots", o.shots, "1, 5, ... or full");
  cmd->add_flag("--force", o.force, "overwrite existing run records");
  if (with_limit) {
    cmd->add_option("--parallel", o.parallel, "cells run concurrently")->check(CLI::PositiveNumber);
    cmd->add_option("--limit", o.limit, "stop after this many cells");
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const Environment& env) {
  CLI::App app{"sequence-augmented fine-tuning pipeline", "sgia"};
  app.require_subcommand(1);
  Overrides o;
  ReportArgs report;
  ToyArgs toy;
  std::string store_arg;
  bool as_json = false;

  auto* generate = app.add_subcommand("generate", "fill the sequence store");
  add_experiment_flags(generate, o, false);
  auto* train = app.add_subcommand("train", "train one configuration (one run per seed)");
  add_experiment_flags(train, o, false);
  auto* sweep = app.add_subcommand("sweep", "run the alpha x M x shots grid");
  add_experiment_flags(sweep, o, true);

  auto* rep = app.add_subcommand("report", "tables and curves from a run store");
  rep->add_option("--config", o.config, "experiment config (locates the run store)");
  rep->add_option("--runs", report.runs, "run store (runs.jsonl)");
  rep->add_option("--spec", report.spec, "report spec (JSON)");
  rep->add_option("--format", report.format, "tsv, csv or svg");
  rep->add_option("--kind", report.kind, "table or curve");
  rep->add_option("--axis", report.axis, "curve x axis: alpha or M");
  rep->add_option("--group-by", report.group_by, "summary grouping, comma-separated; repeatable");
  rep->add_option("--title", report.title);
  rep->add_option("--out", report.out, "output directory");

  auto* validate = app.add_subcommand("validate-store", "completeness report for a store");
  validate->add_option("--config", o.config);
  validate->add_option("--store", store_arg, "store root");
  validate->add_flag("--json", as_json, "print the report as JSON");

  auto* make_toy = app.add_subcommand("make-toy", "render the toy glyph dataset");
  make_toy->add_option("--out", toy.out, "output directory")->required();
  make_toy->add_option("--seed", toy.seed);
  make_toy->add_option("--train-per-class", toy.train_per_class)->check(CLI::PositiveNumber);
  make_toy->add_option("--test-per-class", toy.test_per_class)->check(CLI::PositiveNumber);
  make_toy->add_option("--image-size", toy.image_size)->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*generate) return cmd_generate(o, env, out, err);
    if (*train) return cmd_train(o, env, out);
    if (*sweep) return cmd_sweep(o, env, out, err);
    if (*rep) return cmd_report(o, report, env, out);
    if (*validate) return cmd_validate_store(o, store_arg, as_json, env, out);
    if (*make_toy) return cmd_make_toy(toy, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IncompleteStoreError& e) {
    err << "incomplete store: " << e.what() << "\n";
    return kExitIncompleteStore;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr, current_environment());
}

}  // namespace sgia
