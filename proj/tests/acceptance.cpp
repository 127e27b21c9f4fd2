// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion. Pass criterion names
// (AC1 ... AC7) as arguments to run a subset.

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sgia/augmentor.hpp"
#include "sgia/cli.hpp"
#include "sgia/error.hpp"
#include "sgia/sampler.hpp"
#include "sgia/schedule.hpp"
#include "sgia/store.hpp"
#include "sgia/toy_dataset.hpp"
#include "sgia/trainer.hpp"
#include "table1_fixture.hpp"
#include "test_util.hpp"

using namespace sgia;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      out_.pass = false;
      if (failures_++ < 5) out_.detail += (out_.detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }
  Outcome result() const {
    Outcome o = out_;
    if (o.pass) o.detail = notes_;
    else if (failures_ > 5) o.detail += "; " + std::to_string(failures_ - 5) + " more";
    return o;
  }

 private:
  Outcome out_;
  std::string notes_;
  int failures_ = 0;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

Outcome ac1() {
  Checker c;
  const auto started = std::chrono::steady_clock::now();
  constexpr std::size_t kSlots = 100000;
  std::vector<ImageId> ids(kSlots);
  std::iota(ids.begin(), ids.end(), ImageId{1});

  for (int a = 1; a <= 9; ++a) {
    const double alpha = a / 10.0;
    const auto plan = plan_epoch_unchecked(ids, {alpha, 4, 32}, 2024 + a, {0, 4});
    const double frac = empirical_alpha(plan);
    const double sigma = std::sqrt(alpha * (1 - alpha) / kSlots);
    c.expect(std::abs(frac - alpha) <= 3 * sigma,
             "alpha " + fmt("%.1f", alpha) + " fraction " + fmt("%.5f", frac));
  }
  c.expect(empirical_alpha(plan_epoch_unchecked(ids, {0.0, 4, 32}, 1)) == 0.0, "alpha 0 not exact");
  c.expect(empirical_alpha(plan_epoch_unchecked(ids, {1.0, 4, 32}, 1)) == 1.0, "alpha 1 not exact");

  // 10^6 synthetic draws: ten epochs of 10^5 slots at alpha 1.
  std::vector<double> counts(4 * 32, 0.0);
  std::size_t draws = 0;
  for (std::uint32_t epoch = 0; epoch < 10; ++epoch) {
    for (const auto& s : plan_epoch_unchecked(ids, {1.0, 4, 32}, 77, {epoch, 4}).slots) {
      if (!s.is_synthetic() || s.j < 1 || s.j > 4 || s.k < 1 || s.k > 32) {
        c.expect(false, "slot outside (j,k) range");
        continue;
      }
      counts[(s.j - 1) * 32 + (s.k - 1)] += 1;
      ++draws;
    }
  }
  c.expect(draws == 1000000, "expected 10^6 synthetic draws");
  const double expected = static_cast<double>(draws) / counts.size();
  double stat = 0;
  for (double n : counts) stat += (n - expected) * (n - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, stat));
  c.expect(p > 0.001, "chi-square p=" + fmt("%.5f", p));
  const double t = seconds_since(started);
  c.expect(t < 60, "runtime " + fmt("%.1f", t) + "s");
  c.note("chi2=" + fmt("%.1f", stat) + " p=" + fmt("%.3f", p));
  c.note(fmt("%.1fs", t));
  return c.result();
}

Outcome ac2() {
  Checker c;
  const CosineRestartSchedule s{0.01, 0.0, 1, 2};
  const std::vector<long long> want{1, 3, 7, 15, 31, 63, 127};
  c.expect(cycle_ends(128, s) == want, "cycle ends differ from {1,3,7,15,31,63,127}");
  long long start = 0;
  for (std::size_t cycle = 0; cycle < want.size(); ++cycle) {
    c.expect(lr_at_epoch(static_cast<double>(start), s) == 0.01,
             "lr at restart epoch " + std::to_string(start));
    c.expect(lr_at(1.0, static_cast<int>(cycle), s) == 0.0, "lr at end of cycle " + std::to_string(cycle));
    const auto pos = locate(static_cast<double>(want[cycle]) - 1e-9, s);
    c.expect(pos.cycle == static_cast<int>(cycle) && pos.cycle_start == start &&
                 pos.cycle_start + pos.cycle_length == want[cycle],
             "cycle " + std::to_string(cycle) + " boundaries");
    start = want[cycle];
  }
  c.expect(lr_at_epoch(127.0, s) == 0.01, "restart at 127");
  return c.result();
}

Outcome ac3() {
  Checker c;
  const auto table = sgia::test::cub_table();
  const auto agg = aggregate_improvements(table, {"backbone"});
  auto cell = [&](Method m, const std::string& bb) -> double {
    for (const auto& r : agg.rows)
      if (r.method == m && r.group.at(0).second == bb) return r.mean_improvement;
    return std::nan("");
  };
  const std::vector<std::pair<std::string, double>> sgia = {
      {"Res-18", 0.83}, {"Res-50", 0.33}, {"Eff-B0", 1.03}, {"Eff-B4", 0.48}};
  for (const auto& [bb, printed] : sgia)
    c.expect(cell(Method::kSGIA, bb) == printed,
             "SGIA " + bb + " " + fmt("%.2f", cell(Method::kSGIA, bb)));
  c.expect(cell(Method::kGIA, "Res-18") == -0.55,
           "GIA Res-18 " + fmt("%.2f", cell(Method::kGIA, "Res-18")));
  double column = std::nan("");
  for (const auto& r : aggregate_improvements(table, {}).rows)
    if (r.method == Method::kSGIA) column = r.mean_improvement;
  c.expect(std::abs(column - 0.67) <= 0.02 + 1e-9, "column average " + fmt("%.2f", column));
  c.note("column average " + fmt("%.2f", column) + " (printed 0.67)");
  return c.result();
}

Outcome ac4(const fs::path& work) {
  Checker c;
  const auto started = std::chrono::steady_clock::now();
  const auto toy = make_toy_dataset(work / "toy", {});
  DatasetManifest five = toy.manifest;
  five.records.resize(5);
  const ToyTrajectoryProvider provider(ToyDatasetConfig{}.test_variation);
  const PopulateOptions options{31, 1};
  auto first = populate_store(provider, five, 2, 32, work / "store_a", options);
  c.expect(first.report.complete() && first.failures.empty(), "populated store not complete");
  const auto& store = first.store;

  std::size_t detected = 0, frames = 0;
  for (std::uint32_t i = 1; i <= 5; ++i)
    for (std::uint32_t j = 1; j <= 2; ++j)
      for (std::uint32_t k = 1; k <= 32; ++k) {
        const FrameIndex idx{i, j, k};
        const auto bytes = store.get_bytes(idx);
        fs::remove(store.frame_path(idx));
        const auto report = validate_store(store);
        ++frames;
        if (report.missing.size() == 1 && report.missing[0] == idx && !report.complete()) ++detected;
        write_file_atomic(store.frame_path(idx), bytes);
      }
  c.expect(detected == frames, std::to_string(frames - detected) + " deletions undetected");
  c.expect(validate_store(store).complete(), "store not complete after restore");

  // Byte-exact round-trip of what the provider produced.
  bool round_trip = true;
  for (std::uint32_t i = 1; i <= 5; ++i)
    for (std::uint32_t j = 1; j <= 2; ++j) {
      const auto seq = provider.generate(read_png(five.image_path(i)), 32, sequence_seed(31, i, j));
      for (std::uint32_t k = 1; k <= 32; ++k) {
        round_trip &= store.get({i, j, k}) == seq[k - 1];
        round_trip &= store.get_bytes({i, j, k}) == encode_png(seq[k - 1]);
      }
    }
  c.expect(round_trip, "put/get round-trip differs");

  auto second = populate_store(provider, five, 2, 32, work / "store_b", options);
  bool identical = second.report.complete();
  for (std::uint32_t i = 1; i <= 5; ++i)
    for (std::uint32_t j = 1; j <= 2; ++j)
      for (std::uint32_t k = 1; k <= 32; ++k)
        identical &= read_file_bytes(store.frame_path({i, j, k})) ==
                     read_file_bytes(second.store.frame_path({i, j, k}));
  c.expect(identical, "regeneration not bit-identical");
  const double t = seconds_since(started);
  c.expect(t < 120, "runtime " + fmt("%.1f", t) + "s");
  c.note(std::to_string(frames) + " single deletions detected");
  c.note(fmt("%.1fs", t));
  return c.result();
}

// The toy study config as `sgia make-toy` writes it.
ExperimentConfig toy_study_config(const fs::path& dir) {
  const nlohmann::json doc = {
      {"dataset", {{"manifest", "manifest.tsv"}}},
      {"split", {{"file", "split.txt"}, {"shots", 5}}},
      {"provider", {{"id", "toy-trajectory"}, {"trajectory", ToyDatasetConfig{}.test_variation.to_json()}}},
      {"balancing", {{"alpha", 0.5}, {"M", 1}, {"K", 32}}},
      {"train", {{"lr0", 0.01}, {"momentum", 0.9}, {"epochs", 63}}},
      {"transform", {{"size", 32}, {"base_aug", "RRC"}}},
      {"model", {{"backbone", "small-cnn"}}},
      {"experiment", {{"method", "SGIA"}, {"protocol", "btl"}, {"seeds", {0, 1, 2, 3, 4}}, {"output", "out"}}}};
  auto cfg = parse_config(doc, dir);
  cfg.validate();
  return cfg;
}

Outcome ac5(const fs::path& work) {
  Checker c;
  const auto started = std::chrono::steady_clock::now();
  const auto toy = make_toy_dataset(work / "toy", {});
  const auto cfg = toy_study_config(work / "toy");
  const auto provider = ProviderRegistry::instance().make(cfg.provider.id, cfg.provider.options);
  const auto pop = populate_store(*provider, toy.manifest, cfg.balancing.m, cfg.balancing.k, cfg.store,
                                  {cfg.provider.base_seed, 1});
  c.expect(pop.report.complete(), "toy store incomplete");
  const auto tests = load_test_set(toy.manifest, toy.split.test_ids);

  auto baseline = cfg;
  baseline.method = Method::kBaseline;
  baseline.protocol = "single";
  auto no_btl = cfg;
  no_btl.protocol = "single";

  double sum_a = 0, sum_b = 0, sum_c = 0;
  std::string per_seed;
  std::string first_c_stream;
  Network first_c_model;
  for (auto seed : cfg.seeds) {
    const auto a = execute_run(baseline, toy.manifest, nullptr, tests, 5, seed);
    const auto b = execute_run(no_btl, toy.manifest, &pop.store, tests, 5, seed);
    const auto r = execute_run(cfg, toy.manifest, &pop.store, tests, 5, seed);
    sum_a += a.record.best_accuracy;
    sum_b += b.record.best_accuracy;
    sum_c += r.record.best_accuracy;
    if (seed == cfg.seeds.front()) {
      for (const auto& s : r.stages) first_c_stream += s.to_jsonl();
      first_c_model = r.model;
    }
    std::fprintf(stderr, "  AC5 seed %llu: a=%.1f b=%.1f c=%.1f\n", static_cast<unsigned long long>(seed),
                 a.record.best_accuracy, b.record.best_accuracy, r.record.best_accuracy);
  }
  const double n = static_cast<double>(cfg.seeds.size());
  const double ma = sum_a / n, mb = sum_b / n, mc = sum_c / n;
  c.expect(mc >= ma, "mean(c) " + fmt("%.2f", mc) + " < mean(a) " + fmt("%.2f", ma));
  c.expect(mc >= mb - 0.5, "mean(c) " + fmt("%.2f", mc) + " < mean(b) - 0.5 = " + fmt("%.2f", mb - 0.5));

  const auto again = execute_run(cfg, toy.manifest, &pop.store, tests, 5, cfg.seeds.front());
  std::string stream;
  for (const auto& s : again.stages) stream += s.to_jsonl();
  c.expect(stream == first_c_stream, "rerun metric stream differs");
  c.expect(again.model == first_c_model, "rerun model differs");

  const double t = seconds_since(started);
  c.note("mean a=" + fmt("%.2f", ma) + " b=" + fmt("%.2f", mb) + " c=" + fmt("%.2f", mc));
  c.note("margin c-a=" + fmt("%+.2f", mc - ma) + " points");
  c.note(fmt("%.0fs", t));
  return c.result();
}

Outcome ac6(const fs::path& work) {
  Checker c;
  const auto toy = make_toy_dataset(work / "toy", {16, 3, 4, ToyDatasetConfig{}.test_variation, 5});
  const auto pop = populate_store(ToyTrajectoryProvider{}, toy.manifest, 2, 8, work / "store", {});
  TwoStageInputs in{&toy.manifest, &pop.store, toy.split, {}, nullptr};
  in.transforms.size = 16;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.momentum = 0.9;
  const BalancingConfig mix{0.5, 2, 8};
  const auto pre = make_model("small-cnn", 16, kGlyphClasses, 3);

  std::size_t stage2_plans = 0, stage1_synthetic = 0;
  TwoStageOptions opt;
  opt.on_plan = [&](const std::string& stage, const EpochPlan& p) {
    if (stage == "classification" || stage == "full") {
      ++stage2_plans;
      c.expect(empirical_alpha(p) == 0.0, stage + " plan with synthetic slots");
    } else {
      for (const auto& s : p.slots) stage1_synthetic += s.is_synthetic();
    }
  };
  const auto btl = run_btl(pre, cfg, mix, in, opt);
  for (const auto& e : btl.second_result.epochs)
    c.expect(e.synthetic_slots == 0, "classification epoch trained on synthetic slots");
  const auto two = run_two_step(pre, cfg, mix, in, opt);
  c.expect(stage2_plans == 4, "expected 4 stage-2 plans, saw " + std::to_string(stage2_plans));
  c.expect(stage1_synthetic > 0, "stage 1 drew no synthetic slots");

  std::size_t frozen = 0;
  bool head_moved = false;
  for (std::size_t b = 0; b < pre.network.params().size(); ++b) {
    const auto& before = pre.network.params()[b];
    const auto& after = two.first.network.params()[b];
    if (before.is_head) {
      head_moved |= before.value != after.value;
    } else {
      c.expect(before.value == after.value, "step 1 changed " + before.name);
      ++frozen;
    }
  }
  c.expect(head_moved, "step 1 did not train the head");
  c.note(std::to_string(stage2_plans) + " stage-2 plans at alpha 0");
  c.note(std::to_string(frozen) + " backbone blocks bit-identical");
  return c.result();
}

int cli(const std::vector<std::string>& args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err, {});
  if (out_text) *out_text = out.str();
  if (code != 0) std::fprintf(stderr, "  sgia %s: exit %d\n%s", args.front().c_str(), code, err.str().c_str());
  return code;
}

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[e.path().filename().string()] = s.str();
  }
  return out;
}

Outcome ac7(const fs::path& work) {
  Checker c;
  const auto started = std::chrono::steady_clock::now();
  const auto data = work / "toy";
  c.expect(cli({"make-toy", "--out", data.string(), "--image-size", "16", "--train-per-class", "3",
                "--test-per-class", "2"}) == 0,
           "make-toy failed");
  auto write_config = [&](const std::string& name, const std::string& output) {
    const nlohmann::json doc = {
        {"dataset", {{"manifest", "manifest.tsv"}}},
        {"split", {{"file", "split.txt"}, {"shots", 2}}},
        {"provider", {{"id", "toy-trajectory"}}},
        {"balancing", {{"alpha", 0.5}, {"M", 4}, {"K", 4}}},
        {"train", {{"epochs", 1}, {"batch_size", 8}}},
        {"transform", {{"size", 16}}},
        {"experiment", {{"method", "SGIA"}, {"protocol", "btl"}, {"seeds", {0}}, {"output", output},
                        {"store", "store"}}},
        {"sweep", {{"alpha", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}}, {"M", {1, 2, 4}},
                   {"shots", {1, "full"}}}}};
    std::ofstream(data / name) << doc.dump(2);
    return (data / name).string();
  };
  const auto config = write_config("sweep.json", "out");
  c.expect(cli({"generate", "--config", config}) == 0, "generate failed");

  // Interrupted, then resumed.
  c.expect(cli({"sweep", "--config", config, "--limit", "25"}) == 0, "limited sweep failed");
  c.expect(cli({"sweep", "--config", config}) == 0, "resumed sweep failed");
  std::string tail;
  c.expect(cli({"sweep", "--config", config}, &tail) == 0, "third sweep failed");
  c.expect(tail.find("0 to run") != std::string::npos, "completed sweep still had cells to run");

  const auto runs = data / "out" / "runs.jsonl";
  std::ifstream in(runs);
  std::set<RunKey> keys;
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    ++lines;
    keys.insert(RunRecord::from_json(nlohmann::json::parse(line)).key());
  }
  c.expect(lines == keys.size(), std::to_string(lines - keys.size()) + " duplicate records");
  c.expect(lines == 62, "expected 62 records (2 x (30 + baseline)), got " + std::to_string(lines));

  const auto table = RunStore(runs).load();
  for (int shots : {1, 0}) {
    const auto part = table.filter([&](const RunRecord& r) { return r.shots == shots; });
    const auto series = curve(part, CurveAxis::kAlpha);
    bool grid = series.size() == 3;
    std::set<std::uint32_t> ms;
    for (const auto& s : series) {
      grid &= s.points.size() == 10 && s.baseline.has_value();
      ms.insert(s.prototype.m);
    }
    grid &= ms == std::set<std::uint32_t>{1, 2, 4};
    c.expect(grid, "shots " + shots_to_string(shots) + " is not a 10x3 grid");
  }

  for (const char* axis : {"alpha", "M"})
    for (const char* format : {"tsv", "svg"}) {
      c.expect(cli({"report", "--runs", runs.string(), "--kind", "curve", "--axis", axis, "--format",
                    format, "--out", (work / "curves1").string()}) == 0,
               "curve report failed");
      c.expect(cli({"report", "--runs", runs.string(), "--kind", "curve", "--axis", axis, "--format",
                    format, "--out", (work / "curves2").string()}) == 0,
               "curve report failed");
    }
  const auto curves = read_dir(work / "curves1");
  c.expect(curves.size() == 8, "expected 8 curve files, got " + std::to_string(curves.size()));
  c.expect(curves == read_dir(work / "curves2"), "curve reports differ on rerun");

  // A fresh, uninterrupted sweep run in parallel reproduces the same curves.
  const auto fresh = write_config("sweep_fresh.json", "out_fresh");
  c.expect(cli({"sweep", "--config", fresh, "--parallel", "3"}) == 0, "fresh sweep failed");
  const auto fresh_runs = data / "out_fresh" / "runs.jsonl";
  for (const char* axis : {"alpha", "M"})
    for (const char* format : {"tsv", "svg"})
      c.expect(cli({"report", "--runs", fresh_runs.string(), "--kind", "curve", "--axis", axis,
                    "--format", format, "--out", (work / "curves3").string()}) == 0,
               "curve report failed");
  c.expect(curves == read_dir(work / "curves3"), "curves from a fresh sweep differ");

  const double t = seconds_since(started);
  c.note(std::to_string(lines) + " records, 2 regimes x 10x3 grid");
  c.note(std::to_string(curves.size()) + " curve files byte-identical");
  c.note(fmt("%.0fs", t));
  return c.result();
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> wanted(argv + 1, argv + argc);
  sgia::test::TempDir work;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"AC1", ac1},
      {"AC2", ac2},
      {"AC3", ac3},
      {"AC4", [&] { return ac4(work / "ac4"); }},
      {"AC5", [&] { return ac5(work / "ac5"); }},
      {"AC6", [&] { return ac6(work / "ac6"); }},
      {"AC7", [&] { return ac7(work / "ac7"); }},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!wanted.empty() && !wanted.contains(name)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s%s%s\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.empty() ? "" : "  ",
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
