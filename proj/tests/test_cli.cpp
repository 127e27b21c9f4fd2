// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <sstream>

#include "sgia/cli.hpp"
#include "sgia/error.hpp"
#include "test_util.hpp"

using namespace sgia;
using sgia::test::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args, const Environment& env = {}) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err, env);
  return {code, out.str(), err.str()};
}

// Small toy dataset plus a fast config; returns the config path.
fs::path setup(const TempDir& dir, nlohmann::json patch = nlohmann::json::object()) {
  const auto root = dir / "toy";
  if (!fs::exists(root / "manifest.tsv")) {
    const auto r = cli({"make-toy", "--out", root.string(), "--image-size", "16",
                        "--train-per-class", "3", "--test-per-class", "2"});
    REQUIRE(r.code == 0);
  }
  nlohmann::json cfg = {
      {"dataset", {{"manifest", "manifest.tsv"}}},
      {"split", {{"file", "split.txt"}, {"shots", 2}}},
      {"provider", {{"id", "toy-trajectory"}}},
      {"balancing", {{"alpha", 0.5}, {"M", 1}, {"K", 4}}},
      {"train", {{"epochs", 1}, {"batch_size", 8}}},
      {"transform", {{"size", 16}}},
      {"experiment", {{"method", "SGIA"}, {"protocol", "btl"}, {"seeds", {0}}, {"output", "out"}}}};
  cfg.merge_patch(patch);
  const auto path = root / "test_config.json";
  std::ofstream(path) << cfg.dump(2);
  return path;
}

std::size_t record_count(const fs::path& runs) {
  std::ifstream in(runs);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("argument and config errors exit 1") {
  TempDir dir;
  const auto config = setup(dir);
  CHECK(cli({}).code == kExitConfig);
  CHECK(cli({"frobnicate"}).code == kExitConfig);
  CHECK(cli({"train"}).code == kExitConfig);
  CHECK(cli({"train", "--config", (dir / "nope.json").string()}).code == kExitConfig);
  CHECK(cli({"train", "--config", setup(dir, {{"train", {{"epoch", 3}}}}).string()}).code == kExitConfig);
  CHECK(cli({"train", "--config", setup(dir, {{"extra", {{"a", 1}}}}).string()}).code == kExitConfig);
  CHECK(cli({"train", "--config", setup(dir, {{"model", {{"backbone", "vit"}}}}).string()}).code ==
        kExitConfig);
  CHECK(cli({"train", "--config", setup(dir).string(), "--alpha", "1.5"}).code == kExitConfig);
  CHECK(cli({"train", "--config", config.string()}, {{"SGIA_TRAIN_EPOCHZ", "3"}}).code == kExitConfig);
  CHECK(cli({"train", "--config", config.string(), "--shots", "many"}).code == kExitConfig);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("environment overrides") {
  const nlohmann::json doc = {{"train", {{"epochs", 5}}}};
  const auto patched = apply_env_overrides(doc, {{"SGIA_TRAIN_EPOCHS", "3"},
                                                 {"SGIA_BALANCING_M", "2"},
                                                 {"SGIA_EXPERIMENT_OUTPUT", "elsewhere"},
                                                 {"SGIA_SIMD", "scalar"},
                                                 {"HOME", "/root"}});
  CHECK(patched["train"]["epochs"] == 3);
  CHECK(patched["balancing"]["M"] == 2);
  CHECK(patched["experiment"]["output"] == "elsewhere");
  CHECK_FALSE(patched.contains("simd"));
  CHECK_THROWS_AS(apply_env_overrides(doc, {{"SGIA_TRAIN_SPEED", "1"}}), ConfigError);

  TempDir dir;
  const auto cfg = load_config(setup(dir), {{"SGIA_SPLIT_SHOTS", "\"full\""}, {"SGIA_TRAIN_LR0", "0.2"}});
  CHECK(cfg.split.shots == 0);
  CHECK(cfg.train.lr0 == 0.2);
  CHECK(cfg.manifest == dir / "toy" / "manifest.tsv");
  CHECK(cfg.store == dir / "toy" / "out" / "store");
  CHECK(cfg.run_store() == dir / "toy" / "out" / "runs.jsonl");
}

TEST_CASE("baseline trains without a store; SGIA without one exits 3") {
  TempDir dir;
  const auto base = setup(dir, {{"experiment", {{"method", "baseline"}, {"protocol", "single"}}}});
  const auto r = cli({"train", "--config", base.string()});
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  const auto out = dir / "toy" / "out";
  CHECK(record_count(out / "runs.jsonl") == 1);
  CHECK_FALSE(fs::exists(out / "store"));
  const auto rec = nlohmann::json::parse(std::ifstream(out / "runs.jsonl"));
  CHECK(rec["method"] == "baseline");
  CHECK(rec["protocol"] == "single");
  const auto run_dir = out / rec["stages"].get<std::string>();
  CHECK(fs::exists(run_dir / "single.jsonl"));
  CHECK(fs::exists(run_dir / "model.ckpt"));
  CHECK(fs::exists(run_dir / "model.ckpt.json"));
  CHECK(fs::exists(run_dir / "record.json"));

  CHECK(cli({"train", "--config", setup(dir).string()}).code == kExitIncompleteStore);

  // Baseline with BTL: both stages at alpha 0, still no store.
  const auto btl = setup(dir, {{"experiment", {{"method", "baseline"}, {"protocol", "btl"}}}});
  REQUIRE(cli({"train", "--config", btl.string()}).code == kExitOk);
  CHECK(record_count(out / "runs.jsonl") == 2);
  std::ifstream in(out / "runs.jsonl");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  const auto second = nlohmann::json::parse(line);
  CHECK(second["method"] == "baseline");
  CHECK(second["protocol"] == "btl");
  CHECK(second["alpha"] == 0.0);
  CHECK(fs::exists(out / second["stages"].get<std::string>() / "bridging.jsonl"));
  CHECK(fs::exists(out / second["stages"].get<std::string>() / "classification.jsonl"));
}

TEST_CASE("generate, validate, train, duplicate refusal") {
  TempDir dir;
  const auto config = setup(dir);
  auto r = cli({"generate", "--config", config.string()});
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  const auto store = dir / "toy" / "out" / "store";
  CHECK(fs::exists(store / "meta.json"));
  CHECK(fs::exists(store / "report.json"));
  CHECK(cli({"validate-store", "--store", store.string()}).code == kExitOk);

  r = cli({"train", "--config", config.string()});
  REQUIRE(r.code == kExitOk);
  const auto runs = dir / "toy" / "out" / "runs.jsonl";
  const auto rec = nlohmann::json::parse(std::ifstream(runs));
  CHECK(rec["protocol"] == "btl");
  CHECK(fs::exists(dir / "toy" / "out" / rec["stages"].get<std::string>() / "bridging.jsonl"));
  CHECK(fs::exists(dir / "toy" / "out" / rec["stages"].get<std::string>() / "classification.jsonl"));

  CHECK(cli({"train", "--config", config.string()}).code == kExitConfig);
  CHECK(record_count(runs) == 1);
  CHECK(cli({"train", "--config", config.string(), "--force"}).code == kExitOk);
  CHECK(record_count(runs) == 1);
  CHECK(cli({"train", "--config", config.string(), "--seed", "1"}).code == kExitOk);
  CHECK(record_count(runs) == 2);

  // M beyond the store is a config error; a deleted frame an incomplete store.
  CHECK(cli({"train", "--config", config.string(), "--m", "2"}).code == kExitConfig);
  fs::remove(store / "000001" / "001" / "002.png");
  r = cli({"validate-store", "--config", config.string(), "--json"});
  CHECK(r.code == kExitIncompleteStore);
  const auto report = nlohmann::json::parse(r.out);
  CHECK(report.dump().find("missing") != std::string::npos);
  CHECK(cli({"train", "--config", config.string(), "--seed", "2"}).code == kExitIncompleteStore);
  CHECK(cli({"validate-store", "--store", (dir / "none").string()}).code == kExitIncompleteStore);
}

TEST_CASE("generate into an unwritable location fails without meta") {
  TempDir dir;
  std::ofstream(dir / "blocker") << "file, not a directory";
  const auto config = setup(dir, {{"experiment", {{"store", (dir / "blocker" / "store").string()}}}});
  const auto r = cli({"generate", "--config", config.string()});
  CHECK(r.code != kExitOk);
  CHECK_FALSE(fs::exists(dir / "blocker" / "store" / "meta.json"));
}

TEST_CASE("sweep resumes after --limit without duplicates") {
  TempDir dir;
  const auto config = setup(dir, {{"sweep", {{"alpha", {0.5, 1.0}}, {"M", {1}}}}});
  REQUIRE(cli({"generate", "--config", config.string()}).code == kExitOk);
  const auto runs = dir / "toy" / "out" / "runs.jsonl";
  auto r = cli({"sweep", "--config", config.string(), "--limit", "1"});
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  CHECK(record_count(runs) == 1);
  r = cli({"sweep", "--config", config.string(), "--parallel", "2"});
  REQUIRE(r.code == kExitOk);
  CHECK(record_count(runs) == 3);
  r = cli({"sweep", "--config", config.string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("0 to run") != std::string::npos);
  CHECK(record_count(runs) == 3);
  CHECK(fs::exists(dir / "toy" / "out" / "sweep_table.tsv"));

  // Reports.
  r = cli({"report", "--runs", runs.string(), "--group-by", "method", "--group-by", "all"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("# average improvement by method") != std::string::npos);
  CHECK(cli({"report", "--runs", runs.string(), "--kind", "curve"}).code == kExitConfig);
  const auto curves = dir / "curves";
  CHECK(cli({"report", "--config", config.string(), "--kind", "curve", "--format", "svg", "--out",
             curves.string()})
            .code == kExitOk);
  CHECK(fs::exists(curves / "curve_alpha_shots-2.svg"));
  CHECK(cli({"report", "--runs", runs.string(), "--format", "xlsx"}).code == kExitConfig);
}

TEST_CASE("report on an empty or missing store fails") {
  TempDir dir;
  std::ofstream(dir / "runs.jsonl") << "";
  CHECK(cli({"report", "--runs", (dir / "runs.jsonl").string()}).code != kExitOk);
  CHECK(cli({"report", "--runs", (dir / "absent.jsonl").string()}).code != kExitOk);
  CHECK(cli({"report"}).code == kExitConfig);
}
