// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>

#include "sgia/augmentor.hpp"
#include "test_util.hpp"

using namespace sgia;
using sgia::test::noise_image;
using sgia::test::TempDir;
namespace fs = std::filesystem;

namespace {

class CountingProvider : public GenerationProvider {
 public:
  explicit CountingProvider(int extra = 0, std::uint64_t fail_seed = 0)
      : extra_(extra), fail_seed_(fail_seed) {}
  std::string provider_id() const override { return "counting"; }
  Resolution native_resolution(const Image& input) const override { return input.resolution(); }
  bool deterministic() const override { return true; }
  std::vector<Image> generate(const Image& image, int frames, std::uint64_t seed) const override {
    if (seed == fail_seed_) throw std::runtime_error("boom");
    return std::vector<Image>(frames + extra_, image);
  }

 private:
  int extra_;
  std::uint64_t fail_seed_;
};

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

}  // namespace

TEST_CASE("identity trajectory reproduces the input") {
  const Image img = noise_image(17, 11, 3);
  const auto frames = toy_trajectory_generate(img, TrajectoryConfig::identity(), 5, 42);
  REQUIRE(frames.size() == 5);
  for (const auto& f : frames) CHECK(f == img);
}

TEST_CASE("trajectory endpoints follow the documented draw order") {
  const TrajectoryConfig cfg{20, 0.1, 0.2, 0.3, 40};
  Rng rng(77);
  double draws[12];
  for (double& d : draws) d = rng.uniform01();
  auto expect = [&](int base, const TrajectoryParams& p) {
    CHECK(p.rotation_deg == doctest::Approx(-20 + 40 * draws[base]));
    CHECK(p.shift_x == doctest::Approx(-0.1 + 0.2 * draws[base + 1]));
    CHECK(p.shift_y == doctest::Approx(-0.1 + 0.2 * draws[base + 2]));
    CHECK(p.scale == doctest::Approx(0.8 + 0.4 * draws[base + 3]));
    CHECK(p.brightness == doctest::Approx(0.7 + 0.6 * draws[base + 4]));
    CHECK(p.hue_deg == doctest::Approx(-40 + 80 * draws[base + 5]));
  };
  const auto [start, end] = trajectory_endpoints(cfg, 77);
  expect(0, start);
  expect(6, end);

  const auto params = trajectory_params(cfg, 5, 77);
  REQUIRE(params.size() == 5);
  CHECK(params.front().rotation_deg == start.rotation_deg);
  CHECK(params.back().hue_deg == doctest::Approx(end.hue_deg));
  CHECK(params[2].scale == doctest::Approx((start.scale + end.scale) / 2));
  const auto one = trajectory_params(cfg, 1, 77);
  REQUIRE(one.size() == 1);
  CHECK(one[0].shift_y == start.shift_y);
}

TEST_CASE("toy provider is deterministic and honours K and resolution") {
  const Image img = noise_image(24, 18, 9);
  ToyTrajectoryProvider plain;
  const auto a = generate_sequence(plain, img, 32, 5);
  const auto b = generate_sequence(plain, img, 32, 5);
  const auto c = generate_sequence(plain, img, 32, 6);
  REQUIRE(a.frames.size() == 32);
  CHECK(a.frames == b.frames);
  CHECK(a.frames != c.frames);
  for (const auto& f : a.frames) CHECK(f.resolution() == Resolution{24, 18});
  CHECK_FALSE(plain.fixed_resolution().has_value());

  ToyTrajectoryProvider sized({}, Resolution{16, 16});
  const auto s = generate_sequence(sized, img, 3, 5);
  for (const auto& f : s.frames) CHECK(f.resolution() == Resolution{16, 16});
  CHECK(sized.fixed_resolution() == Resolution{16, 16});
  CHECK(sized.describe()["output_resolution"] == nlohmann::json({16, 16}));
}

TEST_CASE("generate_sequence enforces the provider contract") {
  const Image img = noise_image(8, 8, 1);
  CHECK_THROWS_AS(generate_sequence(CountingProvider(1), img, 4, 0), ProviderError);
  CHECK_THROWS_AS(generate_sequence(CountingProvider(), img, 0, 0), ProviderError);
  CHECK_THROWS_AS(generate_sequence(CountingProvider(), Image{}, 2, 0), ProviderError);
  try {
    generate_sequence(CountingProvider(0, 13), img, 2, 13);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(e.provider_id() == "counting");
    CHECK(e.seed() == 13);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }
}

TEST_CASE("trajectory config validation and json") {
  CHECK_THROWS_AS((TrajectoryConfig{200, 0, 0, 0, 0}.validate()), ConfigError);
  CHECK_THROWS_AS((TrajectoryConfig{0, 1.0, 0, 0, 0}.validate()), ConfigError);
  CHECK_THROWS_AS(TrajectoryConfig::from_json({{"spin", 1}}), ConfigError);
  const TrajectoryConfig cfg{12, 0.05, 0.1, 0.2, 15};
  const auto back = TrajectoryConfig::from_json(cfg.to_json());
  CHECK(back.rotation_deg == 12);
  CHECK(back.hue_deg == 15);
}

TEST_CASE("provider registry") {
  auto& reg = ProviderRegistry::instance();
  CHECK(reg.contains("toy-trajectory"));
  auto p = reg.make("toy-trajectory",
                    {{"trajectory", {{"rotation_deg", 5}}}, {"output_resolution", {10, 12}}});
  CHECK(p->provider_id() == "toy-trajectory");
  CHECK(p->fixed_resolution() == Resolution{10, 12});
  CHECK(p->describe()["trajectory"]["rotation_deg"] == 5.0);
  CHECK_THROWS_AS(reg.make("diffusion-xl"), ConfigError);
}

TEST_CASE("populate_store fills, records seeds and is reproducible") {
  TempDir dir;
  const auto manifest = sgia::test::write_noise_dataset(dir / "data", 2, 2, 12);
  ToyTrajectoryProvider provider({}, Resolution{10, 10});
  auto r1 = populate_store(provider, manifest, 2, 4, dir / "s1", {7, 1});
  auto r2 = populate_store(provider, manifest, 2, 4, dir / "s2", {7, 3});
  CHECK(r1.report.complete());
  CHECK(r1.failures.empty());
  const auto meta = r1.store.meta();
  CHECK(meta.frame_resolution == Resolution{10, 10});
  CHECK(meta.provider_id == "toy-trajectory");
  CHECK(meta.provider_meta == provider.describe());
  for (std::uint32_t i = 1; i <= 4; ++i) {
    for (std::uint32_t j = 1; j <= 2; ++j) {
      CHECK(meta.sequences.at(std::to_string(i) + "/" + std::to_string(j)).seed ==
            sequence_seed(7, i, j));
      for (std::uint32_t k = 1; k <= 4; ++k)
        CHECK(r1.store.get_bytes({i, j, k}) == r2.store.get_bytes({i, j, k}));
    }
  }
  // Frame content is the provider applied with the recorded seed.
  const auto expect = provider.generate(read_png(manifest.image_path(3)), 4, sequence_seed(7, 3, 2));
  CHECK(r1.store.get({3, 2, 4}) == expect[3]);
}

TEST_CASE("populate_store collects failures and keeps going") {
  TempDir dir;
  const auto manifest = sgia::test::write_noise_dataset(dir / "data", 1, 3, 8);
  CountingProvider provider(0, sequence_seed(0, 2, 1));
  auto r = populate_store(provider, manifest, 1, 3, dir / "s");
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].i == 2);
  CHECK(r.failures[0].j == 1);
  CHECK(r.report.missing.size() == 3);
  CHECK(r.store.contains({3, 1, 3}));
}

TEST_CASE("ingest a store-layout dump") {
  TempDir dir;
  const auto manifest = sgia::test::write_noise_dataset(dir / "data", 1, 2, 8);
  const fs::path dump = dir / "dump";
  for (std::uint32_t i = 1; i <= 2; ++i)
    for (std::uint32_t k = 1; k <= 3; ++k) {
      char rel[32];
      std::snprintf(rel, sizeof(rel), "%06u/001/%03u.png", i, k);
      fs::create_directories((dump / rel).parent_path());
      write_png(dump / rel, noise_image(9, 7, i * 10 + k));
    }
  write_text(dump / "provider_meta.json", R"({"model": "svd", "steps": 25, "cfg": 2.5})");
  auto r = ingest_precomputed(dump, dir / "store", manifest, 1, 3);
  CHECK(r.report.complete());
  CHECK(r.store.get({2, 1, 3}) == noise_image(9, 7, 23));
  const auto meta = r.store.meta();
  CHECK(meta.provider_id == "precomputed");
  CHECK(meta.provider_meta == nlohmann::json::parse(R"({"model": "svd", "steps": 25, "cfg": 2.5})"));
  CHECK(meta.sequences.at("1/1").resolution == Resolution{9, 7});

  // In place.
  auto same = ingest_precomputed(dump, dump, manifest, 1, 3);
  CHECK(same.report.complete());

  // Missing frames are reported, not raised.
  fs::remove(dump / "000002" / "001" / "002.png");
  auto partial = ingest_precomputed(dump, dir / "store2", manifest, 1, 3);
  REQUIRE(partial.report.missing.size() == 1);
  CHECK(partial.report.missing[0] == FrameIndex{2, 1, 2});

  // Stray and out-of-range files are refused, all of them listed.
  write_text(dump / "notes.txt", "x");
  fs::create_directories(dump / "000003" / "001");
  write_png(dump / "000003" / "001" / "001.png", noise_image(9, 7, 1));
  try {
    ingest_precomputed(dump, dir / "store3", manifest, 1, 3);
    FAIL("expected StoreError");
  } catch (const StoreError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("notes.txt") != std::string::npos);
    CHECK(msg.find("000003/001/001.png") != std::string::npos);
  }
  CHECK_FALSE(SequenceStore::exists(dir / "store3"));
}

TEST_CASE("ingest with a mapping file") {
  TempDir dir;
  const auto manifest = sgia::test::write_noise_dataset(dir / "data", 1, 1, 8);
  const fs::path dump = dir / "dump";
  std::string mapping = "// source i j k\n";
  for (int k = 1; k <= 2; ++k) {
    const std::string name = "gen/frame_" + std::to_string(k) + ".png";
    fs::create_directories(dump / "gen");
    write_png(dump / name, noise_image(5, 5, k));
    mapping += name + " 1 1 " + std::to_string(k) + "\n";
  }
  write_text(dump / "mapping.txt", mapping);
  auto r = ingest_precomputed(dump, dir / "store", manifest, 1, 2);
  CHECK(r.report.complete());
  CHECK(r.store.get({1, 1, 2}) == noise_image(5, 5, 2));

  write_text(dump / "mapping.txt", mapping + "gen/frame_1.png 1 2 1\n");
  CHECK_THROWS_WITH_AS(ingest_precomputed(dump, dir / "store2", manifest, 1, 2),
                       doctest::Contains("out of range"), StoreError);
  write_text(dump / "mapping.txt", mapping);
  write_png(dump / "gen" / "extra.png", noise_image(5, 5, 9));
  CHECK_THROWS_WITH_AS(ingest_precomputed(dump, dir / "store3", manifest, 1, 2),
                       doctest::Contains("stray"), StoreError);
}
