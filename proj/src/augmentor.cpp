// SPDX-License-Identifier: Apache-2.0

#include "sgia/augmentor.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "sgia/rng.hpp"
#include "text_util.hpp"

namespace sgia {

namespace fs = std::filesystem;

GeneratedSequence generate_sequence(const GenerationProvider& provider, const Image& image,
                                    int frames, std::uint64_t seed) {
  const auto id = provider.provider_id();
  if (frames < 1) throw ProviderError(id, seed, "frame count must be >= 1");
  if (image.empty()) throw ProviderError(id, seed, "empty input image");
  GeneratedSequence out;
  out.seed = seed;
  try {
    out.frames = provider.generate(image, frames, seed);
  } catch (const ProviderError&) {
    throw;
  } catch (const std::exception& e) {
    throw ProviderError(id, seed, e.what());
  }
  if (out.frames.size() != static_cast<std::size_t>(frames))
    throw ProviderError(id, seed,
                        "returned " + std::to_string(out.frames.size()) + " frames, expected " +
                            std::to_string(frames));
  const auto res = provider.native_resolution(image);
  for (const auto& f : out.frames)
    if (!(f.resolution() == res))
      throw ProviderError(id, seed, "frame resolution differs from native resolution");
  return out;
}

// --------------------------------------------------------------------------

void TrajectoryConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(std::string("trajectory config: ") + msg);
  };
  require(rotation_deg >= 0.0 && rotation_deg <= 180.0, "rotation_deg must be in [0, 180]");
  require(translation >= 0.0 && translation < 1.0, "translation must be in [0, 1)");
  require(scale >= 0.0 && scale < 1.0, "scale range must be in [0, 1) (scale factor stays positive)");
  require(brightness >= 0.0 && brightness < 1.0, "brightness range must be in [0, 1)");
  require(hue_deg >= 0.0 && hue_deg <= 180.0, "hue_deg must be in [0, 180]");
}

nlohmann::json TrajectoryConfig::to_json() const {
  return {{"rotation_deg", rotation_deg}, {"translation", translation}, {"scale", scale},
          {"brightness", brightness},     {"hue_deg", hue_deg}};
}

TrajectoryConfig TrajectoryConfig::from_json(const nlohmann::json& j) {
  TrajectoryConfig c;
  static const std::set<std::string> known = {"rotation_deg", "translation", "scale",
                                              "brightness", "hue_deg"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("trajectory config: unknown key '" + key + "'");
  c.rotation_deg = j.value("rotation_deg", c.rotation_deg);
  c.translation = j.value("translation", c.translation);
  c.scale = j.value("scale", c.scale);
  c.brightness = j.value("brightness", c.brightness);
  c.hue_deg = j.value("hue_deg", c.hue_deg);
  return c;
}

namespace {

TrajectoryParams draw_params(const TrajectoryConfig& c, Rng& rng) {
  TrajectoryParams p;
  p.rotation_deg = rng.uniform(-c.rotation_deg, c.rotation_deg);
  p.shift_x = rng.uniform(-c.translation, c.translation);
  p.shift_y = rng.uniform(-c.translation, c.translation);
  p.scale = rng.uniform(1.0 - c.scale, 1.0 + c.scale);
  p.brightness = rng.uniform(1.0 - c.brightness, 1.0 + c.brightness);
  p.hue_deg = rng.uniform(-c.hue_deg, c.hue_deg);
  return p;
}

double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace

std::pair<TrajectoryParams, TrajectoryParams> trajectory_endpoints(const TrajectoryConfig& config,
                                                                   std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  TrajectoryParams start = draw_params(config, rng);
  TrajectoryParams end = draw_params(config, rng);
  return {start, end};
}

std::vector<TrajectoryParams> trajectory_params(const TrajectoryConfig& config, int frames,
                                                std::uint64_t seed) {
  if (frames < 1) throw ConfigError("trajectory: frame count must be >= 1");
  const auto [start, end] = trajectory_endpoints(config, seed);
  std::vector<TrajectoryParams> out;
  out.reserve(frames);
  for (int k = 1; k <= frames; ++k) {
    const double t = frames == 1 ? 0.0 : static_cast<double>(k - 1) / (frames - 1);
    out.push_back({lerp(start.rotation_deg, end.rotation_deg, t),
                   lerp(start.shift_x, end.shift_x, t), lerp(start.shift_y, end.shift_y, t),
                   lerp(start.scale, end.scale, t), lerp(start.brightness, end.brightness, t),
                   lerp(start.hue_deg, end.hue_deg, t)});
  }
  return out;
}

Image apply_trajectory_params(const Image& image, const TrajectoryParams& p) {
  const Image warped = warp_affine(image, {p.rotation_deg, p.shift_x, p.shift_y, p.scale});
  return adjust_color(warped, p.brightness, p.hue_deg);
}

std::vector<Image> toy_trajectory_generate(const Image& image, const TrajectoryConfig& config,
                                           int frames, std::uint64_t seed,
                                           std::optional<Resolution> output_resolution) {
  const Image base = output_resolution ? resize_bilinear(image, output_resolution->width,
                                                         output_resolution->height)
                                       : image;
  std::vector<Image> out;
  out.reserve(frames);
  for (const auto& p : trajectory_params(config, frames, seed))
    out.push_back(apply_trajectory_params(base, p));
  return out;
}

ToyTrajectoryProvider::ToyTrajectoryProvider(TrajectoryConfig config,
                                             std::optional<Resolution> output_resolution)
    : config_(config), output_resolution_(output_resolution) {
  config_.validate();
  if (output_resolution_ && (output_resolution_->width <= 0 || output_resolution_->height <= 0))
    throw ConfigError("toy provider: output resolution must be positive");
}

Resolution ToyTrajectoryProvider::native_resolution(const Image& input) const {
  return output_resolution_.value_or(input.resolution());
}

std::vector<Image> ToyTrajectoryProvider::generate(const Image& image, int frames,
                                                   std::uint64_t seed) const {
  return toy_trajectory_generate(image, config_, frames, seed, output_resolution_);
}

nlohmann::json ToyTrajectoryProvider::describe() const {
  nlohmann::json j{{"trajectory", config_.to_json()}};
  if (output_resolution_)
    j["output_resolution"] = {output_resolution_->width, output_resolution_->height};
  return j;
}

// --------------------------------------------------------------------------

ProviderRegistry::ProviderRegistry() {
  add(ToyTrajectoryProvider::kId, [](const nlohmann::json& options) {
    TrajectoryConfig config;
    std::optional<Resolution> out;
    if (options.is_object()) {
      if (options.contains("trajectory"))
        config = TrajectoryConfig::from_json(options["trajectory"]);
      if (options.contains("output_resolution")) {
        const auto& r = options["output_resolution"];
        out = Resolution{r.at(0).get<int>(), r.at(1).get<int>()};
      }
    }
    return std::make_unique<ToyTrajectoryProvider>(config, out);
  });
}

ProviderRegistry& ProviderRegistry::instance() {
  static ProviderRegistry registry;
  return registry;
}

void ProviderRegistry::add(const std::string& id, Factory factory) {
  factories_[id] = std::move(factory);
}

bool ProviderRegistry::contains(const std::string& id) const { return factories_.contains(id); }

std::vector<std::string> ProviderRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : factories_) out.push_back(id);
  return out;
}

std::unique_ptr<GenerationProvider> ProviderRegistry::make(const std::string& id,
                                                           const nlohmann::json& options) const {
  const auto it = factories_.find(id);
  if (it == factories_.end()) {
    std::string known;
    for (const auto& k : ids()) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown provider '" + id + "' (known: " + known + ")");
  }
  return it->second(options);
}

// --------------------------------------------------------------------------

PopulateResult populate_store(const GenerationProvider& provider, const DatasetManifest& manifest,
                              std::uint32_t m, std::uint32_t k, const fs::path& root,
                              const PopulateOptions& options) {
  const StoreShape shape{static_cast<std::uint32_t>(manifest.size()), m, k};
  auto store = SequenceStore::create(root, shape, provider.provider_id(), provider.describe(),
                                     provider.fixed_resolution());

  struct Task {
    std::uint32_t i, j;
  };
  std::vector<Task> tasks;
  for (std::uint32_t i = 1; i <= shape.n; ++i)
    for (std::uint32_t j = 1; j <= shape.m; ++j) tasks.push_back({i, j});

  std::vector<SequenceFailure> failures;
  std::mutex failures_mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      const auto [i, j] = tasks[t];
      const std::uint64_t seed = sequence_seed(options.base_seed, i, j);
      try {
        const Image source = read_png(manifest.image_path(i));
        const auto seq = generate_sequence(provider, source, static_cast<int>(k), seed);
        store.put_sequence(i, j, seq.frames, seq.seed);
      } catch (const std::exception& e) {
        std::lock_guard lock(failures_mutex);
        failures.push_back({i, j, seed, e.what()});
      }
    }
  };

  const unsigned workers = std::max(1u, options.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  std::sort(failures.begin(), failures.end(),
            [](const auto& a, const auto& b) { return std::tie(a.i, a.j) < std::tie(b.i, b.j); });

  auto report = validate_store(store);
  return {std::move(store), std::move(report), std::move(failures)};
}

// --------------------------------------------------------------------------

namespace {

bool is_reserved_source_file(const fs::path& rel) {
  const auto s = rel.generic_string();
  return s == "mapping.txt" || s == "provider_meta.json" || s == "meta.json" ||
         s == "meta.lock";
}

std::vector<fs::path> list_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) out.push_back(fs::relative(entry.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

IngestResult ingest_precomputed(const fs::path& source, const fs::path& dest,
                                const DatasetManifest& manifest, std::uint32_t m,
                                std::uint32_t k) {
  if (!fs::is_directory(source)) throw StoreError("dump directory not found: " + source.string());
  const StoreShape shape{static_cast<std::uint32_t>(manifest.size()), m, k};
  if (shape.n == 0 || m == 0 || k == 0) throw StoreError("ingest: N, M, K must be positive");

  std::map<FrameIndex, fs::path> mapped;  // index -> source file (relative)
  std::vector<std::string> unmappable;
  auto in_range = [&](const FrameIndex& idx) {
    return idx.i >= 1 && idx.i <= shape.n && idx.j >= 1 && idx.j <= shape.m && idx.k >= 1 &&
           idx.k <= shape.k;
  };

  const auto files = list_files(source);
  const bool has_mapping = fs::exists(source / "mapping.txt");
  if (has_mapping) {
    std::ifstream in(source / "mapping.txt");
    std::string line;
    std::size_t line_no = 0;
    std::set<fs::path> referenced;
    while (std::getline(in, line)) {
      ++line_no;
      const auto trimmed = detail::trim(line);
      if (trimmed.empty() || trimmed.starts_with("//")) continue;
      const auto fields = detail::split_ws(trimmed);
      FrameIndex idx;
      bool ok = fields.size() == 4;
      if (ok) {
        try {
          idx = {detail::parse_int<std::uint32_t>(fields[1], "i"),
                 detail::parse_int<std::uint32_t>(fields[2], "j"),
                 detail::parse_int<std::uint32_t>(fields[3], "k")};
        } catch (const DataError&) {
          ok = false;
        }
      }
      if (!ok) {
        unmappable.push_back("mapping.txt line " + std::to_string(line_no) + ": malformed");
        continue;
      }
      const fs::path rel = fs::path(fields[0]).lexically_normal();
      referenced.insert(rel);
      if (!fs::exists(source / rel)) {
        unmappable.push_back(rel.generic_string() + " (listed but not present)");
      } else if (!in_range(idx)) {
        unmappable.push_back(rel.generic_string() + " -> " + to_string(idx) + " out of range");
      } else if (!mapped.emplace(idx, rel).second) {
        unmappable.push_back(rel.generic_string() + " -> " + to_string(idx) + " mapped twice");
      }
    }
    for (const auto& f : files)
      if (!is_reserved_source_file(f) && !referenced.contains(f))
        unmappable.push_back(f.generic_string() + " (stray: not in mapping.txt)");
  } else {
    static const std::regex layout(R"((\d{6})/(\d{3})/(\d{3})\.png)");
    for (const auto& f : files) {
      if (is_reserved_source_file(f)) continue;
      std::smatch match;
      const std::string s = f.generic_string();
      if (!std::regex_match(s, match, layout)) {
        unmappable.push_back(s + " (stray: not in store layout)");
        continue;
      }
      const FrameIndex idx{static_cast<std::uint32_t>(std::stoul(match[1])),
                           static_cast<std::uint32_t>(std::stoul(match[2])),
                           static_cast<std::uint32_t>(std::stoul(match[3]))};
      if (!in_range(idx)) {
        unmappable.push_back(s + " -> " + to_string(idx) + " out of range");
        continue;
      }
      mapped.emplace(idx, f);
    }
  }
  if (!unmappable.empty()) {
    std::string msg = "unmappable files in " + source.string() + ":";
    for (const auto& u : unmappable) msg += "\n  " + u;
    throw StoreError(msg);
  }

  nlohmann::json provider_meta = nlohmann::json::object();
  if (fs::exists(source / "provider_meta.json")) {
    const auto bytes = read_file_bytes(source / "provider_meta.json");
    try {
      provider_meta = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
      throw StoreError("provider_meta.json: " + std::string(e.what()));
    }
  }

  const bool in_place = fs::weakly_canonical(source) == fs::weakly_canonical(dest);
  if (in_place && has_mapping)
    throw StoreError("ingest: a mapped dump needs a destination different from the source");
  auto store = SequenceStore::create(dest, shape, "precomputed", provider_meta);

  std::map<std::pair<std::uint32_t, std::uint32_t>, std::optional<Resolution>> seq_res;
  for (const auto& [idx, rel] : mapped) {
    if (!in_place) store.put_frame_bytes(idx, read_file_bytes(source / rel));
    auto& res = seq_res[{idx.i, idx.j}];
    if (!res) {
      try {
        res = read_png(store.frame_path(idx)).resolution();
      } catch (const Error&) {
        // left to validate_store
      }
    }
  }
  for (const auto& [key, res] : seq_res)
    if (res) store.record_sequence(key.first, key.second, {0, *res});

  auto report = validate_store(store);
  return {std::move(store), std::move(report)};
}

}  // namespace sgia
