// SPDX-License-Identifier: Apache-2.0

#include "sgia/store.hpp"

#include <cstdio>
#include <sstream>

#include "sgia/error.hpp"
#include "sgia/file_lock.hpp"

namespace sgia {

namespace fs = std::filesystem;

std::string to_string(const FrameIndex& idx) {
  return "(" + std::to_string(idx.i) + "," + std::to_string(idx.j) + "," +
         std::to_string(idx.k) + ")";
}

namespace {

constexpr const char* kFormatTag = "sgia-sequence-store/1";

std::string seq_key(std::uint32_t i, std::uint32_t j) {
  return std::to_string(i) + "/" + std::to_string(j);
}

std::string padded(std::uint32_t v, int width) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%0*u", width, v);
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

StoreMeta read_meta_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return meta_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::exception& e) {
    throw StoreError(path.string() + ": malformed meta: " + e.what());
  }
}

void write_meta_file(const fs::path& path, const StoreMeta& meta) {
  write_text_atomic(path, meta_to_json(meta).dump(2) + "\n");
}

}  // namespace

nlohmann::json meta_to_json(const StoreMeta& meta) {
  nlohmann::json j;
  j["format"] = kFormatTag;
  j["N"] = meta.shape.n;
  j["M"] = meta.shape.m;
  j["K"] = meta.shape.k;
  j["provider"] = meta.provider_id;
  j["provider_meta"] = meta.provider_meta;
  if (meta.frame_resolution)
    j["frame_resolution"] = {{"width", meta.frame_resolution->width},
                             {"height", meta.frame_resolution->height}};
  else
    j["frame_resolution"] = nullptr;
  auto& seqs = j["sequences"] = nlohmann::json::object();
  for (const auto& [key, info] : meta.sequences)
    seqs[key] = {{"seed", info.seed},
                 {"width", info.resolution.width},
                 {"height", info.resolution.height}};
  return j;
}

StoreMeta meta_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kFormatTag)
    throw StoreError("meta.json is not a sequence store meta (format tag)");
  StoreMeta meta;
  meta.shape = {j.at("N").get<std::uint32_t>(), j.at("M").get<std::uint32_t>(),
                j.at("K").get<std::uint32_t>()};
  meta.provider_id = j.value("provider", "");
  meta.provider_meta = j.value("provider_meta", nlohmann::json::object());
  if (j.contains("frame_resolution") && !j["frame_resolution"].is_null())
    meta.frame_resolution = Resolution{j["frame_resolution"].at("width").get<int>(),
                                       j["frame_resolution"].at("height").get<int>()};
  if (j.contains("sequences"))
    for (const auto& [key, v] : j["sequences"].items())
      meta.sequences[key] = {v.at("seed").get<std::uint64_t>(),
                             {v.at("width").get<int>(), v.at("height").get<int>()}};
  return meta;
}

std::string StoreReport::summary() const {
  std::ostringstream out;
  if (complete()) {
    out << "store complete\n";
    return out.str();
  }
  for (const auto& m : missing) out << "missing " << to_string(m) << '\n';
  for (const auto& r : resolution_issues)
    out << "resolution (" << r.i << "," << r.j << "): " << r.detail << '\n';
  for (const auto& u : undecodable)
    out << "undecodable " << to_string(u.index) << ": " << u.detail << '\n';
  return out.str();
}

nlohmann::json StoreReport::to_json() const {
  nlohmann::json j;
  j["complete"] = complete();
  auto& miss = j["missing"] = nlohmann::json::array();
  for (const auto& m : missing) miss.push_back({m.i, m.j, m.k});
  auto& res = j["resolution_issues"] = nlohmann::json::array();
  for (const auto& r : resolution_issues)
    res.push_back({{"i", r.i}, {"j", r.j}, {"detail", r.detail}});
  auto& und = j["undecodable"] = nlohmann::json::array();
  for (const auto& u : undecodable)
    und.push_back({{"frame", {u.index.i, u.index.j, u.index.k}}, {"detail", u.detail}});
  j["quality_flags"] = quality_flags;
  return j;
}

SequenceStore SequenceStore::create(const fs::path& root, StoreShape shape,
                                    const std::string& provider_id,
                                    const nlohmann::json& provider_meta,
                                    std::optional<Resolution> frame_resolution) {
  if (shape.n == 0 || shape.m == 0 || shape.k == 0)
    throw StoreError("store shape N, M, K must be positive");
  if (exists(root)) {
    auto store = open(root);
    const auto meta = store.meta();
    if (!(store.shape() == shape))
      throw StoreError(root.string() + ": existing store has shape N=" +
                       std::to_string(meta.shape.n) + " M=" + std::to_string(meta.shape.m) +
                       " K=" + std::to_string(meta.shape.k));
    if (meta.provider_id != provider_id)
      throw StoreError(root.string() + ": existing store was produced by provider '" +
                       meta.provider_id + "'");
    return store;
  }
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw StoreError("cannot create store root " + root.string() + ": " + ec.message());
  SequenceStore store(root, shape);
  FileLock lock(store.lock_path(), FileLock::Mode::kExclusive);
  StoreMeta meta;
  meta.shape = shape;
  meta.provider_id = provider_id;
  meta.provider_meta = provider_meta;
  meta.frame_resolution = frame_resolution;
  write_meta_file(store.meta_path(), meta);
  return store;
}

bool SequenceStore::exists(const fs::path& root) {
  return fs::exists(root / "meta.json");
}

SequenceStore SequenceStore::open(const fs::path& root) {
  if (!exists(root)) throw StoreError("no sequence store at " + root.string());
  SequenceStore store(root, {});
  store.shape_ = store.meta().shape;
  return store;
}

fs::path SequenceStore::sequence_dir(std::uint32_t i, std::uint32_t j) const {
  return root_ / padded(i, 6) / padded(j, 3);
}

fs::path SequenceStore::frame_path(const FrameIndex& idx) const {
  return sequence_dir(idx.i, idx.j) / (padded(idx.k, 3) + ".png");
}

void SequenceStore::check_index(const FrameIndex& idx) const {
  if (idx.i < 1 || idx.i > shape_.n || idx.j < 1 || idx.j > shape_.m || idx.k < 1 ||
      idx.k > shape_.k)
    throw StoreError("index out of range: " + to_string(idx) + " not in (1.." +
                     std::to_string(shape_.n) + ",1.." + std::to_string(shape_.m) + ",1.." +
                     std::to_string(shape_.k) + ")");
}

void SequenceStore::put_sequence(std::uint32_t i, std::uint32_t j,
                                 std::span<const Image> frames, std::uint64_t seed) {
  check_index({i, j, 1});
  if (frames.size() != shape_.k)
    throw StoreError("frame count mismatch: got " + std::to_string(frames.size()) +
                     ", store K=" + std::to_string(shape_.k));
  const Resolution res = frames.front().resolution();
  for (const auto& f : frames)
    if (!(f.resolution() == res))
      throw StoreError("frames of sequence (" + std::to_string(i) + "," + std::to_string(j) +
                       ") do not share one resolution");

  const auto dir = sequence_dir(i, j);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StoreError("cannot create " + dir.string() + ": " + ec.message());
  for (std::uint32_t k = 1; k <= shape_.k; ++k) write_png(frame_path({i, j, k}), frames[k - 1]);

  FileLock lock(lock_path(), FileLock::Mode::kExclusive);
  auto meta = read_meta_file(meta_path());
  meta.sequences[seq_key(i, j)] = {seed, res};
  write_meta_file(meta_path(), meta);
}

void SequenceStore::put_frame_bytes(const FrameIndex& idx,
                                    std::span<const std::uint8_t> png_bytes) {
  check_index(idx);
  const auto dir = sequence_dir(idx.i, idx.j);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StoreError("cannot create " + dir.string() + ": " + ec.message());
  write_file_atomic(frame_path(idx), png_bytes);
}

void SequenceStore::record_sequence(std::uint32_t i, std::uint32_t j, const SequenceInfo& info) {
  check_index({i, j, 1});
  FileLock lock(lock_path(), FileLock::Mode::kExclusive);
  auto meta = read_meta_file(meta_path());
  meta.sequences[seq_key(i, j)] = info;
  write_meta_file(meta_path(), meta);
}

std::vector<std::uint8_t> SequenceStore::get_bytes(const FrameIndex& idx) const {
  check_index(idx);
  const auto path = frame_path(idx);
  if (!fs::exists(path)) throw StoreError("missing frame " + to_string(idx));
  return read_file_bytes(path);
}

Image SequenceStore::get(const FrameIndex& idx) const {
  const auto bytes = get_bytes(idx);
  try {
    return decode_png(bytes);
  } catch (const DataError& e) {
    throw StoreError("undecodable frame " + to_string(idx) + ": " + e.what());
  }
}

bool SequenceStore::contains(const FrameIndex& idx) const {
  check_index(idx);
  return fs::exists(frame_path(idx));
}

StoreMeta SequenceStore::meta() const {
  FileLock lock(lock_path(), FileLock::Mode::kShared);
  return read_meta_file(meta_path());
}

StoreReport validate_store(const SequenceStore& store) {
  StoreReport report;
  const auto shape = store.shape();
  const auto meta = store.meta();
  for (std::uint32_t i = 1; i <= shape.n; ++i) {
    for (std::uint32_t j = 1; j <= shape.m; ++j) {
      std::optional<Resolution> seq_res;
      bool mixed = false;
      for (std::uint32_t k = 1; k <= shape.k; ++k) {
        const FrameIndex idx{i, j, k};
        const auto path = store.frame_path(idx);
        if (!fs::exists(path)) {
          report.missing.push_back(idx);
          continue;
        }
        Image frame;
        try {
          frame = read_png(path);
        } catch (const Error& e) {
          report.undecodable.push_back({idx, e.what()});
          continue;
        }
        if (!seq_res) seq_res = frame.resolution();
        else if (!(*seq_res == frame.resolution())) mixed = true;
      }
      const auto recorded = meta.sequences.find(seq_key(i, j));
      if (mixed) {
        report.resolution_issues.push_back({i, j, "frames within the sequence differ in resolution"});
      } else if (seq_res && recorded != meta.sequences.end() &&
                 !(*seq_res == recorded->second.resolution)) {
        report.resolution_issues.push_back(
            {i, j,
             std::to_string(seq_res->width) + "x" + std::to_string(seq_res->height) +
                 " differs from the recorded " + std::to_string(recorded->second.resolution.width) +
                 "x" + std::to_string(recorded->second.resolution.height)});
      } else if (seq_res && meta.frame_resolution && !(*seq_res == *meta.frame_resolution)) {
        report.resolution_issues.push_back(
            {i, j,
             std::to_string(seq_res->width) + "x" + std::to_string(seq_res->height) +
                 " differs from store resolution " +
                 std::to_string(meta.frame_resolution->width) + "x" +
                 std::to_string(meta.frame_resolution->height)});
      }
    }
  }
  return report;
}

}  // namespace sgia
