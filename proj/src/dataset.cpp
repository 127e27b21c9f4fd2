// SPDX-License-Identifier: Apache-2.0

#include "sgia/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

#include "sgia/error.hpp"
#include "sgia/image.hpp"
#include "sgia/rng.hpp"
#include "text_util.hpp"

namespace sgia {

const ImageRecord& DatasetManifest::record(ImageId id) const {
  if (id < 1 || id > records.size())
    throw DataError("image id " + std::to_string(id) + " outside 1.." +
                    std::to_string(records.size()));
  return records[id - 1];
}

std::filesystem::path DatasetManifest::image_path(ImageId id) const {
  std::filesystem::path p = record(id).path;
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<ImageId> DatasetManifest::ids_of_class(int label) const {
  std::vector<ImageId> out;
  for (const auto& r : records)
    if (r.label == label) out.push_back(r.id);
  return out;
}

namespace {

std::string line_prefix(std::size_t line_no) {
  return "line " + std::to_string(line_no) + ": ";
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text,
                               const std::filesystem::path& base_dir) {
  DatasetManifest m;
  m.base_dir = base_dir;
  char sep = '\0';
  bool have_header = false;
  std::set<ImageId> seen;

  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (line.empty() || line.starts_with("//")) continue;
    if (!have_header) {
      if (!line.starts_with("#manifest"))
        throw DataError(line_prefix(line_no) + "expected '#manifest' header");
      for (const auto& kv : detail::split_ws(line.substr(9))) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw DataError(line_prefix(line_no) + "malformed header field '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        if (key == "name") {
          m.name = value;
        } else if (key == "class_count") {
          m.class_count = detail::parse_int<int>(value, line_prefix(line_no) + "class_count");
        } else if (key == "sep") {
          if (value == "tab") sep = '\t';
          else if (value == "comma") sep = ',';
          else throw DataError(line_prefix(line_no) + "sep must be tab or comma");
        } else {
          throw DataError(line_prefix(line_no) + "unknown header field '" + key + "'");
        }
      }
      if (sep == '\0') throw DataError(line_prefix(line_no) + "header must declare sep");
      if (m.class_count <= 0)
        throw DataError(line_prefix(line_no) + "header must declare class_count > 0");
      have_header = true;
      continue;
    }

    const auto fields = detail::split_on(line, sep);
    if (fields.size() != 3 && fields.size() != 5)
      throw DataError(line_prefix(line_no) + "expected 3 or 5 fields, got " +
                      std::to_string(fields.size()));
    ImageRecord r;
    const auto where = line_prefix(line_no);
    r.id = detail::parse_int<ImageId>(fields[0], where + "id");
    r.path = fields[1];
    r.label = detail::parse_int<int>(fields[2], where + "label");
    if (fields.size() == 5) {
      r.width = detail::parse_int<int>(fields[3], where + "width");
      r.height = detail::parse_int<int>(fields[4], where + "height");
    }
    if (r.path.empty()) throw DataError(where + "empty path");
    if (!seen.insert(r.id).second)
      throw DataError(where + "duplicate id " + std::to_string(r.id));
    if (r.id != m.records.size() + 1)
      throw DataError(where + "non-dense ids: expected " +
                      std::to_string(m.records.size() + 1) + ", got " + std::to_string(r.id));
    if (r.label < 0 || r.label >= m.class_count)
      throw DataError(where + "record " + std::to_string(r.id) + " has label " +
                      std::to_string(r.label) + " outside [0, " +
                      std::to_string(m.class_count) + ")");
    m.records.push_back(std::move(r));
  }
  if (!have_header) throw DataError("empty manifest");
  if (m.records.empty()) throw DataError("empty manifest");
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw DataError("manifest not found: " + path.string());
  const auto bytes = read_file_bytes(path);
  try {
    return parse_manifest(std::string(bytes.begin(), bytes.end()), path.parent_path());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_manifest(const DatasetManifest& m, char sep) {
  std::ostringstream out;
  out << "#manifest name=" << (m.name.empty() ? "unnamed" : m.name)
      << " class_count=" << m.class_count << " sep=" << (sep == ',' ? "comma" : "tab")
      << '\n';
  for (const auto& r : m.records) {
    out << r.id << sep << r.path << sep << r.label;
    if (r.width > 0 || r.height > 0) out << sep << r.width << sep << r.height;
    out << '\n';
  }
  return out.str();
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  const std::string text = format_manifest(m);
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

void check_manifest(const DatasetManifest& m) {
  if (m.records.empty()) throw DataError("empty manifest");
  if (m.class_count <= 0) throw DataError("class_count must be positive");
  for (std::size_t k = 0; k < m.records.size(); ++k) {
    const auto& r = m.records[k];
    if (r.id != k + 1)
      throw DataError("record " + std::to_string(k + 1) + " has id " + std::to_string(r.id));
    if (r.label < 0 || r.label >= m.class_count)
      throw DataError("record " + std::to_string(r.id) + " has label " +
                      std::to_string(r.label) + " >= class_count");
  }
}

SplitSpec parse_split(const std::string& text) {
  SplitSpec s;
  enum class Section { kNone, kTrain, kTest } section = Section::kNone;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (line.empty() || line.starts_with("//")) continue;
    const auto where = line_prefix(line_no);
    if (line == "train:") { section = Section::kTrain; continue; }
    if (line == "test:") { section = Section::kTest; continue; }
    if (line.starts_with("shots:")) {
      const int shots = detail::parse_int<int>(detail::trim(line.substr(6)), where + "shots");
      if (shots <= 0) throw DataError(where + "shots must be positive");
      s.shots_per_class = shots;
      continue;
    }
    if (line.starts_with("seed:")) {
      s.seed = detail::parse_int<std::uint64_t>(detail::trim(line.substr(5)), where + "seed");
      continue;
    }
    if (section == Section::kNone) throw DataError(where + "id outside train:/test: section");
    const auto id = detail::parse_int<ImageId>(line, where + "id");
    (section == Section::kTrain ? s.train_ids : s.test_ids).push_back(id);
  }
  std::sort(s.train_ids.begin(), s.train_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  return s;
}

SplitSpec load_split(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("split not found: " + path.string());
  const auto bytes = read_file_bytes(path);
  try {
    return parse_split(std::string(bytes.begin(), bytes.end()));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_split(const SplitSpec& s) {
  std::ostringstream out;
  if (s.shots_per_class) out << "shots: " << *s.shots_per_class << '\n';
  out << "seed: " << s.seed << '\n';
  out << "train:\n";
  for (auto id : s.train_ids) out << id << '\n';
  out << "test:\n";
  for (auto id : s.test_ids) out << id << '\n';
  return out.str();
}

void save_split(const std::filesystem::path& path, const SplitSpec& s) {
  const std::string text = format_split(s);
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

void check_split(const DatasetManifest& m, const SplitSpec& s) {
  const auto n = static_cast<ImageId>(m.size());
  std::set<ImageId> train;
  for (auto id : s.train_ids) {
    if (id < 1 || id > n) throw DataError("train id " + std::to_string(id) + " out of range");
    if (!train.insert(id).second)
      throw DataError("train id " + std::to_string(id) + " listed twice");
  }
  std::set<ImageId> test;
  for (auto id : s.test_ids) {
    if (id < 1 || id > n) throw DataError("test id " + std::to_string(id) + " out of range");
    if (train.contains(id))
      throw DataError("id " + std::to_string(id) + " is in both train and test");
    if (!test.insert(id).second)
      throw DataError("test id " + std::to_string(id) + " listed twice");
  }
  if (s.shots_per_class) {
    std::vector<int> per_class(m.class_count, 0);
    for (auto id : s.train_ids) ++per_class[m.record(id).label];
    for (int c = 0; c < m.class_count; ++c)
      if (per_class[c] != *s.shots_per_class)
        throw DataError("class " + std::to_string(c) + " has " + std::to_string(per_class[c]) +
                        " train ids, expected " + std::to_string(*s.shots_per_class));
  }
}

SplitSpec make_full_split(const DatasetManifest& m, std::vector<ImageId> test_ids) {
  std::sort(test_ids.begin(), test_ids.end());
  SplitSpec s;
  for (const auto& r : m.records)
    if (!std::binary_search(test_ids.begin(), test_ids.end(), r.id)) s.train_ids.push_back(r.id);
  s.test_ids = std::move(test_ids);
  check_split(m, s);
  return s;
}

SplitSpec make_few_shot_split(const DatasetManifest& m, int shots, std::uint64_t seed,
                              std::vector<ImageId> test_ids) {
  if (shots <= 0) throw DataError("shots must be positive");
  std::sort(test_ids.begin(), test_ids.end());
  SplitSpec s;
  s.shots_per_class = shots;
  s.seed = seed;
  for (int c = 0; c < m.class_count; ++c) {
    std::vector<ImageId> cand;
    for (const auto& r : m.records)
      if (r.label == c && !std::binary_search(test_ids.begin(), test_ids.end(), r.id))
        cand.push_back(r.id);
    if (cand.size() < static_cast<std::size_t>(shots))
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(cand.size()) +
                      " images outside the test set, fewer than shots=" +
                      std::to_string(shots));
    Rng rng(hash_seed({seed, static_cast<std::uint64_t>(c)}));
    const auto n = static_cast<std::int64_t>(cand.size());
    for (std::int64_t t = 0; t < shots; ++t)
      std::swap(cand[t], cand[rng.uniform_int(t, n - 1)]);
    s.train_ids.insert(s.train_ids.end(), cand.begin(), cand.begin() + shots);
  }
  std::sort(s.train_ids.begin(), s.train_ids.end());
  s.test_ids = std::move(test_ids);
  check_split(m, s);
  return s;
}

}  // namespace sgia
