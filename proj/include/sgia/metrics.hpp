// SPDX-License-Identifier: Apache-2.0
//
// Run records, the append-only run store, improvement aggregation and
// accuracy curves.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace sgia {

enum class Method { kBaseline, kGIA, kSGIA };

std::string to_string(Method method);
Method method_from_string(const std::string& s);

// Field names usable in group_by lists.
inline constexpr const char* kKeyFields[] = {"dataset", "backbone", "base_aug", "image_size",
                                             "method",  "alpha",    "m",        "shots",
                                             "protocol", "seed"};

struct RunKey {
  std::string dataset;
  std::string backbone;
  std::string base_aug;
  int image_size = 0;
  Method method = Method::kBaseline;
  std::int64_t alpha_micro = 0;  // alpha * 1e6, rounded
  std::uint32_t m = 0;
  int shots = 0;  // 0 means full
  std::string protocol;
  std::uint64_t seed = 0;

  friend auto operator<=>(const RunKey&, const RunKey&) = default;
  friend bool operator==(const RunKey&, const RunKey&) = default;
  std::string str() const;
};

struct RunRecord {
  std::string dataset;
  std::string backbone;
  std::string base_aug = "RRC";
  int image_size = 224;
  Method method = Method::kBaseline;
  double alpha = 0.0;
  std::uint32_t m = 0;
  int shots = 0;                  // 0 means full
  std::string protocol = "single";  // single | btl | two-step
  std::uint64_t seed = 0;
  double best_accuracy = 0.0;  // percent, max over epochs
  std::string stages;          // locator of the per-stage results
  int stage2_epochs = 0;

  RunKey key() const;
  void validate() const;
  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

std::string shots_to_string(int shots);
int shots_from_string(const std::string& s);  // "1", "5", ..., or "full"

// Value of one key field as text ("alpha" -> "0.5", "shots" -> "full").
std::string key_field(const RunRecord& r, const std::string& field);

class ResultsTable {
 public:
  ResultsTable() = default;
  explicit ResultsTable(std::vector<RunRecord> rows);

  // Throws DataError on a duplicate key.
  void add(RunRecord row);
  const std::vector<RunRecord>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }
  bool contains(const RunKey& key) const;
  // Rows sorted by key.
  std::vector<RunRecord> sorted() const;
  template <typename Pred>
  ResultsTable filter(Pred pred) const {
    ResultsTable out;
    for (const auto& r : rows_)
      if (pred(r)) out.rows_.push_back(r);
    return out;
  }

  // Mean accuracy of the baseline rows matching r on dataset, backbone,
  // base_aug, image_size and shots (and seed when seed_matched). Single-stage
  // baselines are used when any exist, otherwise baselines of any protocol.
  // Throws DataError naming the key when none exists.
  double baseline_for(const RunRecord& r, bool seed_matched = false) const;
  std::optional<double> find_baseline(const RunRecord& r, bool seed_matched = false) const;

 private:
  std::vector<RunRecord> rows_;
};

// method_acc - baseline_acc, in percent.
double improvement(double method_acc, double baseline_acc);
// Improvement of row r over its baseline in `table`.
double improvement(const ResultsTable& table, const RunRecord& r);

// Half away from zero at 2 decimals, tolerant of binary representation
// error (0.825 -> 0.83).
double round2(double x);

struct SummaryRow {
  std::vector<std::pair<std::string, std::string>> group;  // group_by field -> value
  Method method = Method::kSGIA;
  double mean_improvement = 0.0;  // rounded to 2 decimals
  double raw_mean = 0.0;
  std::size_t count = 0;
};

struct Aggregation {
  std::vector<SummaryRow> rows;
  std::vector<std::string> warnings;
};

// Mean per-row improvement over non-baseline rows, one summary row per
// (method, group_by values). Rows without a baseline are skipped and groups
// left empty are omitted; both produce warnings. Rows of the same cell
// across seeds are averaged per seed against the seed's baseline when one
// exists, otherwise against the cell's mean baseline.
Aggregation aggregate_improvements(const ResultsTable& table,
                                   const std::vector<std::string>& group_by);

enum class CurveAxis { kAlpha, kM };

std::string to_string(CurveAxis axis);
CurveAxis curve_axis_from_string(const std::string& s);

struct CurvePoint {
  double x = 0.0;
  double accuracy = 0.0;  // mean over seeds
  std::size_t seeds = 0;
};

struct CurveSeries {
  std::string label;
  RunRecord prototype;  // key fields shared by every point; x and seed unset
  std::vector<CurvePoint> points;  // ascending x
  std::optional<double> baseline;  // horizontal reference
  CurvePoint peak;                 // argmax accuracy, smallest x on ties
};

// One series per combination of all key fields other than the axis and the
// seed. Baseline rows feed the references only.
std::vector<CurveSeries> curve(const ResultsTable& table, CurveAxis axis);

struct ReportSpec {
  std::string format = "tsv";  // tsv | csv | svg
  std::string kind = "table";  // table | curve
  std::vector<std::vector<std::string>> group_by;  // summary blocks (table)
  CurveAxis axis = CurveAxis::kAlpha;                // curve
  std::string title;

  void validate() const;
  // Rejects unknown fields.
  static ReportSpec from_json(const nlohmann::json& j);
};

// Deterministic report text. Throws ConfigError on an unknown format or
// kind, DataError on an empty table.
std::string emit_report(const ResultsTable& table, const ReportSpec& spec);

// Append-only JSONL file of RunRecords. Appends hold an exclusive lock on
// <path>.lock; loads hold a shared lock.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  ResultsTable load() const;
  // Appends r. A record with the same key is an error unless `replace`, in
  // which case the old record is dropped. Returns false when the key
  // existed and was replaced.
  bool append(const RunRecord& r, bool replace = false);

 private:
  std::filesystem::path path_;
};

}  // namespace sgia
