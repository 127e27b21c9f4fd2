// SPDX-License-Identifier: Apache-2.0

#include "sgia/metrics.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sgia/error.hpp"
#include "sgia/file_lock.hpp"
#include "sgia/image.hpp"

namespace sgia {

std::string to_string(Method method) {
  switch (method) {
    case Method::kBaseline: return "baseline";
    case Method::kGIA: return "GIA";
    case Method::kSGIA: return "SGIA";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "baseline") return Method::kBaseline;
  if (s == "GIA" || s == "gia") return Method::kGIA;
  if (s == "SGIA" || s == "sgia") return Method::kSGIA;
  throw ConfigError("unknown method '" + s + "' (baseline, GIA or SGIA)");
}

std::string shots_to_string(int shots) { return shots == 0 ? "full" : std::to_string(shots); }

int shots_from_string(const std::string& s) {
  if (s == "full") return 0;
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("shots must be a positive integer or 'full', got '" + s + "'");
}

namespace {

// Shortest fixed text for a value printed with at most `digits` decimals.
std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s.size() > 1 && s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace

std::string RunKey::str() const {
  std::ostringstream out;
  out << "dataset=" << dataset << " backbone=" << backbone << " base_aug=" << base_aug
      << " image_size=" << image_size << " method=" << to_string(method)
      << " alpha=" << num(alpha_micro / 1e6) << " M=" << m << " shots=" << shots_to_string(shots)
      << " protocol=" << protocol << " seed=" << seed;
  return out.str();
}

RunKey RunRecord::key() const {
  return {dataset, backbone, base_aug, image_size, method, std::llround(alpha * 1e6),
          m,       shots,    protocol, seed};
}

void RunRecord::validate() const {
  if (dataset.empty()) throw DataError("run record: empty dataset");
  if (backbone.empty()) throw DataError("run record: empty backbone");
  if (!(best_accuracy >= 0.0 && best_accuracy <= 100.0))
    throw DataError("run record " + key().str() + ": best_accuracy " + num(best_accuracy) +
                    " outside [0, 100]");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw DataError("run record " + key().str() + ": alpha outside [0, 1]");
  if (shots < 0) throw DataError("run record: negative shots");
  if (protocol != "single" && protocol != "btl" && protocol != "two-step")
    throw DataError("run record: unknown protocol '" + protocol + "'");
}

nlohmann::json RunRecord::to_json() const {
  return {{"dataset", dataset},
          {"backbone", backbone},
          {"base_aug", base_aug},
          {"image_size", image_size},
          {"method", to_string(method)},
          {"alpha", alpha},
          {"M", m},
          {"shots", shots_to_string(shots)},
          {"protocol", protocol},
          {"seed", seed},
          {"best_accuracy", best_accuracy},
          {"stages", stages},
          {"stage2_epochs", stage2_epochs}};
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  RunRecord r;
  try {
    r.dataset = j.at("dataset").get<std::string>();
    r.backbone = j.at("backbone").get<std::string>();
    r.base_aug = j.at("base_aug").get<std::string>();
    r.image_size = j.at("image_size").get<int>();
    r.method = method_from_string(j.at("method").get<std::string>());
    r.alpha = j.value("alpha", 0.0);
    r.m = j.value("M", 0u);
    const auto& shots = j.at("shots");
    r.shots = shots.is_string() ? shots_from_string(shots.get<std::string>()) : shots.get<int>();
    r.protocol = j.value("protocol", std::string("single"));
    r.seed = j.value("seed", std::uint64_t{0});
    r.best_accuracy = j.at("best_accuracy").get<double>();
    r.stages = j.value("stages", std::string());
    r.stage2_epochs = j.value("stage2_epochs", 0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("run record: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("run record: ") + e.what());
  }
  r.validate();
  return r;
}

std::string key_field(const RunRecord& r, const std::string& field) {
  if (field == "dataset") return r.dataset;
  if (field == "backbone") return r.backbone;
  if (field == "base_aug") return r.base_aug;
  if (field == "image_size") return std::to_string(r.image_size);
  if (field == "method") return to_string(r.method);
  if (field == "alpha") return num(r.alpha);
  if (field == "m" || field == "M") return std::to_string(r.m);
  if (field == "shots") return shots_to_string(r.shots);
  if (field == "protocol") return r.protocol;
  if (field == "seed") return std::to_string(r.seed);
  throw ConfigError("unknown key field '" + field + "'");
}

ResultsTable::ResultsTable(std::vector<RunRecord> rows) {
  for (auto& r : rows) add(std::move(r));
}

void ResultsTable::add(RunRecord row) {
  row.validate();
  if (contains(row.key())) throw DataError("duplicate run record " + row.key().str());
  rows_.push_back(std::move(row));
}

bool ResultsTable::contains(const RunKey& key) const {
  return std::any_of(rows_.begin(), rows_.end(), [&](const RunRecord& r) { return r.key() == key; });
}

std::vector<RunRecord> ResultsTable::sorted() const {
  auto out = rows_;
  std::sort(out.begin(), out.end(),
            [](const RunRecord& a, const RunRecord& b) { return a.key() < b.key(); });
  return out;
}

namespace {

bool same_setting(const RunRecord& a, const RunRecord& b) {
  return a.dataset == b.dataset && a.backbone == b.backbone && a.base_aug == b.base_aug &&
         a.image_size == b.image_size && a.shots == b.shots;
}

std::string setting_str(const RunRecord& r) {
  return "dataset=" + r.dataset + " backbone=" + r.backbone + " base_aug=" + r.base_aug +
         " image_size=" + std::to_string(r.image_size) + " shots=" + shots_to_string(r.shots);
}

}  // namespace

// Single-stage baselines are the reference; baselines trained under another
// protocol count only when no single-stage one exists.
std::optional<double> ResultsTable::find_baseline(const RunRecord& r, bool seed_matched) const {
  for (const bool single_only : {true, false}) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& b : rows_) {
      if (b.method != Method::kBaseline || !same_setting(b, r)) continue;
      if (seed_matched && b.seed != r.seed) continue;
      if (single_only && b.protocol != "single") continue;
      sum += b.best_accuracy;
      ++n;
    }
    if (n > 0) return sum / static_cast<double>(n);
  }
  return std::nullopt;
}

double ResultsTable::baseline_for(const RunRecord& r, bool seed_matched) const {
  if (auto b = find_baseline(r, seed_matched)) return *b;
  throw DataError("missing baseline for " + setting_str(r) +
                  (seed_matched ? " seed=" + std::to_string(r.seed) : std::string()));
}

double improvement(double method_acc, double baseline_acc) { return method_acc - baseline_acc; }

double improvement(const ResultsTable& table, const RunRecord& r) {
  const auto b = table.find_baseline(r, true);
  return improvement(r.best_accuracy, b ? *b : table.baseline_for(r));
}

double round2(double x) {
  const double nudge = x >= 0.0 ? 1e-7 : -1e-7;
  const double r = std::round(x * 100.0 + nudge) / 100.0;
  return r == 0.0 ? 0.0 : r;
}

Aggregation aggregate_improvements(const ResultsTable& table,
                                   const std::vector<std::string>& group_by) {
  for (const auto& f : group_by) key_field(RunRecord{}, f);  // validates names

  // Cell = key without seed; per-cell improvement is the mean over seeds.
  struct Cell {
    double sum = 0.0;
    std::size_t n = 0;
  };
  using GroupKey = std::pair<Method, std::vector<std::string>>;
  std::map<GroupKey, std::map<RunKey, Cell>> groups;
  Aggregation out;
  for (const auto& r : table.sorted()) {
    if (r.method == Method::kBaseline) continue;
    std::vector<std::string> values;
    for (const auto& f : group_by) values.push_back(key_field(r, f));
    auto& cells = groups[{r.method, values}];
    auto base = table.find_baseline(r, true);
    if (!base) base = table.find_baseline(r, false);
    if (!base) {
      out.warnings.push_back("missing baseline for " + r.key().str() + "; row skipped");
      continue;
    }
    RunKey cell_key = r.key();
    cell_key.seed = 0;
    auto& cell = cells[cell_key];
    cell.sum += improvement(r.best_accuracy, *base);
    ++cell.n;
  }
  for (const auto& [gk, cells] : groups) {
    std::string label = to_string(gk.first);
    for (std::size_t f = 0; f < group_by.size(); ++f)
      label += " " + group_by[f] + "=" + gk.second[f];
    if (cells.empty()) {
      out.warnings.push_back("empty group " + label + "; no summary row");
      continue;
    }
    SummaryRow row;
    row.method = gk.first;
    for (std::size_t f = 0; f < group_by.size(); ++f) row.group.emplace_back(group_by[f], gk.second[f]);
    double sum = 0.0;
    for (const auto& [_, cell] : cells) sum += cell.sum / static_cast<double>(cell.n);
    row.count = cells.size();
    row.raw_mean = sum / static_cast<double>(row.count);
    row.mean_improvement = round2(row.raw_mean);
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string to_string(CurveAxis axis) { return axis == CurveAxis::kAlpha ? "alpha" : "M"; }

CurveAxis curve_axis_from_string(const std::string& s) {
  if (s == "alpha") return CurveAxis::kAlpha;
  if (s == "M" || s == "m") return CurveAxis::kM;
  throw ConfigError("unknown curve axis '" + s + "' (alpha or M)");
}

std::vector<CurveSeries> curve(const ResultsTable& table, CurveAxis axis) {
  struct Acc {
    RunRecord proto;
    std::map<double, std::pair<double, std::size_t>> by_x;
  };
  std::map<RunKey, Acc> series;
  for (const auto& r : table.sorted()) {
    if (r.method == Method::kBaseline) continue;
    RunRecord proto = r;
    proto.seed = 0;
    proto.best_accuracy = 0.0;
    proto.stages.clear();
    double x;
    if (axis == CurveAxis::kAlpha) {
      x = r.alpha;
      proto.alpha = 0.0;
    } else {
      x = r.m;
      proto.m = 0;
    }
    auto& acc = series[proto.key()];
    acc.proto = proto;
    auto& p = acc.by_x[x];
    p.first += r.best_accuracy;
    ++p.second;
  }
  std::vector<CurveSeries> out;
  for (auto& [_, acc] : series) {
    CurveSeries s;
    s.prototype = acc.proto;
    const auto& p = acc.proto;
    s.label = to_string(p.method) + " " + p.protocol + " shots=" + shots_to_string(p.shots) +
              (axis == CurveAxis::kAlpha ? " M=" + std::to_string(p.m)
                                         : " alpha=" + num(p.alpha)) +
              " " + p.backbone + " " + p.base_aug + " " + std::to_string(p.image_size) + " " +
              p.dataset;
    for (const auto& [x, sum_n] : acc.by_x)
      s.points.push_back({x, sum_n.first / static_cast<double>(sum_n.second), sum_n.second});
    s.peak = s.points.front();
    for (const auto& pt : s.points)
      if (pt.accuracy > s.peak.accuracy) s.peak = pt;
    s.baseline = table.find_baseline(p, false);
    out.push_back(std::move(s));
  }
  return out;
}

void ReportSpec::validate() const {
  if (format != "tsv" && format != "csv" && format != "svg")
    throw ConfigError("unknown report format '" + format + "' (tsv, csv or svg)");
  if (kind != "table" && kind != "curve")
    throw ConfigError("unknown report kind '" + kind + "' (table or curve)");
  if (format == "svg" && kind != "curve") throw ConfigError("svg reports are curves only");
  for (const auto& g : group_by)
    for (const auto& f : g) key_field(RunRecord{}, f);
}

ReportSpec ReportSpec::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"format", "kind", "group_by", "axis", "title"};
  if (!j.is_object()) throw ConfigError("report spec must be an object");
  for (const auto& [k, _] : j.items())
    if (!known.contains(k)) throw ConfigError("report spec: unknown field '" + k + "'");
  ReportSpec s;
  try {
    s.format = j.value("format", s.format);
    s.kind = j.value("kind", s.kind);
    if (j.contains("group_by")) s.group_by = j.at("group_by").get<std::vector<std::vector<std::string>>>();
    if (j.contains("axis")) s.axis = curve_axis_from_string(j.at("axis").get<std::string>());
    s.title = j.value("title", s.title);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("report spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

class Writer {
 public:
  explicit Writer(char sep) : sep_(sep) {}

  void row(const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out_ << sep_;
      out_ << cell(cells[c]);
    }
    out_ << '\n';
  }
  void comment(const std::string& text) { out_ << "# " << text << '\n'; }
  void blank() { out_ << '\n'; }
  std::string str() const { return out_.str(); }

 private:
  std::string cell(const std::string& s) const {
    if (sep_ == ',' && s.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      return q + "\"";
    }
    if (sep_ == '\t') {
      std::string t = s;
      std::replace(t.begin(), t.end(), '\t', ' ');
      return t;
    }
    return s;
  }

  char sep_;
  std::ostringstream out_;
};

std::string table_report(const ResultsTable& table, const ReportSpec& spec, char sep) {
  Writer w(sep);
  if (!spec.title.empty()) w.comment(spec.title);
  w.row({"dataset", "backbone", "base_aug", "image_size", "method", "alpha", "M", "shots",
         "protocol", "seed", "best_accuracy", "stage2_epochs"});
  for (const auto& r : table.sorted())
    w.row({r.dataset, r.backbone, r.base_aug, std::to_string(r.image_size), to_string(r.method),
           num(r.alpha), std::to_string(r.m), shots_to_string(r.shots), r.protocol,
           std::to_string(r.seed), num(r.best_accuracy, 4), std::to_string(r.stage2_epochs)});
  for (const auto& group_by : spec.group_by) {
    const auto agg = aggregate_improvements(table, group_by);
    w.blank();
    std::string by;
    for (const auto& f : group_by) by += (by.empty() ? "" : ",") + f;
    w.comment("average improvement by " + (by.empty() ? std::string("(all)") : by));
    std::vector<std::string> header = group_by;
    header.insert(header.end(), {"method", "mean_improvement", "cells"});
    w.row(header);
    for (const auto& row : agg.rows) {
      std::vector<std::string> cells;
      for (const auto& [_, v] : row.group) cells.push_back(v);
      cells.insert(cells.end(),
                   {to_string(row.method), fixed(row.mean_improvement, 2), std::to_string(row.count)});
      w.row(cells);
    }
    for (const auto& warning : agg.warnings) w.comment("warning: " + warning);
  }
  return w.str();
}

std::string curve_table(const std::vector<CurveSeries>& series, const ReportSpec& spec, char sep) {
  Writer w(sep);
  if (!spec.title.empty()) w.comment(spec.title);
  w.row({"series", "kind", to_string(spec.axis), "accuracy", "seeds"});
  for (const auto& s : series) {
    for (const auto& p : s.points)
      w.row({s.label, "point", num(p.x), num(p.accuracy, 4), std::to_string(p.seeds)});
    w.row({s.label, "peak", num(s.peak.x), num(s.peak.accuracy, 4), std::to_string(s.peak.seeds)});
    if (s.baseline) w.row({s.label, "baseline", "", num(*s.baseline, 4), ""});
  }
  return w.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string curve_svg(const std::vector<CurveSeries>& series, const ReportSpec& spec) {
  constexpr double kW = 720, kH = 420, kLeft = 60, kRight = 250, kTop = 40, kBottom = 50;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  const bool log_x = spec.axis == CurveAxis::kM;
  auto tx = [&](double x) { return log_x ? std::log2(std::max(x, 1e-9)) : x; };

  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      x_lo = std::min(x_lo, tx(p.x));
      x_hi = std::max(x_hi, tx(p.x));
      y_lo = std::min(y_lo, p.accuracy);
      y_hi = std::max(y_hi, p.accuracy);
    }
    if (s.baseline) {
      y_lo = std::min(y_lo, *s.baseline);
      y_hi = std::max(y_hi, *s.baseline);
    }
  }
  if (x_hi - x_lo < 1e-12) { x_lo -= 0.5; x_hi += 0.5; }
  if (y_hi - y_lo < 1e-12) { y_lo -= 1.0; y_hi += 1.0; }
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (tx(x) - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return kTop + (y_hi - y) / (y_hi - y_lo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kW) << "\" height=\"" << num(kH)
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!spec.title.empty())
    o << "<text x=\"" << num(kLeft) << "\" y=\"22\" font-size=\"14\">" << xml_escape(spec.title)
      << "</text>\n";
  o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw)
    << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = y_lo + (y_hi - y_lo) * t / 4.0;
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << fixed(py(y) + 4, 2)
      << "\" text-anchor=\"end\">" << fixed(y, 1) << "</text>\n";
  }
  std::set<double> xs;
  for (const auto& s : series)
    for (const auto& p : s.points) xs.insert(p.x);
  for (double x : xs)
    o << "<text x=\"" << fixed(px(x), 2) << "\" y=\"" << num(kTop + ph + 16)
      << "\" text-anchor=\"middle\">" << num(x) << "</text>\n";
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kH - 12)
    << "\" text-anchor=\"middle\">" << (log_x ? "M (log2)" : "alpha") << "</text>\n";
  o << "<text x=\"14\" y=\"" << num(kTop + ph / 2) << "\" transform=\"rotate(-90 14 "
    << num(kTop + ph / 2) << ")\" text-anchor=\"middle\">accuracy (%)</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kColors[i % std::size(kColors)];
    if (s.baseline)
      o << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kLeft + pw) << "\" y1=\""
        << fixed(py(*s.baseline), 2) << "\" y2=\"" << fixed(py(*s.baseline), 2) << "\" stroke=\""
        << color << "\" stroke-dasharray=\"4 3\"/>\n";
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t p = 0; p < s.points.size(); ++p)
      o << (p ? " " : "") << fixed(px(s.points[p].x), 2) << "," << fixed(py(s.points[p].accuracy), 2);
    o << "\"/>\n";
    for (const auto& p : s.points)
      o << "<circle cx=\"" << fixed(px(p.x), 2) << "\" cy=\"" << fixed(py(p.accuracy), 2)
        << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    o << "<text x=\"" << fixed(px(s.peak.x), 2) << "\" y=\"" << fixed(py(s.peak.accuracy) - 6, 2)
      << "\" text-anchor=\"middle\" fill=\"" << color << "\">" << fixed(s.peak.accuracy, 1)
      << "</text>\n";
    const double ly = kTop + 14.0 * static_cast<double>(i);
    o << "<rect x=\"" << num(kLeft + pw + 10) << "\" y=\"" << fixed(ly, 2)
      << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
    o << "<text x=\"" << num(kLeft + pw + 24) << "\" y=\"" << fixed(ly + 9, 2) << "\">"
      << xml_escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

std::string emit_report(const ResultsTable& table, const ReportSpec& spec) {
  spec.validate();
  if (table.empty()) throw DataError("cannot report on an empty results table");
  const char sep = spec.format == "csv" ? ',' : '\t';
  if (spec.kind == "table") return table_report(table, spec, sep);
  const auto series = curve(table, spec.axis);
  if (series.empty()) throw DataError("no non-baseline rows to plot");
  if (spec.format == "svg") return curve_svg(series, spec);
  return curve_table(series, spec, sep);
}

RunStore::RunStore(std::filesystem::path path) : path_(std::move(path)) {}

namespace {

std::filesystem::path lock_path(const std::filesystem::path& p) {
  return p.string() + ".lock";
}

ResultsTable parse_store(const std::filesystem::path& path) {
  ResultsTable table;
  std::ifstream in(path);
  if (!in) return table;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      table.add(RunRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return table;
}

}  // namespace

ResultsTable RunStore::load() const {
  if (!std::filesystem::exists(path_)) return {};
  FileLock lock(lock_path(path_), FileLock::Mode::kShared);
  return parse_store(path_);
}

bool RunStore::append(const RunRecord& r, bool replace) {
  r.validate();
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  FileLock lock(lock_path(path_), FileLock::Mode::kExclusive);
  const auto existing = parse_store(path_);
  const auto key = r.key();
  const std::string line = r.to_json().dump() + "\n";
  if (existing.contains(key)) {
    if (!replace) throw DataError("run already recorded: " + key.str() + " (use --force to overwrite)");
    std::string text;
    for (const auto& old : existing.rows())
      if (old.key() != key) text += old.to_json().dump() + "\n";
    text += line;
    write_file_atomic(path_, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    return false;
  }
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("cannot open run store " + path_.string());
  const ssize_t written = ::write(fd, line.data(), line.size());
  ::fsync(fd);
  ::close(fd);
  if (written != static_cast<ssize_t>(line.size()))
    throw Error("short write to run store " + path_.string());
  return true;
}

}  // namespace sgia
