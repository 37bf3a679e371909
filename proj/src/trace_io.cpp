// src/trace_io.cpp

// Copyright 2026 The safeicl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "safeicl/trace_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "safeicl/errors.hpp"

namespace safeicl {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw ValidationError("write failed for " + path.string());
}

namespace {

std::string json_string(std::string_view s) { return json(std::string(s)).dump(); }

void append_prob(std::string& out, const ProbVector& p) {
  char buf[32];
  out.push_back('[');
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k) out.push_back(',');
    std::snprintf(buf, sizeof buf, "%.9g", p[k]);
    out += buf;
  }
  out.push_back(']');
}

void append_trace(std::string& out, const LayerTrace& t) {
  out.push_back('[');
  for (std::size_t l = 1; l <= t.num_layers(); ++l) {
    if (l > 1) out.push_back(',');
    append_prob(out, t.layer(l));
  }
  out.push_back(']');
}

std::vector<double> number_row(const json& j, const std::string& field) {
  if (!j.is_array()) throw ValidationError("expected an array of numbers", field);
  std::vector<double> row;
  row.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw ValidationError("expected a number", field);
    row.push_back(x.get<double>());
  }
  return row;
}

ProbVector prob_field(const json& j, const std::string& field) {
  try {
    return ProbVector(number_row(j, field));
  } catch (const ValidationError& e) {
    throw e.located(field, {}, std::nullopt);
  }
}

LayerTrace trace_field(const json& j, const std::string& field,
                       const TraceFileHeader& header) {
  if (!j.is_array()) throw ValidationError("expected an array of layers", field);
  if (j.size() != header.num_layers) {
    throw ValidationError("expected L = " + std::to_string(header.num_layers) +
                              " layers, found " + std::to_string(j.size()),
                          field);
  }
  std::vector<ProbVector> layers;
  for (std::size_t l = 0; l < j.size(); ++l) {
    const std::string f = field + "[" + std::to_string(l + 1) + "]";
    ProbVector p = prob_field(j[l], f);
    if (p.size() != header.num_classes) {
      throw ValidationError("expected K = " + std::to_string(header.num_classes) +
                                " classes, found " + std::to_string(p.size()),
                            f);
    }
    layers.push_back(std::move(p));
  }
  return LayerTrace(std::move(layers));
}

ProbVector final_field(const json& j, const std::string& field,
                       const TraceFileHeader& header) {
  ProbVector p = prob_field(j, field);
  if (p.size() != header.num_classes) {
    throw ValidationError("expected K = " + std::to_string(header.num_classes) +
                              " classes, found " + std::to_string(p.size()),
                          field);
  }
  return p;
}

const std::vector<std::string> kRecordKeys = {
    "id", "dataset", "context_kind", "true_label", "icl_layer_probs",
    "zero_shot_final_probs", "content_free_icl_layer_probs",
    "content_free_zero_shot_probs"};
const std::vector<std::string> kHeaderKeys = {
    "format_version", "dataset_name", "L", "K", "producer"};

void reject_unknown(const json& obj, const std::vector<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ValidationError("unknown key", it.key());
    }
  }
}

const json& required(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError("missing key", key);
  return *it;
}

std::size_t unsigned_field(const json& j, const std::string& field) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
    throw ValidationError("expected a non-negative integer", field);
  }
  return j.get<std::size_t>();
}

std::string string_field(const json& j, const std::string& field) {
  if (!j.is_string()) throw ValidationError("expected a string", field);
  return j.get<std::string>();
}

json parse_line(std::string_view line) {
  try {
    json j = json::parse(line);
    if (!j.is_object()) throw ValidationError("line is not a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
}

TraceFileHeader parse_header(std::string_view line) {
  const json j = parse_line(line);
  reject_unknown(j, kHeaderKeys);
  TraceFileHeader h;
  const json& v = required(j, "format_version");
  if (!v.is_number_integer() || v.get<std::int64_t>() != kTraceFormatVersion) {
    throw ValidationError("unsupported format version, expected " +
                              std::to_string(kTraceFormatVersion),
                          "format_version");
  }
  h.dataset_name = string_field(required(j, "dataset_name"), "dataset_name");
  h.num_layers = unsigned_field(required(j, "L"), "L");
  h.num_classes = unsigned_field(required(j, "K"), "K");
  if (h.num_layers < 2) throw ValidationError("L must be at least 2", "L");
  if (h.num_classes < 2) throw ValidationError("K must be at least 2", "K");
  h.producer = string_field(required(j, "producer"), "producer");
  return h;
}

ExampleRecord parse_record(const json& j, const TraceFileHeader& header,
                           std::string& id) {
  reject_unknown(j, kRecordKeys);
  id = string_field(required(j, "id"), "id");
  if (id.empty()) throw ValidationError("empty id", "id");
  std::string dataset = string_field(required(j, "dataset"), "dataset");
  if (dataset != header.dataset_name) {
    throw ValidationError("dataset '" + dataset + "' differs from header '" +
                              header.dataset_name + "'",
                          "dataset");
  }
  ContextKind kind;
  try {
    kind = parse_context_kind(string_field(required(j, "context_kind"), "context_kind"));
  } catch (const ValidationError& e) {
    throw e.located("context_kind", {}, std::nullopt);
  }
  const ClassIndex label = unsigned_field(required(j, "true_label"), "true_label");
  LayerTrace icl = trace_field(required(j, "icl_layer_probs"), "icl_layer_probs", header);
  ProbVector zs = final_field(required(j, "zero_shot_final_probs"),
                              "zero_shot_final_probs", header);
  std::optional<LayerTrace> cf_icl;
  std::optional<ProbVector> cf_zs;
  if (j.contains("content_free_icl_layer_probs")) {
    cf_icl = trace_field(j["content_free_icl_layer_probs"],
                         "content_free_icl_layer_probs", header);
  }
  if (j.contains("content_free_zero_shot_probs")) {
    cf_zs = final_field(j["content_free_zero_shot_probs"],
                        "content_free_zero_shot_probs", header);
  }
  return ExampleRecord(id, std::move(dataset), kind, label, std::move(icl),
                       std::move(zs), std::move(cf_icl), std::move(cf_zs));
}

}  // namespace

std::string format_records(std::span<const ExampleRecord> records,
                           std::string_view producer) {
  if (records.empty()) throw ValidationError("no records");
  const ExampleRecord& first = records.front();
  std::string out = "{\"format_version\":" + std::to_string(kTraceFormatVersion) +
                    ",\"dataset_name\":" + json_string(first.dataset_name()) +
                    ",\"L\":" + std::to_string(first.num_layers()) +
                    ",\"K\":" + std::to_string(first.num_classes()) +
                    ",\"producer\":" + json_string(producer) + "}\n";
  for (const auto& r : records) {
    if (r.num_layers() != first.num_layers() || r.num_classes() != first.num_classes()) {
      throw ValidationError("L/K differ from the first record", {}, r.id());
    }
    if (r.dataset_name() != first.dataset_name()) {
      throw ValidationError("dataset differs from the first record", "dataset", r.id());
    }
    out += "{\"id\":" + json_string(r.id());
    out += ",\"dataset\":" + json_string(r.dataset_name());
    out += ",\"context_kind\":" + json_string(to_string(r.context_kind()));
    out += ",\"true_label\":" + std::to_string(r.true_label());
    out += ",\"icl_layer_probs\":";
    append_trace(out, r.icl_trace());
    out += ",\"zero_shot_final_probs\":";
    append_prob(out, r.zero_shot_final());
    if (r.content_free_icl_trace()) {
      out += ",\"content_free_icl_layer_probs\":";
      append_trace(out, *r.content_free_icl_trace());
    }
    if (r.content_free_zero_shot()) {
      out += ",\"content_free_zero_shot_probs\":";
      append_prob(out, *r.content_free_zero_shot());
    }
    out += "}\n";
  }
  return out;
}

void save_records(std::span<const ExampleRecord> records,
                  const std::filesystem::path& path, std::string_view producer) {
  write_text(path, format_records(records, producer));
}

TraceFile parse_records(std::string_view text) {
  TraceFile file;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) throw ValidationError("empty line", {}, {}, line_no);
    if (!have_header) {
      try {
        file.header = parse_header(line);
      } catch (const ValidationError& e) {
        throw e.located("header", {}, line_no);
      }
      have_header = true;
      continue;
    }
    std::string id;
    try {
      file.records.push_back(parse_record(parse_line(line), file.header, id));
    } catch (const ValidationError& e) {
      throw e.located({}, id, line_no);
    }
  }
  if (!have_header) throw ValidationError("missing header", {}, {}, 1);
  if (file.records.empty()) throw ValidationError("no records", {}, {}, line_no);
  return file;
}

std::vector<ExampleRecord> load_records(const std::filesystem::path& path) {
  return parse_records(read_text(path)).records;
}

// ---- selection -------------------------------------------------------------

namespace {

json threshold_json(const Threshold& t) {
  if (t.is_zero_shot_only()) return "zero_shot_only";
  return t.value();
}

Threshold threshold_from(const json& j, const std::string& field) {
  if (j.is_string() && j.get<std::string>() == "zero_shot_only") {
    return Threshold::zero_shot_only();
  }
  if (!j.is_number()) throw ValidationError("expected a threshold", field);
  try {
    return Threshold::at(j.get<double>());
  } catch (const ConfigError& e) {
    throw ValidationError(e.what(), field);
  }
}

double number_from(const json& obj, const std::string& key) {
  const json& j = required(obj, key);
  if (!j.is_number()) throw ValidationError("expected a number", key);
  return j.get<double>();
}

}  // namespace

std::string format_selection(const SelectionFile& s) {
  nlohmann::ordered_json j;
  j["lambda_hat"] = threshold_json(s.lambda_hat);
  j["mode"] = std::string(to_string(s.mode));
  j["epsilon"] = s.epsilon;
  j["delta"] = s.delta;
  j["epsilon_scaled"] = s.epsilon_scaled;
  j["confidence"] = std::string(to_string(s.measure));
  j["first_exit_layer"] = s.first_exit_layer;
  j["grid"] = s.grid_points;
  j["n"] = s.n;
  auto trail = nlohmann::ordered_json::array();
  for (const auto& c : s.trail) {
    nlohmann::ordered_json e;
    e["lambda"] = threshold_json(c.lambda);
    e["empirical_risk"] = c.empirical_risk;
    e["icl_risk"] = c.icl_risk;
    e["p_value"] = c.p_value;
    e["certified"] = c.certified;
    trail.push_back(std::move(e));
  }
  j["trail"] = std::move(trail);
  return j.dump(2) + "\n";
}

SelectionFile parse_selection(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed selection: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("selection is not a JSON object");
  reject_unknown(j, {"lambda_hat", "mode", "epsilon", "delta", "epsilon_scaled",
                     "confidence", "first_exit_layer", "grid", "n", "trail"});
  SelectionFile s;
  s.lambda_hat = threshold_from(required(j, "lambda_hat"), "lambda_hat");
  try {
    s.mode = parse_loss_mode(string_field(required(j, "mode"), "mode"));
    s.measure = parse_confidence_measure(
        string_field(required(j, "confidence"), "confidence"));
  } catch (const ConfigError& e) {
    throw ValidationError(e.what(), "selection");
  }
  s.epsilon = number_from(j, "epsilon");
  s.delta = number_from(j, "delta");
  s.epsilon_scaled = number_from(j, "epsilon_scaled");
  s.first_exit_layer = unsigned_field(required(j, "first_exit_layer"), "first_exit_layer");
  s.grid_points = unsigned_field(required(j, "grid"), "grid");
  s.n = static_cast<std::int64_t>(unsigned_field(required(j, "n"), "n"));
  const json& trail = required(j, "trail");
  if (!trail.is_array()) throw ValidationError("expected an array", "trail");
  for (const auto& e : trail) {
    Certification c;
    c.lambda = threshold_from(required(e, "lambda"), "trail.lambda");
    c.empirical_risk = number_from(e, "empirical_risk");
    c.icl_risk = number_from(e, "icl_risk");
    c.p_value = number_from(e, "p_value");
    const json& cert = required(e, "certified");
    if (!cert.is_boolean()) throw ValidationError("expected a boolean", "trail.certified");
    c.certified = cert.get<bool>();
    c.n = s.n;
    s.trail.push_back(c);
  }
  return s;
}

// ---- curves ----------------------------------------------------------------

std::vector<std::string_view> curve_statistics(bool with_violation_rate) {
  std::vector<std::string_view> names = {
      "mean_test_risk",        "se_test_risk",
      "mean_lambda_hat",       "sentinel_rate",
      "mean_evaluated_layers", "mean_evaluated_layers_with_zero_shot",
      "relative_savings",      "risk_correct",
      "risk_incorrect"};
  if (with_violation_rate) names.push_back("violation_rate");
  return names;
}

CurveFile curves_from_report(
    const TrialReport& report,
    std::vector<std::pair<std::string, std::string>> metadata) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  CurveFile out;
  out.metadata = std::move(metadata);
  bool oracle = !report.cells.empty() && report.cells.front().violation_rate.has_value();
  for (const auto& c : report.cells) {
    const double values[] = {c.mean_test_risk,
                             c.se_test_risk,
                             c.mean_lambda_hat.value_or(nan),
                             c.sentinel_rate,
                             c.mean_evaluated_layers,
                             c.mean_evaluated_layers_with_zero_shot,
                             c.relative_savings.value_or(nan),
                             c.risk_correct.value_or(nan),
                             c.risk_incorrect.value_or(nan),
                             c.violation_rate.value_or(nan)};
    const auto names = curve_statistics(oracle);
    for (std::size_t s = 0; s < names.size(); ++s) {
      out.rows.push_back({c.epsilon, c.mode, std::string(names[s]), values[s]});
    }
  }
  return out;
}

std::string format_curves(const CurveFile& curves) {
  std::string out = "# safeicl curves\n";
  for (const auto& [k, v] : curves.metadata) out += "# " + k + " = " + v + "\n";
  out += "epsilon,mode,statistic,value\n";
  for (const auto& r : curves.rows) {
    out += format_double(r.epsilon) + "," + std::string(to_string(r.mode)) + "," +
           r.statistic + "," + format_double(r.value) + "\n";
  }
  return out;
}

namespace {

double parse_number(std::string_view s, std::size_t line, const char* field) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ValidationError("not a number: '" + std::string(s) + "'", field, {}, line);
  }
  return v;
}

}  // namespace

CurveFile parse_curves(std::string_view text) {
  CurveFile out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_columns = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto eq = line.find(" = ");
      if (eq != std::string_view::npos && line.size() > 2) {
        out.metadata.emplace_back(std::string(line.substr(2, eq - 2)),
                                  std::string(line.substr(eq + 3)));
      }
      continue;
    }
    if (!have_columns) {
      if (line != "epsilon,mode,statistic,value") {
        throw ValidationError("unexpected column header", {}, {}, line_no);
      }
      have_columns = true;
      continue;
    }
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cols.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cols.size() != 4) throw ValidationError("expected 4 columns", {}, {}, line_no);
    CurveRow row;
    row.epsilon = parse_number(cols[0], line_no, "epsilon");
    try {
      row.mode = parse_loss_mode(cols[1]);
    } catch (const ConfigError& e) {
      throw ValidationError(e.what(), "mode", {}, line_no);
    }
    row.statistic = std::string(cols[2]);
    row.value = parse_number(cols[3], line_no, "value");
    out.rows.push_back(std::move(row));
  }
  if (!have_columns) throw ValidationError("missing column header", {}, {}, line_no);
  if (out.rows.empty()) throw ValidationError("no curve rows", {}, {}, line_no);
  return out;
}

double CurveFile::value(double epsilon, LossMode mode,
                        std::string_view statistic) const {
  for (const auto& r : rows) {
    if (r.epsilon == epsilon && r.mode == mode && r.statistic == statistic) {
      return r.value;
    }
  }
  throw ValidationError("no " + std::string(statistic) + " row for epsilon " +
                        format_double(epsilon) + " and mode " +
                        std::string(to_string(mode)));
}

std::vector<double> CurveFile::epsilons() const {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.epsilon) == out.end()) {
      out.push_back(r.epsilon);
    }
  }
  return out;
}

std::vector<LossMode> CurveFile::modes() const {
  std::vector<LossMode> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.mode) == out.end()) out.push_back(r.mode);
  }
  return out;
}

}  // namespace safeicl
