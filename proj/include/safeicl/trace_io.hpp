// safeicl/trace_io.hpp

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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "safeicl/cascade.hpp"
#include "safeicl/harness.hpp"
#include "safeicl/loss.hpp"
#include "safeicl/risk_control.hpp"

namespace safeicl {

inline constexpr int kTraceFormatVersion = 1;

/// First line of a trace file.
struct TraceFileHeader {
  int format_version = kTraceFormatVersion;
  std::string dataset_name;
  std::size_t num_layers = 0;
  std::size_t num_classes = 0;
  std::string producer;
};

/// Canonical text of a record set: header line, then one JSON object per
/// record with a fixed key order and probabilities at 9 significant digits.
/// Throws ValidationError on an empty or inconsistent record set.
std::string format_records(std::span<const ExampleRecord> records,
                           std::string_view producer = "safeicl");
void save_records(std::span<const ExampleRecord> records,
                  const std::filesystem::path& path,
                  std::string_view producer = "safeicl");

struct TraceFile {
  TraceFileHeader header;
  std::vector<ExampleRecord> records;
};

/// Parses and validates a trace file. Every ValidationError carries the
/// 1-based line number and, where known, the record id and field.
TraceFile parse_records(std::string_view text);
std::vector<ExampleRecord> load_records(const std::filesystem::path& path);

/// What calibrate writes and evaluate reads.
struct SelectionFile {
  Threshold lambda_hat = Threshold::zero_shot_only();
  LossMode mode = LossMode::scaled;
  double epsilon = 0.0;
  double delta = 0.0;
  double epsilon_scaled = 0.0;
  ConfidenceMeasure measure = ConfidenceMeasure::argmax;
  std::size_t first_exit_layer = 1;
  std::size_t grid_points = 101;
  std::int64_t n = 0;
  std::vector<Certification> trail;
};

std::string format_selection(const SelectionFile& selection);
SelectionFile parse_selection(std::string_view text);

/// Long-format curve rows, one per (epsilon, mode, statistic).
struct CurveRow {
  double epsilon = 0.0;
  LossMode mode = LossMode::scaled;
  std::string statistic;
  double value = 0.0;  // NaN when undefined
};

struct CurveFile {
  std::vector<std::pair<std::string, std::string>> metadata;  // "# k = v"
  std::vector<CurveRow> rows;

  /// Throws ValidationError when the row is absent.
  double value(double epsilon, LossMode mode, std::string_view statistic) const;
  std::vector<double> epsilons() const;
  std::vector<LossMode> modes() const;
};

/// Statistic names in output order.
std::vector<std::string_view> curve_statistics(bool with_violation_rate);

CurveFile curves_from_report(
    const TrialReport& report,
    std::vector<std::pair<std::string, std::string>> metadata);
std::string format_curves(const CurveFile& curves);
CurveFile parse_curves(std::string_view text);

std::string read_text(const std::filesystem::path& path);
/// Writes bytes verbatim, creating parent directories.
void write_text(const std::filesystem::path& path, std::string_view text);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace safeicl
