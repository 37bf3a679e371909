// safeicl/cascade.hpp

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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "safeicl/prob.hpp"

namespace safeicl {

enum class ContextKind { correct, incorrect };

std::string_view to_string(ContextKind kind);
/// Parses "correct" / "incorrect"; throws ValidationError otherwise.
ContextKind parse_context_kind(std::string_view text);

/// One calibration unit: the demonstration-conditioned layer trace of an
/// input, the zero-shot final distribution for the same input, its label,
/// and optional content-free counterparts used for contextual calibration.
class ExampleRecord {
 public:
  ExampleRecord(std::string id, std::string dataset_name, ContextKind kind,
                ClassIndex true_label, LayerTrace icl_trace,
                ProbVector zero_shot_final,
                std::optional<LayerTrace> content_free_icl_trace = std::nullopt,
                std::optional<ProbVector> content_free_zero_shot = std::nullopt);

  const std::string& id() const { return id_; }
  const std::string& dataset_name() const { return dataset_name_; }
  ContextKind context_kind() const { return kind_; }
  ClassIndex true_label() const { return true_label_; }
  const LayerTrace& icl_trace() const { return icl_trace_; }
  const ProbVector& zero_shot_final() const { return zero_shot_final_; }
  const std::optional<LayerTrace>& content_free_icl_trace() const {
    return content_free_icl_trace_;
  }
  const std::optional<ProbVector>& content_free_zero_shot() const {
    return content_free_zero_shot_;
  }

  std::size_t num_layers() const { return icl_trace_.num_layers(); }
  std::size_t num_classes() const { return icl_trace_.num_classes(); }

  /// The ICL trace after per-layer contextual calibration, or the raw trace
  /// when no content-free trace is attached.
  LayerTrace effective_icl_trace() const;
  /// The zero-shot vector after contextual calibration, when available.
  ProbVector effective_zero_shot() const;

  bool operator==(const ExampleRecord&) const = default;

 private:
  std::string id_;
  std::string dataset_name_;
  ContextKind kind_;
  ClassIndex true_label_;
  LayerTrace icl_trace_;
  ProbVector zero_shot_final_;
  std::optional<LayerTrace> content_free_icl_trace_;
  std::optional<ProbVector> content_free_zero_shot_;
};

enum class ConfidenceMeasure { argmax, top2, entropy };

std::string_view to_string(ConfidenceMeasure measure);
/// Throws ConfigError on an unknown name.
ConfidenceMeasure parse_confidence_measure(std::string_view text);

/// An exit threshold in [0, 1], or the zero-shot-only sentinel that ignores
/// the demonstrations entirely.
class Threshold {
 public:
  static Threshold zero_shot_only() { return Threshold(); }
  /// Throws ConfigError unless 0 <= lambda <= 1.
  static Threshold at(double lambda);

  bool is_zero_shot_only() const { return !value_.has_value(); }
  /// The numeric threshold. Throws ConfigError for the sentinel.
  double value() const;

  bool operator==(const Threshold&) const = default;

 private:
  Threshold() = default;
  std::optional<double> value_;
};

/// "zero_shot_only" or the shortest round-tripping decimal.
std::string to_string(const Threshold& threshold);

struct ExitPolicy {
  Threshold lambda = Threshold::zero_shot_only();
  /// Earliest layer (1-based) allowed to exit.
  std::size_t first_exit_layer = 1;
  ConfidenceMeasure measure = ConfidenceMeasure::argmax;

  ExitPolicy with_lambda(Threshold t) const {
    ExitPolicy p = *this;
    p.lambda = t;
    return p;
  }
};

double confidence_argmax(const ProbVector& p);
/// Gap between the two largest entries.
double confidence_top2(const ProbVector& p);
/// 1 - H(p) / ln K, natural-log entropy with 0 ln 0 = 0.
double confidence_entropy(const ProbVector& p);
double confidence(const ProbVector& p, ConfidenceMeasure measure);

/// Smallest layer l in [first_exit_layer, L] whose confidence reaches the
/// threshold, or nullopt. Throws ConfigError for the sentinel policy or a
/// first exit layer outside [1, L].
std::optional<std::size_t> exit_layer(const LayerTrace& trace,
                                      const ExitPolicy& policy);

/// Early-exit prediction: argmax at the exit layer, else at layer L.
ClassIndex predict_early_exit(const LayerTrace& trace, const ExitPolicy& policy);

/// Safe ICL prediction: early exit on the (calibrated) ICL trace, falling
/// back to the zero-shot prediction when nothing exits or for the sentinel.
ClassIndex predict_safe_icl(const ExampleRecord& record,
                            const ExitPolicy& policy);

/// ICL layers evaluated: the exit layer, L when nothing exits, 0 for the
/// sentinel. The zero-shot pass is not counted.
std::size_t evaluated_layers(const ExampleRecord& record,
                             const ExitPolicy& policy);

/// Same as evaluated_layers but also charging the L-layer zero-shot pass
/// whenever its prediction is used (fallback or sentinel).
std::size_t evaluated_layers_with_zero_shot(const ExampleRecord& record,
                                            const ExitPolicy& policy);

/// Per-layer confidences and predictions of one record under one measure,
/// computed once so that many thresholds can be evaluated cheaply.
struct ScoredRecord {
  ConfidenceMeasure measure = ConfidenceMeasure::argmax;
  ContextKind kind = ContextKind::correct;
  ClassIndex true_label = 0;
  ClassIndex zero_shot_prediction = 0;
  std::vector<double> confidence;      // index l - 1
  std::vector<ClassIndex> prediction;  // index l - 1

  std::size_t num_layers() const { return confidence.size(); }
};

ScoredRecord score_record(const ExampleRecord& record,
                          ConfidenceMeasure measure);
std::vector<ScoredRecord> score_records(std::span<const ExampleRecord> records,
                                        ConfidenceMeasure measure);

std::optional<std::size_t> exit_layer(const ScoredRecord& record,
                                      const ExitPolicy& policy);
ClassIndex predict_safe_icl(const ScoredRecord& record,
                            const ExitPolicy& policy);
std::size_t evaluated_layers(const ScoredRecord& record,
                             const ExitPolicy& policy);
std::size_t evaluated_layers_with_zero_shot(const ScoredRecord& record,
                                            const ExitPolicy& policy);

}  // namespace safeicl
