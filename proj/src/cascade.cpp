// src/cascade.cpp

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

#include "safeicl/cascade.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <utility>

#include "safeicl/calibration.hpp"
#include "safeicl/errors.hpp"

namespace safeicl {

std::string_view to_string(ContextKind kind) {
  return kind == ContextKind::correct ? "correct" : "incorrect";
}

ContextKind parse_context_kind(std::string_view text) {
  if (text == "correct") return ContextKind::correct;
  if (text == "incorrect") return ContextKind::incorrect;
  throw ValidationError("unknown context kind '" + std::string(text) +
                        "', expected correct or incorrect");
}

ExampleRecord::ExampleRecord(std::string id, std::string dataset_name,
                             ContextKind kind, ClassIndex true_label,
                             LayerTrace icl_trace, ProbVector zero_shot_final,
                             std::optional<LayerTrace> content_free_icl_trace,
                             std::optional<ProbVector> content_free_zero_shot)
    : id_(std::move(id)),
      dataset_name_(std::move(dataset_name)),
      kind_(kind),
      true_label_(true_label),
      icl_trace_(std::move(icl_trace)),
      zero_shot_final_(std::move(zero_shot_final)),
      content_free_icl_trace_(std::move(content_free_icl_trace)),
      content_free_zero_shot_(std::move(content_free_zero_shot)) {
  const std::size_t k = icl_trace_.num_classes();
  if (true_label_ >= k) {
    throw ValidationError("label " + std::to_string(true_label_) +
                              " is not below K = " + std::to_string(k),
                          "true_label", id_);
  }
  if (zero_shot_final_.size() != k) {
    throw ValidationError("has " + std::to_string(zero_shot_final_.size()) +
                              " classes, ICL trace has " + std::to_string(k),
                          "zero_shot_final_probs", id_);
  }
  if (content_free_icl_trace_) {
    const auto& cf = *content_free_icl_trace_;
    if (cf.num_layers() != icl_trace_.num_layers() || cf.num_classes() != k) {
      throw ValidationError(
          "shape " + std::to_string(cf.num_layers()) + "x" +
              std::to_string(cf.num_classes()) + " differs from ICL trace " +
              std::to_string(icl_trace_.num_layers()) + "x" + std::to_string(k),
          "content_free_icl_layer_probs", id_);
    }
  }
  if (content_free_zero_shot_ && content_free_zero_shot_->size() != k) {
    throw ValidationError(
        "has " + std::to_string(content_free_zero_shot_->size()) +
            " classes, expected " + std::to_string(k),
        "content_free_zero_shot_probs", id_);
  }
}

LayerTrace ExampleRecord::effective_icl_trace() const {
  if (!content_free_icl_trace_) return icl_trace_;
  std::vector<ProbVector> layers;
  layers.reserve(num_layers());
  for (std::size_t l = 1; l <= num_layers(); ++l) {
    layers.push_back(contextual_calibrate(icl_trace_.layer(l),
                                          content_free_icl_trace_->layer(l)));
  }
  return LayerTrace(std::move(layers));
}

ProbVector ExampleRecord::effective_zero_shot() const {
  if (!content_free_zero_shot_) return zero_shot_final_;
  return contextual_calibrate(zero_shot_final_, *content_free_zero_shot_);
}

std::string_view to_string(ConfidenceMeasure measure) {
  switch (measure) {
    case ConfidenceMeasure::argmax: return "argmax";
    case ConfidenceMeasure::top2: return "top2";
    case ConfidenceMeasure::entropy: return "entropy";
  }
  return "argmax";
}

ConfidenceMeasure parse_confidence_measure(std::string_view text) {
  if (text == "argmax") return ConfidenceMeasure::argmax;
  if (text == "top2") return ConfidenceMeasure::top2;
  if (text == "entropy") return ConfidenceMeasure::entropy;
  throw ConfigError("unknown confidence measure '" + std::string(text) +
                    "', expected argmax, top2 or entropy");
}

Threshold Threshold::at(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("threshold " + std::to_string(lambda) +
                      " is outside [0, 1]");
  }
  Threshold t;
  t.value_ = lambda;
  return t;
}

double Threshold::value() const {
  if (!value_) throw ConfigError("the zero-shot-only policy has no threshold");
  return *value_;
}

std::string to_string(const Threshold& threshold) {
  if (threshold.is_zero_shot_only()) return "zero_shot_only";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, threshold.value());
  return std::string(buf, res.ptr);
}

double confidence_argmax(const ProbVector& p) {
  const auto e = p.entries();
  return *std::max_element(e.begin(), e.end());
}

double confidence_top2(const ProbVector& p) {
  double first = -1.0;
  double second = -1.0;
  for (double v : p.entries()) {
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  return std::clamp(first - second, 0.0, 1.0);
}

double confidence_entropy(const ProbVector& p) {
  double h = 0.0;
  for (double v : p.entries()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  const double norm = std::log(static_cast<double>(p.size()));
  return std::clamp(1.0 - h / norm, 0.0, 1.0);
}

double confidence(const ProbVector& p, ConfidenceMeasure measure) {
  switch (measure) {
    case ConfidenceMeasure::argmax: return confidence_argmax(p);
    case ConfidenceMeasure::top2: return confidence_top2(p);
    case ConfidenceMeasure::entropy: return confidence_entropy(p);
  }
  return confidence_argmax(p);
}

namespace {

void check_window(std::size_t first_exit_layer, std::size_t num_layers) {
  if (first_exit_layer < 1 || first_exit_layer > num_layers) {
    throw ConfigError("first exit layer " + std::to_string(first_exit_layer) +
                      " is outside [1, " + std::to_string(num_layers) + "]");
  }
}

// First 1-based layer in [first, L] whose confidence reaches lambda.
template <typename ConfidenceAt>
std::optional<std::size_t> first_crossing(std::size_t first, std::size_t last,
                                          double lambda, ConfidenceAt conf) {
  for (std::size_t l = first; l <= last; ++l) {
    if (conf(l) >= lambda) return l;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::size_t> exit_layer(const LayerTrace& trace,
                                      const ExitPolicy& policy) {
  check_window(policy.first_exit_layer, trace.num_layers());
  const double lambda = policy.lambda.value();
  return first_crossing(policy.first_exit_layer, trace.num_layers(), lambda,
                        [&](std::size_t l) {
                          return confidence(trace.layer(l), policy.measure);
                        });
}

ClassIndex predict_early_exit(const LayerTrace& trace,
                              const ExitPolicy& policy) {
  const auto l = exit_layer(trace, policy);
  return trace.layer(l.value_or(trace.num_layers())).argmax();
}

ClassIndex predict_safe_icl(const ExampleRecord& record,
                            const ExitPolicy& policy) {
  return predict_safe_icl(score_record(record, policy.measure), policy);
}

std::size_t evaluated_layers(const ExampleRecord& record,
                             const ExitPolicy& policy) {
  return evaluated_layers(score_record(record, policy.measure), policy);
}

std::size_t evaluated_layers_with_zero_shot(const ExampleRecord& record,
                                            const ExitPolicy& policy) {
  return evaluated_layers_with_zero_shot(score_record(record, policy.measure),
                                         policy);
}

ScoredRecord score_record(const ExampleRecord& record,
                          ConfidenceMeasure measure) {
  ScoredRecord s;
  s.measure = measure;
  s.kind = record.context_kind();
  s.true_label = record.true_label();
  s.zero_shot_prediction = record.effective_zero_shot().argmax();
  const LayerTrace trace = record.effective_icl_trace();
  s.confidence.reserve(trace.num_layers());
  s.prediction.reserve(trace.num_layers());
  for (const ProbVector& p : trace.layers()) {
    s.confidence.push_back(confidence(p, measure));
    s.prediction.push_back(p.argmax());
  }
  return s;
}

std::vector<ScoredRecord> score_records(std::span<const ExampleRecord> records,
                                        ConfidenceMeasure measure) {
  std::vector<ScoredRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(score_record(r, measure));
  return out;
}

std::optional<std::size_t> exit_layer(const ScoredRecord& record,
                                      const ExitPolicy& policy) {
  if (record.measure != policy.measure) {
    throw ConfigError("record was scored with a different confidence measure");
  }
  check_window(policy.first_exit_layer, record.num_layers());
  const double lambda = policy.lambda.value();
  return first_crossing(
      policy.first_exit_layer, record.num_layers(), lambda,
      [&](std::size_t l) { return record.confidence[l - 1]; });
}

ClassIndex predict_safe_icl(const ScoredRecord& record,
                            const ExitPolicy& policy) {
  if (policy.lambda.is_zero_shot_only()) return record.zero_shot_prediction;
  const auto l = exit_layer(record, policy);
  return l ? record.prediction[*l - 1] : record.zero_shot_prediction;
}

std::size_t evaluated_layers(const ScoredRecord& record,
                             const ExitPolicy& policy) {
  if (policy.lambda.is_zero_shot_only()) return 0;
  return exit_layer(record, policy).value_or(record.num_layers());
}

std::size_t evaluated_layers_with_zero_shot(const ScoredRecord& record,
                                            const ExitPolicy& policy) {
  const std::size_t L = record.num_layers();
  if (policy.lambda.is_zero_shot_only()) return L;
  const auto l = exit_layer(record, policy);
  return l ? *l : 2 * L;
}

}  // namespace safeicl
