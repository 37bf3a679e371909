// src/loss.cpp

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

#include "safeicl/loss.hpp"

#include <algorithm>
#include <string>

#include "safeicl/calibration.hpp"
#include "safeicl/errors.hpp"

namespace safeicl {

std::string_view to_string(LossMode mode) {
  switch (mode) {
    case LossMode::raw: return "raw";
    case LossMode::scaled: return "scaled";
    case LossMode::clipped: return "clipped";
  }
  return "scaled";
}

LossMode parse_loss_mode(std::string_view text) {
  if (text == "raw") return LossMode::raw;
  if (text == "scaled") return LossMode::scaled;
  if (text == "clipped") return LossMode::clipped;
  throw ConfigError("unknown loss mode '" + std::string(text) +
                    "', expected scaled or clipped");
}

LossSpec::LossSpec(LossMode mode, double lower, double upper)
    : mode_(mode), lower_(lower), upper_(upper) {
  if (!(lower_ < upper_)) {
    throw ConfigError("loss bounds need a < b, got a = " +
                      std::to_string(lower_) + ", b = " +
                      std::to_string(upper_));
  }
}

RiskBudget::RiskBudget(double epsilon, double delta, const LossSpec& spec)
    : epsilon_(epsilon),
      delta_(delta),
      epsilon_scaled_(scale_epsilon(epsilon, spec)) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw BudgetError("delta = " + std::to_string(delta) +
                      " must lie in (0, 1)");
  }
}

int base_loss(ClassIndex prediction, ClassIndex truth) {
  return prediction == truth ? 0 : 1;
}

int icl_loss(const ExampleRecord& record, const ExitPolicy& policy) {
  return icl_loss(score_record(record, policy.measure), policy);
}

int icl_loss(const ScoredRecord& record, const ExitPolicy& policy) {
  return base_loss(predict_safe_icl(record, policy), record.true_label) -
         base_loss(record.zero_shot_prediction, record.true_label);
}

double clip_loss(double v) { return std::max(0.0, v); }

double scale_loss(double v, const LossSpec& spec) {
  if (!(v >= spec.lower() && v <= spec.upper())) {
    throw LossBoundError("loss " + std::to_string(v) + " is outside [" +
                         std::to_string(spec.lower()) + ", " +
                         std::to_string(spec.upper()) + "]");
  }
  return (v - spec.lower()) / (spec.upper() - spec.lower());
}

double scale_epsilon(double epsilon, const LossSpec& spec) {
  if (!(epsilon > spec.lower() && epsilon < spec.upper())) {
    throw BudgetError("epsilon = " + std::to_string(epsilon) +
                      " must lie strictly inside the loss bounds (" +
                      std::to_string(spec.lower()) + ", " +
                      std::to_string(spec.upper()) + ")");
  }
  return (epsilon - spec.lower()) / (spec.upper() - spec.lower());
}

double mode_loss(int icl, const LossSpec& spec) {
  const double v = static_cast<double>(icl);
  switch (spec.mode()) {
    case LossMode::raw: return v;
    case LossMode::scaled: return scale_loss(v, spec);
    case LossMode::clipped: return clip_loss(v);
  }
  return v;
}

double LossTally::risk(const LossSpec& spec) const {
  if (n == 0) throw ValidationError("no records");
  if (spec.mode() == LossMode::scaled &&
      ((negative > 0 && spec.lower() > -1.0) ||
       (positive > 0 && spec.upper() < 1.0))) {
    throw LossBoundError("ICL losses in {-1, 0, 1} fall outside [" +
                         std::to_string(spec.lower()) + ", " +
                         std::to_string(spec.upper()) + "]");
  }
  const double count = static_cast<double>(n);
  const double raw = static_cast<double>(sum()) / count;
  switch (spec.mode()) {
    case LossMode::raw: return raw;
    case LossMode::scaled:
      return (raw - spec.lower()) / (spec.upper() - spec.lower());
    case LossMode::clipped: return static_cast<double>(positive) / count;
  }
  return raw;
}

LossTally tally_losses(std::span<const ScoredRecord> records,
                       const ExitPolicy& policy) {
  LossTally t;
  for (const auto& r : records) t.add(icl_loss(r, policy));
  return t;
}

double empirical_risk(std::span<const ExampleRecord> records,
                      const ExitPolicy& policy, const LossSpec& spec) {
  if (records.empty()) throw ValidationError("no records");
  LossTally t;
  for (const auto& r : records) t.add(icl_loss(r, policy));
  return t.risk(spec);
}

double empirical_risk(std::span<const ScoredRecord> records,
                      const ExitPolicy& policy, const LossSpec& spec) {
  if (records.empty()) throw ValidationError("no records");
  return tally_losses(records, policy).risk(spec);
}

ProbVector contextual_calibrate(const ProbVector& p, const ProbVector& p_cf) {
  if (p.size() != p_cf.size()) {
    throw ValidationError("content-free vector has " +
                          std::to_string(p_cf.size()) + " classes, expected " +
                          std::to_string(p.size()));
  }
  std::vector<double> q(p.size());
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    q[k] = p[k] / std::max(p_cf[k], kCalibrationFloor);
    total += q[k];
  }
  for (double& v : q) v /= total;
  return ProbVector(std::move(q));
}

}  // namespace safeicl
