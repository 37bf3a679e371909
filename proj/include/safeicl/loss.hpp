// safeicl/loss.hpp

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

#include <cstdint>
#include <span>
#include <string_view>

#include "safeicl/cascade.hpp"

namespace safeicl {

/// How the signed ICL loss is mapped before averaging.
///  raw:     the ICL loss itself, in [a, b]
///  scaled:  (v - a) / (b - a), in [0, 1]
///  clipped: max(0, v), in [0, b]
enum class LossMode { raw, scaled, clipped };

std::string_view to_string(LossMode mode);
/// Throws ConfigError on an unknown name.
LossMode parse_loss_mode(std::string_view text);

/// Loss mode plus the bounds [a, b] of the ICL loss. For 0-1 classification
/// losses the ICL loss lies in [-1, 1].
class LossSpec {
 public:
  explicit LossSpec(LossMode mode = LossMode::scaled, double lower = -1.0,
                    double upper = 1.0);

  LossMode mode() const { return mode_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }

  LossSpec with_mode(LossMode mode) const {
    return LossSpec(mode, lower_, upper_);
  }

 private:
  LossMode mode_;
  double lower_;
  double upper_;
};

/// Tolerance epsilon, failure probability delta, and the tolerance mapped
/// into [0, 1] by the same affine map as the loss.
class RiskBudget {
 public:
  /// Throws BudgetError unless a < epsilon < b and 0 < delta < 1.
  RiskBudget(double epsilon, double delta, const LossSpec& spec = LossSpec());

  double epsilon() const { return epsilon_; }
  double delta() const { return delta_; }
  double epsilon_scaled() const { return epsilon_scaled_; }

 private:
  double epsilon_;
  double delta_;
  double epsilon_scaled_;
};

int base_loss(ClassIndex prediction, ClassIndex truth);

/// Signed ICL loss in {-1, 0, 1}: the safe predictor's 0-1 loss minus the
/// zero-shot predictor's 0-1 loss.
int icl_loss(const ExampleRecord& record, const ExitPolicy& policy);
int icl_loss(const ScoredRecord& record, const ExitPolicy& policy);

double clip_loss(double v);
/// (v - a) / (b - a). Throws LossBoundError when v is outside [a, b].
double scale_loss(double v, const LossSpec& spec);
/// (epsilon - a) / (b - a). Throws BudgetError unless a < epsilon < b.
double scale_epsilon(double epsilon, const LossSpec& spec);

/// Applies the spec's mode to one ICL loss value.
double mode_loss(int icl, const LossSpec& spec);

/// Counts of +1 and -1 ICL losses over n records. Risks under every mode
/// follow exactly from these three integers.
struct LossTally {
  std::int64_t n = 0;
  std::int64_t positive = 0;
  std::int64_t negative = 0;

  void add(int icl) {
    ++n;
    positive += icl > 0;
    negative += icl < 0;
  }
  std::int64_t sum() const { return positive - negative; }
  double risk(const LossSpec& spec) const;
};

LossTally tally_losses(std::span<const ScoredRecord> records,
                       const ExitPolicy& policy);

/// Mean mode-selected loss. Throws ValidationError on an empty set.
double empirical_risk(std::span<const ExampleRecord> records,
                      const ExitPolicy& policy, const LossSpec& spec);
double empirical_risk(std::span<const ScoredRecord> records,
                      const ExitPolicy& policy, const LossSpec& spec);

}  // namespace safeicl
