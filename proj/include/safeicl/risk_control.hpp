// safeicl/risk_control.hpp

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
#include <span>
#include <vector>

#include "safeicl/cascade.hpp"
#include "safeicl/loss.hpp"

namespace safeicl {

/// Bernoulli KL divergence KL(q || p), with 0 ln 0 = 0. Throws BudgetError
/// unless 0 < p < 1, ConfigError unless 0 <= q <= 1.
double kl_bernoulli(double q, double p);

/// P(Bin(n, p) <= k), summed term by term from a log-space anchor.
double binom_cdf(std::int64_t k, std::int64_t n, double p);

/// Hoeffding-Bentkus p-value for H0: risk > epsilon_scaled, given the mean
/// of n losses in [0, 1]:
///
///   min(1, exp(-n KL(min(r, e') || e')), e * P(Bin(n, e') <= ceil(n r)))
///
/// A product n * risk_hat within 1e-9 of an integer is treated as that
/// integer before taking the ceiling.
double hb_pvalue(double risk_hat, std::int64_t n, double epsilon_scaled);

/// Candidate thresholds in fixed-sequence order: the sentinel (when
/// included) followed by strictly decreasing values in [0, 1].
class LambdaGrid {
 public:
  explicit LambdaGrid(std::vector<double> values, bool include_sentinel = true);

  /// `points` evenly spaced values 1.0 ... 0.0 (points >= 2).
  static LambdaGrid uniform(std::size_t points = 101,
                            bool include_sentinel = true);

  std::span<const double> values() const { return values_; }
  bool include_sentinel() const { return include_sentinel_; }
  /// Every candidate in test order.
  std::vector<Threshold> candidates() const;

 private:
  std::vector<double> values_;
  bool include_sentinel_;
};

struct Certification {
  Threshold lambda = Threshold::zero_shot_only();
  double empirical_risk = 0.0;  // mode-selected, as tested
  double icl_risk = 0.0;        // raw mean ICL loss
  double p_value = 1.0;
  bool certified = false;
  std::int64_t n = 0;
};

struct Selection {
  Threshold lambda_hat = Threshold::zero_shot_only();
  /// Certifications in grid order, up to and including the first failure.
  std::vector<Certification> trail;
};

/// Loss tallies of one record set at every grid candidate.
struct GridTallies {
  LossTally sentinel;
  std::vector<LossTally> values;  // aligned with LambdaGrid::values()
};

/// Tallies every grid value in one pass per record.
GridTallies tally_grid(std::span<const ScoredRecord> records,
                       const LambdaGrid& grid, const ExitPolicy& policy);

/// Tests one candidate from its loss tally. The sentinel is certified
/// without a test since its ICL loss is identically zero.
Certification certify(const Threshold& lambda, const LossTally& tally,
                      const RiskBudget& budget, const LossSpec& spec);

/// Tests one candidate on a record set. The policy supplies the confidence
/// measure and first exit layer; its threshold is ignored. Throws
/// ValidationError on an empty set, BudgetError when epsilon is outside the
/// loss range of the mode (raw mode cannot be tested).
Certification certify(const Threshold& lambda,
                      std::span<const ExampleRecord> records,
                      const RiskBudget& budget, const LossSpec& spec,
                      const ExitPolicy& policy);

/// Fixed-sequence Learn-then-Test: certify candidates in grid order, stop at
/// the first failure, return the last certified candidate.
Selection ltt_select(const LambdaGrid& grid, const GridTallies& tallies,
                     const RiskBudget& budget, const LossSpec& spec);

Selection ltt_select(std::span<const ExampleRecord> records,
                     const LambdaGrid& grid, const RiskBudget& budget,
                     const LossSpec& spec, const ExitPolicy& policy);

Selection ltt_select(std::span<const ScoredRecord> records,
                     const LambdaGrid& grid, const RiskBudget& budget,
                     const LossSpec& spec, const ExitPolicy& policy);

}  // namespace safeicl
