// safeicl/harness.hpp

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
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "safeicl/cascade.hpp"
#include "safeicl/loss.hpp"
#include "safeicl/random.hpp"
#include "safeicl/risk_control.hpp"
#include "safeicl/simulator.hpp"

namespace safeicl {

struct TrialConfig {
  std::size_t num_trials = 100;
  double calibration_fraction = 0.5;
  std::vector<double> epsilon_grid = {0.05, 0.10, 0.15, 0.20, 0.25};
  double delta = 0.05;
  std::vector<LossMode> modes = {LossMode::scaled, LossMode::clipped};
  ConfidenceMeasure measure = ConfidenceMeasure::argmax;
  std::uint64_t seed = 0;
  LambdaGrid grid = LambdaGrid::uniform(101);
  /// 0 picks the profile's first exit layer, or L / 2 for record files.
  std::size_t first_exit_layer = 0;
  /// Records drawn per trial when sampling from a profile.
  std::size_t records_per_trial = 4000;
  double loss_lower = -1.0;
  double loss_upper = 1.0;

  /// Throws ConfigError.
  void validate() const;
};

/// What one trial selected for one (epsilon, mode) cell and how it did on
/// the held-out half.
struct TrialOutcome {
  Threshold lambda_hat = Threshold::zero_shot_only();
  double test_risk = 0.0;  // raw ICL mean
  double evaluated_layers = 0.0;
  double evaluated_layers_with_zero_shot = 0.0;
  std::optional<double> risk_correct;
  std::optional<double> risk_incorrect;
  std::optional<double> oracle_risk;  // exact raw risk of lambda_hat
  std::uint64_t split_fingerprint = 0;
};

struct CellSummary {
  double epsilon = 0.0;
  LossMode mode = LossMode::scaled;
  double mean_test_risk = 0.0;
  double se_test_risk = 0.0;
  std::optional<double> mean_lambda_hat;  // over non-sentinel selections
  double sentinel_rate = 0.0;
  double mean_evaluated_layers = 0.0;
  double mean_evaluated_layers_with_zero_shot = 0.0;
  /// (clipped - scaled) / clipped mean layers; set only when both modes ran
  /// on identical splits.
  std::optional<double> relative_savings;
  std::optional<double> risk_correct;
  std::optional<double> risk_incorrect;
  std::optional<double> violation_rate;  // oracle risk of lambda_hat > epsilon
  std::uint64_t split_fingerprint = 0;
  std::vector<TrialOutcome> trials;
};

struct TrialReport {
  std::size_t num_trials = 0;
  /// A single trial has no spread; standard errors are reported as 0.
  bool degenerate = false;
  std::size_t first_exit_layer = 0;
  std::vector<CellSummary> cells;  // epsilon-major, modes in config order

  /// Throws ConfigError when the cell is absent.
  const CellSummary& cell(double epsilon, LossMode mode) const;
};

/// Shuffles indices 0..n-1 and returns (calibration, test) index sets;
/// calibration size is round(fraction * n) kept within [1, n - 1].
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double fraction, Rng& rng);

/// Disjoint cover of the input. Throws ValidationError for fewer than 2
/// records.
std::pair<std::vector<ExampleRecord>, std::vector<ExampleRecord>> split_trial(
    std::span<const ExampleRecord> records, double fraction, Rng& rng);

/// Resamples the split only.
TrialReport run_trials(std::span<const ExampleRecord> records,
                       const TrialConfig& config);
/// Resamples dataset and split every trial.
TrialReport run_trials(const SimProfile& profile, const TrialConfig& config);
/// As above, and also scores each selection with the exact oracle risk.
TrialReport run_trials(const DiscreteProfile& profile, const TrialConfig& config);

struct EfficiencyRow {
  double epsilon = 0.0;
  double layers_scaled = 0.0;
  double layers_clipped = 0.0;
  std::optional<double> relative_savings;
};

/// Per epsilon: mean layers per mode and (clipped - scaled) / clipped.
/// Throws ProtocolError if either mode is missing or splits differ.
std::vector<EfficiencyRow> efficiency_report(const TrialReport& report);

inline constexpr std::string_view kClassConditionalCaveat =
    "per-kind risks are descriptive only; the selection controls the "
    "marginal risk over both kinds, not the risk within either kind";

struct ClassConditionalRow {
  double epsilon = 0.0;
  LossMode mode = LossMode::scaled;
  std::optional<double> risk_correct;    // unset when never observed
  std::optional<double> risk_incorrect;
};

std::vector<ClassConditionalRow> class_conditional_report(
    const TrialReport& report);

/// run_trials at each mix with the same seed.
std::vector<TrialReport> proportion_sweep(const SimProfile& profile,
                                          std::span<const double> mixes,
                                          const TrialConfig& config);
std::vector<TrialReport> proportion_sweep(const DiscreteProfile& profile,
                                          std::span<const double> mixes,
                                          const TrialConfig& config);

}  // namespace safeicl
