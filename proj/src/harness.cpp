// src/harness.cpp

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

#include "safeicl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "safeicl/errors.hpp"

namespace safeicl {

void TrialConfig::validate() const {
  if (num_trials < 1) throw ConfigError("num_trials must be at least 1");
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0)) {
    throw ConfigError("calibration fraction must lie in (0, 1)");
  }
  if (epsilon_grid.empty()) throw ConfigError("epsilon grid is empty");
  if (modes.empty()) throw ConfigError("no loss modes requested");
  const LossSpec bounds(LossMode::scaled, loss_lower, loss_upper);
  for (double eps : epsilon_grid) {
    scale_epsilon(eps, bounds);
    for (LossMode m : modes) {
      if (m == LossMode::raw) throw ConfigError("raw mode cannot be calibrated");
      if (m == LossMode::clipped && !(eps > 0.0 && eps < loss_upper)) {
        throw BudgetError("epsilon = " + std::to_string(eps) +
                          " is outside the clipped loss range (0, " +
                          std::to_string(loss_upper) + ")");
      }
    }
  }
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!grid.include_sentinel()) {
    throw ConfigError("the threshold grid must start with the sentinel");
  }
  if (records_per_trial < 2) throw ConfigError("records_per_trial must be >= 2");
}

const CellSummary& TrialReport::cell(double epsilon, LossMode mode) const {
  for (const auto& c : cells) {
    if (c.epsilon == epsilon && c.mode == mode) return c;
  }
  throw ConfigError("no cell for epsilon " + std::to_string(epsilon) +
                    " and mode " + std::string(to_string(mode)));
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double fraction, Rng& rng) {
  if (n < 2) throw ValidationError("a split needs at least 2 records");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("calibration fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
  }
  auto cal = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));
  cal = std::clamp<std::size_t>(cal, 1, n - 1);
  std::vector<std::size_t> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cal));
  std::vector<std::size_t> b(perm.begin() + static_cast<std::ptrdiff_t>(cal), perm.end());
  return {std::move(a), std::move(b)};
}

std::pair<std::vector<ExampleRecord>, std::vector<ExampleRecord>> split_trial(
    std::span<const ExampleRecord> records, double fraction, Rng& rng) {
  auto [cal_idx, test_idx] = split_indices(records.size(), fraction, rng);
  std::vector<ExampleRecord> cal;
  std::vector<ExampleRecord> test;
  cal.reserve(cal_idx.size());
  test.reserve(test_idx.size());
  for (std::size_t i : cal_idx) cal.push_back(records[i]);
  for (std::size_t i : test_idx) test.push_back(records[i]);
  return {std::move(cal), std::move(test)};
}

namespace {

std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
  return splitmix64(splitmix64(seed) + static_cast<std::uint64_t>(trial));
}

std::uint64_t fingerprint(const std::vector<std::size_t>& indices,
                          std::uint64_t basis) {
  std::string bytes;
  bytes.reserve(indices.size() * 8);
  for (std::size_t i : indices) {
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((i >> (8 * b)) & 0xff));
  }
  return fnv1a(bytes, basis);
}

struct TrialInput {
  std::vector<ScoredRecord> scored;
  std::uint64_t data_fingerprint = 0;
};

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<double> mean_of_present(const std::vector<std::optional<double>>& v) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& x : v) {
    if (x) {
      total += *x;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

TrialOutcome evaluate_selection(std::span<const ScoredRecord> test,
                                const ExitPolicy& policy) {
  LossTally all;
  LossTally correct;
  LossTally incorrect;
  double layers = 0.0;
  double layers_zs = 0.0;
  for (const auto& r : test) {
    const int loss = icl_loss(r, policy);
    all.add(loss);
    (r.kind == ContextKind::correct ? correct : incorrect).add(loss);
    layers += static_cast<double>(evaluated_layers(r, policy));
    layers_zs += static_cast<double>(evaluated_layers_with_zero_shot(r, policy));
  }
  const LossSpec raw(LossMode::raw);
  TrialOutcome o;
  o.lambda_hat = policy.lambda;
  o.test_risk = all.risk(raw);
  o.evaluated_layers = layers / static_cast<double>(test.size());
  o.evaluated_layers_with_zero_shot = layers_zs / static_cast<double>(test.size());
  if (correct.n > 0) o.risk_correct = correct.risk(raw);
  if (incorrect.n > 0) o.risk_incorrect = incorrect.risk(raw);
  return o;
}

std::size_t grid_index(const LambdaGrid& grid, const Threshold& t) {
  const auto values = grid.values();
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (values[j] == t.value()) return j;
  }
  throw ConfigError("threshold not on grid");
}

CellSummary summarise(double epsilon, LossMode mode,
                      std::vector<TrialOutcome> trials) {
  CellSummary c;
  c.epsilon = epsilon;
  c.mode = mode;
  const std::size_t T = trials.size();
  std::vector<double> risks;
  std::vector<double> layers;
  std::vector<double> layers_zs;
  std::vector<std::optional<double>> lambdas;
  std::vector<std::optional<double>> rc;
  std::vector<std::optional<double>> ri;
  std::size_t sentinel = 0;
  std::size_t violations = 0;
  bool have_oracle = true;
  std::string fp_bytes;
  for (const auto& t : trials) {
    risks.push_back(t.test_risk);
    layers.push_back(t.evaluated_layers);
    layers_zs.push_back(t.evaluated_layers_with_zero_shot);
    rc.push_back(t.risk_correct);
    ri.push_back(t.risk_incorrect);
    if (t.lambda_hat.is_zero_shot_only()) {
      ++sentinel;
      lambdas.push_back(std::nullopt);
    } else {
      lambdas.push_back(t.lambda_hat.value());
    }
    if (t.oracle_risk) {
      violations += *t.oracle_risk > epsilon;
    } else {
      have_oracle = false;
    }
    for (int b = 0; b < 8; ++b) {
      fp_bytes.push_back(static_cast<char>((t.split_fingerprint >> (8 * b)) & 0xff));
    }
  }
  c.mean_test_risk = mean_of(risks);
  if (T > 1) {
    double ss = 0.0;
    for (double r : risks) ss += (r - c.mean_test_risk) * (r - c.mean_test_risk);
    c.se_test_risk = std::sqrt(ss / static_cast<double>(T - 1)) /
                     std::sqrt(static_cast<double>(T));
  }
  c.mean_lambda_hat = mean_of_present(lambdas);
  c.sentinel_rate = static_cast<double>(sentinel) / static_cast<double>(T);
  c.mean_evaluated_layers = mean_of(layers);
  c.mean_evaluated_layers_with_zero_shot = mean_of(layers_zs);
  c.risk_correct = mean_of_present(rc);
  c.risk_incorrect = mean_of_present(ri);
  if (have_oracle) {
    c.violation_rate = static_cast<double>(violations) / static_cast<double>(T);
  }
  c.split_fingerprint = fnv1a(fp_bytes);
  c.trials = std::move(trials);
  return c;
}

void fill_savings(TrialReport& report) {
  for (auto& scaled : report.cells) {
    if (scaled.mode != LossMode::scaled) continue;
    for (auto& clipped : report.cells) {
      if (clipped.mode != LossMode::clipped || clipped.epsilon != scaled.epsilon) {
        continue;
      }
      if (clipped.split_fingerprint != scaled.split_fingerprint) continue;
      if (clipped.mean_evaluated_layers > 0.0) {
        scaled.relative_savings =
            (clipped.mean_evaluated_layers - scaled.mean_evaluated_layers) /
            clipped.mean_evaluated_layers;
        clipped.relative_savings = 0.0;
      }
    }
  }
}

// Shared trial loop. `input(t)` yields the scored records of trial t;
// `oracle` (possibly empty) is the exact raw risk at every grid value.
TrialReport run_core(const TrialConfig& config, std::size_t first_exit_layer,
                     const std::function<TrialInput(std::size_t)>& input,
                     const std::vector<double>& oracle) {
  config.validate();
  const ExitPolicy base{Threshold::zero_shot_only(), first_exit_layer,
                        config.measure};
  const std::size_t E = config.epsilon_grid.size();
  const std::size_t M = config.modes.size();
  std::vector<std::vector<TrialOutcome>> outcomes(E * M);

  for (std::size_t t = 0; t < config.num_trials; ++t) {
    TrialInput in = input(t);
    Rng rng(trial_seed(config.seed, t), 0xC0FFEEULL);
    auto [cal_idx, test_idx] =
        split_indices(in.scored.size(), config.calibration_fraction, rng);
    const std::uint64_t fp = fingerprint(cal_idx, in.data_fingerprint);
    std::vector<ScoredRecord> cal;
    std::vector<ScoredRecord> test;
    cal.reserve(cal_idx.size());
    test.reserve(test_idx.size());
    for (std::size_t i : cal_idx) cal.push_back(in.scored[i]);
    for (std::size_t i : test_idx) test.push_back(in.scored[i]);

    const GridTallies tallies = tally_grid(cal, config.grid, base);
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t m = 0; m < M; ++m) {
        const LossSpec spec(config.modes[m], config.loss_lower, config.loss_upper);
        const RiskBudget budget(config.epsilon_grid[e], config.delta, spec);
        const Selection sel = ltt_select(config.grid, tallies, budget, spec);
        TrialOutcome o = evaluate_selection(test, base.with_lambda(sel.lambda_hat));
        o.split_fingerprint = fp;
        if (!oracle.empty()) {
          o.oracle_risk = sel.lambda_hat.is_zero_shot_only()
                              ? 0.0
                              : oracle[grid_index(config.grid, sel.lambda_hat)];
        }
        outcomes[e * M + m].push_back(std::move(o));
      }
    }
  }

  TrialReport report;
  report.num_trials = config.num_trials;
  report.degenerate = config.num_trials == 1;
  report.first_exit_layer = first_exit_layer;
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t m = 0; m < M; ++m) {
      report.cells.push_back(summarise(config.epsilon_grid[e], config.modes[m],
                                       std::move(outcomes[e * M + m])));
    }
  }
  fill_savings(report);
  return report;
}

std::size_t profile_first_exit(const SimProfile& profile,
                               const TrialConfig& config) {
  return config.first_exit_layer ? config.first_exit_layer
                                 : profile.first_exit_layer;
}

TrialReport run_profile(const SimProfile& profile, const TrialConfig& config,
                        const std::vector<double>& oracle) {
  profile.validate();
  const std::uint64_t phash = profile_hash(profile);
  auto input = [&](std::size_t t) {
    const auto records = simulate_dataset(profile, config.records_per_trial,
                                          trial_seed(config.seed, t));
    TrialInput in;
    in.scored = score_records(records, config.measure);
    in.data_fingerprint = splitmix64(phash ^ trial_seed(config.seed, t));
    return in;
  };
  return run_core(config, profile_first_exit(profile, config), input, oracle);
}

}  // namespace

TrialReport run_trials(std::span<const ExampleRecord> records,
                       const TrialConfig& config) {
  if (records.size() < 2) throw ValidationError("need at least 2 records");
  const std::size_t L = records.front().num_layers();
  const std::size_t first =
      config.first_exit_layer ? config.first_exit_layer : std::max<std::size_t>(1, L / 2);
  TrialInput shared;
  shared.scored = score_records(records, config.measure);
  shared.data_fingerprint = 0x5eedULL;
  auto input = [&](std::size_t) { return shared; };
  return run_core(config, first, input, {});
}

TrialReport run_trials(const SimProfile& profile, const TrialConfig& config) {
  return run_profile(profile, config, {});
}

TrialReport run_trials(const DiscreteProfile& profile, const TrialConfig& config) {
  const ExitPolicy base{Threshold::zero_shot_only(),
                        profile_first_exit(profile.profile(), config),
                        config.measure};
  const auto oracle = oracle_risk_curve(profile, config.grid, base,
                                        LossSpec(LossMode::raw));
  return run_profile(profile.profile(), config, oracle);
}

std::vector<EfficiencyRow> efficiency_report(const TrialReport& report) {
  std::vector<EfficiencyRow> rows;
  for (const auto& scaled : report.cells) {
    if (scaled.mode != LossMode::scaled) continue;
    const CellSummary* clipped = nullptr;
    for (const auto& c : report.cells) {
      if (c.mode == LossMode::clipped && c.epsilon == scaled.epsilon) clipped = &c;
    }
    if (!clipped) {
      throw ProtocolError("no clipped-mode run for epsilon " +
                          std::to_string(scaled.epsilon));
    }
    if (clipped->split_fingerprint != scaled.split_fingerprint) {
      throw ProtocolError("scaled and clipped runs used different splits");
    }
    EfficiencyRow row;
    row.epsilon = scaled.epsilon;
    row.layers_scaled = scaled.mean_evaluated_layers;
    row.layers_clipped = clipped->mean_evaluated_layers;
    if (row.layers_clipped > 0.0) {
      row.relative_savings =
          (row.layers_clipped - row.layers_scaled) / row.layers_clipped;
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw ProtocolError("no scaled-mode runs in the report");
  return rows;
}

std::vector<ClassConditionalRow> class_conditional_report(
    const TrialReport& report) {
  std::vector<ClassConditionalRow> rows;
  for (const auto& c : report.cells) {
    rows.push_back({c.epsilon, c.mode, c.risk_correct, c.risk_incorrect});
  }
  return rows;
}

std::vector<TrialReport> proportion_sweep(const SimProfile& profile,
                                          std::span<const double> mixes,
                                          const TrialConfig& config) {
  std::vector<TrialReport> out;
  for (double mix : mixes) {
    SimProfile p = profile;
    p.mix = mix;
    out.push_back(run_trials(p, config));
  }
  return out;
}

std::vector<TrialReport> proportion_sweep(const DiscreteProfile& profile,
                                          std::span<const double> mixes,
                                          const TrialConfig& config) {
  std::vector<TrialReport> out;
  for (double mix : mixes) {
    SimProfile p = profile.profile();
    p.mix = mix;
    out.push_back(run_trials(DiscreteProfile(std::move(p)), config));
  }
  return out;
}

}  // namespace safeicl
