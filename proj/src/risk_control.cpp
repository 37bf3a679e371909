// src/risk_control.cpp

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

#include "safeicl/risk_control.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "safeicl/errors.hpp"

namespace safeicl {

double kl_bernoulli(double q, double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw BudgetError("KL reference p = " + std::to_string(p) +
                      " must lie in (0, 1)");
  }
  if (!(q >= 0.0 && q <= 1.0)) {
    throw ConfigError("KL argument q = " + std::to_string(q) +
                      " must lie in [0, 1]");
  }
  double kl = 0.0;
  if (q > 0.0) kl += q * std::log(q / p);
  if (q < 1.0) kl += (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
  return std::max(kl, 0.0);
}

namespace {

double log_binom_pmf(std::int64_t i, std::int64_t n, double p) {
  const double ni = static_cast<double>(n);
  const double ii = static_cast<double>(i);
  return std::lgamma(ni + 1.0) - std::lgamma(ii + 1.0) -
         std::lgamma(ni - ii + 1.0) + ii * std::log(p) +
         (ni - ii) * std::log1p(-p);
}

}  // namespace

double binom_cdf(std::int64_t k, std::int64_t n, double p) {
  if (n < 0 || k < 0 || k > n) {
    throw ConfigError("binom_cdf needs 0 <= k <= n, got k = " +
                      std::to_string(k) + ", n = " + std::to_string(n));
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError("binom_cdf needs p in [0, 1], got " + std::to_string(p));
  }
  if (k == n || p == 0.0) return 1.0;
  if (p == 1.0) return 0.0;

  const double odds = (1.0 - p) / p;
  const auto mode = static_cast<std::int64_t>(
      std::floor(static_cast<double>(n + 1) * p));
  if (k < mode) {
    // Terms shrink walking down from k; anchor at pmf(k).
    double term = 1.0;
    double rel = 1.0;
    for (std::int64_t i = k; i >= 1 && term > 0.0; --i) {
      term *= static_cast<double>(i) / static_cast<double>(n - i + 1) * odds;
      rel += term;
    }
    return std::clamp(std::exp(log_binom_pmf(k, n, p) + std::log(rel)), 0.0,
                      1.0);
  }
  // Upper tail shrinks walking up from k + 1.
  double term = 1.0;
  double rel = 1.0;
  for (std::int64_t i = k + 1; i < n && term > 0.0; ++i) {
    term *= static_cast<double>(n - i) / static_cast<double>(i + 1) / odds;
    rel += term;
  }
  const double upper = std::exp(log_binom_pmf(k + 1, n, p) + std::log(rel));
  return std::clamp(1.0 - upper, 0.0, 1.0);
}

double hb_pvalue(double risk_hat, std::int64_t n, double epsilon_scaled) {
  if (n < 1) throw ConfigError("hb_pvalue needs n >= 1");
  if (!(risk_hat >= 0.0 && risk_hat <= 1.0)) {
    throw ConfigError("empirical risk " + std::to_string(risk_hat) +
                      " must lie in [0, 1]");
  }
  const double nn = static_cast<double>(n);
  const double hoeffding =
      std::exp(-nn * kl_bernoulli(std::min(risk_hat, epsilon_scaled),
                                  epsilon_scaled));
  const double scaled_count = nn * risk_hat;
  const double nearest = std::round(scaled_count);
  const double count = std::abs(scaled_count - nearest) <= 1e-9
                           ? nearest
                           : std::ceil(scaled_count);
  const auto k = std::clamp<std::int64_t>(static_cast<std::int64_t>(count), 0, n);
  const double bentkus = std::numbers::e * binom_cdf(k, n, epsilon_scaled);
  return std::min({1.0, hoeffding, bentkus});
}

LambdaGrid::LambdaGrid(std::vector<double> values, bool include_sentinel)
    : values_(std::move(values)), include_sentinel_(include_sentinel) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0 && values_[i] <= 1.0)) {
      throw ConfigError("grid value " + std::to_string(values_[i]) +
                        " is outside [0, 1]");
    }
    if (i > 0 && !(values_[i] < values_[i - 1])) {
      throw ConfigError("grid values must be strictly decreasing");
    }
  }
}

LambdaGrid LambdaGrid::uniform(std::size_t points, bool include_sentinel) {
  if (points < 2) throw ConfigError("a uniform grid needs at least 2 points");
  std::vector<double> values(points);
  const double steps = static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) {
    values[i] = static_cast<double>(points - 1 - i) / steps;
  }
  return LambdaGrid(std::move(values), include_sentinel);
}

std::vector<Threshold> LambdaGrid::candidates() const {
  std::vector<Threshold> out;
  out.reserve(values_.size() + 1);
  if (include_sentinel_) out.push_back(Threshold::zero_shot_only());
  for (double v : values_) out.push_back(Threshold::at(v));
  return out;
}

GridTallies tally_grid(std::span<const ScoredRecord> records,
                       const LambdaGrid& grid, const ExitPolicy& policy) {
  const auto values = grid.values();
  GridTallies out;
  out.values.assign(values.size(), LossTally{});
  std::vector<double> running_max;
  for (const ScoredRecord& r : records) {
    if (r.measure != policy.measure) {
      throw ConfigError("record was scored with a different confidence measure");
    }
    const std::size_t L = r.num_layers();
    const std::size_t first = policy.first_exit_layer;
    if (first < 1 || first > L) {
      throw ConfigError("first exit layer " + std::to_string(first) +
                        " is outside [1, " + std::to_string(L) + "]");
    }
    const int zs_loss = base_loss(r.zero_shot_prediction, r.true_label);
    out.sentinel.add(0);

    // running_max[l] = max confidence over layers first..l (1-based l).
    running_max.assign(L + 1, 0.0);
    double m = -1.0;
    for (std::size_t l = first; l <= L; ++l) {
      m = std::max(m, r.confidence[l - 1]);
      running_max[l] = m;
    }
    // The exit layer only moves earlier as the threshold decreases.
    std::size_t exit = L + 1;
    for (std::size_t j = 0; j < values.size(); ++j) {
      while (exit > first && running_max[exit - 1] >= values[j]) --exit;
      const ClassIndex pred =
          exit <= L ? r.prediction[exit - 1] : r.zero_shot_prediction;
      out.values[j].add(base_loss(pred, r.true_label) - zs_loss);
    }
  }
  return out;
}

namespace {

// Tested level and risk for a [0, 1]-bounded view of the mode's loss.
struct TestedScale {
  double risk;
  double level;
};

TestedScale tested_scale(const LossTally& tally, const RiskBudget& budget,
                         const LossSpec& spec) {
  switch (spec.mode()) {
    case LossMode::scaled:
      return {tally.risk(spec), scale_epsilon(budget.epsilon(), spec)};
    case LossMode::clipped: {
      const LossSpec clipped_range(LossMode::clipped, 0.0, spec.upper());
      return {tally.risk(spec) / spec.upper(),
              scale_epsilon(budget.epsilon(), clipped_range)};
    }
    case LossMode::raw: break;
  }
  throw BudgetError(
      "the raw ICL loss is not bounded in [0, 1]; certify in scaled or "
      "clipped mode");
}

}  // namespace

Certification certify(const Threshold& lambda, const LossTally& tally,
                      const RiskBudget& budget, const LossSpec& spec) {
  if (tally.n == 0) throw ValidationError("no records");
  const TestedScale scale = tested_scale(tally, budget, spec);
  Certification c;
  c.lambda = lambda;
  c.n = tally.n;
  c.empirical_risk = tally.risk(spec);
  c.icl_risk = tally.risk(spec.with_mode(LossMode::raw));
  if (lambda.is_zero_shot_only()) {
    c.p_value = 0.0;
    c.certified = true;
    return c;
  }
  c.p_value = hb_pvalue(std::clamp(scale.risk, 0.0, 1.0), tally.n, scale.level);
  c.certified = c.p_value <= budget.delta();
  return c;
}

Certification certify(const Threshold& lambda,
                      std::span<const ExampleRecord> records,
                      const RiskBudget& budget, const LossSpec& spec,
                      const ExitPolicy& policy) {
  if (records.empty()) throw ValidationError("no records");
  const auto scored = score_records(records, policy.measure);
  LossTally tally;
  if (lambda.is_zero_shot_only()) {
    for (std::size_t i = 0; i < scored.size(); ++i) tally.add(0);
  } else {
    tally = tally_losses(scored, policy.with_lambda(lambda));
  }
  return certify(lambda, tally, budget, spec);
}

Selection ltt_select(const LambdaGrid& grid, const GridTallies& tallies,
                     const RiskBudget& budget, const LossSpec& spec) {
  if (!grid.include_sentinel()) {
    throw ConfigError("fixed-sequence selection needs the sentinel first");
  }
  if (tallies.values.size() != grid.values().size()) {
    throw ConfigError("tallies do not match the grid");
  }
  Selection s;
  Certification first =
      certify(Threshold::zero_shot_only(), tallies.sentinel, budget, spec);
  s.trail.push_back(first);
  const auto values = grid.values();
  for (std::size_t j = 0; j < values.size(); ++j) {
    Certification c =
        certify(Threshold::at(values[j]), tallies.values[j], budget, spec);
    const bool ok = c.certified;
    s.trail.push_back(std::move(c));
    if (!ok) break;
    s.lambda_hat = Threshold::at(values[j]);
  }
  return s;
}

Selection ltt_select(std::span<const ScoredRecord> records,
                     const LambdaGrid& grid, const RiskBudget& budget,
                     const LossSpec& spec, const ExitPolicy& policy) {
  if (records.empty()) throw ValidationError("no records");
  return ltt_select(grid, tally_grid(records, grid, policy), budget, spec);
}

Selection ltt_select(std::span<const ExampleRecord> records,
                     const LambdaGrid& grid, const RiskBudget& budget,
                     const LossSpec& spec, const ExitPolicy& policy) {
  const auto scored = score_records(records, policy.measure);
  return ltt_select(std::span<const ScoredRecord>(scored), grid, budget, spec,
                    policy);
}

}  // namespace safeicl
