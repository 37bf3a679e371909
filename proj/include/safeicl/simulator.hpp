// safeicl/simulator.hpp

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
#include <string>
#include <string_view>
#include <vector>

#include "safeicl/cascade.hpp"
#include "safeicl/loss.hpp"
#include "safeicl/random.hpp"
#include "safeicl/risk_control.hpp"

namespace safeicl {

/// Parametric generator of early-exit traces with demonstrations that either
/// help (correct context) or harm from `onset_layer` on (incorrect context).
///
/// Layer l of a record with label y gets scores
///
///   correct, or l < onset:  s_l * [k = y]                              + noise
///   incorrect, l >= onset:  s_l * [k = tau(y)] + retention*s_l*[k = y] + noise
///
/// softmax-normalised. Noise is noise_amplitude times either fresh standard
/// normals (noise_patterns = 0) or one of `noise_patterns` fixed patterns
/// drawn from `seed`, indexed relative to y. The zero-shot final vector puts
/// zero_shot_confidence on y with probability zero_shot_accuracy, otherwise
/// on a uniformly chosen wrong label.
struct SimProfile {
  std::string dataset_name = "synthetic";
  std::size_t num_layers = 32;
  std::size_t num_classes = 4;
  std::size_t first_exit_layer = 16;
  double mix = 0.5;  // fraction of correct-context records
  std::size_t onset_layer = 24;
  std::vector<double> signal_schedule;  // s_1 ... s_L, nondecreasing
  double noise_amplitude = 1.0;
  std::size_t noise_patterns = 0;
  double retention = 0.8;
  double zero_shot_accuracy = 0.7;
  double zero_shot_confidence = 0.6;
  std::vector<ClassIndex> label_permutation;  // tau, a derangement
  /// Label bias applied to every emitted vector; the content-free vectors
  /// carry the same bias so calibration removes it. 0 means uniform.
  double content_free_skew = 0.0;
  std::uint64_t seed = 1;

  /// 32 layers, 4 classes, first exit 16, onset 24, continuous noise.
  static SimProfile default_profile();

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// s_l = 2.6 (l / L)^1.5.
std::vector<double> default_signal_schedule(std::size_t num_layers);
/// tau(y) = (y + 1) mod K.
std::vector<ClassIndex> cyclic_permutation(std::size_t num_classes);

/// Key = value text form with a fixed key order.
std::string format_profile(const SimProfile& profile);
/// Throws ConfigError with the offending line on malformed input.
SimProfile parse_profile(std::string_view text);
SimProfile load_profile(const std::filesystem::path& path);
void save_profile(const SimProfile& profile, const std::filesystem::path& path);
/// FNV-1a of the canonical text form.
std::uint64_t profile_hash(const SimProfile& profile);

/// Upper bound on enumerated atoms.
inline constexpr std::size_t kMaxOracleAtoms = 1'000'000;

/// A SimProfile whose noise takes one of at most 8 fixed patterns, so the
/// outcome space (context kind x pattern x label x zero-shot label) can be
/// enumerated exactly.
class DiscreteProfile {
 public:
  explicit DiscreteProfile(SimProfile profile);

  /// default_profile() with 8 noise patterns from bank seed 1878.
  static DiscreteProfile default_profile();

  const SimProfile& profile() const { return profile_; }
  std::size_t atom_count() const;

 private:
  SimProfile profile_;
};

ExampleRecord simulate_record(const SimProfile& profile, Rng& rng,
                              std::string id = "sim-0");

/// Record i is drawn from substream i of `seed`, so output is independent
/// of evaluation order.
std::vector<ExampleRecord> simulate_dataset(const SimProfile& profile,
                                            std::size_t n, std::uint64_t seed);

/// Exact expected mode-selected loss by enumeration of every atom.
double oracle_risk(const DiscreteProfile& profile, const ExitPolicy& policy,
                   const LossSpec& spec);

/// oracle_risk at every grid value (aligned with grid.values()). The
/// sentinel's risk is zero and is not included.
std::vector<double> oracle_risk_curve(const DiscreteProfile& profile,
                                      const LambdaGrid& grid,
                                      const ExitPolicy& policy,
                                      const LossSpec& spec);

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
};

/// Monte-Carlo mean of the mode-selected loss; n_samples >= 10000.
MonteCarloEstimate oracle_risk_mc(const SimProfile& profile,
                                  const ExitPolicy& policy,
                                  const LossSpec& spec, std::size_t n_samples,
                                  std::uint64_t seed);

}  // namespace safeicl
