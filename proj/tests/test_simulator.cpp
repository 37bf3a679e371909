// tests/test_simulator.cpp

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "golden.hpp"
#include "safeicl/errors.hpp"
#include "safeicl/simulator.hpp"
#include "safeicl/trace_io.hpp"

using namespace safeicl;

namespace {

const ExitPolicy kPolicy{Threshold::at(0.8), 16, ConfidenceMeasure::argmax};

SimProfile noiseless(double mix) {
  SimProfile p = SimProfile::default_profile();
  p.noise_amplitude = 0.0;
  p.mix = mix;
  for (double& s : p.signal_schedule) s *= 10.0;
  return p;
}

}  // namespace

TEST_CASE("default profile") {
  const SimProfile p = SimProfile::default_profile();
  CHECK_NOTHROW(p.validate());
  CHECK(p.num_layers == 32);
  CHECK(p.first_exit_layer == 16);
  CHECK(p.num_classes == 4);
  CHECK(p.mix == 0.5);
  CHECK(p.signal_schedule.back() == doctest::Approx(2.6).epsilon(1e-15));
  CHECK(p.label_permutation == std::vector<ClassIndex>{1, 2, 3, 0});
  const DiscreteProfile d = DiscreteProfile::default_profile();
  CHECK(d.profile().noise_patterns == 8);
  CHECK(d.atom_count() == 256);
}

TEST_CASE("profile validation") {
  auto broken = [](auto edit) {
    SimProfile p = SimProfile::default_profile();
    edit(p);
    return p;
  };
  CHECK_THROWS_AS(broken([](SimProfile& p) { p.onset_layer = 10; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](SimProfile& p) { p.onset_layer = 33; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](SimProfile& p) { p.mix = 1.5; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](SimProfile& p) { p.label_permutation = {0, 2, 3, 1}; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](SimProfile& p) { p.label_permutation = {1, 1, 3, 0}; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](SimProfile& p) { std::swap(p.signal_schedule[3], p.signal_schedule[9]); })
                      .validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](SimProfile& p) { p.signal_schedule.pop_back(); }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](SimProfile& p) { p.zero_shot_confidence = 0.2; }).validate(),
                  ConfigError);
  CHECK_THROWS_AS(broken([](SimProfile& p) { p.noise_amplitude = -1.0; }).validate(),
                  ConfigError);
  SimProfile nine = SimProfile::default_profile();
  nine.noise_patterns = 9;
  CHECK_THROWS_AS(DiscreteProfile{nine}, ConfigError);
  nine.noise_patterns = 0;
  CHECK_THROWS_AS(DiscreteProfile{nine}, ConfigError);
}

TEST_CASE("profile text round-trip") {
  SimProfile p = SimProfile::default_profile();
  p.content_free_skew = 0.75;
  p.dataset_name = "sst-like";
  const std::string text = format_profile(p);
  const SimProfile q = parse_profile(text);
  CHECK(format_profile(q) == text);
  CHECK(profile_hash(q) == profile_hash(p));
  CHECK(profile_hash(SimProfile::default_profile()) != profile_hash(p));

  const SimProfile minimal = parse_profile("profile_version = 1\nnum_layers = 12\n"
                                           "first_exit_layer = 4\nonset_layer = 8\n");
  CHECK(minimal.signal_schedule.size() == 12);
  CHECK(minimal.signal_schedule == default_signal_schedule(12));

  CHECK_THROWS_AS(parse_profile("num_layers = 12\n"), ConfigError);
  CHECK_THROWS_AS(parse_profile("profile_version = 2\n"), ConfigError);
  try {
    parse_profile("profile_version = 1\n# note\nmix = 0.5\nwidth = 3\n");
    FAIL("expected an unknown-key error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  try {
    parse_profile("profile_version = 1\nmix = 0.5\nmix = 0.6\n");
    FAIL("expected a duplicate-key error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_profile("profile_version = 1\nmix = half\n"), ConfigError);
}

TEST_CASE("degenerate mixes") {
  SimProfile p = SimProfile::default_profile();
  p.mix = 1.0;
  for (const auto& r : simulate_dataset(p, 200, 3)) {
    CHECK(r.context_kind() == ContextKind::correct);
  }
  p.mix = 0.0;
  for (const auto& r : simulate_dataset(p, 200, 3)) {
    CHECK(r.context_kind() == ContextKind::incorrect);
  }
}

TEST_CASE("noiseless traces follow the construction") {
  for (const auto& r : simulate_dataset(noiseless(1.0), 50, 4)) {
    CHECK(r.icl_trace().layer(32).argmax() == r.true_label());
  }
  for (const auto& r : simulate_dataset(noiseless(0.0), 50, 4)) {
    const ClassIndex y = r.true_label();
    CHECK(r.icl_trace().layer(32).argmax() == (y + 1) % 4);
    CHECK(r.icl_trace().layer(23).argmax() == y);
  }
}

TEST_CASE("datasets are deterministic and well formed") {
  const SimProfile p = SimProfile::default_profile();
  const auto a = simulate_dataset(p, 10, 7);
  const auto b = simulate_dataset(p, 10, 7);
  CHECK(format_records(a) == format_records(b));
  CHECK(format_records(a) != format_records(simulate_dataset(p, 10, 8)));
  CHECK(simulate_dataset(p, 1, 7).size() == 1);
  CHECK(a[3].id() == "synthetic-000003");
  CHECK(a.front().content_free_icl_trace().has_value());
  CHECK(a.front().content_free_zero_shot() == uniform(4));
  CHECK_THROWS_AS(simulate_dataset(p, 0, 7), ConfigError);

  // record i does not depend on how many records were drawn
  const auto longer = simulate_dataset(p, 20, 7);
  CHECK(longer[9] == a[9]);

  Rng rng(7, 4);
  CHECK(simulate_record(p, rng, "synthetic-000004") == a[4]);
}

TEST_CASE("mix proportion concentrates") {
  const std::size_t n = 10000;
  std::size_t correct = 0;
  for (const auto& r : simulate_dataset(SimProfile::default_profile(), n, 11)) {
    correct += r.context_kind() == ContextKind::correct;
  }
  const double frac = static_cast<double>(correct) / n;
  CHECK(std::abs(frac - 0.5) <= 3.0 * std::sqrt(0.25 / n));
}

TEST_CASE("accuracy ordering and overthinking shape") {
  const SimProfile p = SimProfile::default_profile();
  const auto records = simulate_dataset(p, 100000, 21);
  double final_correct = 0, n_correct = 0, final_incorrect = 0, n_incorrect = 0;
  double peak_incorrect = 0, zs = 0;
  for (const auto& r : records) {
    const ClassIndex y = r.true_label();
    zs += r.zero_shot_final().argmax() == y;
    if (r.context_kind() == ContextKind::correct) {
      ++n_correct;
      final_correct += r.icl_trace().layer(32).argmax() == y;
    } else {
      ++n_incorrect;
      final_incorrect += r.icl_trace().layer(32).argmax() == y;
      peak_incorrect += r.icl_trace().layer(p.onset_layer - 1).argmax() == y;
    }
  }
  const double acc_c = final_correct / n_correct;
  const double acc_i = final_incorrect / n_incorrect;
  const double acc_zs = zs / static_cast<double>(records.size());
  const double acc_peak = peak_incorrect / n_incorrect;
  MESSAGE("final correct ", acc_c, ", zero-shot ", acc_zs, ", final incorrect ",
          acc_i, ", incorrect at onset - 1 ", acc_peak);
  CHECK(acc_c - acc_zs >= 0.05);
  CHECK(acc_zs - acc_i >= 0.05);
  CHECK(acc_peak - acc_i >= 0.1);
}

TEST_CASE("content-free skew is removed by calibration") {
  SimProfile p = SimProfile::default_profile();
  p.content_free_skew = 2.0;
  const auto skewed = simulate_dataset(p, 300, 5);
  const auto plain = simulate_dataset(SimProfile::default_profile(), 300, 5);
  for (std::size_t i = 0; i < skewed.size(); ++i) {
    const LayerTrace cal = skewed[i].effective_icl_trace();
    for (std::size_t l = 1; l <= 32; ++l) {
      for (std::size_t k = 0; k < 4; ++k) {
        REQUIRE(cal.layer(l)[k] == doctest::Approx(plain[i].icl_trace().layer(l)[k]).epsilon(1e-9));
      }
    }
    CHECK(skewed[i].effective_zero_shot().argmax() == plain[i].zero_shot_final().argmax());
  }
}

TEST_CASE("oracle risk basics") {
  const DiscreteProfile d = DiscreteProfile::default_profile();
  CHECK(oracle_risk(d, kPolicy.with_lambda(Threshold::zero_shot_only()),
                    LossSpec(LossMode::raw)) == 0.0);

  SimProfile clean = noiseless(1.0);
  clean.noise_patterns = 1;
  clean.zero_shot_accuracy = 1.0;
  const ExitPolicy immediate{Threshold::at(0.0), 16, ConfidenceMeasure::argmax};
  CHECK(oracle_risk(DiscreteProfile(clean), immediate, LossSpec(LossMode::raw)) == 0.0);

  // total atom weight is one: the scaled risk of a zero loss is 0.5
  CHECK(oracle_risk(d, kPolicy.with_lambda(Threshold::zero_shot_only()),
                    LossSpec(LossMode::scaled)) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("oracle curve agrees with pointwise oracle") {
  const DiscreteProfile d = DiscreteProfile::default_profile();
  const LambdaGrid grid = LambdaGrid::uniform(21);
  for (auto mode : {LossMode::raw, LossMode::clipped}) {
    const auto curve = oracle_risk_curve(d, grid, kPolicy, LossSpec(mode));
    for (std::size_t j = 0; j < curve.size(); ++j) {
      CHECK(curve[j] == doctest::Approx(oracle_risk(d, kPolicy.with_lambda(
                                                          Threshold::at(grid.values()[j])),
                                                    LossSpec(mode)))
                            .epsilon(1e-15));
    }
  }
}

TEST_CASE("Monte-Carlo oracle") {
  const DiscreteProfile d = DiscreteProfile::default_profile();
  const MonteCarloEstimate s =
      oracle_risk_mc(d.profile(), kPolicy.with_lambda(Threshold::zero_shot_only()),
                     LossSpec(LossMode::raw), 10000, 1);
  CHECK(s.mean == 0.0);
  CHECK(s.standard_error == 0.0);
  CHECK_THROWS_AS(oracle_risk_mc(d.profile(), kPolicy, LossSpec(LossMode::raw), 9999, 1),
                  ConfigError);

  const auto a = oracle_risk_mc(d.profile(), kPolicy, LossSpec(LossMode::raw), 20000, 2);
  const auto b = oracle_risk_mc(d.profile(), kPolicy, LossSpec(LossMode::raw), 40000, 2);
  const double ratio = b.standard_error / a.standard_error;
  CHECK(std::abs(ratio - 1.0 / std::sqrt(2.0)) <= 0.2 / std::sqrt(2.0));
}

TEST_CASE("exact oracle golden value and Monte-Carlo agreement") {
  const DiscreteProfile d = DiscreteProfile::default_profile();
  const double exact = oracle_risk(d, kPolicy, LossSpec(LossMode::raw));
  CHECK(exact == doctest::Approx(golden::kOracleRiskDiscreteAt08).epsilon(1e-12));
  const auto mc = oracle_risk_mc(d.profile(), kPolicy, LossSpec(LossMode::raw), 1'000'000, 99);
  MESSAGE("exact ", exact, ", Monte-Carlo ", mc.mean, " +- ", mc.standard_error);
  CHECK(std::abs(mc.mean - exact) <= 4.0 * mc.standard_error);
}
