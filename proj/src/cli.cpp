// src/cli.cpp

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

#include "safeicl/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "safeicl/errors.hpp"
#include "safeicl/harness.hpp"
#include "safeicl/simulator.hpp"
#include "safeicl/trace_io.hpp"

namespace safeicl {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fixed(double v, int digits = 6) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

bool looks_like_trace(const std::string& text) {
  return !text.empty() && text.front() == '{';
}

std::size_t default_first_exit(std::size_t num_layers) {
  return std::max<std::size_t>(1, num_layers / 2);
}

struct SimulateArgs {
  std::string profile;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
};

struct CalibrateArgs {
  std::string data;
  double epsilon = 0.0;
  double delta = 0.05;
  std::string loss = "scaled";
  std::string confidence = "argmax";
  std::size_t first_exit_layer = 0;
  std::size_t grid = 101;
  std::string out;
};

struct EvaluateArgs {
  std::string data;
  std::string selection;
  std::string out;
};

struct SweepArgs {
  std::string source;
  std::vector<double> epsilons;
  std::size_t trials = 100;
  double split = 0.5;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t n = 4000;
  double delta = 0.05;
  std::string confidence = "argmax";
  std::size_t first_exit_layer = 0;
  std::size_t grid = 101;
  std::vector<std::string> modes = {"scaled", "clipped"};
};

struct ReportArgs {
  std::string curves;
  std::string out;
};

int do_simulate(const SimulateArgs& a, std::ostream& out) {
  const SimProfile profile = load_profile(a.profile);
  const auto records = simulate_dataset(profile, a.n, a.seed);
  save_records(records, a.out);
  out << "wrote " << records.size() << " records to " << a.out << "\n";
  return kExitOk;
}

int do_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const auto records = load_records(a.data);
  const LossSpec spec(parse_loss_mode(a.loss));
  if (spec.mode() == LossMode::raw) {
    throw ConfigError("--loss must be scaled or clipped");
  }
  const RiskBudget budget(a.epsilon, a.delta, spec);
  const ExitPolicy policy{Threshold::zero_shot_only(),
                          a.first_exit_layer ? a.first_exit_layer
                                             : default_first_exit(records.front().num_layers()),
                          parse_confidence_measure(a.confidence)};
  const LambdaGrid grid = LambdaGrid::uniform(a.grid);
  const Selection sel = ltt_select(records, grid, budget, spec, policy);

  SelectionFile file;
  file.lambda_hat = sel.lambda_hat;
  file.mode = spec.mode();
  file.epsilon = a.epsilon;
  file.delta = a.delta;
  file.epsilon_scaled = budget.epsilon_scaled();
  file.measure = policy.measure;
  file.first_exit_layer = policy.first_exit_layer;
  file.grid_points = a.grid;
  file.n = static_cast<std::int64_t>(records.size());
  file.trail = sel.trail;
  write_text(a.out, format_selection(file));
  out << "lambda_hat = " << to_string(sel.lambda_hat) << "\n";
  return kExitOk;
}

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto records = load_records(a.data);
  const SelectionFile sel = parse_selection(read_text(a.selection));
  const ExitPolicy policy{sel.lambda_hat, sel.first_exit_layer, sel.measure};
  const auto scored = score_records(records, sel.measure);

  LossTally all;
  LossTally correct;
  LossTally incorrect;
  std::size_t right_safe = 0;
  std::size_t right_zs = 0;
  double layers = 0.0;
  double layers_zs = 0.0;
  for (const auto& r : scored) {
    const int loss = icl_loss(r, policy);
    all.add(loss);
    (r.kind == ContextKind::correct ? correct : incorrect).add(loss);
    right_safe += predict_safe_icl(r, policy) == r.true_label;
    right_zs += r.zero_shot_prediction == r.true_label;
    layers += static_cast<double>(evaluated_layers(r, policy));
    layers_zs += static_cast<double>(evaluated_layers_with_zero_shot(r, policy));
  }
  const double n = static_cast<double>(scored.size());
  const LossSpec raw(LossMode::raw);
  nlohmann::ordered_json j;
  j["lambda_hat"] = sel.lambda_hat.is_zero_shot_only()
                        ? nlohmann::ordered_json("zero_shot_only")
                        : nlohmann::ordered_json(sel.lambda_hat.value());
  j["mode"] = std::string(to_string(sel.mode));
  j["epsilon"] = sel.epsilon;
  j["n"] = scored.size();
  j["icl_risk"] = all.risk(raw);
  j["mode_risk"] = all.risk(LossSpec(sel.mode));
  j["within_budget"] = all.risk(raw) <= sel.epsilon;
  j["accuracy"] = static_cast<double>(right_safe) / n;
  j["zero_shot_accuracy"] = static_cast<double>(right_zs) / n;
  j["mean_evaluated_layers"] = layers / n;
  j["mean_evaluated_layers_with_zero_shot"] = layers_zs / n;
  j["risk_correct"] = correct.n ? nlohmann::ordered_json(correct.risk(raw))
                                : nlohmann::ordered_json(nullptr);
  j["risk_incorrect"] = incorrect.n ? nlohmann::ordered_json(incorrect.risk(raw))
                                    : nlohmann::ordered_json(nullptr);
  write_text(a.out, j.dump(2) + "\n");
  out << "icl_risk = " << format_double(all.risk(raw)) << "\n";
  return kExitOk;
}

int do_sweep(const SweepArgs& a, std::ostream& out) {
  TrialConfig config;
  config.num_trials = a.trials;
  config.calibration_fraction = a.split;
  config.epsilon_grid = a.epsilons;
  config.delta = a.delta;
  config.modes.clear();
  for (const auto& m : a.modes) config.modes.push_back(parse_loss_mode(m));
  config.measure = parse_confidence_measure(a.confidence);
  config.seed = a.seed;
  config.grid = LambdaGrid::uniform(a.grid);
  config.first_exit_layer = a.first_exit_layer;
  config.records_per_trial = a.n;

  const std::string text = read_text(a.source);
  std::vector<std::pair<std::string, std::string>> meta = {
      {"seed", std::to_string(a.seed)},
      {"trials", std::to_string(a.trials)},
      {"split", format_double(a.split)},
      {"delta", format_double(a.delta)},
      {"confidence", a.confidence},
      {"grid", std::to_string(a.grid)},
  };
  TrialReport report;
  if (looks_like_trace(text)) {
    const auto records = parse_records(text).records;
    meta.emplace_back("source", "data");
    meta.emplace_back("data_hash", hex64(fnv1a(text)));
    meta.emplace_back("records", std::to_string(records.size()));
    report = run_trials(records, config);
  } else {
    const SimProfile profile = parse_profile(text);
    meta.emplace_back("source", "profile");
    meta.emplace_back("profile_hash", hex64(profile_hash(profile)));
    meta.emplace_back("records_per_trial", std::to_string(a.n));
    if (profile.noise_patterns > 0) {
      report = run_trials(DiscreteProfile(profile), config);
    } else {
      report = run_trials(profile, config);
    }
  }
  meta.emplace_back("first_exit_layer", std::to_string(report.first_exit_layer));
  meta.emplace_back("degenerate", report.degenerate ? "true" : "false");
  for (const auto& c : report.cells) {
    meta.emplace_back("split_fingerprint " + format_double(c.epsilon) + " " +
                          std::string(to_string(c.mode)),
                      hex64(c.split_fingerprint));
  }
  const CurveFile curves = curves_from_report(report, std::move(meta));
  write_text(a.out, format_curves(curves));
  out << "wrote " << curves.rows.size() << " curve rows to " << a.out << "\n";
  return kExitOk;
}

int do_report(const ReportArgs& a, std::ostream& out) {
  const CurveFile curves = parse_curves(read_text(a.curves));
  const std::filesystem::path dir(a.out);
  const auto eps = curves.epsilons();
  const auto modes = curves.modes();

  std::string risk = "epsilon,mode,mean_test_risk,se_test_risk,upper_2se,within_budget\n";
  std::string cc = "# " + std::string(kClassConditionalCaveat) + "\n" +
                   "epsilon,mode,risk_correct,risk_incorrect\n";
  for (double e : eps) {
    for (LossMode m : modes) {
      const double mean = curves.value(e, m, "mean_test_risk");
      const double se = curves.value(e, m, "se_test_risk");
      risk += format_double(e) + "," + std::string(to_string(m)) + "," +
              format_double(mean) + "," + format_double(se) + "," +
              format_double(mean - 2.0 * se) + "," +
              (mean <= e + 2.0 * se ? "true" : "false") + "\n";
      cc += format_double(e) + "," + std::string(to_string(m)) + "," +
            format_double(curves.value(e, m, "risk_correct")) + "," +
            format_double(curves.value(e, m, "risk_incorrect")) + "\n";
    }
  }

  std::string eff = "epsilon,layers_scaled,layers_clipped,relative_savings\n";
  std::string md = "# Sweep summary\n\n";
  for (const auto& [k, v] : curves.metadata) md += "- " + k + ": " + v + "\n";
  md += "\n| epsilon | mode | mean test risk | SE | mean lambda | sentinel rate | "
        "mean layers |\n|---|---|---|---|---|---|---|\n";
  for (double e : eps) {
    for (LossMode m : modes) {
      md += "| " + format_double(e) + " | " + std::string(to_string(m)) + " | " +
            fixed(curves.value(e, m, "mean_test_risk")) + " | " +
            fixed(curves.value(e, m, "se_test_risk")) + " | " +
            fixed(curves.value(e, m, "mean_lambda_hat"), 3) + " | " +
            fixed(curves.value(e, m, "sentinel_rate"), 3) + " | " +
            fixed(curves.value(e, m, "mean_evaluated_layers"), 3) + " |\n";
    }
  }
  const bool both = std::find(modes.begin(), modes.end(), LossMode::scaled) != modes.end() &&
                    std::find(modes.begin(), modes.end(), LossMode::clipped) != modes.end();
  if (!both) {
    throw ProtocolError("efficiency needs both scaled and clipped rows");
  }
  md += "\n| epsilon | layers (scaled) | layers (clipped) | relative savings |\n"
        "|---|---|---|---|\n";
  for (double e : eps) {
    const double s = curves.value(e, LossMode::scaled, "mean_evaluated_layers");
    const double c = curves.value(e, LossMode::clipped, "mean_evaluated_layers");
    const double saving = c > 0.0 ? (c - s) / c : std::nan("");
    eff += format_double(e) + "," + format_double(s) + "," + format_double(c) + "," +
           format_double(saving) + "\n";
    md += "| " + format_double(e) + " | " + fixed(s, 3) + " | " + fixed(c, 3) +
          " | " + fixed(saving, 4) + " |\n";
  }
  md += "\nNote: " + std::string(kClassConditionalCaveat) + ".\n";

  write_text(dir / "risk_curve.csv", risk);
  write_text(dir / "efficiency.csv", eff);
  write_text(dir / "class_conditional.csv", cc);
  write_text(dir / "summary.md", md);
  out << "wrote report to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Risk-controlled early exit for in-context prediction", "safeicl"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Sample a trace file from a profile");
  simulate->add_option("--profile", sim.profile, "profile file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--n", sim.n, "number of records")->required()->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim.seed, "random seed")->required();
  simulate->add_option("--out", sim.out, "output trace file")->required();

  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "Select a threshold on a trace file");
  calibrate->add_option("--data", cal.data)->required()->check(CLI::ExistingFile);
  calibrate->add_option("--epsilon", cal.epsilon)->required();
  calibrate->add_option("--delta", cal.delta)->capture_default_str();
  calibrate->add_option("--loss", cal.loss)->check(CLI::IsMember({"scaled", "clipped"}))->capture_default_str();
  calibrate->add_option("--confidence", cal.confidence)
      ->check(CLI::IsMember({"argmax", "top2", "entropy"}))->capture_default_str();
  calibrate->add_option("--first-exit-layer", cal.first_exit_layer, "0 means L / 2")->capture_default_str();
  calibrate->add_option("--grid", cal.grid, "number of grid points")->capture_default_str();
  calibrate->add_option("--out", cal.out)->required();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Apply a selection to a trace file");
  evaluate->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--selection", ev.selection)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", ev.out)->required();

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Repeated calibration/test trials");
  sweep->add_option("--profile-or-data", sw.source)->required()->check(CLI::ExistingFile);
  sweep->add_option("--epsilons", sw.epsilons, "comma-separated list")->required()->delimiter(',');
  sweep->add_option("--trials", sw.trials)->capture_default_str();
  sweep->add_option("--split", sw.split, "calibration fraction")->capture_default_str();
  sweep->add_option("--seed", sw.seed)->required();
  sweep->add_option("--out", sw.out)->required();
  sweep->add_option("--n", sw.n, "records per trial (profiles)")->capture_default_str();
  sweep->add_option("--delta", sw.delta)->capture_default_str();
  sweep->add_option("--confidence", sw.confidence)
      ->check(CLI::IsMember({"argmax", "top2", "entropy"}))->capture_default_str();
  sweep->add_option("--first-exit-layer", sw.first_exit_layer)->capture_default_str();
  sweep->add_option("--grid", sw.grid)->capture_default_str();
  sweep->add_option("--modes", sw.modes)->delimiter(',')
      ->check(CLI::IsMember({"scaled", "clipped"}));

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "Derive tables from a curve file");
  report->add_option("--curves", rep.curves)->required()->check(CLI::ExistingFile);
  report->add_option("--out", rep.out, "output directory")->required();

  if (!args.empty() && !args.front().starts_with('-') &&
      app.get_subcommand_no_throw(args.front()) == nullptr) {
    err << "usage error: unknown subcommand '" << args.front()
        << "', expected simulate, calibrate, evaluate, sweep or report\n";
    return kExitUsage;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) return do_simulate(sim, out);
    if (calibrate->parsed()) return do_calibrate(cal, out);
    if (evaluate->parsed()) return do_evaluate(ev, out);
    if (sweep->parsed()) return do_sweep(sw, out);
    return do_report(rep, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace safeicl
