// tests/test_trace_io.cpp

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
#include <filesystem>
#include <string>
#include <vector>

#include "safeicl/errors.hpp"
#include "safeicl/simulator.hpp"
#include "safeicl/trace_io.hpp"
#include "test_util.hpp"

using namespace safeicl;
namespace fs = std::filesystem;

namespace {

const std::string kHeader =
    R"({"format_version":1,"dataset_name":"toy","L":2,"K":2,"producer":"hand"})";

std::string record_line(const std::string& id, const std::string& layers,
                        const std::string& extra = "") {
  return R"({"id":")" + id + R"(","dataset":"toy","context_kind":"correct",)"
         R"("true_label":1,"icl_layer_probs":)" + layers +
         R"(,"zero_shot_final_probs":[0.4,0.6])" + extra + "}";
}

const std::string kGood = "[[0.5,0.5],[0.25,0.75]]";

ValidationError parse_error(const std::string& text) {
  try {
    parse_records(text);
  } catch (const ValidationError& e) {
    return e;
  }
  FAIL("expected a validation error");
  return ValidationError("unreachable");
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "safeicl_test_trace_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("hand-written file parses") {
  const auto f = parse_records(kHeader + "\n" + record_line("a", kGood) + "\n" +
                               record_line("b", kGood) + "\n");
  CHECK(f.header.dataset_name == "toy");
  CHECK(f.header.producer == "hand");
  CHECK(f.header.num_layers == 2);
  REQUIRE(f.records.size() == 2);
  CHECK(f.records[1].id() == "b");
  CHECK(f.records[0].true_label() == 1);
  CHECK(f.records[0].icl_trace().layer(2)[1] == 0.75);
  CHECK_FALSE(f.records[0].content_free_icl_trace().has_value());
}

TEST_CASE("empty payload") {
  const auto e = parse_error(kHeader + "\n");
  CHECK(e.detail() == "no records");
  CHECK(parse_error("").detail() == "missing header");
}

TEST_CASE("sum violation names record, field and line") {
  const auto e = parse_error(kHeader + "\n" + record_line("a", kGood) + "\n" +
                             record_line("bad-7", "[[0.5,0.5],[0.5,1.0]]") + "\n");
  CHECK(e.record_id() == "bad-7");
  CHECK(e.line() == 3u);
  CHECK(e.field() == "icl_layer_probs[2]");
  const std::string what = e.what();
  CHECK(what.find("line 3") != std::string::npos);
  CHECK(what.find("bad-7") != std::string::npos);
  CHECK(what.find("sum to 1.5") != std::string::npos);
}

TEST_CASE("shape mismatches against the header") {
  auto e = parse_error(kHeader + "\n" + record_line("a", "[[0.5,0.5]]") + "\n");
  CHECK(e.field() == "icl_layer_probs");
  CHECK(e.line() == 2u);
  e = parse_error(kHeader + "\n" + record_line("a", "[[0.5,0.5],[0.2,0.3,0.5]]") + "\n");
  CHECK(e.field() == "icl_layer_probs[2]");
  e = parse_error(kHeader + "\n" +
                  record_line("a", kGood, R"(,"content_free_zero_shot_probs":[0.2,0.3,0.5])") +
                  "\n");
  CHECK(e.field() == "content_free_zero_shot_probs");
}

TEST_CASE("key errors") {
  auto e = parse_error(kHeader + "\n" + record_line("a", kGood, R"(,"colour":"red")") + "\n");
  CHECK(e.field() == "colour");
  CHECK(e.detail() == "unknown key");
  e = parse_error(kHeader + "\n" + R"({"id":"q","dataset":"toy","context_kind":"correct",)"
                  R"("true_label":1,"icl_layer_probs":[[0.5,0.5],[0.5,0.5]]})" + "\n");
  CHECK(e.field() == "zero_shot_final_probs");
  CHECK(e.detail() == "missing key");
  CHECK(e.record_id() == "q");
  e = parse_error(R"({"format_version":2,"dataset_name":"toy","L":2,"K":2,"producer":""})"
                  "\n" + record_line("a", kGood) + "\n");
  CHECK(e.line() == 1u);
  CHECK(e.field() == "header.format_version");
  e = parse_error(kHeader + "\n" + record_line("a", kGood) + "\nnot json\n");
  CHECK(e.line() == 3u);
  e = parse_error(kHeader + "\n\n" + record_line("a", kGood) + "\n");
  CHECK(e.line() == 2u);
  std::string wrong_kind = record_line("a", kGood);
  wrong_kind.replace(wrong_kind.find("\"correct\""), 9, "\"neutral\"");
  e = parse_error(kHeader + "\n" + wrong_kind + "\n");
  CHECK(e.field() == "context_kind");
  std::string label = record_line("a", kGood);
  label.replace(label.find("\"true_label\":1"), 14, "\"true_label\":2");
  e = parse_error(kHeader + "\n" + label + "\n");
  CHECK(e.field() == "true_label");
}

TEST_CASE("canonical form and round trip") {
  SimProfile p = SimProfile::default_profile();
  p.content_free_skew = 1.0;
  const auto records = simulate_dataset(p, 25, 9);
  const std::string text = format_records(records);
  CHECK(text == format_records(records));

  const auto loaded = parse_records(text).records;
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].id() == records[i].id());
    CHECK(loaded[i].context_kind() == records[i].context_kind());
    CHECK(loaded[i].true_label() == records[i].true_label());
    CHECK(loaded[i].content_free_icl_trace().has_value());
    for (std::size_t l = 1; l <= 32; ++l) {
      for (std::size_t k = 0; k < 4; ++k) {
        REQUIRE(std::abs(loaded[i].icl_trace().layer(l)[k] -
                         records[i].icl_trace().layer(l)[k]) <= 5e-9);
      }
    }
  }
  // once canonical, save and load are exact inverses
  CHECK(format_records(loaded) == text);
  CHECK(parse_records(format_records(loaded)).records == loaded);

  const fs::path path = temp_path("round.jsonl");
  save_records(loaded, path);
  CHECK(load_records(path) == loaded);
  CHECK(read_text(path) == text);
}

TEST_CASE("optional fields") {
  using safeicl::testing::record_of;
  using safeicl::testing::trace_of;
  const ExampleRecord plain = record_of(trace_of({{0.5, 0.5}, {0.3, 0.7}}), {0.4, 0.6}, 1);
  const std::string a = format_records(std::vector<ExampleRecord>{plain});
  CHECK(a.find("content_free") == std::string::npos);
  const ExampleRecord with_cf("r1", "toy", ContextKind::incorrect, 1,
                              trace_of({{0.5, 0.5}, {0.3, 0.7}}), ProbVector({0.4, 0.6}),
                              trace_of({{0.5, 0.5}, {0.5, 0.5}}), ProbVector({0.5, 0.5}));
  const std::string b = format_records(std::vector<ExampleRecord>{with_cf});
  CHECK(b.find("\"content_free_icl_layer_probs\":[[0.5,0.5],[0.5,0.5]]") != std::string::npos);
  CHECK(b.find("\"content_free_zero_shot_probs\":[0.5,0.5]") != std::string::npos);
  CHECK(b.find(R"("context_kind":"incorrect")") != std::string::npos);
  CHECK(parse_records(b).records.front() == with_cf);
}

TEST_CASE("inconsistent record sets are not saved") {
  using safeicl::testing::record_of;
  using safeicl::testing::trace_of;
  CHECK_THROWS_AS(format_records(std::vector<ExampleRecord>{}), ValidationError);
  const std::vector<ExampleRecord> mixed = {
      record_of(trace_of({{0.5, 0.5}, {0.3, 0.7}}), {0.4, 0.6}, 1),
      record_of(trace_of({{0.5, 0.5}, {0.3, 0.7}, {0.3, 0.7}}), {0.4, 0.6}, 1)};
  CHECK_THROWS_AS(format_records(mixed), ValidationError);
}

TEST_CASE("selection files round-trip") {
  SelectionFile s;
  s.lambda_hat = Threshold::at(0.37);
  s.mode = LossMode::clipped;
  s.epsilon = 0.1;
  s.delta = 0.05;
  s.epsilon_scaled = 0.1;
  s.measure = ConfidenceMeasure::top2;
  s.first_exit_layer = 16;
  s.grid_points = 101;
  s.n = 2000;
  Certification a;
  a.lambda = Threshold::zero_shot_only();
  a.p_value = 0.0;
  a.certified = true;
  Certification b;
  b.lambda = Threshold::at(1.0);
  b.empirical_risk = 0.01;
  b.icl_risk = -0.2;
  b.p_value = 4.9406564584124654e-324;
  b.certified = true;
  s.trail = {a, b};
  const std::string text = format_selection(s);
  const SelectionFile t = parse_selection(text);
  CHECK(t.lambda_hat == s.lambda_hat);
  CHECK(t.mode == s.mode);
  CHECK(t.measure == s.measure);
  CHECK(t.trail.size() == 2);
  CHECK(t.trail[0].lambda.is_zero_shot_only());
  CHECK(t.trail[1].p_value == b.p_value);
  CHECK(format_selection(t) == text);
  CHECK_THROWS_AS(parse_selection("{}"), ValidationError);
  CHECK_THROWS_AS(parse_selection("[1"), ValidationError);
}

TEST_CASE("curve files round-trip") {
  CurveFile c;
  c.metadata = {{"seed", "4"}, {"trials", "2"}};
  c.rows = {{0.05, LossMode::scaled, "mean_test_risk", -0.01},
            {0.05, LossMode::scaled, "mean_lambda_hat", std::nan("")},
            {0.1, LossMode::clipped, "mean_test_risk", 0.02}};
  const std::string text = format_curves(c);
  CHECK(text.find("# seed = 4\n") != std::string::npos);
  CHECK(text.find("0.05,scaled,mean_lambda_hat,nan\n") != std::string::npos);
  const CurveFile d = parse_curves(text);
  CHECK(d.metadata == c.metadata);
  CHECK(d.rows.size() == 3);
  CHECK(std::isnan(d.value(0.05, LossMode::scaled, "mean_lambda_hat")));
  CHECK(d.value(0.1, LossMode::clipped, "mean_test_risk") == 0.02);
  CHECK(d.epsilons() == std::vector<double>{0.05, 0.1});
  CHECK(format_curves(d) == text);
  CHECK_THROWS_AS(d.value(0.2, LossMode::scaled, "mean_test_risk"), ValidationError);
  try {
    parse_curves("epsilon,mode,statistic,value\n0.05,scaled,x,1\n0.1,hinge,x,1\n");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.line() == 3u);
  }
  CHECK(curve_statistics(false).size() == 9);
  CHECK(curve_statistics(true).back() == "violation_rate");
}

TEST_CASE("format_double is shortest round-trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-0.012750000000000001) == "-0.012750000000000001");
}
