// src/simulator.cpp

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

#include "safeicl/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "safeicl/errors.hpp"

namespace safeicl {

std::vector<double> default_signal_schedule(std::size_t num_layers) {
  std::vector<double> s(num_layers);
  for (std::size_t l = 1; l <= num_layers; ++l) {
    s[l - 1] = 2.6 * std::pow(static_cast<double>(l) /
                                  static_cast<double>(num_layers),
                              1.5);
  }
  return s;
}

std::vector<ClassIndex> cyclic_permutation(std::size_t num_classes) {
  std::vector<ClassIndex> tau(num_classes);
  for (std::size_t y = 0; y < num_classes; ++y) tau[y] = (y + 1) % num_classes;
  return tau;
}

SimProfile SimProfile::default_profile() {
  SimProfile p;
  p.signal_schedule = default_signal_schedule(p.num_layers);
  p.label_permutation = cyclic_permutation(p.num_classes);
  return p;
}

void SimProfile::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("profile: " + msg); };
  if (num_layers < 2) fail("num_layers must be at least 2");
  if (num_classes < 2) fail("num_classes must be at least 2");
  if (!(first_exit_layer >= 1 && first_exit_layer <= onset_layer &&
        onset_layer <= num_layers)) {
    fail("need 1 <= first_exit_layer <= onset_layer <= num_layers");
  }
  if (!(mix >= 0.0 && mix <= 1.0)) fail("mix must lie in [0, 1]");
  if (signal_schedule.size() != num_layers) {
    fail("signal_schedule has " + std::to_string(signal_schedule.size()) +
         " values, expected num_layers = " + std::to_string(num_layers));
  }
  for (std::size_t l = 0; l < signal_schedule.size(); ++l) {
    if (!std::isfinite(signal_schedule[l]) || signal_schedule[l] < 0.0) {
      fail("signal_schedule values must be finite and >= 0");
    }
    if (l > 0 && signal_schedule[l] < signal_schedule[l - 1]) {
      fail("signal_schedule must be nondecreasing");
    }
  }
  if (!std::isfinite(noise_amplitude) || noise_amplitude < 0.0) {
    fail("noise_amplitude must be finite and >= 0");
  }
  if (!(retention >= 0.0 && retention <= 1.0)) {
    fail("retention must lie in [0, 1]");
  }
  if (!(zero_shot_accuracy >= 0.0 && zero_shot_accuracy <= 1.0)) {
    fail("zero_shot_accuracy must lie in [0, 1]");
  }
  if (!(zero_shot_confidence > 1.0 / static_cast<double>(num_classes) &&
        zero_shot_confidence <= 1.0)) {
    fail("zero_shot_confidence must lie in (1/K, 1]");
  }
  if (label_permutation.size() != num_classes) {
    fail("label_permutation must have num_classes entries");
  }
  std::vector<bool> seen(num_classes, false);
  for (std::size_t y = 0; y < num_classes; ++y) {
    const ClassIndex t = label_permutation[y];
    if (t >= num_classes || seen[t]) fail("label_permutation is not a permutation");
    if (t == y) fail("label_permutation must move every label");
    seen[t] = true;
  }
  if (!std::isfinite(content_free_skew)) fail("content_free_skew must be finite");
}

// ---------------------------------------------------------------------------
// Text form

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view text, const std::string& where) {
  text = trim(text);
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(where + ": cannot parse '" + std::string(text) +
                      "' as a number");
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view text, const std::string& where) {
  std::vector<T> out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse_number<T>(text.substr(0, comma), where));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

std::string format_profile(const SimProfile& p) {
  std::ostringstream os;
  os << "# safeicl simulation profile\n"
     << "profile_version = 1\n"
     << "dataset_name = " << p.dataset_name << "\n"
     << "num_layers = " << p.num_layers << "\n"
     << "num_classes = " << p.num_classes << "\n"
     << "first_exit_layer = " << p.first_exit_layer << "\n"
     << "onset_layer = " << p.onset_layer << "\n"
     << "mix = " << format_double(p.mix) << "\n"
     << "signal_schedule = " << join(p.signal_schedule) << "\n"
     << "noise_amplitude = " << format_double(p.noise_amplitude) << "\n"
     << "noise_patterns = " << p.noise_patterns << "\n"
     << "retention = " << format_double(p.retention) << "\n"
     << "zero_shot_accuracy = " << format_double(p.zero_shot_accuracy) << "\n"
     << "zero_shot_confidence = " << format_double(p.zero_shot_confidence)
     << "\n"
     << "label_permutation = " << join(p.label_permutation) << "\n"
     << "content_free_skew = " << format_double(p.content_free_skew) << "\n"
     << "seed = " << p.seed << "\n";
  return os.str();
}

SimProfile parse_profile(std::string_view text) {
  SimProfile p = SimProfile::default_profile();
  std::map<std::string, std::string> kv;
  std::map<std::string, std::size_t> line_of;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("profile line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (kv.count(key)) {
      throw ConfigError("profile line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    }
    kv[key] = value;
    line_of[key] = line_no;
  }

  auto where = [&](const std::string& key) {
    return "profile line " + std::to_string(line_of[key]) + " (" + key + ")";
  };
  if (!kv.count("profile_version")) {
    throw ConfigError("profile: missing profile_version");
  }
  if (parse_number<int>(kv["profile_version"], where("profile_version")) != 1) {
    throw ConfigError(where("profile_version") + ": unsupported version");
  }
  bool schedule_given = false;
  bool permutation_given = false;
  for (const auto& [key, value] : kv) {
    const std::string w = where(key);
    if (key == "profile_version") continue;
    if (key == "dataset_name") {
      if (value.empty()) throw ConfigError(w + ": empty dataset name");
      p.dataset_name = value;
    } else if (key == "num_layers") {
      p.num_layers = parse_number<std::size_t>(value, w);
    } else if (key == "num_classes") {
      p.num_classes = parse_number<std::size_t>(value, w);
    } else if (key == "first_exit_layer") {
      p.first_exit_layer = parse_number<std::size_t>(value, w);
    } else if (key == "onset_layer") {
      p.onset_layer = parse_number<std::size_t>(value, w);
    } else if (key == "mix") {
      p.mix = parse_number<double>(value, w);
    } else if (key == "signal_schedule") {
      p.signal_schedule = parse_list<double>(value, w);
      schedule_given = true;
    } else if (key == "noise_amplitude") {
      p.noise_amplitude = parse_number<double>(value, w);
    } else if (key == "noise_patterns") {
      p.noise_patterns = parse_number<std::size_t>(value, w);
    } else if (key == "retention") {
      p.retention = parse_number<double>(value, w);
    } else if (key == "zero_shot_accuracy") {
      p.zero_shot_accuracy = parse_number<double>(value, w);
    } else if (key == "zero_shot_confidence") {
      p.zero_shot_confidence = parse_number<double>(value, w);
    } else if (key == "label_permutation") {
      p.label_permutation = parse_list<ClassIndex>(value, w);
      permutation_given = true;
    } else if (key == "content_free_skew") {
      p.content_free_skew = parse_number<double>(value, w);
    } else if (key == "seed") {
      p.seed = parse_number<std::uint64_t>(value, w);
    } else {
      throw ConfigError(w + ": unknown key");
    }
  }
  if (!schedule_given) p.signal_schedule = default_signal_schedule(p.num_layers);
  if (!permutation_given) p.label_permutation = cyclic_permutation(p.num_classes);
  p.validate();
  return p;
}

SimProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open profile " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_profile(buf.str());
}

void save_profile(const SimProfile& profile, const std::filesystem::path& path) {
  profile.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write profile " + path.string());
  out << format_profile(profile);
}

std::uint64_t profile_hash(const SimProfile& profile) {
  return fnv1a(format_profile(profile));
}

// ---------------------------------------------------------------------------
// Generation

DiscreteProfile::DiscreteProfile(SimProfile profile)
    : profile_(std::move(profile)) {
  profile_.validate();
  if (profile_.noise_patterns < 1 || profile_.noise_patterns > 8) {
    throw ConfigError("a discrete profile needs 1 to 8 noise patterns, got " +
                      std::to_string(profile_.noise_patterns));
  }
  if (atom_count() > kMaxOracleAtoms) {
    throw ConfigError("profile has " + std::to_string(atom_count()) +
                      " outcome atoms, above the enumeration cap of " +
                      std::to_string(kMaxOracleAtoms));
  }
}

DiscreteProfile DiscreteProfile::default_profile() {
  SimProfile p = SimProfile::default_profile();
  p.noise_patterns = 8;
  p.seed = 1878;
  return DiscreteProfile(std::move(p));
}

std::size_t DiscreteProfile::atom_count() const {
  const std::size_t k = profile_.num_classes;
  return 2 * profile_.noise_patterns * k * k;
}

namespace {

// The random choices that fully determine one record.
struct Draw {
  ContextKind kind = ContextKind::correct;
  ClassIndex label = 0;
  std::size_t pattern = 0;
  ClassIndex zero_shot_label = 0;
};

class TraceGenerator {
 public:
  explicit TraceGenerator(const SimProfile& profile) : p_(profile) {
    p_.validate();
    const std::size_t K = p_.num_classes;
    bias_.assign(K, 1.0 / static_cast<double>(K));
    if (p_.content_free_skew != 0.0) {
      double total = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        bias_[k] = std::exp(p_.content_free_skew *
                            (static_cast<double>(k) / static_cast<double>(K - 1) - 0.5));
        total += bias_[k];
      }
      for (double& b : bias_) b /= total;
    }
    if (p_.noise_patterns > 0) {
      Rng rng(p_.seed, 0xD15C0ULL);
      bank_.resize(p_.noise_patterns);
      for (auto& pattern : bank_) {
        pattern.resize(p_.num_layers * K);
        for (double& v : pattern) v = rng.normal();
      }
    }
  }

  const SimProfile& profile() const { return p_; }

  ExampleRecord sample(Rng& rng, std::string id) {
    const std::size_t K = p_.num_classes;
    Draw d;
    d.label = rng.uniform_index(K);
    d.kind = rng.uniform() < p_.mix ? ContextKind::correct : ContextKind::incorrect;
    if (p_.noise_patterns > 0) {
      d.pattern = rng.uniform_index(p_.noise_patterns);
    } else {
      noise_.resize(p_.num_layers * K);
      for (double& v : noise_) v = rng.normal();
    }
    if (rng.uniform() < p_.zero_shot_accuracy) {
      d.zero_shot_label = d.label;
    } else {
      const ClassIndex other = rng.uniform_index(K - 1);
      d.zero_shot_label = other < d.label ? other : other + 1;
    }
    return build(d, std::move(id));
  }

  ExampleRecord build(const Draw& d, std::string id) const {
    const std::size_t L = p_.num_layers;
    const std::size_t K = p_.num_classes;
    const ClassIndex y = d.label;
    const ClassIndex wrong = p_.label_permutation[y];
    const double sigma = p_.noise_amplitude;

    std::vector<ProbVector> layers;
    layers.reserve(L);
    std::vector<double> z(K);
    for (std::size_t l = 1; l <= L; ++l) {
      for (std::size_t k = 0; k < K; ++k) {
        const double n = p_.noise_patterns > 0
                             ? bank_[d.pattern][(l - 1) * K + (k + K - y) % K]
                             : noise_[(l - 1) * K + k];
        z[k] = sigma * n;
      }
      const double s = p_.signal_schedule[l - 1];
      if (d.kind == ContextKind::correct || l < p_.onset_layer) {
        z[y] += s;
      } else {
        z[wrong] += s;
        z[y] += p_.retention * s;
      }
      layers.push_back(biased(softmax(z)));
    }

    std::vector<double> zs(K, (1.0 - p_.zero_shot_confidence) /
                                  static_cast<double>(K - 1));
    zs[d.zero_shot_label] = p_.zero_shot_confidence;

    const ProbVector cf(bias_);
    return ExampleRecord(std::move(id), p_.dataset_name, d.kind, y,
                         LayerTrace(std::move(layers)), biased(std::move(zs)),
                         LayerTrace(std::vector<ProbVector>(L, cf)), cf);
  }

 private:
  static std::vector<double> softmax(const std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double total = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      p[k] = std::exp(z[k] - m);
      total += p[k];
    }
    for (double& v : p) v /= total;
    return p;
  }

  ProbVector biased(std::vector<double> p) const {
    if (p_.content_free_skew != 0.0) {
      double total = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        p[k] *= bias_[k];
        total += p[k];
      }
      for (double& v : p) v /= total;
    }
    return ProbVector(std::move(p));
  }

  SimProfile p_;
  std::vector<double> bias_;
  std::vector<std::vector<double>> bank_;
  std::vector<double> noise_;
};

std::string record_id(const SimProfile& profile, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return profile.dataset_name + "-" + buf;
}

// Calls fn(weight, record) for every atom with positive weight.
template <typename Fn>
void for_each_atom(const DiscreteProfile& discrete, Fn fn) {
  const SimProfile& p = discrete.profile();
  const TraceGenerator gen(p);
  const std::size_t K = p.num_classes;
  const long double pattern_w = 1.0L / static_cast<long double>(p.noise_patterns);
  const long double label_w = 1.0L / static_cast<long double>(K);
  for (ContextKind kind : {ContextKind::correct, ContextKind::incorrect}) {
    const long double kind_w =
        kind == ContextKind::correct ? p.mix : 1.0L - p.mix;
    for (std::size_t m = 0; m < p.noise_patterns; ++m) {
      for (ClassIndex y = 0; y < K; ++y) {
        for (ClassIndex zs = 0; zs < K; ++zs) {
          const long double zs_w =
              zs == y ? static_cast<long double>(p.zero_shot_accuracy)
                      : (1.0L - p.zero_shot_accuracy) /
                            static_cast<long double>(K - 1);
          const long double w = kind_w * pattern_w * label_w * zs_w;
          if (w <= 0.0L) continue;
          fn(w, gen.build(Draw{kind, y, m, zs}, "atom"));
        }
      }
    }
  }
}

}  // namespace

ExampleRecord simulate_record(const SimProfile& profile, Rng& rng,
                              std::string id) {
  TraceGenerator gen(profile);
  return gen.sample(rng, std::move(id));
}

std::vector<ExampleRecord> simulate_dataset(const SimProfile& profile,
                                            std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("simulate_dataset needs n >= 1");
  TraceGenerator gen(profile);
  std::vector<ExampleRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed, i);
    out.push_back(gen.sample(rng, record_id(profile, i)));
  }
  return out;
}

double oracle_risk(const DiscreteProfile& profile, const ExitPolicy& policy,
                   const LossSpec& spec) {
  long double total = 0.0L;
  for_each_atom(profile, [&](long double w, const ExampleRecord& r) {
    total += w * static_cast<long double>(mode_loss(icl_loss(r, policy), spec));
  });
  return static_cast<double>(total);
}

std::vector<double> oracle_risk_curve(const DiscreteProfile& profile,
                                      const LambdaGrid& grid,
                                      const ExitPolicy& policy,
                                      const LossSpec& spec) {
  std::vector<long double> total(grid.values().size(), 0.0L);
  for_each_atom(profile, [&](long double w, const ExampleRecord& r) {
    const ScoredRecord s = score_record(r, policy.measure);
    const GridTallies t = tally_grid(std::span<const ScoredRecord>(&s, 1), grid, policy);
    for (std::size_t j = 0; j < total.size(); ++j) {
      total[j] += w * static_cast<long double>(
                          mode_loss(static_cast<int>(t.values[j].sum()), spec));
    }
  });
  return {total.begin(), total.end()};
}

MonteCarloEstimate oracle_risk_mc(const SimProfile& profile,
                                  const ExitPolicy& policy,
                                  const LossSpec& spec, std::size_t n_samples,
                                  std::uint64_t seed) {
  if (n_samples < 10'000) {
    throw ConfigError("oracle_risk_mc needs at least 10000 samples");
  }
  TraceGenerator gen(profile);
  // Welford accumulation.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    Rng rng(seed, i);
    const double v = mode_loss(icl_loss(gen.sample(rng, "mc"), policy), spec);
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  MonteCarloEstimate e;
  e.samples = n_samples;
  e.mean = mean;
  const double var = m2 / static_cast<double>(n_samples - 1);
  e.standard_error = std::sqrt(var / static_cast<double>(n_samples));
  return e;
}

}  // namespace safeicl
