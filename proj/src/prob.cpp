// src/prob.cpp

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

#include "safeicl/prob.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "safeicl/errors.hpp"

namespace safeicl {

namespace {

std::string compose(const std::string& detail, const std::string& field,
                    const std::string& record_id,
                    std::optional<std::size_t> line) {
  std::ostringstream os;
  if (line) os << "line " << *line << ": ";
  if (!record_id.empty()) os << "record '" << record_id << "': ";
  if (!field.empty()) os << "field '" << field << "': ";
  os << detail;
  return os.str();
}

}  // namespace

ValidationError::ValidationError(std::string detail, std::string field,
                                 std::string record_id,
                                 std::optional<std::size_t> line)
    : Error(compose(detail, field, record_id, line)),
      detail_(std::move(detail)),
      field_(std::move(field)),
      record_id_(std::move(record_id)),
      line_(line) {}

ValidationError ValidationError::located(
    std::string field, std::string record_id,
    std::optional<std::size_t> line) const {
  std::string f = field_;
  if (!field.empty()) f = f.empty() ? field : field + "." + f;
  return ValidationError(detail_, f,
                         record_id_.empty() ? std::move(record_id) : record_id_,
                         line_ ? line_ : line);
}

ProbVector::ProbVector(std::vector<double> entries)
    : entries_(std::move(entries)) {
  if (entries_.size() < 2) {
    throw ValidationError("probability vector needs at least 2 classes, got " +
                          std::to_string(entries_.size()));
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const double v = entries_[k];
    if (!std::isfinite(v) || v < 0.0) {
      std::ostringstream os;
      os << "entry " << k << " is " << v << ", expected a finite value >= 0";
      throw ValidationError(os.str());
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance) {
    std::ostringstream os;
    os << "probabilities sum to " << sum << ", expected 1 within "
       << kProbSumTolerance;
    throw ValidationError(os.str());
  }
}

ClassIndex ProbVector::argmax() const {
  ClassIndex best = 0;
  for (ClassIndex k = 1; k < entries_.size(); ++k) {
    if (entries_[k] > entries_[best]) best = k;
  }
  return best;
}

LayerTrace::LayerTrace(std::vector<ProbVector> layers)
    : layers_(std::move(layers)) {
  if (layers_.size() < 2) {
    throw ValidationError("trace needs at least 2 layers, got " +
                          std::to_string(layers_.size()));
  }
  const std::size_t k = layers_.front().size();
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    if (layers_[l].size() != k) {
      throw ValidationError("layer " + std::to_string(l + 1) + " has " +
                            std::to_string(layers_[l].size()) +
                            " classes, layer 1 has " + std::to_string(k));
    }
  }
}

ProbVector uniform(std::size_t k) {
  return ProbVector(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

}  // namespace safeicl
