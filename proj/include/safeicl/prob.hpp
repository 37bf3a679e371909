// safeicl/prob.hpp

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
#include <span>
#include <vector>

namespace safeicl {

using ClassIndex = std::size_t;

/// Absolute tolerance on the sum of a probability vector.
inline constexpr double kProbSumTolerance = 1e-6;

/// A categorical distribution over K >= 2 class labels.
///
/// Construction validates the invariants (non-negative, finite, sums to 1
/// within kProbSumTolerance) and throws ValidationError otherwise. Entries
/// are stored as given; nothing is renormalised.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> entries);

  std::size_t size() const { return entries_.size(); }
  double operator[](std::size_t k) const { return entries_[k]; }
  std::span<const double> entries() const { return entries_; }

  /// Index of the largest entry; ties resolve to the lowest index.
  ClassIndex argmax() const;

  bool operator==(const ProbVector&) const = default;

 private:
  std::vector<double> entries_;
};

/// Per-layer distributions p_1 ... p_L of one forward pass. L >= 2 and all
/// layers share the same K.
class LayerTrace {
 public:
  explicit LayerTrace(std::vector<ProbVector> layers);

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_classes() const { return layers_.front().size(); }

  /// 1-based layer access, matching the layer numbering used by policies.
  const ProbVector& layer(std::size_t l) const { return layers_[l - 1]; }
  std::span<const ProbVector> layers() const { return layers_; }

  bool operator==(const LayerTrace&) const = default;

 private:
  std::vector<ProbVector> layers_;
};

/// Uniform distribution over k classes.
ProbVector uniform(std::size_t k);

}  // namespace safeicl
