// safeicl/calibration.hpp

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

#include "safeicl/prob.hpp"

namespace safeicl {

/// Lower bound applied to content-free probabilities before dividing.
inline constexpr double kCalibrationFloor = 1e-6;

/// Contextual calibration: q(k) proportional to p(k) / max(p_cf(k), floor),
/// renormalised. Throws ValidationError when K differs.
ProbVector contextual_calibrate(const ProbVector& p, const ProbVector& p_cf);

}  // namespace safeicl
