// safeicl/errors.hpp

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
#include <optional>
#include <stdexcept>
#include <string>

namespace safeicl {

/// Base for every error the toolkit raises on bad input or configuration.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A record, probability vector or trace violates a stated invariant.
/// Carries enough location data for line-accurate diagnostics.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::string detail, std::string field = {},
                           std::string record_id = {},
                           std::optional<std::size_t> line = std::nullopt);

  const std::string& detail() const { return detail_; }
  const std::string& field() const { return field_; }
  const std::string& record_id() const { return record_id_; }
  std::optional<std::size_t> line() const { return line_; }

  /// Returns a copy with missing location fields filled in.
  ValidationError located(std::string field, std::string record_id,
                          std::optional<std::size_t> line) const;

 private:
  std::string detail_;
  std::string field_;
  std::string record_id_;
  std::optional<std::size_t> line_;
};

/// Invalid configuration: policies, profiles, trial settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A risk budget that cannot be tested in the requested loss mode.
class BudgetError : public Error {
 public:
  using Error::Error;
};

/// A loss value outside its declared bounds [a, b].
class LossBoundError : public Error {
 public:
  using Error::Error;
};

/// Reports compared across incompatible trial protocols.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace safeicl
