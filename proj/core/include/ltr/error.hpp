// Copyright (c) 2026 The ltr Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace ltr {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape mismatch between operands. Message names both shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A softmax/normalization row with no valid entries.
class DegenerateRowError : public Error {
 public:
  using Error::Error;
};

// Batch-norm inference before any statistics were recorded.
class UninitializedStatsError : public Error {
 public:
  using Error::Error;
};

// API misuse (e.g. backward from a non-scalar output).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Bad configuration value or unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input data. Carries a line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss. Carries the failing step.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long step, double last_finite_loss)
      : Error(what), step_(step), last_finite_loss_(last_finite_loss) {}
  long step() const { return step_; }
  double last_finite_loss() const { return last_finite_loss_; }

 private:
  long step_;
  double last_finite_loss_;
};

}  // namespace ltr
