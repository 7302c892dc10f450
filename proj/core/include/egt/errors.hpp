// Copyright 2026 The EGT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EGT_ERRORS_HPP_
#define EGT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace egt {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a precondition: shape mismatch, out-of-range argument,
// missing trace.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (rule maps, head kinds, hyperparameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, truncated or insufficient data, and I/O failures.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced or consumed by a numeric routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace egt

#endif  // EGT_ERRORS_HPP_
