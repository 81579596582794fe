// Copyright 2026 The spinlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace spinlab {

/// Base class of every error raised by the toolkit. `kind()` is a stable
/// machine-readable tag used by the CLI for structured error output.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
    virtual const char *kind() const noexcept = 0;
};

class InvalidInput : public Error {
  public:
    using Error::Error;
    const char *kind() const noexcept override { return "invalid_input"; }
};

/// Zero field where a quantization axis is needed, parallel drive, etc.
class DegenerateInput : public InvalidInput {
  public:
    using InvalidInput::InvalidInput;
    const char *kind() const noexcept override { return "degenerate_input"; }
};

/// The data cannot determine all free parameters.
class RankDeficiency : public Error {
  public:
    using Error::Error;
    const char *kind() const noexcept override { return "rank_deficiency"; }
};

class FitFailure : public Error {
  public:
    using Error::Error;
    const char *kind() const noexcept override { return "fit_failure"; }
};

/// An internal invariant was violated (e.g. a Clifford sequence left the
/// cardinal states).
class ConsistencyError : public Error {
  public:
    using Error::Error;
    const char *kind() const noexcept override { return "internal_consistency"; }
};

inline void require(bool ok, const std::string &what) {
    if (!ok) throw InvalidInput(what);
}

}  // namespace spinlab
