// Copyright 2026 The sphflow Authors
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

namespace sphflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition on an input value failed (non-unit axis, bad range, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Irrep signatures or tensor shapes do not line up.
class SignatureError : public Error {
 public:
  using Error::Error;
};

class UnsupportedDegreeError : public Error {
 public:
  explicit UnsupportedDegreeError(int degree)
      : Error("unsupported spherical-harmonic degree " + std::to_string(degree) +
              " (max is 2)") {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or produced non-finite values.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sphflow
