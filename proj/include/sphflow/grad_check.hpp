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

// Finite-difference checks of reverse-mode gradients.
//
// A checked function reads every input and parameter through a Binder and
// returns its outputs. The outputs are contracted with fixed random weights
// into a scalar; its analytic gradient is compared against central
// differences for every coefficient of every bound matrix. The error of one
// matrix is max |analytic - numeric| / max(|analytic|_max, |numeric|_max),
// and the reported error is the largest over all matrices.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sphflow/ad.hpp"

namespace sphflow {

using GradCheckFunction = std::function<std::vector<ad::Var>(ad::Binder&)>;

struct GradCheckResult {
  std::string op;
  double error = 0.0;
  double tolerance = 0.0;
  long coefficients = 0;

  bool passed() const { return error <= tolerance; }
};

/// Checks `f` at `point` (every matrix the function binds).
GradCheckResult grad_check(const GradCheckFunction& f, const ad::ParamSet& point,
                           std::uint64_t seed, double step = 1e-5);

/// Names accepted by grad_check(op, ...), in a stable order.
const std::vector<std::string>& grad_check_ops();

/// Tolerance of a named op: 1e-7 for linear maps, 1e-4 otherwise.
double grad_check_tolerance(const std::string& op);

/// Checks a named op on random inputs drawn from `seed`. Throws ConfigError
/// for an unknown name.
GradCheckResult grad_check(const std::string& op, std::uint64_t seed = 0, double step = 1e-5);

}  // namespace sphflow
