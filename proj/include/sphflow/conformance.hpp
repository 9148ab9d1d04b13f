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

// Symmetry conformance suite: randomized checks of f(D x) = D f(x) for every
// layer and for the assembled policy, plus the group laws they rest on.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sphflow/policy.hpp"

namespace sphflow {

struct ConformanceCheck {
  std::string layer;
  std::string name;
  int cases = 0;
  /// Largest relative violation seen.
  double violation = 0.0;
  double tolerance = 0.0;
  /// Negative control: passes when the violation reaches the tolerance.
  bool expected_fail = false;

  bool passed() const { return expected_fail ? violation >= tolerance : violation <= tolerance; }
};

struct ConformanceOptions {
  std::uint64_t seed = 0;
  /// Layers to run (see conformance_layers); empty runs all of them.
  std::vector<std::string> layers;
  /// Random cases per layer check; the group-law checks use 5x as many.
  int cases = 100;
};

/// so3, equi_linear, gate, temporal_conv, efilm, efilm_identity, fem_fuse,
/// point_encoder, unet, policy.
const std::vector<std::string>& conformance_layers();

/// Runs the suite. The policy checks use `cfg` and `params` when given,
/// otherwise a default equivariant policy with random weights. For the dense
/// baseline they are negative controls with tolerance 0.1.
std::vector<ConformanceCheck> run_conformance(const ConformanceOptions& options,
                                              const PolicyConfig* cfg = nullptr,
                                              const ad::ParamSet* params = nullptr);

}  // namespace sphflow
