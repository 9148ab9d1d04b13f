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

// Command-line front end: gen-data, train, eval, sweep-steps, equiv-check and
// grad-check. Every command writes its resolved config (config.json) into
// its output directory; passing that file back through --config reruns it.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sphflow/policy.hpp"

namespace sphflow::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2, kConformance = 3 };

struct RunConfig {
  std::string command;
  std::string task = "reach";
  int n_demos = 100;
  std::uint64_t seed = 0;
  std::string out = "run";
  /// Dataset file for train; empty generates n_demos demos from the seed.
  std::string data;
  /// Checkpoint file, or "expert" for the scripted expert.
  std::string checkpoint;
  PolicyConfig policy;
  TrainConfig train;
  int episodes = 50;
  std::vector<std::string> perturb{"none"};
  std::vector<int> steps_list;
  std::vector<std::string> layers;
  int cases = 100;
  std::vector<std::string> ops;
};

/// One flat JSON object: run keys plus the model keys.
std::string run_config_json(const RunConfig& c);
/// Keys absent from `text` keep their defaults; unknown keys throw
/// ConfigError.
RunConfig run_config_from_json(const std::string& text);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sphflow::cli
