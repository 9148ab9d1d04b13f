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

// Demonstration record stream.
//
// Little-endian layout:
//   header   : "SPHFDEMO" (8 bytes), u32 version, u32 episode count
//   episode  : u32 task, u64 seed, u8 success, u32 step count, steps...
//   step     : u32 n, f64[n*3] points, f64[n*3] colors (row-major),
//              u32 height, u32 width, f64[h*w*3] image,
//              f64[10] proprio, u32 horizon, f64[horizon*10] action
//   proprio  : position(3), col1(3), col2(3), gripper
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sphflow/perception.hpp"

namespace sphflow {

inline constexpr std::uint32_t kDatasetVersion = 1;

struct Observation {
  PointCloud cloud;
  Image image;
  ProprioState proprio;
};

/// Rigid motion x -> R x + shift of the cloud and the gripper pose. The image
/// is rendered in the gripper frame and is left unchanged.
Observation transform_observation(const Observation& obs, const Eigen::Matrix3d& rotation,
                                  const Eigen::Vector3d& shift);
ActionChunk transform_chunk(const ActionChunk& chunk, const Eigen::Matrix3d& rotation,
                            const Eigen::Vector3d& shift);

struct DemoStep {
  Observation obs;
  ActionChunk action;
};

struct Episode {
  std::uint32_t task = 0;
  std::uint64_t seed = 0;
  bool success = false;
  std::vector<DemoStep> steps;
};

struct Dataset {
  std::vector<Episode> episodes;

  std::size_t step_count() const;
};

void write_dataset(std::ostream& out, const Dataset& d);
Dataset read_dataset(std::istream& in);
/// Throw IoError on any file failure.
void save_dataset(const std::string& path, const Dataset& d);
Dataset load_dataset(const std::string& path);

}  // namespace sphflow
