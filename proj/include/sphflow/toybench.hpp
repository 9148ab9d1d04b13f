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

// Synthetic tabletop benchmark: scenes, analytic renderer, scripted expert,
// rigid perturbations and closed-loop evaluation.
//
// Geometry is expressed in a world frame whose origin is the table center.
// A canonical scene has the table in the z = 0 plane; perturbations rotate
// every piece of the scene (table, objects, goal, end effector) about the
// origin.
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sphflow/dataset.hpp"

namespace sphflow {

enum class Task : std::uint32_t { kReach = 0, kPickPlace = 1 };

std::string task_name(Task t);
/// Accepts "reach" and "pick-place".
Task parse_task(const std::string& name);

struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
};

struct BenchConfig {
  double workspace_radius = 0.3;
  /// Objects and goals are uniform on a disk of this radius.
  double object_radius = 0.15;
  double box_half_extent = 0.02;
  double marker_radius = 0.015;
  double start_height = 0.2;
  double start_radius = 0.1;
  double min_goal_separation = 0.06;
  double success_threshold = 0.015;
  double grasp_distance = 0.025;
  /// Expert step: move this fraction of the remaining distance, snapping
  /// onto the goal once closer than `expert_snap`.
  double expert_gain = 0.3;
  double expert_snap = 0.005;
  int horizon = 16;
  int execute = 8;
  int reach_budget = 40;
  int pick_place_budget = 80;
  /// Image extent (m) across the gripper-frame orthographic view.
  double image_extent = 0.6;
  int image_size = 32;

  int budget(Task t) const { return t == Task::kReach ? reach_budget : pick_place_budget; }
};

struct Scene {
  Task task = Task::kReach;
  /// One red box (the reach target or the object to carry).
  std::vector<Pose> objects;
  /// Reach: coincides with the box. Pick-place: green marker.
  Pose goal;
  Pose end_effector;
  /// Accumulated rigid rotation applied to the canonical scene.
  Eigen::Matrix3d tilt = Eigen::Matrix3d::Identity();
  double workspace_radius = 0.3;
};

Scene sample_scene(Task task, std::mt19937_64& rng, const BenchConfig& cfg = {});

struct Perturbation {
  enum class Kind { kNone, kYaw, kTilt, kHaar };
  Kind kind = Kind::kNone;
  double degrees = 0.0;

  /// "none", "yaw:<deg>", "tilt:<deg>", "yaw:haar" or "haar".
  static Perturbation parse(const std::string& text);
  std::string str() const;
  /// Haar draws consume `rng`; the other kinds ignore it.
  Eigen::Matrix3d rotation(std::mt19937_64& rng) const;
};

/// Rigid rotation of the whole scene about the table center.
Scene rotate_scene(const Scene& s, const Eigen::Matrix3d& r);
/// yaw about z, tilt about y, by `degrees`.
Scene perturb_scene(const Scene& s, Perturbation::Kind mode, double degrees);

/// Dynamic state during a rollout.
struct World {
  Scene scene;
  double gripper = 0.0;  // 0 open, 1 closed
  bool attached = false;
  Eigen::Vector3d grasp_offset = Eigen::Vector3d::Zero();
  int steps = 0;
};

World make_world(const Scene& s);
bool task_success(const World& w, const BenchConfig& cfg = {});
/// Moves the end effector to the target pose and applies the gripper command.
void execute_action(World& w, const ProprioState& target, const BenchConfig& cfg = {});

PointCloud render_cloud(const World& w, const BenchConfig& cfg = {});
/// Orthographic view along the gripper z axis, in the gripper frame.
/// `gripper_frame = false` renders in the table frame instead, which ties the
/// image to the scene orientation.
Image render_image(const World& w, const BenchConfig& cfg = {}, bool gripper_frame = true);
Observation observe(const World& w, const BenchConfig& cfg = {}, bool gripper_frame = true);

/// Markov scripted expert: next target pose given the current world.
ProprioState expert_action(const World& w, const BenchConfig& cfg = {});
/// Expert targets for the next `horizon` steps, simulated from `w`.
ActionChunk expert_chunk(const World& w, const BenchConfig& cfg = {});

/// Rolls the expert out to success; throws ValidationError if the budget is
/// exhausted. Every step records its observation and the expert chunk.
Episode scripted_expert(const Scene& s, const BenchConfig& cfg = {});

/// Demo i uses a seed derived from (seed, i) and rejects scenes the expert
/// cannot solve.
Dataset generate_dataset(Task task, int n_demos, std::uint64_t seed, const BenchConfig& cfg = {});

/// Closed-loop policy: receives the observation (and the world, which only
/// oracle policies may look at).
using Policy = std::function<ActionChunk(const Observation&, const World&, std::mt19937_64&)>;

Policy expert_policy(const BenchConfig& cfg = {});
/// Random target displacements of `step` meters and random gripper commands.
Policy random_policy(double step = 0.05, const BenchConfig& cfg = {});

struct EvalReport {
  std::string task;
  std::string perturbation;
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_length = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<int> lengths;
  std::vector<bool> success;
};

struct EvalOptions {
  bool gripper_frame_images = true;
};

EvalReport evaluate(const Policy& policy, Task task, int n_episodes, const Perturbation& perturbation,
                    std::uint64_t seed, const BenchConfig& cfg = {}, const EvalOptions& options = {});

/// Seed of item `index` in a stream rooted at `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace sphflow
