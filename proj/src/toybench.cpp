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

#include "sphflow/toybench.hpp"

#include <cmath>
#include <numbers>

namespace sphflow {

using Eigen::Matrix3d;
using Eigen::Vector3d;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kExact = 1e-9;

Matrix3d rot_z(double a) { return Eigen::AngleAxisd(a, Vector3d::UnitZ()).toRotationMatrix(); }
Matrix3d rot_y(double a) { return Eigen::AngleAxisd(a, Vector3d::UnitY()).toRotationMatrix(); }

Vector3d sample_disk(std::mt19937_64& rng, double radius, double height) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = radius * std::sqrt(u(rng));
  const double a = 2.0 * kPi * u(rng);
  return {r * std::cos(a), r * std::sin(a), height};
}

Pose rotate_pose(const Pose& p, const Matrix3d& r) { return {r * p.position, r * p.rotation}; }

bool closed(double gripper) { return gripper >= 0.5; }

// Geometric approach: a fixed fraction of the remaining distance, exact once close.
Vector3d approach(const Vector3d& from, const Vector3d& to, const BenchConfig& cfg) {
  const Vector3d next = from + cfg.expert_gain * (to - from);
  return (to - next).norm() < cfg.expert_snap ? to : next;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void add_points(PointCloud& pc, const std::vector<Vector3d>& pts, const Vector3d& color) {
  const Eigen::Index n0 = pc.points.rows();
  pc.points.conservativeResize(n0 + Eigen::Index(pts.size()), 3);
  pc.colors.conservativeResize(n0 + Eigen::Index(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pc.points.row(n0 + i) = pts[i].transpose();
    pc.colors.row(n0 + i) = color.transpose();
  }
}

}  // namespace

std::string task_name(Task t) { return t == Task::kReach ? "reach" : "pick-place"; }

Task parse_task(const std::string& name) {
  if (name == "reach") return Task::kReach;
  if (name == "pick-place" || name == "pick_place") return Task::kPickPlace;
  throw ConfigError("unknown task '" + name + "' (expected reach or pick-place)");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

Scene sample_scene(Task task, std::mt19937_64& rng, const BenchConfig& cfg) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  Scene s;
  s.task = task;
  s.workspace_radius = cfg.workspace_radius;
  Pose obj;
  obj.position = sample_disk(rng, cfg.object_radius, cfg.box_half_extent);
  obj.rotation = rot_z(angle(rng));
  s.objects.push_back(obj);
  if (task == Task::kReach) {
    s.goal = obj;
  } else {
    do {
      s.goal.position = sample_disk(rng, cfg.object_radius, cfg.box_half_extent);
    } while ((s.goal.position - obj.position).norm() < cfg.min_goal_separation);
  }
  s.end_effector.position = sample_disk(rng, cfg.start_radius, cfg.start_height);
  // gripper z axis points down at the table
  s.end_effector.rotation = rot_z(angle(rng)) * Vector3d(1, -1, -1).asDiagonal();
  return s;
}

Perturbation Perturbation::parse(const std::string& text) {
  if (text.empty() || text == "none") return {};
  if (text == "haar" || text == "yaw:haar") return {Kind::kHaar, 0.0};
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("bad perturbation '" + text + "'");
  const std::string mode = text.substr(0, colon);
  Perturbation p;
  if (mode == "yaw") {
    p.kind = Kind::kYaw;
  } else if (mode == "tilt") {
    p.kind = Kind::kTilt;
  } else {
    throw ConfigError("bad perturbation mode '" + mode + "'");
  }
  try {
    std::size_t used = 0;
    p.degrees = std::stod(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("bad perturbation angle in '" + text + "'");
  }
  return p;
}

std::string Perturbation::str() const {
  switch (kind) {
    case Kind::kNone:
      return "none";
    case Kind::kHaar:
      return "haar";
    case Kind::kYaw:
      return "yaw:" + std::to_string(degrees);
    case Kind::kTilt:
      return "tilt:" + std::to_string(degrees);
  }
  return "none";
}

Matrix3d Perturbation::rotation(std::mt19937_64& rng) const {
  switch (kind) {
    case Kind::kNone:
      return Matrix3d::Identity();
    case Kind::kYaw:
      return rot_z(degrees * kPi / 180.0);
    case Kind::kTilt:
      return rot_y(degrees * kPi / 180.0);
    case Kind::kHaar:
      return random_rotation<double>(rng).matrix();
  }
  return Matrix3d::Identity();
}

Scene rotate_scene(const Scene& s, const Matrix3d& r) {
  Scene out = s;
  for (auto& o : out.objects) o = rotate_pose(o, r);
  out.goal = rotate_pose(s.goal, r);
  out.end_effector = rotate_pose(s.end_effector, r);
  out.tilt = r * s.tilt;
  return out;
}

Scene perturb_scene(const Scene& s, Perturbation::Kind mode, double degrees) {
  std::mt19937_64 unused(0);
  if (mode == Perturbation::Kind::kHaar) throw ConfigError("perturb_scene needs an explicit angle");
  return rotate_scene(s, Perturbation{mode, degrees}.rotation(unused));
}

// ---------------------------------------------------------------------------

World make_world(const Scene& s) {
  World w;
  w.scene = s;
  return w;
}

bool task_success(const World& w, const BenchConfig& cfg) {
  if (closed(w.gripper)) return false;
  const Scene& s = w.scene;
  if (s.task == Task::kReach) {
    return (s.end_effector.position - s.goal.position).norm() < cfg.success_threshold;
  }
  return !w.attached && (s.objects[0].position - s.goal.position).norm() < cfg.success_threshold;
}

void execute_action(World& w, const ProprioState& target, const BenchConfig& cfg) {
  Pose& ee = w.scene.end_effector;
  ee.position = target.position;
  ee.rotation = rotation_from_6d(target.col1, target.col2);
  const bool was_closed = closed(w.gripper);
  w.gripper = target.gripper;
  Pose& obj = w.scene.objects[0];
  if (w.scene.task == Task::kPickPlace) {
    if (!w.attached && !was_closed && closed(w.gripper) &&
        (obj.position - ee.position).norm() < cfg.grasp_distance) {
      w.attached = true;
      w.grasp_offset = ee.rotation.transpose() * (obj.position - ee.position);
    } else if (w.attached && !closed(w.gripper)) {
      w.attached = false;
    }
    if (w.attached) obj.position = ee.position + ee.rotation * w.grasp_offset;
  }
  ++w.steps;
}

// ---------------------------------------------------------------------------

PointCloud render_cloud(const World& w, const BenchConfig& cfg) {
  const Scene& s = w.scene;
  PointCloud pc;
  std::vector<Vector3d> pts{s.tilt * Vector3d::Zero()};
  const int rings = 3;
  for (int k = 1; k <= rings; ++k) {
    const double r = cfg.workspace_radius * k / rings;
    const int n = 4 + 4 * k;
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * kPi * i / n;
      pts.push_back(s.tilt * Vector3d(r * std::cos(a), r * std::sin(a), 0.0));
    }
  }
  add_points(pc, pts, Vector3d(0.5, 0.5, 0.5));

  const double h = cfg.box_half_extent;
  pts.clear();
  for (int i = 0; i < 8; ++i) {
    const Vector3d corner((i & 1) ? h : -h, (i & 2) ? h : -h, (i & 4) ? h : -h);
    pts.push_back(s.objects[0].rotation * corner + s.objects[0].position);
  }
  for (int a = 0; a < 3; ++a)
    for (double sign : {-1.0, 1.0})
      pts.push_back(s.objects[0].rotation * (sign * h * Vector3d::Unit(a)) + s.objects[0].position);
  add_points(pc, pts, Vector3d(0.9, 0.1, 0.1));

  if (s.task == Task::kPickPlace) {
    pts = {s.goal.position};
    for (int a = 0; a < 3; ++a)
      for (double sign : {-1.0, 1.0})
        pts.push_back(s.goal.rotation * (sign * cfg.marker_radius * Vector3d::Unit(a)) +
                      s.goal.position);
    add_points(pc, pts, Vector3d(0.1, 0.9, 0.1));
  }
  return pc;
}

Image render_image(const World& w, const BenchConfig& cfg, bool gripper_frame) {
  const PointCloud pc = render_cloud(w, cfg);
  const Pose& ee = w.scene.end_effector;
  const int n = cfg.image_size;
  Image img(n, n);
  for (int i = 0; i < pc.size(); ++i) {
    const Vector3d rel = pc.points.row(i).transpose() - ee.position;
    const Vector3d q = gripper_frame ? Vector3d(ee.rotation.transpose() * rel) : rel;
    // bilinear splat keeps the image continuous in the geometry
    const double px = (q.x() / cfg.image_extent + 0.5) * n - 0.5;
    const double py = (q.y() / cfg.image_extent + 0.5) * n - 0.5;
    const int x0 = int(std::floor(px)), y0 = int(std::floor(py));
    const double fx = px - x0, fy = py - y0;
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const int x = x0 + dx, y = y0 + dy;
        if (x < 0 || y < 0 || x >= n || y >= n) continue;
        const double wgt = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
        for (int c = 0; c < 3; ++c) img.at(y, x, c) += wgt * pc.colors(i, c);
      }
  }
  img.rgb = img.rgb.cwiseMin(1.0);
  return img;
}

Observation observe(const World& w, const BenchConfig& cfg, bool gripper_frame) {
  Observation o;
  o.cloud = render_cloud(w, cfg);
  o.image = render_image(w, cfg, gripper_frame);
  const Pose& ee = w.scene.end_effector;
  o.proprio = ProprioState::from_pose(ee.position, ee.rotation, w.gripper);
  return o;
}

// ---------------------------------------------------------------------------

ProprioState expert_action(const World& w, const BenchConfig& cfg) {
  const Pose& ee = w.scene.end_effector;
  ProprioState hold = ProprioState::from_pose(ee.position, ee.rotation, w.gripper);
  const Scene& s = w.scene;
  if (s.task == Task::kReach) {
    if ((ee.position - s.goal.position).norm() < kExact) {
      hold.gripper = 0.0;
      return hold;
    }
    return ProprioState::from_pose(approach(ee.position, s.goal.position, cfg), ee.rotation, 0.0);
  }
  if (task_success(w, cfg)) return hold;
  const Vector3d& obj = s.objects[0].position;
  if (!w.attached) {
    if (closed(w.gripper)) {
      hold.gripper = 0.0;
      return hold;
    }
    if ((obj - ee.position).norm() < kExact) {
      hold.gripper = 1.0;
      return hold;
    }
    return ProprioState::from_pose(approach(ee.position, obj, cfg), ee.rotation, 0.0);
  }
  const Vector3d place = s.goal.position + (ee.position - obj);
  if ((place - ee.position).norm() < kExact) {
    hold.gripper = 0.0;
    return hold;
  }
  return ProprioState::from_pose(approach(ee.position, place, cfg), ee.rotation, 1.0);
}

ActionChunk expert_chunk(const World& w, const BenchConfig& cfg) {
  World sim = w;
  ActionChunk chunk;
  chunk.reserve(cfg.horizon);
  for (int k = 0; k < cfg.horizon; ++k) {
    chunk.push_back(expert_action(sim, cfg));
    execute_action(sim, chunk.back(), cfg);
  }
  return chunk;
}

Episode scripted_expert(const Scene& s, const BenchConfig& cfg) {
  World w = make_world(s);
  Episode e;
  e.task = std::uint32_t(s.task);
  const int budget = cfg.budget(s.task);
  // run until the expert comes to rest at the goal, not merely inside the
  // success radius
  auto done = [&] {
    return task_success(w, cfg) &&
           (s.task == Task::kPickPlace ||
            (w.scene.end_effector.position - s.goal.position).norm() < kExact);
  };
  while (!done()) {
    if (w.steps >= budget) {
      throw ValidationError("scripted expert did not finish within " + std::to_string(budget) +
                            " steps");
    }
    DemoStep step{observe(w, cfg), expert_chunk(w, cfg)};
    execute_action(w, step.action.front(), cfg);
    e.steps.push_back(std::move(step));
  }
  e.success = true;
  return e;
}

Dataset generate_dataset(Task task, int n_demos, std::uint64_t seed, const BenchConfig& cfg) {
  if (n_demos < 1) throw ConfigError("generate_dataset needs at least one demo");
  Dataset d;
  for (int i = 0; i < n_demos; ++i) {
    const std::uint64_t s = derive_seed(seed, std::uint64_t(i));
    std::mt19937_64 rng(s);
    for (int attempt = 0;; ++attempt) {
      try {
        Episode e = scripted_expert(sample_scene(task, rng, cfg), cfg);
        e.seed = s;
        d.episodes.push_back(std::move(e));
        break;
      } catch (const ValidationError&) {
        if (attempt >= 100) throw;
      }
    }
  }
  return d;
}

// ---------------------------------------------------------------------------

Policy expert_policy(const BenchConfig& cfg) {
  return [cfg](const Observation&, const World& w, std::mt19937_64&) { return expert_chunk(w, cfg); };
}

Policy random_policy(double step, const BenchConfig& cfg) {
  return [step, cfg](const Observation& obs, const World&, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, step);
    std::bernoulli_distribution coin(0.5);
    ActionChunk chunk;
    ProprioState s = obs.proprio;
    for (int k = 0; k < cfg.horizon; ++k) {
      s.position += Vector3d(n(rng), n(rng), n(rng));
      s.gripper = coin(rng) ? 1.0 : 0.0;
      chunk.push_back(s);
    }
    return chunk;
  };
}

EvalReport evaluate(const Policy& policy, Task task, int n_episodes, const Perturbation& perturbation,
                    std::uint64_t seed, const BenchConfig& cfg, const EvalOptions& options) {
  if (n_episodes < 1) throw ConfigError("evaluate needs at least one episode");
  EvalReport r;
  r.task = task_name(task);
  r.perturbation = perturbation.str();
  r.episodes = n_episodes;
  double total_len = 0.0;
  const int budget = cfg.budget(task);
  for (int i = 0; i < n_episodes; ++i) {
    const std::uint64_t s = derive_seed(seed, std::uint64_t(i));
    std::mt19937_64 scene_rng(s);
    Scene scene = sample_scene(task, scene_rng, cfg);
    scene = rotate_scene(scene, perturbation.rotation(scene_rng));
    std::mt19937_64 policy_rng(derive_seed(s, 1));
    World w = make_world(scene);
    bool ok = false;
    while (!ok && w.steps < budget) {
      const ActionChunk chunk =
          policy(observe(w, cfg, options.gripper_frame_images), w, policy_rng);
      const int n = std::min<int>(cfg.execute, int(chunk.size()));
      for (int k = 0; k < n && !ok && w.steps < budget; ++k) {
        execute_action(w, chunk[k], cfg);
        ok = task_success(w, cfg);
      }
      if (chunk.empty()) break;
    }
    r.seeds.push_back(s);
    r.lengths.push_back(w.steps);
    r.success.push_back(ok);
    r.successes += ok ? 1 : 0;
    total_len += w.steps;
  }
  r.success_rate = double(r.successes) / n_episodes;
  r.mean_length = total_len / n_episodes;
  return r;
}

}  // namespace sphflow
