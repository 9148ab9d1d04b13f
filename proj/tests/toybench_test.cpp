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

#include <sstream>

#include "doctest.h"
#include "sphflow/toybench.hpp"

using namespace sphflow;
using Eigen::Matrix3d;
using Eigen::Vector3d;

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

double scene_difference(const Scene& a, const Scene& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    d = std::max(d, max_abs(a.objects[i].position - b.objects[i].position));
    d = std::max(d, max_abs(a.objects[i].rotation - b.objects[i].rotation));
  }
  d = std::max(d, max_abs(a.goal.position - b.goal.position));
  d = std::max(d, max_abs(a.end_effector.position - b.end_effector.position));
  d = std::max(d, max_abs(a.end_effector.rotation - b.end_effector.rotation));
  return std::max(d, max_abs(a.tilt - b.tilt));
}

std::string serialize(const Dataset& d) {
  std::ostringstream out;
  write_dataset(out, d);
  return out.str();
}

}  // namespace

TEST_CASE("sample_scene") {
  const BenchConfig cfg;
  std::mt19937_64 a(3), b(3);
  CHECK(scene_difference(sample_scene(Task::kPickPlace, a), sample_scene(Task::kPickPlace, b)) == 0.0);

  std::mt19937_64 rng(4);
  Vector3d mean = Vector3d::Zero();
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const Scene s = sample_scene(i % 2 ? Task::kReach : Task::kPickPlace, rng);
    const Vector3d p = s.objects[0].position;
    CHECK(p.head<2>().norm() <= cfg.object_radius);
    CHECK(p.norm() <= s.workspace_radius);
    CHECK(s.goal.position.norm() <= s.workspace_radius);
    mean += p;
  }
  mean /= n;
  CHECK(mean.head<2>().norm() <= 0.05 * cfg.workspace_radius);
}

TEST_CASE("scripted expert") {
  const BenchConfig cfg;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const Scene s = sample_scene(Task::kReach, rng);
    const Episode e = scripted_expert(s);
    CHECK(e.success);
    World w = make_world(s);
    for (const auto& step : e.steps) execute_action(w, step.action.front());
    CHECK((w.scene.end_effector.position - s.goal.position).norm() <= 1e-6);
  }

  // rotating the scene rotates the rollout
  for (int i = 0; i < 20; ++i) {
    const Scene s = sample_scene(Task::kPickPlace, rng);
    const Matrix3d r = random_rotation<double>(rng).matrix();
    const Episode e = scripted_expert(s), er = scripted_expert(rotate_scene(s, r));
    REQUIRE(e.steps.size() == er.steps.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < e.steps.size(); ++k) {
      worst = std::max(worst, max_abs(er.steps[k].obs.cloud.points - e.steps[k].obs.cloud.points * r.transpose()));
      worst = std::max(worst, max_abs(er.steps[k].obs.image.rgb - e.steps[k].obs.image.rgb));
      for (std::size_t j = 0; j < e.steps[k].action.size(); ++j) {
        const ProprioState &a = e.steps[k].action[j], &b = er.steps[k].action[j];
        worst = std::max(worst, max_abs(b.position - r * a.position));
        worst = std::max(worst, max_abs(b.rotation() - r * a.rotation()));
        CHECK(a.gripper == b.gripper);
      }
    }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("perturb_scene") {
  std::mt19937_64 rng(6);
  const Scene s = sample_scene(Task::kPickPlace, rng);
  CHECK(scene_difference(perturb_scene(s, Perturbation::Kind::kTilt, 0.0), s) == 0.0);
  const Scene back = perturb_scene(perturb_scene(s, Perturbation::Kind::kTilt, 10.0),
                                   Perturbation::Kind::kTilt, -10.0);
  CHECK(scene_difference(back, s) <= 1e-12);

  const Scene tilted = perturb_scene(s, Perturbation::Kind::kTilt, 10.0);
  const Matrix3d r = Eigen::AngleAxisd(10.0 * M_PI / 180.0, Vector3d::UnitY()).toRotationMatrix();
  CHECK(max_abs(render_cloud(make_world(tilted)).points -
                render_cloud(make_world(s)).points * r.transpose()) <= 1e-12);

  CHECK(Perturbation::parse("yaw:haar").kind == Perturbation::Kind::kHaar);
  CHECK(Perturbation::parse("tilt:10").degrees == 10.0);
  CHECK_THROWS_AS(Perturbation::parse("roll:5"), ConfigError);
}

TEST_CASE("generate_dataset") {
  const Dataset one = generate_dataset(Task::kReach, 1, 7);
  REQUIRE(one.episodes.size() == 1);
  const std::string bytes = serialize(one);
  std::istringstream in(bytes);
  CHECK(serialize(read_dataset(in)) == bytes);
  CHECK(serialize(generate_dataset(Task::kReach, 1, 7)) == bytes);
  for (const auto& e : generate_dataset(Task::kPickPlace, 10, 8).episodes) CHECK(e.success);
  CHECK_THROWS_AS(generate_dataset(Task::kReach, 0, 7), ConfigError);

  std::istringstream junk("not a dataset");
  CHECK_THROWS_AS(read_dataset(junk), IoError);
}

TEST_CASE("evaluate") {
  for (Task t : {Task::kReach, Task::kPickPlace}) {
    const EvalReport r = evaluate(expert_policy(), t, 20, Perturbation::parse("haar"), 9);
    CHECK(r.successes == 20);
    CHECK(r.success_rate == 1.0);
  }
  const EvalReport rnd = evaluate(random_policy(), Task::kReach, 100, {}, 10);
  MESSAGE("random policy success rate: " << rnd.success_rate);
  CHECK(rnd.success_rate <= 0.05);
  const EvalReport again = evaluate(random_policy(), Task::kReach, 100, {}, 10);
  CHECK(again.lengths == rnd.lengths);
  CHECK(again.seeds == rnd.seeds);
}
