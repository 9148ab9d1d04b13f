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
#include "sphflow/policy.hpp"

using namespace sphflow;

namespace {

PolicyConfig small_config(Variant variant = Variant::kEquivariant) {
  PolicyConfig c;
  c.variant = variant;
  c.pcd.shells = 2;
  c.pcd.out = {4, 2, 1};
  c.img.pool = 4;
  c.img.dim = 4;
  c.fem_key_dim = 2;
  c.fem_out = {4, 2, 1};
  c.unet.time_dim = 4;
  c.unet.levels = {{4, 2, 1}};
  c.unet.position_channels = 2;
  c.mlp_hidden = 8;
  return c;
}

struct Fixture {
  PolicyConfig cfg = small_config();
  Dataset data = generate_dataset(Task::kReach, 1, 3);
  std::vector<TrainingSample> samples;

  Fixture() {
    cfg.finalize();
    samples = prepare_dataset(data, cfg);
  }
};

TrainConfig short_run(double lr) {
  TrainConfig tc;
  tc.lr = lr;
  tc.batch_size = 8;
  tc.epochs = 3;
  tc.probe_size = 16;
  tc.log_every = 1;
  tc.seed = 11;
  return tc;
}

bool same(const ad::ParamSet& a, const ad::ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [k, v] : a) {
    const auto it = b.find(k);
    if (it == b.end() || it->second.rows() != v.rows() || it->second.cols() != v.cols()) return false;
    if (!(it->second.array() == v.array()).all()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("training with lr = 0 changes nothing") {
  Fixture fx;
  const TrainResult r = train(fx.samples, fx.cfg, short_run(0.0));
  CHECK(same(r.params, init_policy(fx.cfg, 11)));
  for (const auto& [k, v] : r.params) CHECK((r.ema.at(k) - v).cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + v.cwiseAbs().maxCoeff()));
  REQUIRE(r.epoch_loss.size() == 3);
  CHECK(r.epoch_loss[0] == r.epoch_loss[1]);
  CHECK(r.epoch_loss[1] == r.epoch_loss[2]);
}

TEST_CASE("training is reproducible and lowers the loss") {
  Fixture fx;
  TrainConfig tc = short_run(3e-3);
  tc.epochs = 10;
  std::ostringstream m1, m2;
  const TrainResult a = train(fx.samples, fx.cfg, tc, &m1);
  const TrainResult b = train(fx.samples, fx.cfg, tc, &m2);
  CHECK(m1.str() == m2.str());
  CHECK(same(a.params, b.params));
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());
  tc.seed = 12;
  std::ostringstream m3;
  train(fx.samples, fx.cfg, tc, &m3);
  CHECK(m3.str() != m1.str());
}

TEST_CASE("train rejects bad settings") {
  Fixture fx;
  TrainConfig tc = short_run(1e-3);
  tc.batch_size = 0;
  CHECK_THROWS_AS(train(fx.samples, fx.cfg, tc), ConfigError);
  tc = short_run(-1.0);
  CHECK_THROWS_AS(train(fx.samples, fx.cfg, tc), ConfigError);
  CHECK_THROWS_AS(train({}, fx.cfg, short_run(1e-3)), ConfigError);
  PolicyConfig mlp = small_config(Variant::kMlp);
  CHECK_THROWS_AS(mlp.finalize(), ConfigError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Fixture fx;
  TrainConfig tc = short_run(1e-3);
  tc.epochs = 1;
  const TrainResult r = train(fx.samples, fx.cfg, tc);
  const Checkpoint c{fx.cfg, r.params, r.ema};
  std::stringstream s1;
  write_checkpoint(s1, c);
  const Checkpoint back = read_checkpoint(s1);
  CHECK(same(back.params, c.params));
  CHECK(same(back.ema, c.ema));
  CHECK(policy_config_json(back.config) == policy_config_json(c.config));
  std::stringstream s2;
  write_checkpoint(s2, back);
  CHECK(s2.str() == [&] {
    std::stringstream s;
    write_checkpoint(s, c);
    return s.str();
  }());

  std::stringstream truncated(s2.str().substr(0, s2.str().size() / 2));
  CHECK_THROWS_AS(read_checkpoint(truncated), IoError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/policy.ckpt"), IoError);
}

TEST_CASE("policy config json round trip") {
  PolicyConfig c = small_config();
  c.fusion = false;
  c.unet.stiff_eps = 0.01;
  c.finalize();
  const PolicyConfig back = policy_config_from_json(policy_config_json(c));
  CHECK(policy_config_json(back) == policy_config_json(c));
  CHECK_FALSE(back.fusion);
  CHECK_THROWS_AS(policy_config_from_json("{\"variant\": \"transformer\"}"), ConfigError);
}

TEST_CASE("flow policy: deterministic sampling, fresh model stays put") {
  Fixture fx;
  const ad::ParamSet params = init_policy(fx.cfg, 4);
  const Observation& obs = fx.data.episodes.front().steps.front().obs;
  std::mt19937_64 r1(1), r2(1);
  const ActionChunk a = euler_sample(fx.cfg, params, obs, 5, r1);
  const ActionChunk b = euler_sample(fx.cfg, params, obs, 5, r2);
  REQUIRE(a.size() == std::size_t(fx.cfg.horizon()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].position == b[i].position);
    CHECK(a[i].col1 == b[i].col1);
    CHECK(a[i].gripper == b[i].gripper);
  }

  SamplerStats stats;
  const Policy p = flow_policy(fx.cfg, params, 3, &stats);
  const EvalReport e1 = evaluate(p, Task::kReach, 2, {}, 5);
  const EvalReport e2 = evaluate(p, Task::kReach, 2, {}, 5);
  CHECK(e1.lengths == e2.lengths);
  CHECK(e1.success == e2.success);
  CHECK(stats.calls > 0);
  CHECK_THROWS_AS(flow_policy(fx.cfg, params, 0), ConfigError);
}
