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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace sphflow;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result sphflow_cmd(std::vector<std::string> args) {
  args.insert(args.begin(), "sphflow");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sphflow_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("gen-data: reproducible dataset and manifest, usage errors") {
  TempDir tmp;
  REQUIRE(sphflow_cmd({"gen-data", "--task", "reach", "--n", "2", "--seed", "7", "--out", tmp / "a"}).code == 0);
  REQUIRE(sphflow_cmd({"gen-data", "--task", "reach", "--n", "2", "--seed", "7", "--out", tmp / "b"}).code == 0);
  CHECK(slurp(tmp / "a/dataset.bin") == slurp(tmp / "b/dataset.bin"));
  CHECK(slurp(tmp / "a/manifest.json") == slurp(tmp / "b/manifest.json"));
  const auto manifest = nlohmann::json::parse(slurp(tmp / "a/manifest.json"));
  CHECK(manifest.at("episodes").size() == 2);
  CHECK(manifest.at("seed") == 7);
  CHECK(load_dataset(tmp / "a/dataset.bin").episodes.size() == 2);

  CHECK(sphflow_cmd({"gen-data", "--n", "0", "--out", tmp / "c"}).code == cli::kUsage);
  CHECK(sphflow_cmd({"gen-data", "--task", "juggle", "--out", tmp / "c"}).code == cli::kUsage);
  CHECK(sphflow_cmd({}).code == cli::kUsage);
  CHECK(sphflow_cmd({"gen-data", "--bogus"}).code == cli::kUsage);
  CHECK(sphflow_cmd({"gen-data", "--help"}).code == cli::kOk);
}

TEST_CASE("train: resolved config reruns to an identical metrics log") {
  TempDir tmp;
  REQUIRE(sphflow_cmd({"gen-data", "--n", "1", "--seed", "3", "--out", tmp / "d"}).code == 0);
  const Result r = sphflow_cmd({"train", "--data", tmp / "d/dataset.bin", "--steps", "4", "--lr", "1e-3",
                                "--batch-size", "8", "--log-every", "1", "--seed", "5", "--out", tmp / "t1"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(tmp / "t1/checkpoint.bin"));
  const cli::RunConfig c = cli::run_config_from_json(slurp(tmp / "t1/config.json"));
  CHECK(c.command == "train");
  CHECK(c.train.max_steps == 4);
  CHECK(c.seed == 5);
  CHECK(cli::run_config_json(c) == slurp(tmp / "t1/config.json"));

  REQUIRE(sphflow_cmd({"train", "--config", tmp / "t1/config.json", "--out", tmp / "t2"}).code == 0);
  CHECK(slurp(tmp / "t1/metrics.jsonl") == slurp(tmp / "t2/metrics.jsonl"));

  // lr 0: the epoch loss never moves
  REQUIRE(sphflow_cmd({"train", "--data", tmp / "d/dataset.bin", "--steps", "3", "--batch-size", "16", "--lr", "0",
                       "--out", tmp / "t0"})
              .code == 0);
  std::istringstream lines(slurp(tmp / "t0/metrics.jsonl"));
  std::vector<double> losses;
  for (std::string line; std::getline(lines, line);) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") == "epoch") losses.push_back(j.at("loss").get<double>());
  }
  REQUIRE(losses.size() == 3);
  CHECK(losses[0] == losses[1]);
  CHECK(losses[1] == losses[2]);

  CHECK(sphflow_cmd({"train", "--data", tmp / "missing.bin", "--out", tmp / "t3"}).code == cli::kRuntime);
  CHECK(sphflow_cmd({"train", "--lr", "-1", "--out", tmp / "t3"}).code == cli::kUsage);
  CHECK(sphflow_cmd({"train", "--config", tmp / "missing.json"}).code == cli::kUsage);
}

TEST_CASE("eval and sweep-steps") {
  TempDir tmp;
  const Result e = sphflow_cmd({"eval", "--checkpoint", "expert", "--episodes", "4", "--perturb", "yaw:0,yaw:haar",
                                "--out", tmp / "e"});
  REQUIRE(e.code == 0);
  CHECK(e.out.find("100.0") != std::string::npos);
  std::istringstream lines(slurp(tmp / "e/eval.jsonl"));
  int rows = 0;
  for (std::string line; std::getline(lines, line); ++rows) CHECK(nlohmann::json::parse(line).at("success_rate") == 1.0);
  CHECK(rows == 2);

  const Result missing = sphflow_cmd({"eval", "--checkpoint", tmp / "none.bin", "--out", tmp / "e2"});
  CHECK(missing.code == cli::kRuntime);
  CHECK(missing.err.find("none.bin") != std::string::npos);
  CHECK(sphflow_cmd({"eval", "--out", tmp / "e3"}).code == cli::kUsage);

  REQUIRE(sphflow_cmd({"train", "--n", "1", "--steps", "2", "--batch-size", "4", "--out", tmp / "t"}).code == 0);
  const Result s = sphflow_cmd({"sweep-steps", "--checkpoint", tmp / "t/checkpoint.bin", "--steps", "1,3",
                                "--episodes", "1", "--out", tmp / "s"});
  REQUIRE(s.code == 0);
  CHECK(fs::exists(tmp / "s/sweep.jsonl"));
  CHECK(sphflow_cmd({"sweep-steps", "--checkpoint", tmp / "t/checkpoint.bin", "--out", tmp / "s2"}).code ==
        cli::kUsage);
  CHECK(sphflow_cmd({"sweep-steps", "--checkpoint", tmp / "t/checkpoint.bin", "--steps", "0", "--out", tmp / "s3"})
            .code == cli::kUsage);
}

TEST_CASE("equiv-check and grad-check") {
  TempDir tmp;
  const Result only = sphflow_cmd({"equiv-check", "--layers", "efilm", "--cases", "10", "--out", tmp / "q"});
  REQUIRE(only.code == 0);
  std::istringstream lines(slurp(tmp / "q/equiv.jsonl"));
  for (std::string line; std::getline(lines, line);) CHECK(nlohmann::json::parse(line).at("layer") == "efilm");

  const Result mlp = sphflow_cmd(
      {"equiv-check", "--variant", "mlp-baseline", "--layers", "policy", "--cases", "10", "--out", tmp / "m"});
  CHECK(mlp.code == 0);
  CHECK(mlp.out.find("EXPECTED-FAIL") != std::string::npos);
  CHECK(sphflow_cmd({"equiv-check", "--layers", "nope", "--out", tmp / "x"}).code == cli::kUsage);

  CHECK(sphflow_cmd({"grad-check", "--ops", "equi_linear,gate", "--out", tmp / "g"}).code == 0);
  CHECK(sphflow_cmd({"grad-check", "--ops", "nope", "--out", tmp / "g2"}).code == cli::kUsage);
}

TEST_CASE("run config: unknown keys are rejected, model keys round trip") {
  CHECK_THROWS_AS(cli::run_config_from_json("{\"colour\": 1}"), ConfigError);
  CHECK_THROWS_AS(cli::run_config_from_json("[1, 2]"), ConfigError);
  const cli::RunConfig c = cli::run_config_from_json("{\"horizon\": 8, \"fusion\": false, \"lr\": 0.01}");
  CHECK(c.policy.unet.horizon == 8);
  CHECK_FALSE(c.policy.fusion);
  CHECK(c.train.lr == 0.01);
  CHECK(cli::run_config_from_json(cli::run_config_json(c)).policy.unet.horizon == 8);
}
