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

#include "sphflow/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <random>

#include "sphflow/equi_nn.hpp"
#include "sphflow/fusion.hpp"
#include "sphflow/policy.hpp"

namespace sphflow {

using ad::Binder;
using ad::Matrix;
using ad::ParamSet;
using ad::Var;

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sigma = 1.0) {
  std::normal_distribution<double> normal(0.0, sigma);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

// Scalar probe: sum_k <w_k, out_k>. The weights are drawn on first use.
class Probe {
 public:
  Probe(const GradCheckFunction& f, std::uint64_t seed) : f_(f), rng_(seed) {}

  Var operator()(Binder& b) {
    const std::vector<Var> outs = f_(b);
    if (weights_.empty()) {
      for (const auto& o : outs) weights_.push_back(gaussian(rng_, o.rows(), o.cols()));
    }
    if (weights_.size() != outs.size()) throw ConfigError("grad_check: output count changed");
    Var total;
    for (std::size_t k = 0; k < outs.size(); ++k) {
      const Var term = ad::sum(ad::mul(outs[k], b.tape().constant(weights_[k])));
      total = total.valid() ? ad::add(total, term) : term;
    }
    return total;
  }

  double value(const ParamSet& point) {
    ad::Tape tape;
    Binder b(tape, point, false);
    return (*this)(b).value()(0, 0);
  }

 private:
  const GradCheckFunction& f_;
  std::mt19937_64 rng_;
  std::vector<Matrix> weights_;
};

IrrepVar bind_feature(Binder& b, const std::string& name, const Signature& sig, int frames) {
  IrrepVar f;
  f.frames = frames;
  for (int l = 0; l <= kMaxDegree; ++l) {
    if (sig.has(l)) f.blocks[l] = b(name + ".l" + std::to_string(l), sig[l], frames * degree_dim(l));
  }
  return f;
}

std::vector<Var> outputs(const IrrepVar& f) {
  std::vector<Var> out;
  for (const auto& v : f.blocks)
    if (v.valid()) out.push_back(v);
  return out;
}

struct NamedOp {
  bool linear;
  std::function<GradCheckFunction(std::mt19937_64&)> make;
};

// Small policy configuration and two prepared samples for the loss checks.
struct PolicyFixture {
  PolicyConfig cfg;
  std::vector<TrainingSample> data;
  std::vector<FlowPathSample> paths;
};

std::shared_ptr<PolicyFixture> policy_fixture(Variant variant, std::mt19937_64& rng) {
  auto fx = std::make_shared<PolicyFixture>();
  PolicyConfig& c = fx->cfg;
  c.variant = variant;
  c.pcd.shells = 2;
  c.pcd.out = {4, 2, 1};
  c.img.pool = 2;
  c.img.dim = 4;
  c.fem_key_dim = 2;
  c.fem_out = {4, 2, 1};
  c.unet.horizon = 4;
  c.unet.time_dim = 4;
  c.unet.levels = {{4, 2, 1}};
  c.unet.position_channels = 2;
  c.mlp_hidden = 8;
  const Dataset d = generate_dataset(Task::kReach, 1, rng());
  c.mlp_points = int(d.episodes.front().steps.front().obs.cloud.points.rows());
  // the toy expert plans 16 steps; keep the first horizon frames
  Dataset cut = d;
  for (auto& e : cut.episodes)
    for (auto& s : e.steps) s.action.resize(c.unet.horizon);
  c.finalize();
  fx->data = prepare_dataset(cut, c);
  fx->data.resize(2);
  std::uniform_real_distribution<double> uniform(0.05, 0.95);
  for (const auto& s : fx->data) {
    fx->paths.push_back(make_path_sample(sample_source(c.action_signature(), c.horizon(), rng), s.target,
                                         uniform(rng)));
  }
  return fx;
}

const std::map<std::string, NamedOp>& registry() {
  static const std::map<std::string, NamedOp> ops = {
      {"equi_linear",
       {true,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) {
            const IrrepVar x = bind_feature(b, "x", {3, 2, 2}, 2);
            return outputs(equi_linear(x, bind_equi_linear(b, "lin", {3, 2, 2}, {2, 3, 1}, true)));
          };
        }}},
      {"temporal_conv",
       {true,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) {
            const IrrepVar x = bind_feature(b, "x", {2, 2, 1}, 8);
            return outputs(temporal_conv(x, 4, bind_temporal_conv(b, "conv", {2, 2, 1}, {3, 1, 2}, 2, true)));
          };
        }}},
      {"temporal_pool",
       {true,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) { return outputs(temporal_pool(bind_feature(b, "x", {2, 2, 1}, 8), 4, 2)); };
        }}},
      {"temporal_repeat",
       {true,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) { return outputs(temporal_repeat(bind_feature(b, "x", {2, 2, 1}, 3), 2)); };
        }}},
      {"image_encoder",
       {true,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) {
            ImageEncoderConfig cfg;
            cfg.pool = 2;
            cfg.dim = 5;
            return std::vector<Var>{
                encode_image(b, "img", cfg, b("patches", cfg.tokens(), cfg.patch_features()))};
          };
        }}},
      {"gate",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) { return outputs(gated_nonlinearity(bind_feature(b, "x", {5, 2, 1}, 3))); };
        }}},
      {"efilm",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) {
            const Signature sig{2, 2, 2};
            return outputs(efilm(bind_feature(b, "h", sig, 2), bind_feature(b, "gamma", sig, 2),
                                 bind_feature(b, "beta", sig, 2)));
          };
        }}},
      {"efilm_affine",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) {
            const Signature sig{2, 2, 2};
            return outputs(efilm(bind_feature(b, "h", sig, 2), bind_feature(b, "gamma", sig, 2),
                                 bind_feature(b, "beta", sig, 2), {1e-8, true}));
          };
        }}},
      {"cross_attention",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) {
            const FemVars p = bind_fem(b, "fem", {3, 1, 1}, 4, 2, {3, 1, 1});
            return std::vector<Var>{cross_attention(b("f0", 3, 2), b("tokens", 5, 4), p)};
          };
        }}},
      {"fem_gate",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) {
            const FemVars p = bind_fem(b, "fem", {3, 1, 1}, 4, 2, {3, 1, 1});
            return std::vector<Var>{fem_gate(b("attended", 3, 2), b("original", 3, 2), p)};
          };
        }}},
      {"fem_fuse",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) {
            const Signature sig{3, 2, 1};
            const FemVars p = bind_fem(b, "fem", sig, 4, 2, {2, 2, 2});
            return outputs(fem_fuse(bind_feature(b, "f", sig, 2), {b("tokens0", 5, 4), b("tokens1", 5, 4)}, p));
          };
        }}},
      {"point_encoder",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) {
            PointEncoderConfig cfg;
            cfg.shells = 2;
            cfg.out = {3, 2, 1};
            return outputs(encode_point_cloud(b, "pcd", cfg, bind_feature(b, "raw", cfg.raw_signature(), 2)));
          };
        }}},
      {"unet",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) {
            UNetConfig cfg;
            cfg.horizon = 4;
            cfg.io = {1, 2, 0};
            cfg.cond = {2, 2, 1};
            cfg.time_dim = 4;
            cfg.levels = {{3, 2, 1}};
            cfg.position_channels = 2;
            return outputs(unet_forward(b, "unet", cfg, bind_feature(b, "x", cfg.io, 8), {0.3, 0.8},
                                        bind_feature(b, "cond", cfg.cond, 2)));
          };
        }}},
      {"rf_loss",
       {false,
        [](std::mt19937_64& rng) -> GradCheckFunction {
          auto fx = policy_fixture(Variant::kEquivariant, rng);
          return [fx](Binder& b) {
            return std::vector<Var>{
                rf_loss(b, fx->cfg, {&fx->data[0].obs, &fx->data[1].obs}, fx->paths)};
          };
        }}},
      {"mlp_baseline",
       {false,
        [](std::mt19937_64& rng) -> GradCheckFunction {
          auto fx = policy_fixture(Variant::kMlp, rng);
          return [fx](Binder& b) {
            return std::vector<Var>{
                rf_loss(b, fx->cfg, {&fx->data[0].obs, &fx->data[1].obs}, fx->paths)};
          };
        }}},
      {"ad.matmul",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) { return std::vector<Var>{ad::matmul(b("a", 3, 4), b("b", 4, 2))}; };
        }}},
      {"ad.softmax_rows",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) { return std::vector<Var>{ad::softmax_rows(b("a", 3, 5))}; };
        }}},
      {"ad.sigmoid",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) { return std::vector<Var>{ad::sigmoid(b("a", 3, 4))}; };
        }}},
      {"ad.silu",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) { return std::vector<Var>{ad::silu(b("a", 3, 4))}; };
        }}},
      {"ad.scale_frames",
       {false,
        [](std::mt19937_64&) -> GradCheckFunction {
          return [](Binder& b) { return std::vector<Var>{ad::scale_frames(b("x", 2, 9), b("s", 2, 3), 3)}; };
        }}},
  };
  return ops;
}

}  // namespace

GradCheckResult grad_check(const GradCheckFunction& f, const ParamSet& point, std::uint64_t seed,
                           double step) {
  Probe probe(f, seed);
  ad::Tape tape;
  Binder b(tape, point, true);
  const Var root = probe(b);
  tape.backward(root);
  const ParamSet analytic = b.gradients();

  GradCheckResult r;
  ParamSet work = point;
  for (const auto& [name, g] : analytic) {
    Matrix& m = work.at(name);
    Matrix numeric(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + step;
      const double up = probe.value(work);
      m.data()[i] = saved - step;
      const double down = probe.value(work);
      m.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2.0 * step);
    }
    r.coefficients += m.size();
    if (m.size() == 0) continue;
    const double scale = std::max({g.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-300});
    const double diff = (g - numeric).cwiseAbs().maxCoeff();
    if (diff == 0.0) continue;
    r.error = std::max(r.error, diff / scale);
  }
  return r;
}

const std::vector<std::string>& grad_check_ops() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, op] : registry()) n.push_back(name);
    return n;
  }();
  return names;
}

double grad_check_tolerance(const std::string& op) {
  auto it = registry().find(op);
  if (it == registry().end()) throw ConfigError("unknown grad_check op '" + op + "'");
  return it->second.linear ? 1e-7 : 1e-4;
}

GradCheckResult grad_check(const std::string& op, std::uint64_t seed, double step) {
  auto it = registry().find(op);
  if (it == registry().end()) throw ConfigError("unknown grad_check op '" + op + "'");
  std::mt19937_64 rng(seed);
  const GradCheckFunction f = it->second.make(rng);

  // Create every bound matrix, then move all of them off their initial
  // values (zero heads, closed gates, unit gains).
  ParamSet point;
  {
    ad::Tape tape;
    Binder b(tape, point, false, rng);
    f(b);
  }
  ad::jitter(point, rng, 0.5);

  GradCheckResult r = grad_check(f, point, rng(), step);
  r.op = op;
  r.tolerance = grad_check_tolerance(op);
  return r;
}

}  // namespace sphflow
