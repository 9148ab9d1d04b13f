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

#include "sphflow/conformance.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sphflow/fusion.hpp"

namespace sphflow {

using ad::Matrix;

namespace {

constexpr double kLayerTol = 1e-6;
constexpr double kGroupTol = 1e-8;
constexpr double kSamplerTol = 1e-5;
constexpr double kBaselineDefect = 0.1;

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sigma = 1.0) {
  std::normal_distribution<double> normal(0.0, sigma);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Feature random_feature(std::mt19937_64& rng, const Signature& sig, int frames = 1) {
  Feature f(sig, frames);
  for (int l = 0; l <= kMaxDegree; ++l) f.block(l) = gaussian(rng, sig[l], frames * degree_dim(l));
  return f;
}

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

EquiLinearParams random_linear(std::mt19937_64& rng, const Signature& in, const Signature& out) {
  EquiLinearParams p;
  for (int l = 0; l <= kMaxDegree; ++l) p.weight[l] = gaussian(rng, out[l], in[l]);
  p.bias0 = gaussian(rng, out[0], 1);
  return p;
}

struct Runner {
  const ConformanceOptions& opt;
  std::mt19937_64 rng;
  std::vector<ConformanceCheck> out;

  bool wants(const std::string& layer) const {
    return opt.layers.empty() ||
           std::find(opt.layers.begin(), opt.layers.end(), layer) != opt.layers.end();
  }

  WignerBlocks<double> random_d() { return wigner_blocks(random_rotation<double>(rng), kMaxDegree); }

  void add(const std::string& layer, const std::string& name, int cases, double violation,
           double tol = kLayerTol, bool expected_fail = false) {
    out.push_back({layer, name, cases, violation, tol, expected_fail});
  }

  // f(D x) against D f(x) over `n` random cases.
  template <typename Make, typename F>
  double equivariance(int n, Make make_input, F f) {
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const Feature x = make_input();
      const auto d = random_d();
      worst = std::max(worst, relative_difference(f(apply_rotation(x, d)), apply_rotation(f(x), d)));
    }
    return worst;
  }

  void so3() {
    const int n = 5 * opt.cases;
    double ortho = 0.0, comp = 0.0, inv = 0.0, sh = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto r1 = random_rotation<double>(rng), r2 = random_rotation<double>(rng);
      const auto d1 = wigner_blocks(r1), d2 = wigner_blocks(r2);
      const auto d12 = wigner_blocks(r1 * r2), dinv = wigner_blocks(r1.inverse());
      std::normal_distribution<double> normal(0.0, 1.0);
      const Eigen::Vector3d dir = Eigen::Vector3d(normal(rng), normal(rng), normal(rng)).normalized();
      for (int l = 0; l <= kMaxDegree; ++l) {
        const Matrix eye = Matrix::Identity(degree_dim(l), degree_dim(l));
        ortho = std::max(ortho, max_abs(d1[l].transpose() * d1[l] - eye));
        comp = std::max(comp, max_abs(d12[l] - d1[l] * d2[l]));
        inv = std::max(inv, max_abs(dinv[l] - d1[l].transpose()));
        const Eigen::VectorXd lhs = eval_real_sh<double>(l, (r1.matrix() * dir).normalized());
        sh = std::max(sh, max_abs(lhs - d1[l] * eval_real_sh<double>(l, dir)));
      }
    }
    add("so3", "wigner orthogonality", n, ortho, kGroupTol);
    add("so3", "wigner composition", n, comp, kGroupTol);
    add("so3", "wigner inverse", n, inv, kGroupTol);
    add("so3", "harmonic equivariance Y(Rr) = D Y(r)", n, sh, kGroupTol);
  }

  void layers() {
    const int n = opt.cases;
    if (wants("equi_linear")) {
      const Signature in{3, 4, 2}, o{2, 3, 3};
      double worst = 0.0;
      for (int i = 0; i < n; ++i) {
        const auto p = random_linear(rng, in, o);
        worst = std::max(worst, equivariance(1, [&] { return random_feature(rng, in, 2); },
                                             [&](const Feature& x) { return equi_linear(x, p); }));
      }
      add("equi_linear", "equi_linear", n, worst);
    }
    if (wants("gate")) {
      add("gate", "gated nonlinearity", n,
          equivariance(n, [&] { return random_feature(rng, {6, 2, 2}, 3); },
                       [](const Feature& x) { return gated_nonlinearity(x); }));
    }
    if (wants("temporal_conv")) {
      const Signature in{2, 3, 1}, o{3, 2, 2};
      double worst = 0.0;
      for (int i = 0; i < n; ++i) {
        TemporalConvParams p;
        p.radius = 2;
        for (int l = 0; l <= kMaxDegree; ++l)
          for (int j = 0; j <= p.radius; ++j) p.weight[l].push_back(gaussian(rng, o[l], in[l]));
        p.bias0 = gaussian(rng, o[0], 1);
        worst = std::max(worst, equivariance(1, [&] { return random_feature(rng, in, 8); },
                                             [&](const Feature& x) { return temporal_conv(x, p); }));
      }
      add("temporal_conv", "spherical temporal convolution", n, worst);
    }
    if (wants("efilm")) {
      const Signature sig{2, 3, 2};
      for (bool affine : {false, true}) {
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
          const Feature h = random_feature(rng, sig, 2), g = random_feature(rng, sig, 2),
                        b = random_feature(rng, sig, 2);
          const auto d = random_d();
          const EfilmOptions eo{1e-8, affine};
          worst = std::max(worst, relative_difference(
                                      efilm(apply_rotation(h, d), apply_rotation(g, d), apply_rotation(b, d), eo),
                                      apply_rotation(efilm(h, g, b, eo), d)));
        }
        add("efilm", affine ? "efilm (affine scalars)" : "efilm", n, worst);
      }
    }
    if (wants("efilm_identity")) efilm_identity(2 * n);
    if (wants("fem_fuse")) {
      const Signature sig{4, 3, 2};
      double worst = 0.0;
      for (int i = 0; i < n; ++i) {
        FemParams p;
        p.wq = gaussian(rng, 3, sig[0]);
        p.wk = gaussian(rng, 3, 5);
        p.wv = gaussian(rng, sig[0], 5);
        p.gate_w = gaussian(rng, sig[0], 2 * sig[0]);
        p.gate_b = gaussian(rng, sig[0], 1);
        p.proj = random_linear(rng, sig, {3, 2, 2});
        const ImageTokens img{gaussian(rng, 4, 5)};  // fixed image
        worst = std::max(worst, equivariance(1, [&] { return random_feature(rng, sig, 1); },
                                             [&](const Feature& x) { return fem_fuse(x, img, p); }));
      }
      add("fem_fuse", "fem_fuse with a fixed image", n, worst);
    }
    if (wants("point_encoder")) point_encoder(n);
    if (wants("unet")) unet(n);
  }

  // Each line of the EFiLM derivation evaluated on its own, per degree.
  void efilm_identity(int n) {
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto d = random_d();
      for (int l = 1; l <= kMaxDegree; ++l) {
        const Eigen::VectorXd h = gaussian(rng, degree_dim(l), 1), g = gaussian(rng, degree_dim(l), 1),
                              b = gaussian(rng, degree_dim(l), 1);
        const Matrix& D = d[l];
        const Eigen::VectorXd dh = D * h, dg = D * g, db = D * b;
        // efilm(Dh | Dg, Db) via the library
        std::array<Matrix, kMaxDegree + 1> bh, bg, bb;
        bh[l] = dh.transpose();
        bg[l] = dg.transpose();
        bb[l] = db.transpose();
        const Eigen::VectorXd line0 =
            efilm(Feature::from_blocks(bh), Feature::from_blocks(bg), Feature::from_blocks(bb)).block(l).transpose();
        const Eigen::VectorXd line1 = dg.dot(dh) * dh / dh.norm() + db;
        const Eigen::VectorXd line2 = (g.transpose() * D.transpose() * D * h)(0) * dh / dh.norm() + db;
        const Eigen::VectorXd line3 = g.dot(h) * dh / h.norm() + db;
        const Eigen::VectorXd line4 = D * (g.dot(h) * h / h.norm() + b);
        const double scale = std::max(line4.cwiseAbs().maxCoeff(), 1e-12);
        for (const auto* v : {&line0, &line1, &line2, &line3})
          worst = std::max(worst, (*v - line4).cwiseAbs().maxCoeff() / scale);
        worst = std::max(worst, std::abs(dh.norm() - h.norm()) / h.norm());
      }
    }
    add("efilm_identity", "efilm derivation chain", n, worst, kGroupTol);
  }

  void point_encoder(int n) {
    PolicyConfig cfg;
    cfg.finalize();
    ad::ParamSet params = init_policy(cfg, rng());
    ad::jitter(params, rng, 0.1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      PointCloud pc;
      const int m = 40;
      pc.points = 0.2 * gaussian(rng, m, 3);
      pc.colors.resize(m, 3);
      for (Eigen::Index k = 0; k < pc.colors.size(); ++k) pc.colors.data()[k] = u(rng);
      pc.points.rowwise() -= pc.points.colwise().mean();
      const auto r = random_rotation<double>(rng);
      PointCloud moved = pc;
      moved.points = pc.points * r.matrix().transpose();
      worst = std::max(worst, relative_difference(encode_point_cloud(moved, cfg.pcd, params),
                                                  apply_rotation(encode_point_cloud(pc, cfg.pcd, params),
                                                                 wigner_blocks(r))));
    }
    add("point_encoder", "point-cloud encoder", n, worst);
  }

  void unet(int n) {
    UNetConfig cfg;
    cfg.horizon = 8;
    cfg.cond = {5, 3, 2};
    ad::ParamSet params = init_unet(cfg, rng());
    ad::jitter(params, rng, 0.2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const Feature x = random_feature(rng, cfg.io, cfg.horizon), c = random_feature(rng, cfg.cond);
      const double t = u(rng);
      const auto d = random_d();
      worst = std::max(worst, relative_difference(
                                  equi_unet_forward(apply_rotation(x, d), t, apply_rotation(c, d), cfg, params),
                                  apply_rotation(equi_unet_forward(x, t, c, cfg, params), d)));
    }
    add("unet", "equi_unet_forward", n, worst);
  }

  // End-to-end checks on toy observations under a random rigid motion.
  void policy(const PolicyConfig* cfg_in, const ad::ParamSet* params_in) {
    PolicyConfig cfg = cfg_in ? *cfg_in : PolicyConfig{};
    ad::ParamSet params;
    if (params_in) {
      params = *params_in;
    } else {
      if (cfg.variant == Variant::kMlp && cfg.mlp_points < 1) {
        World w = make_world(sample_scene(Task::kReach, rng));
        cfg.mlp_points = render_cloud(w).size();
      }
      cfg.finalize();
      params = init_policy(cfg, rng());
      ad::jitter(params, rng, 0.1);
    }
    cfg.finalize();
    const bool baseline = cfg.variant == Variant::kMlp;
    const double tol = baseline ? kBaselineDefect : kLayerTol;
    const int n = std::max(1, opt.cases / 5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 0.1);

    double velocity = 0.0, sampler = 0.0, loss = 0.0;
    for (int i = 0; i < n; ++i) {
      // the dense baseline takes a fixed point count, i.e. one task
      const Task task = i % 2 && !baseline ? Task::kPickPlace : Task::kReach;
      const Observation obs = observe(make_world(sample_scene(task, rng)));
      const auto r = random_rotation<double>(rng);
      const Eigen::Vector3d shift(normal(rng), normal(rng), normal(rng));
      const Observation moved = transform_observation(obs, r.matrix(), shift);
      const auto d = wigner_blocks(r);
      const PreparedObservation p = prepare_observation(obs, cfg), q = prepare_observation(moved, cfg);

      const Feature x = random_feature(rng, cfg.action_signature(), cfg.horizon());
      const double t = u(rng);
      const VelocityField vp = conditioned_velocity(cfg, params, p), vq = conditioned_velocity(cfg, params, q);
      const Feature ref = apply_rotation(vp(x, t), d);
      const double denom = std::sqrt(ref.squared_norm());
      velocity = std::max(velocity, denom > 0 ? std::sqrt((vq(apply_rotation(x, d), t) - ref).squared_norm()) / denom
                                              : 0.0);

      const ActionChunk a = decode_policy_output(euler_integrate(x, 10, vp), p, cfg);
      const ActionChunk b = decode_policy_output(euler_integrate(apply_rotation(x, d), 10, vq), q, cfg);
      const ActionChunk expect = transform_chunk(a, r.matrix(), shift);
      double diff = 0.0, scale = 1e-12;
      for (std::size_t k = 0; k < b.size(); ++k) {
        for (const auto& [got, want] : {std::pair{b[k].position, expect[k].position},
                                        std::pair{b[k].col1, expect[k].col1}, std::pair{b[k].col2, expect[k].col2}}) {
          diff = std::max(diff, (got - want).cwiseAbs().maxCoeff());
          scale = std::max(scale, want.cwiseAbs().maxCoeff());
        }
        diff = std::max(diff, std::abs(b[k].gripper - expect[k].gripper));
      }
      sampler = std::max(sampler, diff / scale);

      if (!baseline) {
        const Feature target = random_feature(rng, cfg.action_signature(), cfg.horizon());
        const FlowPathSample path = make_path_sample(x, target, t);
        const FlowPathSample rotated =
            make_path_sample(apply_rotation(x, d), apply_rotation(target, d), t);
        ad::Tape t1, t2;
        ad::Binder b1(t1, params, false), b2(t2, params, false);
        const double l1 = rf_loss(b1, cfg, {&p}, {path}).value()(0, 0);
        const double l2 = rf_loss(b2, cfg, {&q}, {rotated}).value()(0, 0);
        loss = std::max(loss, std::abs(l1 - l2) / std::max(std::abs(l1), 1e-300));
      }
    }
    const std::string tag = baseline ? " (dense baseline)" : "";
    add("policy", "velocity field under rigid motion" + tag, n, velocity, tol, baseline);
    add("policy", "10-step sampler under rigid motion" + tag, n, sampler, baseline ? tol : kSamplerTol,
        baseline);
    if (!baseline) add("policy", "rf_loss invariance", n, loss, kGroupTol);
  }
};

}  // namespace

const std::vector<std::string>& conformance_layers() {
  static const std::vector<std::string> names = {"so3",    "equi_linear",    "gate",     "temporal_conv",
                                                 "efilm",  "efilm_identity", "fem_fuse", "point_encoder",
                                                 "unet",   "policy"};
  return names;
}

std::vector<ConformanceCheck> run_conformance(const ConformanceOptions& options, const PolicyConfig* cfg,
                                              const ad::ParamSet* params) {
  for (const auto& l : options.layers) {
    const auto& all = conformance_layers();
    if (std::find(all.begin(), all.end(), l) == all.end()) throw ConfigError("unknown layer '" + l + "'");
  }
  if (options.cases < 1) throw ConfigError("conformance cases must be positive");
  Runner run{options, std::mt19937_64(options.seed), {}};
  if (run.wants("so3")) run.so3();
  run.layers();
  if (run.wants("policy")) run.policy(cfg, params);
  return run.out;
}

}  // namespace sphflow
