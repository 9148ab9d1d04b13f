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

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "sphflow/rectified_flow.hpp"

using namespace sphflow;
using ad::Matrix;
using sphflow::testing::random_feature;

namespace {

Eigen::VectorXd flatten(const Feature& f) {
  Eigen::VectorXd v(f.signature().coefficients() * f.frames());
  Eigen::Index k = 0;
  for (int l = 0; l <= kMaxDegree; ++l)
    for (Eigen::Index i = 0; i < f.block(l).size(); ++i) v[k++] = f.block(l).data()[i];
  return v;
}

// Two-sample energy statistic between the rows of x and y.
double energy_statistic(const Matrix& x, const Matrix& y) {
  auto mean_dist = [](const Matrix& a, const Matrix& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j) s += (a.row(i) - b.row(j)).norm();
    return s / double(a.rows() * b.rows());
  };
  return 2.0 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y);
}

}  // namespace

TEST_CASE("sample_source: moments and reproducibility") {
  const Signature sig{1, 3, 1};
  std::mt19937_64 a(5), b(5);
  CHECK(flatten(sample_source(sig, 4, a)) == flatten(sample_source(sig, 4, b)));

  std::mt19937_64 rng(6);
  const int n = 100000;
  const Eigen::Index dim = sig.coefficients();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim), sq = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd v = flatten(sample_source(sig, 1, rng));
    sum += v;
    sq += v.cwiseProduct(v);
  }
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd var = sq / n - mean.cwiseProduct(mean);
  CHECK(mean.cwiseAbs().maxCoeff() <= 0.02);
  CHECK((var.array() - 1.0).abs().maxCoeff() <= 0.05);
}

TEST_CASE("sample_source: rotation leaves the distribution unchanged") {
  // energy-distance permutation test at alpha = 0.01
  const Signature sig{0, 1, 1};
  std::mt19937_64 rng(7);
  const int n = 150;
  const Eigen::Index dim = sig.coefficients() * 2;
  Matrix x(n, dim), y(n, dim);
  const auto d = wigner_blocks(random_rotation<double>(rng), 2);
  for (int i = 0; i < n; ++i) {
    x.row(i) = flatten(sample_source(sig, 2, rng));
    y.row(i) = flatten(apply_rotation(sample_source(sig, 2, rng), d));
  }
  const double observed = energy_statistic(x, y);
  Matrix pooled(2 * n, dim);
  pooled << x, y;
  std::vector<int> idx(2 * n);
  int exceed = 0;
  const int perms = 300;
  for (int p = 0; p < perms; ++p) {
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Matrix a(n, dim), b(n, dim);
    for (int i = 0; i < n; ++i) {
      a.row(i) = pooled.row(idx[i]);
      b.row(i) = pooled.row(idx[n + i]);
    }
    if (energy_statistic(a, b) >= observed) ++exceed;
  }
  const double p_value = (exceed + 1.0) / (perms + 1.0);
  CHECK(p_value > 0.01);

  // the test has power: a shifted sample is rejected
  Matrix shifted = y.array() + 0.5;
  exceed = 0;
  pooled << x, shifted;
  const double obs_shift = energy_statistic(x, shifted);
  for (int p = 0; p < perms; ++p) {
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Matrix a(n, dim), b(n, dim);
    for (int i = 0; i < n; ++i) {
      a.row(i) = pooled.row(idx[i]);
      b.row(i) = pooled.row(idx[n + i]);
    }
    if (energy_statistic(a, b) >= obs_shift) ++exceed;
  }
  CHECK((exceed + 1.0) / (perms + 1.0) <= 0.01);
}

TEST_CASE("make_path_sample") {
  std::mt19937_64 rng(8);
  const Signature sig{1, 3, 0};
  const Feature x0 = random_feature(rng, sig, 4), a = random_feature(rng, sig, 4);
  CHECK(flatten(make_path_sample(x0, a, 0.0).x_t) == flatten(x0));
  CHECK(flatten(make_path_sample(x0, a, 1.0).x_t) == flatten(a));
  const FlowPathSample mid = make_path_sample(x0, a, 0.25);
  CHECK((flatten(mid.x_t) - (0.75 * flatten(x0) + 0.25 * flatten(a))).cwiseAbs().maxCoeff() == 0.0);
  CHECK(flatten(mid.v_star) == flatten(a) - flatten(x0));

  Feature ramp = Feature::zeros(sig, 2);
  double k = 1.0;
  for (int l = 0; l <= 1; ++l)
    for (Eigen::Index i = 0; i < ramp.block(l).size(); ++i) ramp.block(l).data()[i] = k++;
  for (double t : {0.0, 0.3, 1.0})
    CHECK(flatten(make_path_sample(Feature::zeros(sig, 2), ramp, t).v_star) == flatten(ramp));

  CHECK_THROWS_AS(make_path_sample(x0, a, -0.01), ValidationError);
  CHECK_THROWS_AS(make_path_sample(x0, a, 1.01), ValidationError);
  CHECK_THROWS_AS(make_path_sample(x0, random_feature(rng, {1, 2, 0}, 4), 0.5), SignatureError);
}

TEST_CASE("Euler integration oracles") {
  std::mt19937_64 rng(9);
  const Signature sig{1, 3, 0};
  const Feature x0 = random_feature(rng, sig, 4), c = random_feature(rng, sig, 4);
  for (int n : {1, 2, 5, 10, 37}) {
    const Feature x = euler_integrate(x0, n, [&](const Feature&, double) { return c; });
    CHECK(relative_difference(x, x0 + c) <= 8 * n * 1e-16);
  }
  // straight path with matched x0 lands exactly on the target
  const Feature a = random_feature(rng, sig, 4);
  for (int n : {1, 3, 10}) {
    const Feature x = euler_integrate(x0, n, [&](const Feature&, double) { return a - x0; });
    CHECK(relative_difference(x, a) <= 1e-14);
  }
  // the k-th call sees t = k / N
  std::vector<double> seen;
  euler_integrate(x0, 4, [&](const Feature& x, double t) {
    seen.push_back(t);
    return 0.0 * x;
  });
  CHECK(seen == std::vector<double>{0.0, 0.25, 0.5, 0.75});
}

TEST_CASE("two-point target: best constant velocity matches least squares") {
  // targets {a1, a2}, a grid of x0 and t; minimize the mean loss over a
  // constant field by gradient descent on the tape.
  std::mt19937_64 rng(10);
  const Signature sig{1, 2, 0};
  const Feature a1 = random_feature(rng, sig, 2), a2 = random_feature(rng, sig, 2);
  std::vector<Feature> x0s;
  for (int i = 0; i < 5; ++i) x0s.push_back(random_feature(rng, sig, 2));
  std::vector<FlowPathSample> grid;
  for (const Feature* a : {&a1, &a2})
    for (const auto& x0 : x0s)
      for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) grid.push_back(make_path_sample(x0, *a, t));

  // closed form: mean of a_i - x0_j
  Eigen::VectorXd oracle = Eigen::VectorXd::Zero(flatten(a1).size());
  for (const auto& p : grid) oracle += flatten(p.v_star);
  oracle /= double(grid.size());

  ad::ParamSet params{{"c", Matrix::Zero(oracle.size(), 1)}};
  for (int it = 0; it < 200; ++it) {
    ad::Tape tape;
    ad::Binder b(tape, params);
    const ad::Var c = b("c", oracle.size(), 1);
    ad::Var total;
    for (const auto& p : grid) {
      const ad::Var sq = ad::sum_squares(ad::sub(c, tape.constant(flatten(p.v_star))));
      total = total.valid() ? ad::add(total, sq) : sq;
    }
    const ad::Var loss = ad::scale(total, 1.0 / double(grid.size() * oracle.size()));
    tape.backward(loss);
    params["c"] -= 0.4 * double(oracle.size()) * b.gradients().at("c");
  }
  CHECK((params["c"].col(0) - oracle).cwiseAbs().maxCoeff() <= 1e-6);

  // velocity_mse of the fitted field against a brute-force expectation
  Feature c_feat = Feature::zeros(sig, 2);
  Eigen::Index k = 0;
  for (int l = 0; l <= kMaxDegree; ++l)
    for (Eigen::Index i = 0; i < c_feat.block(l).size(); ++i) c_feat.block(l).data()[i] = oracle[k++];
  double brute = 0.0;
  for (const auto& p : grid) brute += (flatten(p.v_star) - oracle).squaredNorm();
  brute /= double(grid.size() * oracle.size());
  const std::vector<Feature> predicted(grid.size(), c_feat);
  CHECK(std::abs(velocity_mse(predicted, grid) - brute) <= 1e-6);
}

TEST_CASE("EMA recursion") {
  const double d = 0.95;
  Ema ema{d, {{"w", Matrix::Constant(2, 2, 3.0)}}};
  const Matrix p = Matrix::Constant(2, 2, -1.0);
  for (int k = 1; k <= 30; ++k) {
    ema.update({{"w", p}});
    const Matrix expect = p * (1.0 - std::pow(d, k)) + Matrix::Constant(2, 2, 3.0) * std::pow(d, k);
    CHECK((ema.shadow.at("w") - expect).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(1e-3, 0, 100) == doctest::Approx(1e-3));
  CHECK(cosine_lr(1e-3, 50, 100) == doctest::Approx(5e-4));
  CHECK(cosine_lr(1e-3, 100, 100) == doctest::Approx(0.0));
  CHECK(cosine_lr(1e-3, 100, 100, 0, 0.1) == doctest::Approx(1e-4));
  CHECK(cosine_lr(1e-3, 4, 100, 10) == doctest::Approx(5e-4));
  CHECK(cosine_lr(0.0, 7, 100) == 0.0);
}

TEST_CASE("AdamW: first step and decoupled decay") {
  AdamW opt;
  opt.weight_decay = 0.1;
  ad::ParamSet p{{"w", (Matrix(1, 3) << 1.0, -2.0, 0.5).finished()}};
  const ad::ParamSet g{{"w", (Matrix(1, 3) << 3.0, -0.01, 0.0).finished()}};
  opt.step(p, g, 0.01);
  // bias-corrected first step moves by lr * sign(g) after the decay
  CHECK(p["w"](0, 0) == doctest::Approx(1.0 * (1 - 0.001) - 0.01).epsilon(1e-9));
  CHECK(p["w"](0, 1) == doctest::Approx(-2.0 * (1 - 0.001) + 0.01).epsilon(1e-6));
  CHECK(p["w"](0, 2) == doctest::Approx(0.5 * (1 - 0.001)).epsilon(1e-12));
  ad::ParamSet frozen = p;
  opt.step(frozen, g, 0.0);
  CHECK(frozen.at("w") == p.at("w"));
  CHECK_THROWS_AS(opt.step(frozen, {{"other", Matrix::Zero(1, 1)}}, 0.1), ConfigError);
}
