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

#include <limits>

#include "doctest.h"
#include "oracles.hpp"
#include "sphflow/fusion.hpp"

using namespace sphflow;
using ad::Matrix;
using sphflow::testing::random_feature;
using sphflow::testing::random_matrix;

namespace {

FemParams random_fem(std::mt19937_64& rng, const Signature& sig, int d_img, int d_key,
                     const Signature& out) {
  FemParams p;
  p.wq = random_matrix(rng, d_key, sig[0]);
  p.wk = random_matrix(rng, d_key, d_img);
  p.wv = random_matrix(rng, sig[0], d_img);
  p.gate_w = random_matrix(rng, sig[0], 2 * sig[0]);
  p.gate_b = random_matrix(rng, sig[0], 1);
  for (int l = 0; l <= kMaxDegree; ++l) p.proj.weight[l] = random_matrix(rng, out[l], sig[l]);
  p.proj.bias0 = random_matrix(rng, out[0], 1);
  return p;
}

// Loop-level softmax attention written out term by term.
Matrix brute_attention(const Matrix& f0, const Matrix& tokens, const FemParams& p) {
  const double scale = 1.0 / std::sqrt(double(p.wq.rows()));
  Matrix out = Matrix::Zero(f0.rows(), f0.cols());
  for (int q = 0; q < f0.cols(); ++q) {
    std::vector<double> s(tokens.rows());
    double mx = -1e300;
    for (int k = 0; k < tokens.rows(); ++k) {
      double dot = 0.0;
      for (int d = 0; d < p.wq.rows(); ++d) {
        double qd = 0.0, kd = 0.0;
        for (int i = 0; i < f0.rows(); ++i) qd += p.wq(d, i) * f0(i, q);
        for (int i = 0; i < tokens.cols(); ++i) kd += p.wk(d, i) * tokens(k, i);
        dot += qd * kd;
      }
      s[k] = dot * scale;
      mx = std::max(mx, s[k]);
    }
    double z = 0.0;
    for (double& v : s) z += (v = std::exp(v - mx));
    for (int k = 0; k < tokens.rows(); ++k)
      for (int c = 0; c < f0.rows(); ++c) {
        double val = 0.0;
        for (int i = 0; i < tokens.cols(); ++i) val += p.wv(c, i) * tokens(k, i);
        out(c, q) += s[k] / z * val;
      }
  }
  return out;
}

}  // namespace

TEST_CASE("cross attention") {
  std::mt19937_64 rng(1);
  const Signature sig{4, 2, 1};
  const FemParams p = random_fem(rng, sig, 5, 4, sig);

  const Matrix one = random_matrix(rng, 1, 5);
  const Matrix f0 = random_matrix(rng, 4, 3);
  const Matrix single = cross_attention(f0, {one}, p);
  for (int q = 0; q < 3; ++q) CHECK((single.col(q) - p.wv * one.transpose()).norm() <= 1e-14);

  Matrix twice(2, 5);
  twice << one, one;
  CHECK((cross_attention(f0, {twice}, p) - single).cwiseAbs().maxCoeff() <= 1e-14);

  const Matrix tokens = random_matrix(rng, 3, 5);
  const Matrix f2 = random_matrix(rng, 4, 2);
  CHECK((cross_attention(f2, {tokens}, p) - brute_attention(f2, tokens, p)).cwiseAbs().maxCoeff() <=
        1e-10);

  CHECK_THROWS_AS(cross_attention(random_matrix(rng, 3, 2), {tokens}, p), SignatureError);
  CHECK_THROWS_AS(cross_attention(f2, {random_matrix(rng, 3, 6)}, p), SignatureError);
}

TEST_CASE("gate") {
  std::mt19937_64 rng(2);
  const Signature sig{3, 1, 1};
  FemParams p = random_fem(rng, sig, 4, 4, sig);
  const Matrix a = random_matrix(rng, 3, 2), o = random_matrix(rng, 3, 2);

  p.gate_b.setConstant(-std::numeric_limits<double>::infinity());
  CHECK(fem_gate(a, o, p) == o);
  p.gate_b.setConstant(std::numeric_limits<double>::infinity());
  CHECK(fem_gate(a, o, p) == a);
  p.gate_w.setZero();
  p.gate_b.setZero();
  CHECK((fem_gate(a, o, p) - 0.5 * (a + o)).cwiseAbs().maxCoeff() <= 1e-12);

  // gate values stay inside (0, 1): output lies between the two inputs
  p = random_fem(rng, sig, 4, 4, sig);
  const Matrix g = fem_gate(a, o, p);
  CHECK(((g - o).array() * (g - a).array() <= 0.0).all());
  CHECK_THROWS_AS(fem_gate(a, random_matrix(rng, 3, 3), p), SignatureError);
}

TEST_CASE("fem_fuse") {
  std::mt19937_64 rng(3);
  const Signature sig{4, 3, 2};
  const Feature f = random_feature(rng, sig, 2);
  const ImageTokens zero{Matrix::Zero(4, 6)};
  CHECK(relative_difference(fem_fuse(f, zero, FemParams::passthrough(sig, 6, 4)), f) == 0.0);

  const Signature out{5, 2, 2};
  const FemParams p = random_fem(rng, sig, 6, 4, out);
  const ImageTokens img{random_matrix(rng, 4, 6)};
  const Feature base = fem_fuse(f, img, p);

  // rotate only the l > 0 blocks
  const auto d = wigner_blocks(random_rotation<double>(rng), 2);
  Feature rotated = apply_rotation(f, d);
  rotated.block(0) = f.block(0);
  const Feature fused = fem_fuse(rotated, img, p);
  for (int l = 1; l <= 2; ++l) {
    const Feature a = Feature::from_blocks({Matrix(0, 2), l == 1 ? fused.block(1) : Matrix(0, 6),
                                            l == 2 ? fused.block(2) : Matrix(0, 10)}, 2);
    const Feature b = Feature::from_blocks({Matrix(0, 2), l == 1 ? base.block(1) : Matrix(0, 6),
                                            l == 2 ? base.block(2) : Matrix(0, 10)}, 2);
    CHECK(relative_difference(a, apply_rotation(b, d)) <= 1e-10);
  }

  const Feature doubled = fem_fuse(f, {2.0 * img.tokens}, p);
  CHECK(doubled.block(1) == base.block(1));
  CHECK(doubled.block(2) == base.block(2));
  CHECK(doubled.block(0) != base.block(0));

  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Feature x = random_feature(rng, sig, 1);
    const auto di = wigner_blocks(random_rotation<double>(rng), 2);
    worst = std::max(worst, relative_difference(fem_fuse(apply_rotation(x, di), img, p),
                                                apply_rotation(fem_fuse(x, img, p), di)));
  }
  CHECK(worst <= 1e-8);

  CHECK_THROWS_AS(fem_fuse(random_feature(rng, {0, 3, 2}), img, p), SignatureError);
}
