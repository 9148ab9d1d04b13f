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

#include <functional>

#include "doctest.h"
#include "oracles.hpp"
#include "sphflow/ad.hpp"

using namespace sphflow;
using ad::Matrix;
using ad::Tape;
using ad::Var;
using sphflow::testing::numeric_gradient;
using sphflow::testing::random_matrix;

namespace {

// Checks d/dx sum(w .* op(x)) against central differences.
double check_unary(const std::function<Var(const Var&)>& op, const Matrix& x0, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix w;
  {
    Tape t;
    w = random_matrix(rng, op(t.constant(x0)).rows(), op(t.constant(x0)).cols());
  }
  auto f = [&](const Matrix& x) {
    Tape t;
    return ad::sum(ad::mul(op(t.constant(x)), t.constant(w))).value()(0, 0);
  };
  Tape t;
  Var x = t.variable(x0);
  t.backward(ad::sum(ad::mul(op(x), t.constant(w))));
  const Matrix num = numeric_gradient(f, x0);
  return (x.grad() - num).cwiseAbs().maxCoeff() / std::max(1.0, num.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("elementwise primitives") {
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(rng, 3, 4);
  CHECK(check_unary([](const Var& v) { return ad::sigmoid(v); }, x, 2) <= 1e-8);
  CHECK(check_unary([](const Var& v) { return ad::silu(v); }, x, 3) <= 1e-8);
  CHECK(check_unary([](const Var& v) { return ad::softmax_rows(v); }, x, 4) <= 1e-8);
  CHECK(check_unary([](const Var& v) { return ad::affine(ad::transpose(v), 2.0, 1.0); }, x, 5) <= 1e-8);
  CHECK(check_unary([](const Var& v) { return ad::mul(v, v); }, x, 6) <= 1e-8);
  CHECK(check_unary([](const Var& v) { return ad::sum_squares(v); }, x, 7) <= 1e-8);
}

TEST_CASE("linear algebra and slicing primitives") {
  std::mt19937_64 rng(2);
  const Matrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 4, 2), bias = random_matrix(rng, 3, 1);
  CHECK(check_unary(
            [&](const Var& v) {
              return ad::matmul(v, v.tape().constant(b));
            },
            a, 8) <= 1e-8);
  CHECK(check_unary(
            [&](const Var& v) {
              return ad::matmul(v.tape().constant(b.transpose()), ad::transpose(v));
            },
            a, 9) <= 1e-8);
  CHECK(check_unary(
            [&](const Var& v) { return ad::add_column(v, ad::cols(v, 1, 1)); }, a, 10) <= 1e-8);
  CHECK(check_unary(
            [&](const Var& v) {
              return ad::vcat({ad::rows(v, 0, 1), v, ad::rows(v, 2, 1)});
            },
            a, 11) <= 1e-8);
  CHECK(check_unary([&](const Var& v) { return ad::hcat({v, ad::cols(v, 1, 2)}); }, a, 12) <= 1e-8);
  CHECK(check_unary([&](const Var& v) { return ad::reshape(v, 2, 6); }, a, 22) <= 1e-8);
  (void)bias;
}

TEST_CASE("frame primitives") {
  std::mt19937_64 rng(3);
  // 2 sequences x 4 frames of width 3
  const Matrix x = random_matrix(rng, 2, 2 * 4 * 3);
  CHECK(check_unary([](const Var& v) { return ad::time_shift(v, 3, 4, 1); }, x, 13) <= 1e-8);
  CHECK(check_unary([](const Var& v) { return ad::time_shift(v, 3, 4, 3); }, x, 14) <= 1e-8);
  CHECK(check_unary([](const Var& v) { return ad::time_pool(v, 3, 4, 2); }, x, 15) <= 1e-8);
  CHECK(check_unary([](const Var& v) { return ad::time_repeat(v, 3, 2); }, x, 16) <= 1e-8);
  const Matrix s = random_matrix(rng, 2, 8);
  CHECK(check_unary([&](const Var& v) { return ad::scale_frames(v, v.tape().constant(s), 3); }, x,
                    17) <= 1e-8);
  CHECK(check_unary([&](const Var& v) { return ad::scale_frames(v.tape().constant(x), v, 3); }, s,
                    18) <= 1e-8);
}

TEST_CASE("time_shift uses replicate-edge padding inside each sequence") {
  Tape t;
  Matrix x(1, 6);
  x << 1, 2, 3, 10, 20, 30;  // two sequences of 3 scalar frames
  const Matrix y = ad::time_shift(t.constant(x), 1, 3, 1).value();
  Matrix expect(1, 6);
  expect << 1, 1, 2, 10, 10, 20;
  CHECK(y == expect);
}

TEST_CASE("efilm primitive gradients") {
  std::mt19937_64 rng(4);
  const Matrix h = random_matrix(rng, 3, 2 * 5), g = random_matrix(rng, 3, 10), b = random_matrix(rng, 3, 10);
  CHECK(check_unary(
            [&](const Var& v) {
              return ad::efilm_frames(v, v.tape().constant(g), v.tape().constant(b), 5, 1e-8);
            },
            h, 19) <= 1e-6);
  CHECK(check_unary(
            [&](const Var& v) {
              return ad::efilm_frames(v.tape().constant(h), v, v.tape().constant(b), 5, 1e-8);
            },
            g, 20) <= 1e-8);
  CHECK(check_unary(
            [&](const Var& v) {
              return ad::efilm_frames(v.tape().constant(h), v.tape().constant(g), v, 5, 1e-8);
            },
            b, 21) <= 1e-8);
}

TEST_CASE("backward requires a scalar root and skips constants") {
  Tape t;
  const Var c = t.constant(Matrix::Ones(2, 2));
  const Var v = t.variable(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(ad::add(c, v)), SignatureError);
  const Var s = ad::sum(ad::mul(c, v));
  t.backward(s);
  CHECK(v.grad() == Matrix::Ones(2, 2));
  CHECK(c.grad() == Matrix::Zero(2, 2));
  CHECK_THROWS_AS(ad::matmul(c, t.constant(Matrix::Ones(3, 1))), SignatureError);
}

TEST_CASE("binder initializes once and then reads") {
  ad::ParamSet params;
  std::mt19937_64 rng(5);
  {
    Tape t;
    ad::Binder init(t, params, true, rng);
    init("w", 2, 3);
    init("z", 1, 1, ad::Init::kZero);
  }
  CHECK(params.size() == 2);
  CHECK(params.at("z")(0, 0) == 0.0);
  Tape t;
  ad::Binder read(t, std::as_const(params));
  CHECK(read("w", 2, 3).value() == params.at("w"));
  CHECK_THROWS_AS(read("missing", 1, 1), ConfigError);
  CHECK_THROWS_AS(read("z", 2, 1), SignatureError);
}
