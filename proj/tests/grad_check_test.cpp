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

#include "doctest.h"
#include "sphflow/grad_check.hpp"

using namespace sphflow;

TEST_CASE("every registered op passes its gradient check") {
  for (const auto& op : grad_check_ops()) {
    CAPTURE(op);
    const GradCheckResult r = grad_check(op, 11);
    MESSAGE(op << " error " << r.error << " over " << r.coefficients << " coefficients");
    CHECK(r.coefficients > 0);
    CHECK(r.passed());
  }
}

TEST_CASE("linear ops use the tight tolerance") {
  CHECK(grad_check_tolerance("equi_linear") == 1e-7);
  CHECK(grad_check_tolerance("efilm") == 1e-4);
  CHECK_THROWS_AS(grad_check("no_such_op"), ConfigError);
}

TEST_CASE("a wrong backward pass is caught") {
  // sum of squares written with a deliberately wrong gradient
  const GradCheckFunction broken = [](ad::Binder& b) {
    const ad::Var x = b("x", 2, 2);
    ad::Tape& tape = b.tape();
    const ad::Matrix v = x.value().array().square();
    return std::vector<ad::Var>{tape.record(v, {x}, [x](ad::Tape& t, int id) {
      t.accumulate(x.id(), t.grad(id).cwiseProduct(x.value()));  // missing factor 2
    })};
  };
  ad::ParamSet point{{"x", ad::Matrix::Constant(2, 2, 0.7)}};
  CHECK(grad_check(broken, point, 3).error > 0.1);
}
