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

// Test-only reference computations. Nothing here calls into the code paths
// it is used to check.
#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sphflow/irrep.hpp"

namespace sphflow::testing {

struct SphereNode {
  Eigen::Vector3d direction;
  double weight;
};

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
inline std::vector<std::pair<double, double>> gauss_legendre(int n) {
  std::vector<std::pair<double, double>> out;
  for (int i = 1; i <= n; ++i) {
    double x = std::cos(std::numbers::pi * (i - 0.25) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    out.emplace_back(x, 2.0 / ((1.0 - x * x) * dp * dp));
  }
  return out;
}

/// Product rule (Gauss-Legendre in cos(theta) x uniform in phi); exact for
/// polynomials of degree < min(2 n_theta, n_phi).
inline std::vector<SphereNode> sphere_quadrature(int n_theta, int n_phi) {
  std::vector<SphereNode> nodes;
  for (const auto& [z, w] : gauss_legendre(n_theta)) {
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    for (int k = 0; k < n_phi; ++k) {
      const double phi = 2.0 * std::numbers::pi * k / n_phi;
      nodes.push_back({{s * std::cos(phi), s * std::sin(phi), z}, w * 2.0 * std::numbers::pi / n_phi});
    }
  }
  return nodes;
}

inline Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v(n(rng), n(rng), n(rng));
  return v.normalized();
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                                     double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

inline Feature random_feature(std::mt19937_64& rng, const Signature& sig, int frames = 1,
                              double scale = 1.0) {
  Feature f(sig, frames);
  for (int l = 0; l <= kMaxDegree; ++l)
    f.block(l) = random_matrix(rng, sig[l], frames * degree_dim(l), scale);
  return f;
}

/// Central finite differences of a scalar function of a matrix.
inline Eigen::MatrixXd numeric_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                        Eigen::MatrixXd x, double step = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + step;
    const double fp = f(x);
    x(i) = keep - step;
    const double fm = f(x);
    x(i) = keep;
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

}  // namespace sphflow::testing
