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

// Rotations, real spherical harmonics up to degree 2 and their Wigner-D
// blocks.
//
// Conventions (fixed once, enforced by tests/so3_test.cpp):
//
//  * Real spherical harmonics are ordered m = -l, ..., l. For l = 1 this is
//    (y, z, x): Y_1 = sqrt(3 / 4pi) * (y, z, x). For l = 2:
//      m=-2: c xy   m=-1: c yz   m=0: c0 (3z^2 - 1)   m=1: c xz
//      m= 2: c/2 (x^2 - y^2)
//    with c = sqrt(15 / pi) / 2 and c0 = sqrt(5 / pi) / 4.
//  * D(R) is the representation of R acting on the coefficient vector of a
//    function that is rotated by R:  Y_l(R r) = D_l(R) Y_l(r).
//    Equivalently Y_l(R^-1 r) = D_l(R)^T Y_l(r). With this choice
//    D(R1 R2) = D(R1) D(R2), and rotating an input by R maps every degree-l
//    channel vector v to D_l(R) v.
#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "sphflow/errors.hpp"

namespace sphflow {

inline constexpr int kMaxDegree = 2;

constexpr int degree_dim(int degree) { return 2 * degree + 1; }

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Element of SO(3). Construction validates orthogonality and orientation.
template <typename Scalar = double>
class Rotation {
 public:
  Rotation() : matrix_(Matrix3<Scalar>::Identity()) {}

  /// Throws ValidationError unless `m` is orthogonal with det +1 within `tol`.
  static Rotation from_matrix(const Matrix3<Scalar>& m, Scalar tol = Scalar(1e-9)) {
    const Scalar ortho = (m.transpose() * m - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff();
    const Scalar det = m.determinant();
    if (!(ortho <= tol) || !(std::abs(det - Scalar(1)) <= tol)) {
      throw ValidationError("matrix is not a proper rotation (orthogonality defect " +
                            std::to_string(double(ortho)) + ", det " +
                            std::to_string(double(det)) + ")");
    }
    return Rotation(m, Unchecked{});
  }

  static Rotation identity() { return Rotation(); }

  const Matrix3<Scalar>& matrix() const { return matrix_; }
  Rotation inverse() const { return Rotation(matrix_.transpose(), Unchecked{}); }

  Rotation operator*(const Rotation& other) const {
    return Rotation(matrix_ * other.matrix_, Unchecked{});
  }
  Vector3<Scalar> operator*(const Vector3<Scalar>& v) const { return matrix_ * v; }

 private:
  struct Unchecked {};
  Rotation(const Matrix3<Scalar>& m, Unchecked) : matrix_(m) {}

  template <typename S>
  friend Rotation<S> rotation_from_axis_angle(const Vector3<S>&, S);
  template <typename S, typename Rng>
  friend Rotation<S> random_rotation(Rng&);

  Matrix3<Scalar> matrix_;
};

/// Rodrigues rotation by `angle` radians about the unit vector `axis`.
template <typename Scalar>
Rotation<Scalar> rotation_from_axis_angle(const Vector3<Scalar>& axis, Scalar angle) {
  const Scalar n = axis.norm();
  if (!(std::abs(n - Scalar(1)) <= Scalar(1e-9))) {
    throw ValidationError("rotation axis must be a unit vector (norm " + std::to_string(double(n)) +
                          ")");
  }
  Matrix3<Scalar> k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  const Matrix3<Scalar> m =
      Matrix3<Scalar>::Identity() + std::sin(angle) * k + (Scalar(1) - std::cos(angle)) * k * k;
  return Rotation<Scalar>(m, typename Rotation<Scalar>::Unchecked{});
}

/// Haar-uniform rotation from a normalized Gaussian quaternion.
template <typename Scalar, typename Rng>
Rotation<Scalar> random_rotation(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector4d q;
  do {
    for (int i = 0; i < 4; ++i) q[i] = normal(rng);
  } while (q.norm() < 1e-12);
  q.normalize();
  const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  const Matrix3<Scalar> m = quat.toRotationMatrix().template cast<Scalar>();
  return Rotation<Scalar>(m, typename Rotation<Scalar>::Unchecked{});
}

namespace detail {

template <typename Scalar>
Scalar sh_c0() {
  return Scalar(0.5) / std::sqrt(Scalar(std::numbers::pi));
}
template <typename Scalar>
Scalar sh_c1() {
  return std::sqrt(Scalar(3) / (Scalar(4) * Scalar(std::numbers::pi)));
}
template <typename Scalar>
Scalar sh_c2() {
  return Scalar(0.5) * std::sqrt(Scalar(15) / Scalar(std::numbers::pi));
}
template <typename Scalar>
Scalar sh_c20() {
  return Scalar(0.25) * std::sqrt(Scalar(5) / Scalar(std::numbers::pi));
}

// Symmetric traceless forms with Y_2^m(r) = r^T Q_m r on the unit sphere.
template <typename Scalar>
std::array<Matrix3<Scalar>, 5> degree2_forms() {
  const Scalar h = sh_c2<Scalar>() / Scalar(2);
  std::array<Matrix3<Scalar>, 5> q;
  for (auto& m : q) m.setZero();
  q[0](0, 1) = q[0](1, 0) = h;
  q[1](1, 2) = q[1](2, 1) = h;
  q[2].diagonal() << -sh_c20<Scalar>(), -sh_c20<Scalar>(), Scalar(2) * sh_c20<Scalar>();
  q[3](0, 2) = q[3](2, 0) = h;
  q[4].diagonal() << h, -h, Scalar(0);
  return q;
}

}  // namespace detail

/// Solid harmonic |p|^l Y_l(p / |p|); a polynomial in p, zero at the origin
/// for l > 0.
template <typename Scalar>
VectorX<Scalar> solid_harmonic(int degree, const Vector3<Scalar>& p) {
  VectorX<Scalar> out(degree_dim(degree));
  switch (degree) {
    case 0:
      out[0] = detail::sh_c0<Scalar>();
      break;
    case 1:
      out << p.y(), p.z(), p.x();
      out *= detail::sh_c1<Scalar>();
      break;
    case 2: {
      const Scalar c = detail::sh_c2<Scalar>();
      const Scalar r2 = p.squaredNorm();
      out << c * p.x() * p.y(), c * p.y() * p.z(),
          detail::sh_c20<Scalar>() * (Scalar(3) * p.z() * p.z() - r2), c * p.x() * p.z(),
          Scalar(0.5) * c * (p.x() * p.x() - p.y() * p.y());
      break;
    }
    default:
      throw UnsupportedDegreeError(degree);
  }
  return out;
}

/// Real spherical harmonics of `degree` at a unit `direction`.
template <typename Scalar>
VectorX<Scalar> eval_real_sh(int degree, const Vector3<Scalar>& direction) {
  if (degree < 0 || degree > kMaxDegree) throw UnsupportedDegreeError(degree);
  if (!(std::abs(direction.norm() - Scalar(1)) <= Scalar(1e-9))) {
    throw ValidationError("spherical harmonics need a unit direction");
  }
  return solid_harmonic(degree, direction);
}

/// Block-diagonal representation {D_0(R), ..., D_lmax(R)}.
template <typename Scalar = double>
struct WignerBlocks {
  int max_degree = 0;
  std::array<MatrixX<Scalar>, kMaxDegree + 1> blocks;

  const MatrixX<Scalar>& operator[](int degree) const { return blocks.at(degree); }
  bool covers(int degree) const { return degree <= max_degree; }

  WignerBlocks transpose() const {
    WignerBlocks t = *this;
    for (int l = 0; l <= max_degree; ++l) t.blocks[l] = blocks[l].transpose();
    return t;
  }
};

/// Closed-form Wigner-D blocks up to degree 2 (see file header for the
/// convention).
template <typename Scalar>
WignerBlocks<Scalar> wigner_blocks(const Rotation<Scalar>& rotation, int max_degree = kMaxDegree) {
  if (max_degree < 0 || max_degree > kMaxDegree) throw UnsupportedDegreeError(max_degree);
  const Matrix3<Scalar>& r = rotation.matrix();
  WignerBlocks<Scalar> d;
  d.max_degree = max_degree;
  d.blocks[0] = MatrixX<Scalar>::Ones(1, 1);
  if (max_degree >= 1) {
    // (y, z, x) <- (x, y, z)
    Matrix3<Scalar> p;
    p << 0, 1, 0, 0, 0, 1, 1, 0, 0;
    d.blocks[1] = p * r * p.transpose();
  }
  if (max_degree >= 2) {
    const auto q = detail::degree2_forms<Scalar>();
    const Scalar inv_norm = Scalar(8) * Scalar(std::numbers::pi) / Scalar(15);
    MatrixX<Scalar> d2(5, 5);
    for (int m = 0; m < 5; ++m) {
      const Matrix3<Scalar> rotated = r.transpose() * q[m] * r;
      for (int k = 0; k < 5; ++k) d2(m, k) = (q[k].cwiseProduct(rotated)).sum() * inv_norm;
    }
    d.blocks[2] = d2;
  }
  return d;
}

}  // namespace sphflow
