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

// Observation encoders: point clouds to irrep features, toy images to
// invariant tokens, and robot states/actions to degree-0/degree-1 channels.
#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sphflow/equi_nn.hpp"
#include "sphflow/fusion.hpp"

namespace sphflow {

struct PointCloud {
  Eigen::MatrixX3d points;  // meters
  Eigen::MatrixX3d colors;  // [0, 1]

  int size() const { return int(points.rows()); }
  void validate() const;
};

struct NormalizedCloud {
  PointCloud centered;
  Eigen::Vector3d centroid;
};

NormalizedCloud normalize_cloud(const PointCloud& pc);

/// h x w RGB image, row-major, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  Eigen::VectorXd rgb;

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(Eigen::VectorXd::Zero(3 * h * w)) {}
  double& at(int y, int x, int c) { return rgb[3 * (y * width + x) + c]; }
  double at(int y, int x, int c) const { return rgb[3 * (y * width + x) + c]; }
};

struct ProprioState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d col1 = Eigen::Vector3d::Zero();
  Eigen::Vector3d col2 = Eigen::Vector3d::Zero();
  double gripper = 0.0;

  /// Throws ValidationError when the rotation columns are degenerate.
  void validate() const;
  Eigen::Matrix3d rotation() const;
  static ProprioState from_pose(const Eigen::Vector3d& position, const Eigen::Matrix3d& rotation,
                                double gripper);
};

using ActionChunk = std::vector<ProprioState>;

/// Gram-Schmidt on the two 6D columns; throws ValidationError when they are
/// (nearly) parallel or zero.
Eigen::Matrix3d rotation_from_6d(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// Degree-1 coefficients of a Cartesian vector (basis order y, z, x).
Eigen::Vector3d to_degree1(const Eigen::Vector3d& v);
Eigen::Vector3d from_degree1(const Eigen::Vector3d& c);

// ---------------------------------------------------------------------------
// Point-cloud encoder.

struct PointEncoderConfig {
  int shells = 8;
  /// Outer radius of the Gaussian shells (m).
  double radius = 0.3;
  Signature out{16, 8, 4};

  /// Raw features: 4 color channels (r, g, b, 1) per shell for every degree.
  Signature raw_signature() const { return {4 * shells, 4 * shells, 4 * shells}; }
};

/// Parameter-free stage: per point, shell weights times colors times the
/// solid harmonics of p / radius, averaged over points. One frame.
Feature point_cloud_features(const PointCloud& centered, const PointEncoderConfig& cfg);

/// equi_linear + gated nonlinearity on raw features. Keys under `prefix`.
IrrepVar encode_point_cloud(ad::Binder& binder, const std::string& prefix,
                            const PointEncoderConfig& cfg, const IrrepVar& raw);
Feature encode_point_cloud(const PointCloud& centered, const PointEncoderConfig& cfg,
                           const ad::ParamSet& params, const std::string& prefix = "enc.pcd");

// ---------------------------------------------------------------------------
// Image encoder.

struct ImageEncoderConfig {
  int size = 32;
  /// grid x grid patches, each average-pooled to pool x pool cells.
  int grid = 2;
  int pool = 4;
  int dim = 16;

  int tokens() const { return grid * grid; }
  int patch_features() const { return 3 * pool * pool; }
};

/// (tokens x patch_features) pooled patches; throws ValidationError on a
/// wrong resolution.
ad::Matrix image_patch_features(const Image& img, const ImageEncoderConfig& cfg);

/// Dense map per patch: tokens = feats W^T + b^T. Keys <prefix>.w, <prefix>.b.
ad::Var encode_image(ad::Binder& binder, const std::string& prefix, const ImageEncoderConfig& cfg,
                     const ad::Var& patch_features);
ImageTokens encode_image(const Image& img, const ImageEncoderConfig& cfg,
                         const ad::ParamSet& params, const std::string& prefix = "enc.img");

// ---------------------------------------------------------------------------
// States and actions.

/// Signature of one embedded state: 1 scalar, 3 vectors.
inline Signature proprio_signature() { return {1, 3, 0}; }

/// Degree 0: gripper. Degree 1: scale (position - centroid), col1, col2.
Feature embed_proprio(const ProprioState& s, const Eigen::Vector3d& centroid,
                      double position_scale = 1.0);

/// One frame per step.
Feature embed_action_chunk(const ActionChunk& a, const Eigen::Vector3d& centroid,
                           double position_scale = 1.0);
/// Left inverse of embed_action_chunk; rotation columns are re-orthonormalized.
ActionChunk decode_action_chunk(const Feature& f, const Eigen::Vector3d& centroid,
                                double position_scale = 1.0);

/// Stacks single- or multi-frame features along the frame axis.
Feature concat_frames(const std::vector<Feature>& parts);

}  // namespace sphflow
