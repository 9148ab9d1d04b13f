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

#include "sphflow/perception.hpp"

#include <cmath>

namespace sphflow {

using ad::Matrix;
using ad::Var;
using Eigen::Vector3d;

void PointCloud::validate() const {
  if (points.rows() < 1) throw ValidationError("point cloud is empty");
  if (colors.rows() != points.rows()) throw ValidationError("point/color count mismatch");
  if (!points.allFinite()) throw ValidationError("point cloud has non-finite coordinates");
}

NormalizedCloud normalize_cloud(const PointCloud& pc) {
  pc.validate();
  NormalizedCloud out;
  out.centroid = pc.points.colwise().mean().transpose();
  out.centered.points = pc.points.rowwise() - out.centroid.transpose();
  out.centered.colors = pc.colors;
  return out;
}

Eigen::Matrix3d rotation_from_6d(const Vector3d& a, const Vector3d& b) {
  const double na = a.norm();
  if (!(na > 1e-9)) throw ValidationError("6D rotation: first column is degenerate");
  const Vector3d e1 = a / na;
  const Vector3d u = b - e1.dot(b) * e1;
  const double nu = u.norm();
  if (!(nu > 1e-9)) throw ValidationError("6D rotation: columns are parallel");
  const Vector3d e2 = u / nu;
  Eigen::Matrix3d r;
  r << e1, e2, e1.cross(e2);
  return r;
}

void ProprioState::validate() const {
  if (!position.allFinite() || !std::isfinite(gripper)) {
    throw ValidationError("proprio state is not finite");
  }
  rotation_from_6d(col1, col2);
}

Eigen::Matrix3d ProprioState::rotation() const { return rotation_from_6d(col1, col2); }

ProprioState ProprioState::from_pose(const Vector3d& position, const Eigen::Matrix3d& rotation,
                                     double gripper) {
  return {position, rotation.col(0), rotation.col(1), gripper};
}

Vector3d to_degree1(const Vector3d& v) { return {v.y(), v.z(), v.x()}; }
Vector3d from_degree1(const Vector3d& c) { return {c[2], c[0], c[1]}; }

// ---------------------------------------------------------------------------

Feature point_cloud_features(const PointCloud& pc, const PointEncoderConfig& cfg) {
  pc.validate();
  if (cfg.shells < 2) throw ConfigError("point encoder needs at least two shells");
  const Signature raw = cfg.raw_signature();
  Feature f = Feature::zeros(raw, 1);
  const double spacing = cfg.radius / (cfg.shells - 1);
  for (int i = 0; i < pc.size(); ++i) {
    const Vector3d p = pc.points.row(i).transpose();
    const double r = p.norm();
    Eigen::Vector4d color;
    color << pc.colors.row(i).transpose(), 1.0;
    const Vector3d q = p / cfg.radius;
    std::array<Eigen::VectorXd, kMaxDegree + 1> sh;
    for (int l = 0; l <= kMaxDegree; ++l) sh[l] = solid_harmonic(l, q);
    for (int k = 0; k < cfg.shells; ++k) {
      const double z = (r - k * spacing) / spacing;
      const double w = std::exp(-0.5 * z * z);
      for (int c = 0; c < 4; ++c) {
        const double wc = w * color[c];
        if (wc == 0.0) continue;
        for (int l = 0; l <= kMaxDegree; ++l) f.coeffs(l, 4 * k + c) += wc * sh[l];
      }
    }
  }
  f *= 1.0 / pc.size();
  return f;
}

IrrepVar encode_point_cloud(ad::Binder& b, const std::string& prefix, const PointEncoderConfig& cfg,
                            const IrrepVar& raw) {
  Signature mid = cfg.out;
  mid[0] += gate_count(cfg.out);
  const auto lin = bind_equi_linear(b, prefix + ".lin", cfg.raw_signature(), mid, true);
  return gated_nonlinearity(equi_linear(raw, lin));
}

Feature encode_point_cloud(const PointCloud& centered, const PointEncoderConfig& cfg,
                           const ad::ParamSet& params, const std::string& prefix) {
  ad::Tape tape;
  ad::Binder binder(tape, params, false);
  return encode_point_cloud(binder, prefix, cfg,
                            IrrepVar::constant(tape, point_cloud_features(centered, cfg)))
      .value();
}

// ---------------------------------------------------------------------------

Matrix image_patch_features(const Image& img, const ImageEncoderConfig& cfg) {
  if (img.height != cfg.size || img.width != cfg.size ||
      img.rgb.size() != 3 * cfg.size * cfg.size) {
    throw ValidationError("image must be " + std::to_string(cfg.size) + "x" +
                          std::to_string(cfg.size) + ", got " + std::to_string(img.height) + "x" +
                          std::to_string(img.width));
  }
  const int patch = cfg.size / cfg.grid;
  const int cell = patch / cfg.pool;
  if (patch * cfg.grid != cfg.size || cell * cfg.pool != patch) {
    throw ConfigError("image size must divide into grid x pool cells");
  }
  Matrix out = Matrix::Zero(cfg.tokens(), cfg.patch_features());
  const double norm = 1.0 / (cell * cell);
  for (int gy = 0; gy < cfg.grid; ++gy)
    for (int gx = 0; gx < cfg.grid; ++gx) {
      const int token = gy * cfg.grid + gx;
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x) {
          const int feat = 3 * ((y / cell) * cfg.pool + x / cell);
          for (int c = 0; c < 3; ++c)
            out(token, feat + c) += norm * img.at(gy * patch + y, gx * patch + x, c);
        }
    }
  return out;
}

Var encode_image(ad::Binder& b, const std::string& prefix, const ImageEncoderConfig& cfg,
                 const Var& feats) {
  const Var w = b(prefix + ".w", cfg.dim, cfg.patch_features());
  const Var bias = b(prefix + ".b", cfg.dim, 1, ad::Init::kZero);
  return ad::transpose(ad::add_column(ad::matmul(w, ad::transpose(feats)), bias));
}

ImageTokens encode_image(const Image& img, const ImageEncoderConfig& cfg, const ad::ParamSet& params,
                         const std::string& prefix) {
  ad::Tape tape;
  ad::Binder binder(tape, params, false);
  return {encode_image(binder, prefix, cfg, tape.constant(image_patch_features(img, cfg))).value()};
}

// ---------------------------------------------------------------------------

Feature embed_proprio(const ProprioState& s, const Vector3d& centroid, double position_scale) {
  if (!s.position.allFinite() || !s.col1.allFinite() || !s.col2.allFinite() ||
      !std::isfinite(s.gripper)) {
    throw ValidationError("proprio state is not finite");
  }
  Feature f = Feature::zeros(proprio_signature(), 1);
  f.block(0)(0, 0) = s.gripper;
  f.coeffs(1, 0) = to_degree1(position_scale * (s.position - centroid));
  f.coeffs(1, 1) = to_degree1(s.col1);
  f.coeffs(1, 2) = to_degree1(s.col2);
  return f;
}

Feature concat_frames(const std::vector<Feature>& parts) {
  if (parts.empty()) throw SignatureError("concat_frames needs at least one feature");
  const Signature sig = parts.front().signature();
  int frames = 0;
  for (const auto& p : parts) {
    if (p.signature() != sig) throw SignatureError("concat_frames: signature mismatch");
    frames += p.frames();
  }
  Feature out = Feature::zeros(sig, frames);
  for (int l = 0; l <= kMaxDegree; ++l) {
    Eigen::Index col = 0;
    for (const auto& p : parts) {
      out.block(l).middleCols(col, p.block(l).cols()) = p.block(l);
      col += p.block(l).cols();
    }
  }
  return out;
}

Feature embed_action_chunk(const ActionChunk& a, const Vector3d& centroid, double position_scale) {
  std::vector<Feature> frames;
  frames.reserve(a.size());
  for (const auto& s : a) frames.push_back(embed_proprio(s, centroid, position_scale));
  return concat_frames(frames);
}

ActionChunk decode_action_chunk(const Feature& f, const Vector3d& centroid, double position_scale) {
  if (f.channels(0) < 1 || f.channels(1) < 3) {
    throw SignatureError("decode_action_chunk needs >= 1 scalar and >= 3 vector channels, got " +
                         f.signature().str());
  }
  ActionChunk out(f.frames());
  for (int t = 0; t < f.frames(); ++t) {
    ProprioState& s = out[t];
    s.gripper = f.block(0)(0, t);
    s.position = from_degree1(f.coeffs(1, 0, t)) / position_scale + centroid;
    const Eigen::Matrix3d r = rotation_from_6d(from_degree1(f.coeffs(1, 1, t)),
                                               from_degree1(f.coeffs(1, 2, t)));
    s.col1 = r.col(0);
    s.col2 = r.col(1);
  }
  return out;
}

}  // namespace sphflow
