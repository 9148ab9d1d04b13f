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

// Irrep feature container.
//
// A feature holds one block per degree l in {0, 1, 2}. Block l has one row per
// channel and (2l + 1) * frames columns: frame f occupies columns
// [f * (2l + 1), (f + 1) * (2l + 1)). A single feature has frames == 1; a
// time sequence, or a batch of sequences, packs its frames side by side.
// Degrees with zero channels are absent.
#pragma once

#include <array>
#include <string>

#include <Eigen/Dense>

#include "sphflow/errors.hpp"
#include "sphflow/so3.hpp"

namespace sphflow {

/// Channel count per degree.
struct Signature {
  std::array<int, kMaxDegree + 1> channels{0, 0, 0};

  Signature() = default;
  Signature(int c0, int c1, int c2) : channels{c0, c1, c2} {}

  int operator[](int degree) const { return channels.at(degree); }
  int& operator[](int degree) { return channels.at(degree); }
  bool has(int degree) const { return channels.at(degree) > 0; }
  int coefficients() const { return channels[0] + 3 * channels[1] + 5 * channels[2]; }

  friend bool operator==(const Signature&, const Signature&) = default;
  friend Signature operator+(const Signature& a, const Signature& b) {
    return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
  }
  std::string str() const {
    return "(" + std::to_string(channels[0]) + "x0e, " + std::to_string(channels[1]) + "x1, " +
           std::to_string(channels[2]) + "x2)";
  }
};

template <typename Scalar = double>
class IrrepFeature {
 public:
  using Block = MatrixX<Scalar>;

  IrrepFeature() : IrrepFeature(Signature{}, 1) {}
  IrrepFeature(const Signature& sig, int frames) : frames_(frames) {
    if (frames < 1) throw SignatureError("an irrep feature needs at least one frame");
    for (int l = 0; l <= kMaxDegree; ++l) {
      if (sig[l] < 0) throw SignatureError("negative channel count");
      blocks_[l] = Block::Zero(sig[l], frames * degree_dim(l));
    }
  }

  static IrrepFeature zeros(const Signature& sig, int frames = 1) {
    return IrrepFeature(sig, frames);
  }

  /// Builds a feature from explicit blocks; column counts must match frames.
  static IrrepFeature from_blocks(std::array<Block, kMaxDegree + 1> blocks, int frames = 1) {
    IrrepFeature f;
    f.frames_ = frames;
    for (int l = 0; l <= kMaxDegree; ++l) {
      if (blocks[l].size() == 0) blocks[l].resize(0, frames * degree_dim(l));
      if (blocks[l].cols() != frames * degree_dim(l)) {
        throw SignatureError("degree-" + std::to_string(l) + " block has " +
                             std::to_string(blocks[l].cols()) + " columns, expected " +
                             std::to_string(frames * degree_dim(l)));
      }
      f.blocks_[l] = std::move(blocks[l]);
    }
    return f;
  }

  Signature signature() const {
    return {int(blocks_[0].rows()), int(blocks_[1].rows()), int(blocks_[2].rows())};
  }
  int frames() const { return frames_; }
  int channels(int degree) const { return int(blocks_.at(degree).rows()); }

  const Block& block(int degree) const { return blocks_.at(degree); }
  Block& block(int degree) { return blocks_.at(degree); }

  /// The (2l+1) coefficients of one channel in one frame.
  auto coeffs(int degree, int channel, int frame = 0) {
    return blocks_.at(degree).row(channel).segment(frame * degree_dim(degree), degree_dim(degree));
  }
  auto coeffs(int degree, int channel, int frame = 0) const {
    return blocks_.at(degree).row(channel).segment(frame * degree_dim(degree), degree_dim(degree));
  }

  /// Frames [first, first + count) as a new feature.
  IrrepFeature frame_range(int first, int count) const {
    std::array<Block, kMaxDegree + 1> out;
    for (int l = 0; l <= kMaxDegree; ++l) {
      out[l] = blocks_[l].middleCols(first * degree_dim(l), count * degree_dim(l));
    }
    return from_blocks(std::move(out), count);
  }

  Scalar squared_norm() const {
    Scalar s(0);
    for (const auto& b : blocks_) s += b.squaredNorm();
    return s;
  }

  IrrepFeature& operator+=(const IrrepFeature& o) {
    check_compatible(o);
    for (int l = 0; l <= kMaxDegree; ++l) blocks_[l] += o.blocks_[l];
    return *this;
  }
  IrrepFeature& operator-=(const IrrepFeature& o) {
    check_compatible(o);
    for (int l = 0; l <= kMaxDegree; ++l) blocks_[l] -= o.blocks_[l];
    return *this;
  }
  IrrepFeature& operator*=(Scalar s) {
    for (auto& b : blocks_) b *= s;
    return *this;
  }
  friend IrrepFeature operator+(IrrepFeature a, const IrrepFeature& b) { return a += b; }
  friend IrrepFeature operator-(IrrepFeature a, const IrrepFeature& b) { return a -= b; }
  friend IrrepFeature operator*(Scalar s, IrrepFeature a) { return a *= s; }

  void check_compatible(const IrrepFeature& o) const {
    if (o.signature() != signature() || o.frames_ != frames_) {
      throw SignatureError("incompatible irrep features " + signature().str() + " vs " +
                           o.signature().str());
    }
  }

 private:
  int frames_ = 1;
  std::array<Block, kMaxDegree + 1> blocks_;
};

using Feature = IrrepFeature<double>;

/// Channel-wise concatenation per degree (a then b).
template <typename Scalar>
IrrepFeature<Scalar> concat_channels(const IrrepFeature<Scalar>& a, const IrrepFeature<Scalar>& b) {
  if (a.frames() != b.frames()) throw SignatureError("frame count mismatch in concat");
  std::array<MatrixX<Scalar>, kMaxDegree + 1> out;
  for (int l = 0; l <= kMaxDegree; ++l) {
    out[l].resize(a.channels(l) + b.channels(l), a.block(l).cols());
    out[l] << a.block(l), b.block(l);
  }
  return IrrepFeature<Scalar>::from_blocks(std::move(out), a.frames());
}

/// Right-multiplies every frame of a (channels x frames*(2l+1)) block by
/// `right`, i.e. maps each channel vector v to right^T v.
template <typename Scalar>
MatrixX<Scalar> transform_frames(const MatrixX<Scalar>& block, const MatrixX<Scalar>& right) {
  const Eigen::Index d = right.rows();
  MatrixX<Scalar> out(block.rows(), block.cols());
  for (Eigen::Index f = 0; f * d < block.cols(); ++f) {
    out.middleCols(f * d, d).noalias() = block.middleCols(f * d, d) * right;
  }
  return out;
}

/// Group action on features: each degree-l channel vector v becomes D_l v.
template <typename Scalar>
IrrepFeature<Scalar> apply_rotation(const IrrepFeature<Scalar>& f, const WignerBlocks<Scalar>& d) {
  std::array<MatrixX<Scalar>, kMaxDegree + 1> out;
  for (int l = 0; l <= kMaxDegree; ++l) {
    if (f.channels(l) == 0 || l == 0) {
      out[l] = f.block(l);
      continue;
    }
    if (!d.covers(l)) {
      throw SignatureError("Wigner blocks stop at degree " + std::to_string(d.max_degree) +
                           " but the feature has degree " + std::to_string(l));
    }
    out[l] = transform_frames<Scalar>(f.block(l), d[l].transpose());
  }
  return IrrepFeature<Scalar>::from_blocks(std::move(out), f.frames());
}

template <typename Scalar>
IrrepFeature<Scalar> apply_rotation(const IrrepFeature<Scalar>& f, const Rotation<Scalar>& r) {
  return apply_rotation(f, wigner_blocks(r, kMaxDegree));
}

/// max |a - b| / max(|b|_max, floor) over all coefficients.
template <typename Scalar>
Scalar relative_difference(const IrrepFeature<Scalar>& a, const IrrepFeature<Scalar>& b,
                           Scalar floor = Scalar(1e-12)) {
  a.check_compatible(b);
  Scalar diff(0), scale(floor);
  for (int l = 0; l <= kMaxDegree; ++l) {
    if (a.block(l).size() == 0) continue;
    diff = std::max(diff, (a.block(l) - b.block(l)).cwiseAbs().maxCoeff());
    scale = std::max(scale, b.block(l).cwiseAbs().maxCoeff());
  }
  return diff / scale;
}

}  // namespace sphflow
