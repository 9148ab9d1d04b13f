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

// Minimal reverse-mode differentiation over dense matrices.
//
// A Tape records matrix-valued nodes in evaluation order; Tape::backward
// walks them in reverse and accumulates adjoints. Nodes whose inputs are all
// constants carry no backward closure.
//
// Frame-aware primitives operate on blocks laid out as in irrep.hpp: a block
// has `frames * width` columns, and frames are grouped sample-major into
// sequences of `horizon` frames.
#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sphflow/errors.hpp"

namespace sphflow::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a tape node. Default-constructed handles are empty.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  explicit operator bool() const { return valid(); }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }

  const Matrix& value() const;
  /// Adjoint after Tape::backward; a zero matrix if nothing reached this node.
  Matrix grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  /// Appends a node; `backward` is dropped when no parent needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, const std::vector<Var>& parents, Backward backward);

  /// Seeds d(root)/d(root) = 1; `root` must be 1x1.
  void backward(const Var& root);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  bool needs_grad(const Var& v) const { return v.valid() && nodes_[v.id()].needs_grad; }

  /// grad[id] += delta (no-op for nodes that need no gradient).
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise and linear algebra.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// alpha * a + beta (entrywise).
Var affine(const Var& a, double alpha, double beta);
Var transpose(const Var& a);
/// Column-major reshape.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
/// x (C x N) + bias (C x 1) broadcast over columns.
Var add_column(const Var& x, const Var& bias);
Var sigmoid(const Var& a);
Var silu(const Var& a);
Var softmax_rows(const Var& a);

// Slicing and concatenation.
Var rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var vcat(const std::vector<Var>& parts);
Var hcat(const std::vector<Var>& parts);

// Reductions to 1x1.
Var sum(const Var& a);
Var sum_squares(const Var& a);

// Frame-aware primitives.

/// out frame t = in frame max(t - lag, 0) within every sequence of `horizon`
/// frames (replicate-edge padding).
Var time_shift(const Var& x, int width, int horizon, int lag);
/// Averages groups of `factor` consecutive frames within each sequence.
Var time_pool(const Var& x, int width, int horizon, int factor);
/// Repeats every frame `factor` times (nearest-neighbour upsampling).
Var time_repeat(const Var& x, int width, int factor);
/// Repeats every frame of x `reps` times; used to broadcast per-sample
/// features over a horizon.
inline Var broadcast_frames(const Var& x, int width, int reps) { return time_repeat(x, width, reps); }
/// Scales frame f of row c by s(c, f); s is (rows x frames).
Var scale_frames(const Var& x, const Var& s, int width);
/// Equivariant FiLM on every (row, frame) vector h:
///   (gamma . h) h / max(|h|, eps) + beta.
/// All three inputs share one shape.
Var efilm_frames(const Var& h, const Var& gamma, const Var& beta, int width, double eps);

// Parameters.

using ParamSet = std::map<std::string, Matrix>;

enum class Init { kZero, kOnes, kFanIn, kIdentity };

/// Binds named parameters from a ParamSet onto a tape. When constructed with
/// an rng, missing parameters are created with the requested initializer;
/// otherwise a missing or mis-shaped parameter is an error.
class Binder {
 public:
  /// Read-only binding: every parameter must already exist.
  Binder(Tape& tape, const ParamSet& params, bool trainable = true)
      : tape_(tape), params_(&params), trainable_(trainable) {}
  /// Initializing binding: missing parameters are drawn with `init_rng`.
  Binder(Tape& tape, ParamSet& params, bool trainable, std::mt19937_64& init_rng)
      : tape_(tape), params_(&params), mutable_params_(&params), trainable_(trainable),
        init_rng_(&init_rng) {}

  Var operator()(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                 Init init = Init::kFanIn, double gain = 1.0);

  Tape& tape() { return tape_; }
  const std::map<std::string, Var>& bound() const { return bound_; }
  /// Gradients of every bound parameter (zeros for untouched ones).
  ParamSet gradients() const;

 private:
  Tape& tape_;
  const ParamSet* params_;
  ParamSet* mutable_params_ = nullptr;
  bool trainable_;
  std::mt19937_64* init_rng_ = nullptr;
  std::map<std::string, Var> bound_;
};

double squared_norm(const ParamSet& p);

/// Adds N(0, sigma^2) noise to every coefficient.
void jitter(ParamSet& p, std::mt19937_64& rng, double sigma);

}  // namespace sphflow::ad
