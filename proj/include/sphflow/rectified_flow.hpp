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

// Rectified flow: straight interpolants between a Gaussian source and the
// data, a velocity regression loss and an Euler sampler. Optimizer and EMA
// helpers for training live here as well.
#pragma once

#include <functional>
#include <random>

#include "sphflow/ad.hpp"
#include "sphflow/irrep.hpp"

namespace sphflow {

struct FlowPathSample {
  Feature x0;
  Feature a;
  double t = 0.0;
  Feature x_t;
  Feature v_star;
};

/// i.i.d. standard normal coefficients for every degree, channel and frame.
Feature sample_source(const Signature& sig, int frames, std::mt19937_64& rng);

/// x_t = (1 - t) x0 + t a, v* = a - x0. Throws ValidationError for t outside
/// [0, 1].
FlowPathSample make_path_sample(const Feature& x0, const Feature& a, double t);

using VelocityField = std::function<Feature(const Feature& x, double t)>;

/// x <- x + v(x, k / N) / N for k = 0..N-1.
Feature euler_integrate(Feature x, int steps, const VelocityField& v);

/// Mean squared error between predicted and target velocities over every
/// coefficient.
double velocity_mse(const std::vector<Feature>& predicted, const std::vector<FlowPathSample>& batch);

// ---------------------------------------------------------------------------
// Optimization.

struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  /// Decoupled weight decay; moments are created on first use.
  void step(ad::ParamSet& params, const ad::ParamSet& grads, double lr);
  long steps() const { return t_; }

 private:
  long t_ = 0;
  ad::ParamSet m_, v_;
};

/// shadow <- decay * shadow + (1 - decay) * params.
struct Ema {
  double decay = 0.95;
  ad::ParamSet shadow;

  void update(const ad::ParamSet& params);
};

/// Linear warmup followed by cosine decay to `min_ratio * base`.
double cosine_lr(double base, long step, long total, long warmup = 0, double min_ratio = 0.0);

}  // namespace sphflow
