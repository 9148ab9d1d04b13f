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

#include "sphflow/rectified_flow.hpp"

#include <cmath>
#include <numbers>

namespace sphflow {

Feature sample_source(const Signature& sig, int frames, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Feature f(sig, frames);
  for (int l = 0; l <= kMaxDegree; ++l) {
    auto& b = f.block(l);
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index i = 0; i < b.rows(); ++i) b(i, j) = n(rng);
  }
  return f;
}

FlowPathSample make_path_sample(const Feature& x0, const Feature& a, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("flow time must lie in [0, 1]");
  x0.check_compatible(a);
  FlowPathSample s;
  s.x0 = x0;
  s.a = a;
  s.t = t;
  s.x_t = (1.0 - t) * x0 + t * a;
  s.v_star = a - x0;
  return s;
}

Feature euler_integrate(Feature x, int steps, const VelocityField& v) {
  if (steps < 1) throw ConfigError("the Euler sampler needs at least one step");
  const double dt = 1.0 / steps;
  for (int k = 0; k < steps; ++k) x += dt * v(x, double(k) / steps);
  return x;
}

double velocity_mse(const std::vector<Feature>& predicted, const std::vector<FlowPathSample>& batch) {
  if (batch.empty() || predicted.size() != batch.size()) {
    throw ValidationError("velocity_mse needs one prediction per nonempty batch entry");
  }
  double sum = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    sum += (predicted[i] - batch[i].v_star).squared_norm();
    count += long(batch[i].v_star.signature().coefficients()) * batch[i].v_star.frames();
  }
  return sum / double(count);
}

void AdamW::step(ad::ParamSet& params, const ad::ParamSet& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, double(t_));
  const double c2 = 1.0 - std::pow(beta2, double(t_));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("gradient for unknown parameter " + name);
    ad::Matrix& p = it->second;
    auto [mi, fresh_m] = m_.try_emplace(name, ad::Matrix::Zero(g.rows(), g.cols()));
    auto [vi, fresh_v] = v_.try_emplace(name, ad::Matrix::Zero(g.rows(), g.cols()));
    ad::Matrix& m = mi->second;
    ad::Matrix& v = vi->second;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    if (weight_decay > 0.0) p *= 1.0 - lr * weight_decay;
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

void Ema::update(const ad::ParamSet& params) {
  for (const auto& [name, p] : params) {
    auto [it, fresh] = shadow.try_emplace(name, p);
    if (!fresh) it->second = decay * it->second + (1.0 - decay) * p;
  }
}

double cosine_lr(double base, long step, long total, long warmup, double min_ratio) {
  if (warmup > 0 && step < warmup) return base * double(step + 1) / double(warmup);
  if (total <= warmup) return base;
  const double progress = std::min(1.0, double(step - warmup) / double(total - warmup));
  const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return base * (min_ratio + (1.0 - min_ratio) * c);
}

}  // namespace sphflow
