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

// SO(3)-equivariant building blocks and the temporal U-Net velocity network.
//
// Every layer acts on irrep features channel-wise within a degree and never
// mixes the 2l+1 coefficients of a channel except through rotation-invariant
// scalars, so it commutes with apply_rotation.
//
// Each layer exists twice: a differentiable form over IrrepVar (used for
// training and gradient checks) and a value form over Feature with explicit
// parameter structs. The value forms run the differentiable code on a
// scratch tape.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "sphflow/ad.hpp"
#include "sphflow/irrep.hpp"

namespace sphflow {

/// Irrep feature living on a tape; an empty Var marks an absent degree.
struct IrrepVar {
  std::array<ad::Var, kMaxDegree + 1> blocks;
  int frames = 1;

  int channels(int degree) const {
    return blocks[degree].valid() ? int(blocks[degree].rows()) : 0;
  }
  Signature signature() const { return {channels(0), channels(1), channels(2)}; }
  bool has(int degree) const { return channels(degree) > 0; }
  ad::Tape& tape() const;

  static IrrepVar constant(ad::Tape& tape, const Feature& f);
  static IrrepVar variable(ad::Tape& tape, const Feature& f);
  Feature value() const;
};

IrrepVar concat_channels(const IrrepVar& a, const IrrepVar& b);
IrrepVar add(const IrrepVar& a, const IrrepVar& b);

// ---------------------------------------------------------------------------
// Equivariant linear map.

/// Per-degree channel mixing W_l (out_l x in_l); bias only on degree 0.
struct EquiLinearParams {
  std::array<ad::Matrix, kMaxDegree + 1> weight;
  ad::Matrix bias0;  // empty or (out_0 x 1)

  Signature in_signature() const;
  Signature out_signature() const;
  static EquiLinearParams identity(const Signature& sig);
};

struct EquiLinearVars {
  std::array<ad::Var, kMaxDegree + 1> weight;
  ad::Var bias0;
};

IrrepVar equi_linear(const IrrepVar& x, const EquiLinearVars& p);
Feature equi_linear(const Feature& x, const EquiLinearParams& p);

/// Binds (or creates) the weights of an equi_linear layer under `prefix`.
/// Keys: <prefix>.w<l> and <prefix>.b0.
EquiLinearVars bind_equi_linear(ad::Binder& binder, const std::string& prefix, const Signature& in,
                                const Signature& out, bool bias, ad::Init init = ad::Init::kFanIn);

// ---------------------------------------------------------------------------
// Norm-gated nonlinearity.

/// Number of degree-0 gate channels consumed for a given output signature.
inline int gate_count(const Signature& out) { return out[1] + out[2]; }

/// Input degree-0 block = [scalars ; gates], gates being the last
/// (c1 + c2) rows. Scalars go through SiLU; channel k of the concatenated
/// (degree-1, degree-2) channels is scaled by sigmoid(gate k). Gates are
/// consumed, so the output has c0 - (c1 + c2) scalar channels.
IrrepVar gated_nonlinearity(const IrrepVar& x);
Feature gated_nonlinearity(const Feature& x);

// ---------------------------------------------------------------------------
// Equivariant FiLM.

struct EfilmOptions {
  double eps = 1e-8;
  /// Use gamma * h + beta on degree 0 instead of the norm formula. Degree-0
  /// features are invariant, so either choice keeps equivariance.
  bool affine_scalars = false;
};

/// Per degree, channel and frame: (gamma . h) h / max(|h|, eps) + beta.
/// gamma and beta must have the signature and frame count of h.
IrrepVar efilm(const IrrepVar& h, const IrrepVar& gamma, const IrrepVar& beta,
               const EfilmOptions& options = {});
Feature efilm(const Feature& h, const Feature& gamma, const Feature& beta,
              const EfilmOptions& options = {});

// ---------------------------------------------------------------------------
// Spherical Fourier temporal convolution.

/// Weights omega[l][j] of shape (out_l x in_l) for lags j = 0..radius. The
/// container has no m index: one matrix serves all 2l+1 orders.
struct TemporalConvParams {
  int radius = 0;
  std::array<std::vector<ad::Matrix>, kMaxDegree + 1> weight;
  ad::Matrix bias0;  // empty or (out_0 x 1)

  Signature in_signature() const;
  Signature out_signature() const;
};

struct TemporalConvVars {
  int radius = 0;
  std::array<std::vector<ad::Var>, kMaxDegree + 1> weight;
  ad::Var bias0;
};

/// out[o, l, m, t] = sum_j sum_i in[i, l, m, max(t - j, 0)] * omega[l][j](o, i)
/// within every sequence of `horizon` frames (replicate-edge padding).
IrrepVar temporal_conv(const IrrepVar& seq, int horizon, const TemporalConvVars& p);
Feature temporal_conv(const Feature& seq, const TemporalConvParams& p);

/// Keys: <prefix>.l<l>.lag<j> and <prefix>.b0.
TemporalConvVars bind_temporal_conv(ad::Binder& binder, const std::string& prefix,
                                    const Signature& in, const Signature& out, int radius,
                                    bool bias);

IrrepVar temporal_pool(const IrrepVar& seq, int horizon, int factor);
IrrepVar temporal_repeat(const IrrepVar& seq, int factor);

// ---------------------------------------------------------------------------
// Flow-time embedding.

/// Sinusoidal Type-0 embedding [sin(w_k t) ..., cos(w_k t) ...] with
/// w_k = 100^(k / (dim/2 - 1)), k = 0..dim/2-1. t is clamped to [0, 1] with a
/// warning on stderr. `dim` must be even.
Feature time_embedding(double t, int dim);
/// Columns are embeddings of each t (dim x t.size()).
ad::Matrix time_embedding_matrix(const std::vector<double>& t, int dim);

// ---------------------------------------------------------------------------
// U-Net.

struct UNetConfig {
  int horizon = 16;
  /// Signature of one frame of the flow state (and of the velocity).
  Signature io{1, 3, 0};
  /// Signature of the per-sample conditioning feature.
  Signature cond{8, 4, 2};
  int time_dim = 16;
  /// Channels of each resolution level; the network downsamples after every
  /// level, so the bottleneck runs at horizon / factor^levels.size().
  std::vector<Signature> levels{{8, 4, 2}, {12, 6, 2}};
  int factor = 2;
  /// Temporal receptive radius R (lags 0..R).
  int radius = 2;
  double eps = 1e-8;
  /// Feed x_t straight into the output projection as extra channels.
  bool input_skip = true;
  /// Scalar channels encoding the frame index within the horizon (even).
  int position_channels = 16;
  /// Offset in the 1 / (1 - t + stiff_eps) time feature of the output gains.
  double stiff_eps = 1e-3;

  /// Throws ConfigError when inconsistent.
  void validate() const;
  int bottleneck_length() const;
};

/// Velocity network. x_t has frames = batch * horizon, cond has frames =
/// batch, and t holds one flow time per sample. Parameters live under `prefix`.
IrrepVar unet_forward(ad::Binder& binder, const std::string& prefix, const UNetConfig& cfg,
                      const IrrepVar& x_t, const std::vector<double>& t, const IrrepVar& cond);

/// Value form for one sample: x_t has `horizon` frames, cond one frame.
Feature equi_unet_forward(const Feature& x_t, double t, const Feature& cond,
                          const UNetConfig& cfg, const ad::ParamSet& params,
                          const std::string& prefix = "unet");

/// Initializes every U-Net parameter (final projection zeroed).
ad::ParamSet init_unet(const UNetConfig& cfg, std::uint64_t seed, const std::string& prefix = "unet");

}  // namespace sphflow
