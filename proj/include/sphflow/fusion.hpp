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

// Feature enhancement: image tokens are attended by the degree-0 block of a
// point-cloud feature, gated against the original scalars and projected.
// Higher degrees never see image content.
#pragma once

#include <string>
#include <vector>

#include "sphflow/equi_nn.hpp"

namespace sphflow {

/// (n_tokens x d_img) invariant image features.
struct ImageTokens {
  ad::Matrix tokens;

  int count() const { return int(tokens.rows()); }
  int dim() const { return int(tokens.cols()); }
  void validate() const;
};

struct FemParams {
  ad::Matrix wq;      // (d_key x c0)
  ad::Matrix wk;      // (d_key x d_img)
  ad::Matrix wv;      // (c0 x d_img)
  ad::Matrix gate_w;  // (c0 x 2 c0)
  ad::Matrix gate_b;  // (c0 x 1)
  EquiLinearParams proj;
  double scale = 0.0;  // 0 selects 1 / sqrt(d_key)

  double attention_scale() const;
  /// Identity projection, zero attention weights, gate closed (logit -inf).
  static FemParams passthrough(const Signature& sig, int d_img, int d_key);
};

struct FemVars {
  ad::Var wq, wk, wv, gate_w, gate_b;
  EquiLinearVars proj;
  double scale = 1.0;

  static FemVars constant(ad::Tape& tape, const FemParams& p);
};

/// Keys: <prefix>.wq, .wk, .wv, .gate.w, .gate.b, .proj.w<l>, .proj.b0.
FemVars bind_fem(ad::Binder& binder, const std::string& prefix, const Signature& in, int d_img,
                 int d_key, const Signature& out);

/// f0 is (c0 x n_queries); each column attends over the same tokens.
ad::Var cross_attention(const ad::Var& f0, const ad::Var& tokens, const FemVars& p);
ad::Matrix cross_attention(const ad::Matrix& f0, const ImageTokens& img, const FemParams& p);

/// sigmoid(W [attended ; original] + b) mixes attended and original.
ad::Var fem_gate(const ad::Var& attended, const ad::Var& original, const FemVars& p);
ad::Matrix fem_gate(const ad::Matrix& attended, const ad::Matrix& original, const FemParams& p);

/// `tokens` holds one entry per frame of f_pcd, or a single entry shared by
/// every frame.
IrrepVar fem_fuse(const IrrepVar& f_pcd, const std::vector<ad::Var>& tokens, const FemVars& p);
Feature fem_fuse(const Feature& f_pcd, const ImageTokens& img, const FemParams& p);

}  // namespace sphflow
