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

#include "sphflow/fusion.hpp"

#include <cmath>
#include <limits>

namespace sphflow {

using ad::Matrix;
using ad::Var;

void ImageTokens::validate() const {
  if (tokens.rows() < 1 || tokens.cols() < 1) throw ValidationError("image tokens are empty");
  if (!tokens.allFinite()) throw ValidationError("image tokens are not finite");
}

double FemParams::attention_scale() const {
  return scale > 0.0 ? scale : 1.0 / std::sqrt(double(wq.rows()));
}

FemParams FemParams::passthrough(const Signature& sig, int d_img, int d_key) {
  FemParams p;
  const int c0 = sig[0];
  p.wq = Matrix::Zero(d_key, c0);
  p.wk = Matrix::Zero(d_key, d_img);
  p.wv = Matrix::Zero(c0, d_img);
  p.gate_w = Matrix::Zero(c0, 2 * c0);
  p.gate_b = Matrix::Constant(c0, 1, -std::numeric_limits<double>::infinity());
  p.proj = EquiLinearParams::identity(sig);
  return p;
}

FemVars FemVars::constant(ad::Tape& tape, const FemParams& p) {
  FemVars v;
  v.wq = tape.constant(p.wq);
  v.wk = tape.constant(p.wk);
  v.wv = tape.constant(p.wv);
  v.gate_w = tape.constant(p.gate_w);
  v.gate_b = tape.constant(p.gate_b);
  for (int l = 0; l <= kMaxDegree; ++l) v.proj.weight[l] = tape.constant(p.proj.weight[l]);
  if (p.proj.bias0.size() > 0) v.proj.bias0 = tape.constant(p.proj.bias0);
  v.scale = p.attention_scale();
  return v;
}

FemVars bind_fem(ad::Binder& b, const std::string& prefix, const Signature& in, int d_img,
                 int d_key, const Signature& out) {
  const int c0 = in[0];
  if (c0 < 1) throw SignatureError("feature enhancement needs a degree-0 block");
  FemVars v;
  v.wq = b(prefix + ".wq", d_key, c0);
  v.wk = b(prefix + ".wk", d_key, d_img);
  v.wv = b(prefix + ".wv", c0, d_img);
  v.gate_w = b(prefix + ".gate.w", c0, 2 * c0);
  v.gate_b = b(prefix + ".gate.b", c0, 1, ad::Init::kZero);
  v.proj = bind_equi_linear(b, prefix + ".proj", in, out, true, ad::Init::kIdentity);
  v.scale = 1.0 / std::sqrt(double(d_key));
  return v;
}

Var cross_attention(const Var& f0, const Var& tokens, const FemVars& p) {
  if (p.wq.cols() != f0.rows() || p.wk.cols() != tokens.cols() || p.wv.cols() != tokens.cols() ||
      p.wv.rows() != f0.rows() || p.wq.rows() != p.wk.rows()) {
    throw SignatureError("cross_attention: parameter shapes do not match the inputs");
  }
  const Var q = ad::matmul(p.wq, f0);                         // (dk x nq)
  const Var k = ad::matmul(p.wk, ad::transpose(tokens));      // (dk x n)
  const Var scores = ad::scale(ad::matmul(ad::transpose(q), k), p.scale);
  const Var attn = ad::softmax_rows(scores);                  // (nq x n)
  const Var values = ad::matmul(p.wv, ad::transpose(tokens));  // (c0 x n)
  return ad::matmul(values, ad::transpose(attn));
}

Matrix cross_attention(const Matrix& f0, const ImageTokens& img, const FemParams& p) {
  img.validate();
  ad::Tape tape;
  return cross_attention(tape.constant(f0), tape.constant(img.tokens), FemVars::constant(tape, p))
      .value();
}

Var fem_gate(const Var& attended, const Var& original, const FemVars& p) {
  if (attended.rows() != original.rows() || attended.cols() != original.cols()) {
    throw SignatureError("fem_gate: attended and original shapes differ");
  }
  const Var g =
      ad::sigmoid(ad::add_column(ad::matmul(p.gate_w, ad::vcat({attended, original})), p.gate_b));
  return ad::add(ad::mul(g, attended), ad::mul(ad::affine(g, -1.0, 1.0), original));
}

Matrix fem_gate(const Matrix& attended, const Matrix& original, const FemParams& p) {
  ad::Tape tape;
  return fem_gate(tape.constant(attended), tape.constant(original), FemVars::constant(tape, p))
      .value();
}

IrrepVar fem_fuse(const IrrepVar& f, const std::vector<Var>& tokens, const FemVars& p) {
  if (!f.has(0)) throw SignatureError("fem_fuse: feature has no degree-0 block");
  if (tokens.size() != 1 && int(tokens.size()) != f.frames) {
    throw SignatureError("fem_fuse: need one token set per frame or a shared one");
  }
  const Var& f0 = f.blocks[0];
  Var attended;
  if (tokens.size() == 1) {
    attended = cross_attention(f0, tokens[0], p);
  } else {
    std::vector<Var> parts;
    parts.reserve(tokens.size());
    for (int i = 0; i < f.frames; ++i) parts.push_back(cross_attention(ad::cols(f0, i, 1), tokens[i], p));
    attended = ad::hcat(parts);
  }
  IrrepVar mixed = f;
  mixed.blocks[0] = fem_gate(attended, f0, p);
  return equi_linear(mixed, p.proj);
}

Feature fem_fuse(const Feature& f, const ImageTokens& img, const FemParams& p) {
  img.validate();
  ad::Tape tape;
  IrrepVar out = fem_fuse(IrrepVar::constant(tape, f), {tape.constant(img.tokens)},
                          FemVars::constant(tape, p));
  out.frames = f.frames();
  return out.value();
}

}  // namespace sphflow
