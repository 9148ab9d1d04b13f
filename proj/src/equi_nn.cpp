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

#include "sphflow/equi_nn.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace sphflow {

using ad::Matrix;
using ad::Var;

ad::Tape& IrrepVar::tape() const {
  for (const auto& b : blocks)
    if (b.valid()) return b.tape();
  throw SignatureError("irrep variable has no blocks");
}

IrrepVar IrrepVar::constant(ad::Tape& tape, const Feature& f) {
  IrrepVar v;
  v.frames = f.frames();
  for (int l = 0; l <= kMaxDegree; ++l)
    if (f.channels(l) > 0) v.blocks[l] = tape.constant(f.block(l));
  return v;
}

IrrepVar IrrepVar::variable(ad::Tape& tape, const Feature& f) {
  IrrepVar v;
  v.frames = f.frames();
  for (int l = 0; l <= kMaxDegree; ++l)
    if (f.channels(l) > 0) v.blocks[l] = tape.variable(f.block(l));
  return v;
}

Feature IrrepVar::value() const {
  std::array<Matrix, kMaxDegree + 1> out;
  for (int l = 0; l <= kMaxDegree; ++l) {
    out[l] = blocks[l].valid() ? blocks[l].value() : Matrix(0, frames * degree_dim(l));
  }
  return Feature::from_blocks(std::move(out), frames);
}

IrrepVar concat_channels(const IrrepVar& a, const IrrepVar& b) {
  if (a.frames != b.frames) throw SignatureError("concat: frame counts differ");
  IrrepVar out;
  out.frames = a.frames;
  for (int l = 0; l <= kMaxDegree; ++l) {
    if (a.has(l) && b.has(l)) {
      out.blocks[l] = ad::vcat({a.blocks[l], b.blocks[l]});
    } else {
      out.blocks[l] = a.has(l) ? a.blocks[l] : b.blocks[l];
    }
  }
  return out;
}

IrrepVar add(const IrrepVar& a, const IrrepVar& b) {
  if (a.signature() != b.signature() || a.frames != b.frames) {
    throw SignatureError("add: signatures " + a.signature().str() + " and " +
                         b.signature().str() + " differ");
  }
  IrrepVar out;
  out.frames = a.frames;
  for (int l = 0; l <= kMaxDegree; ++l)
    if (a.has(l)) out.blocks[l] = ad::add(a.blocks[l], b.blocks[l]);
  return out;
}

// ---------------------------------------------------------------------------

Signature EquiLinearParams::in_signature() const {
  return {int(weight[0].cols()), int(weight[1].cols()), int(weight[2].cols())};
}

Signature EquiLinearParams::out_signature() const {
  return {int(weight[0].rows()), int(weight[1].rows()), int(weight[2].rows())};
}

EquiLinearParams EquiLinearParams::identity(const Signature& sig) {
  EquiLinearParams p;
  for (int l = 0; l <= kMaxDegree; ++l) p.weight[l] = Matrix::Identity(sig[l], sig[l]);
  return p;
}

IrrepVar equi_linear(const IrrepVar& x, const EquiLinearVars& p) {
  IrrepVar out;
  out.frames = x.frames;
  ad::Tape& tape = x.tape();
  for (int l = 0; l <= kMaxDegree; ++l) {
    const Var& w = p.weight[l];
    if (!w.valid() || w.rows() == 0) continue;
    if (w.cols() != x.channels(l)) {
      throw SignatureError("equi_linear: degree-" + std::to_string(l) + " weight expects " +
                           std::to_string(w.cols()) + " channels, input has " +
                           std::to_string(x.channels(l)));
    }
    if (w.cols() == 0) {
      out.blocks[l] = tape.constant(Matrix::Zero(w.rows(), x.frames * degree_dim(l)));
      continue;
    }
    out.blocks[l] = ad::matmul(w, x.blocks[l]);
  }
  if (p.bias0.valid() && p.bias0.rows() > 0) {
    if (!out.has(0)) throw SignatureError("equi_linear: bias without a degree-0 output");
    out.blocks[0] = ad::add_column(out.blocks[0], p.bias0);
  }
  return out;
}

Feature equi_linear(const Feature& x, const EquiLinearParams& p) {
  ad::Tape tape;
  EquiLinearVars v;
  for (int l = 0; l <= kMaxDegree; ++l) {
    if (p.weight[l].size() == 0 && p.weight[l].rows() == 0 && x.channels(l) > 0) {
      throw SignatureError("equi_linear: no weight for input degree " + std::to_string(l));
    }
    v.weight[l] = tape.constant(p.weight[l]);
  }
  if (p.bias0.size() > 0) v.bias0 = tape.constant(p.bias0);
  IrrepVar out = equi_linear(IrrepVar::constant(tape, x), v);
  out.frames = x.frames();
  return out.value();
}

EquiLinearVars bind_equi_linear(ad::Binder& binder, const std::string& prefix, const Signature& in,
                                const Signature& out, bool bias, ad::Init init) {
  EquiLinearVars v;
  for (int l = 0; l <= kMaxDegree; ++l) {
    if (out[l] == 0) continue;
    if (in[l] == 0) {
      v.weight[l] = binder.tape().constant(Matrix(out[l], 0));
      continue;
    }
    v.weight[l] = binder(prefix + ".w" + std::to_string(l), out[l], in[l], init);
  }
  if (bias && out[0] > 0) v.bias0 = binder(prefix + ".b0", out[0], 1, ad::Init::kZero);
  return v;
}

// ---------------------------------------------------------------------------

IrrepVar gated_nonlinearity(const IrrepVar& x) {
  const int gates = x.channels(1) + x.channels(2);
  const int scalars = x.channels(0) - gates;
  if (scalars < 0) {
    throw ConfigError("gated nonlinearity needs " + std::to_string(gates) +
                      " degree-0 gate channels, found " + std::to_string(x.channels(0)));
  }
  IrrepVar out;
  out.frames = x.frames;
  if (gates == 0) {
    if (x.has(0)) out.blocks[0] = ad::silu(x.blocks[0]);
    return out;
  }
  if (scalars > 0) out.blocks[0] = ad::silu(ad::rows(x.blocks[0], 0, scalars));
  const Var g = ad::sigmoid(ad::rows(x.blocks[0], scalars, gates));
  int offset = 0;
  for (int l = 1; l <= kMaxDegree; ++l) {
    if (!x.has(l)) continue;
    const Var gl = (gates == x.channels(l)) ? g : ad::rows(g, offset, x.channels(l));
    out.blocks[l] = ad::scale_frames(x.blocks[l], gl, degree_dim(l));
    offset += x.channels(l);
  }
  return out;
}

Feature gated_nonlinearity(const Feature& x) {
  ad::Tape tape;
  return gated_nonlinearity(IrrepVar::constant(tape, x)).value();
}

// ---------------------------------------------------------------------------

IrrepVar efilm(const IrrepVar& h, const IrrepVar& gamma, const IrrepVar& beta,
               const EfilmOptions& options) {
  if (h.signature() != gamma.signature() || h.signature() != beta.signature() ||
      h.frames != gamma.frames || h.frames != beta.frames) {
    throw SignatureError("efilm: h " + h.signature().str() + ", gamma " +
                         gamma.signature().str() + " and beta " + beta.signature().str() +
                         " must match");
  }
  IrrepVar out;
  out.frames = h.frames;
  for (int l = 0; l <= kMaxDegree; ++l) {
    if (!h.has(l)) continue;
    if (l == 0 && options.affine_scalars) {
      out.blocks[0] = ad::add(ad::mul(gamma.blocks[0], h.blocks[0]), beta.blocks[0]);
    } else {
      out.blocks[l] =
          ad::efilm_frames(h.blocks[l], gamma.blocks[l], beta.blocks[l], degree_dim(l), options.eps);
    }
  }
  return out;
}

Feature efilm(const Feature& h, const Feature& gamma, const Feature& beta,
              const EfilmOptions& options) {
  ad::Tape tape;
  return efilm(IrrepVar::constant(tape, h), IrrepVar::constant(tape, gamma),
               IrrepVar::constant(tape, beta), options)
      .value();
}

// ---------------------------------------------------------------------------

Signature TemporalConvParams::in_signature() const {
  Signature s;
  for (int l = 0; l <= kMaxDegree; ++l) s[l] = weight[l].empty() ? 0 : int(weight[l][0].cols());
  return s;
}

Signature TemporalConvParams::out_signature() const {
  Signature s;
  for (int l = 0; l <= kMaxDegree; ++l) s[l] = weight[l].empty() ? 0 : int(weight[l][0].rows());
  return s;
}

IrrepVar temporal_conv(const IrrepVar& seq, int horizon, const TemporalConvVars& p) {
  if (seq.frames < 1) throw SignatureError("temporal_conv: empty sequence");
  if (horizon < 1 || seq.frames % horizon != 0) {
    throw SignatureError("temporal_conv: frame count is not a multiple of the horizon");
  }
  ad::Tape& tape = seq.tape();
  IrrepVar out;
  out.frames = seq.frames;
  for (int l = 0; l <= kMaxDegree; ++l) {
    const auto& lags = p.weight[l];
    if (lags.empty()) continue;
    if (int(lags.size()) != p.radius + 1) {
      throw SignatureError("temporal_conv: expected " + std::to_string(p.radius + 1) + " lags");
    }
    const Eigen::Index out_ch = lags[0].rows();
    if (out_ch == 0) continue;
    if (lags[0].cols() != seq.channels(l)) {
      throw SignatureError("temporal_conv: degree-" + std::to_string(l) + " channel mismatch");
    }
    if (seq.channels(l) == 0) {
      out.blocks[l] = tape.constant(Matrix::Zero(out_ch, seq.frames * degree_dim(l)));
      continue;
    }
    Var acc;
    for (int j = 0; j <= p.radius; ++j) {
      const Var shifted =
          j == 0 ? seq.blocks[l] : ad::time_shift(seq.blocks[l], degree_dim(l), horizon, j);
      const Var term = ad::matmul(lags[j], shifted);
      acc = acc.valid() ? ad::add(acc, term) : term;
    }
    out.blocks[l] = acc;
  }
  if (p.bias0.valid() && p.bias0.rows() > 0) out.blocks[0] = ad::add_column(out.blocks[0], p.bias0);
  return out;
}

Feature temporal_conv(const Feature& seq, const TemporalConvParams& p) {
  ad::Tape tape;
  TemporalConvVars v;
  v.radius = p.radius;
  for (int l = 0; l <= kMaxDegree; ++l)
    for (const auto& w : p.weight[l]) v.weight[l].push_back(tape.constant(w));
  if (p.bias0.size() > 0) v.bias0 = tape.constant(p.bias0);
  return temporal_conv(IrrepVar::constant(tape, seq), seq.frames(), v).value();
}

TemporalConvVars bind_temporal_conv(ad::Binder& binder, const std::string& prefix,
                                    const Signature& in, const Signature& out, int radius,
                                    bool bias) {
  TemporalConvVars v;
  v.radius = radius;
  for (int l = 0; l <= kMaxDegree; ++l) {
    if (out[l] == 0) continue;
    for (int j = 0; j <= radius; ++j) {
      if (in[l] == 0) {
        v.weight[l].push_back(binder.tape().constant(Matrix(out[l], 0)));
        continue;
      }
      const double gain = 1.0 / std::sqrt(double(radius + 1));
      v.weight[l].push_back(binder(prefix + ".l" + std::to_string(l) + ".lag" + std::to_string(j),
                                   out[l], in[l], ad::Init::kFanIn, gain));
    }
  }
  if (bias && out[0] > 0) v.bias0 = binder(prefix + ".b0", out[0], 1, ad::Init::kZero);
  return v;
}

IrrepVar temporal_pool(const IrrepVar& seq, int horizon, int factor) {
  IrrepVar out;
  out.frames = seq.frames / factor;
  for (int l = 0; l <= kMaxDegree; ++l)
    if (seq.has(l)) out.blocks[l] = ad::time_pool(seq.blocks[l], degree_dim(l), horizon, factor);
  return out;
}

IrrepVar temporal_repeat(const IrrepVar& seq, int factor) {
  IrrepVar out;
  out.frames = seq.frames * factor;
  for (int l = 0; l <= kMaxDegree; ++l)
    if (seq.has(l)) out.blocks[l] = ad::time_repeat(seq.blocks[l], degree_dim(l), factor);
  return out;
}

// ---------------------------------------------------------------------------

Matrix time_embedding_matrix(const std::vector<double>& ts, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("time embedding dimension must be even and >= 2");
  const int half = dim / 2;
  Matrix m(dim, Eigen::Index(ts.size()));
  for (std::size_t c = 0; c < ts.size(); ++c) {
    double t = ts[c];
    if (!(t >= 0.0 && t <= 1.0)) {
      std::cerr << "warning: flow time " << t << " clamped to [0, 1]\n";
      t = std::isnan(t) ? 0.0 : std::clamp(t, 0.0, 1.0);
    }
    for (int k = 0; k < half; ++k) {
      const double w = half == 1 ? 1.0 : std::pow(100.0, double(k) / double(half - 1));
      m(k, Eigen::Index(c)) = std::sin(w * t);
      m(half + k, Eigen::Index(c)) = std::cos(w * t);
    }
  }
  return m;
}

Feature time_embedding(double t, int dim) {
  std::array<Matrix, kMaxDegree + 1> blocks;
  blocks[0] = time_embedding_matrix({t}, dim);
  return Feature::from_blocks(std::move(blocks), 1);
}

// ---------------------------------------------------------------------------

void UNetConfig::validate() const {
  if (horizon < 1) throw ConfigError("horizon must be positive");
  if (levels.empty()) throw ConfigError("U-Net needs at least one level");
  if (factor < 1) throw ConfigError("down-sampling factor must be positive");
  if (radius < 0) throw ConfigError("temporal radius must be non-negative");
  int div = 1;
  for (std::size_t i = 0; i < levels.size(); ++i) div *= factor;
  if (horizon % div != 0) {
    throw ConfigError("horizon " + std::to_string(horizon) + " is not divisible by " +
                      std::to_string(div));
  }
  if (time_dim < 2 || time_dim % 2 != 0) throw ConfigError("time_dim must be even");
  if (!(stiff_eps > 0.0)) throw ConfigError("stiff_eps must be positive");
  if (position_channels < 0 || position_channels % 2 != 0) {
    throw ConfigError("position_channels must be even and non-negative");
  }
  for (const auto& s : levels)
    if (s.coefficients() == 0) throw ConfigError("empty U-Net level");
  if (io.coefficients() == 0) throw ConfigError("empty flow-state signature");
}

int UNetConfig::bottleneck_length() const {
  int h = horizon;
  for (std::size_t i = 0; i < levels.size(); ++i) h /= factor;
  return h;
}

namespace {

IrrepVar broadcast_over_horizon(const IrrepVar& x, int horizon) {
  IrrepVar out;
  out.frames = x.frames * horizon;
  for (int l = 0; l <= kMaxDegree; ++l)
    if (x.has(l)) out.blocks[l] = ad::broadcast_frames(x.blocks[l], degree_dim(l), horizon);
  return out;
}

// conv -> gated nonlinearity -> EFiLM(cond, t), plus a linear residual path.
IrrepVar unet_block(ad::Binder& b, const std::string& prefix, const UNetConfig& cfg,
                    const IrrepVar& x, int horizon, const Signature& out_sig,
                    const IrrepVar& film) {
  Signature conv_sig = out_sig;
  conv_sig[0] += gate_count(out_sig);
  const auto conv = bind_temporal_conv(b, prefix + ".conv", x.signature(), conv_sig, cfg.radius, true);
  IrrepVar h = gated_nonlinearity(temporal_conv(x, horizon, conv));

  const auto gamma_p = bind_equi_linear(b, prefix + ".gamma", film.signature(), out_sig, true,
                                        ad::Init::kFanIn);
  const auto beta_p = bind_equi_linear(b, prefix + ".beta", film.signature(), out_sig, true,
                                       ad::Init::kFanIn);
  IrrepVar gamma = equi_linear(film, gamma_p);
  if (gamma.has(0)) gamma.blocks[0] = ad::affine(gamma.blocks[0], 1.0, 1.0);
  const IrrepVar beta = equi_linear(film, beta_p);
  h = efilm(h, broadcast_over_horizon(gamma, horizon), broadcast_over_horizon(beta, horizon),
            {cfg.eps, true});

  const auto skip = bind_equi_linear(b, prefix + ".skip", x.signature(), out_sig, false);
  return add(h, equi_linear(x, skip));
}

}  // namespace

namespace {

Matrix position_matrix(int channels, int horizon, int batch) {
  Matrix out(channels, horizon * batch);
  for (int f = 0; f < horizon * batch; ++f) {
    const double u = double(f % horizon) / std::max(horizon - 1, 1);
    for (int k = 0; k < channels / 2; ++k) {
      out(2 * k, f) = std::cos(M_PI * (k + 1) * u);
      out(2 * k + 1, f) = std::sin(M_PI * (k + 1) * u);
    }
  }
  return out;
}

// Per-channel gains on the head input: b + W temb + c / (1 - t + stiff_eps).
// The last term lets the output follow the 1 / (1 - t) growth of the exact
// single-target velocity; c starts at zero.
IrrepVar head_gain(ad::Binder& b, const std::string& prefix, const IrrepVar& x, const Var& temb,
                   const std::vector<double>& t, const UNetConfig& cfg) {
  const int batch = int(t.size());
  Matrix stiff(1, batch);
  for (int i = 0; i < batch; ++i) stiff(0, i) = 1.0 / (1.0 - std::clamp(t[i], 0.0, 1.0) + cfg.stiff_eps);
  const Var r = b.tape().constant(std::move(stiff));
  const int td = int(temb.rows());
  IrrepVar out = x;
  for (int l = 0; l <= kMaxDegree; ++l) {
    const int c = x.channels(l);
    if (c == 0) continue;
    const std::string name = prefix + std::to_string(l);
    Var g = ad::matmul(b(name + ".w", c, td, ad::Init::kZero), temb);
    g = ad::add(g, ad::matmul(b(name + ".stiff", c, 1, ad::Init::kZero), r));
    IrrepVar gain;
    gain.frames = batch;
    gain.blocks[0] = ad::add_column(g, b(name + ".b", c, 1, ad::Init::kOnes));
    gain = temporal_repeat(gain, cfg.horizon);
    out.blocks[l] = ad::scale_frames(x.blocks[l], gain.blocks[0], degree_dim(l));
  }
  return out;
}

}  // namespace

IrrepVar unet_forward(ad::Binder& b, const std::string& prefix, const UNetConfig& cfg,
                      const IrrepVar& x_t, const std::vector<double>& t, const IrrepVar& cond) {
  cfg.validate();
  if (x_t.signature() != cfg.io) {
    throw SignatureError("U-Net input " + x_t.signature().str() + " does not match " +
                         cfg.io.str());
  }
  if (x_t.frames % cfg.horizon != 0) {
    throw SignatureError("U-Net input frames are not a multiple of the horizon");
  }
  const int batch = x_t.frames / cfg.horizon;
  if (cond.signature() != cfg.cond || cond.frames != batch) {
    throw SignatureError("U-Net condition " + cond.signature().str() + " does not match " +
                         cfg.cond.str());
  }
  if (int(t.size()) != batch) throw SignatureError("U-Net needs one flow time per sample");
  ad::Tape& tape = b.tape();
  const Var time_embed = tape.constant(time_embedding_matrix(t, cfg.time_dim));

  // Time MLP on the sinusoidal embedding.
  const int td = cfg.time_dim;
  Var temb = ad::add_column(ad::matmul(b(prefix + ".time.w1", 2 * td, td), time_embed),
                            b(prefix + ".time.b1", 2 * td, 1, ad::Init::kZero));
  temb = ad::silu(temb);
  temb = ad::add_column(ad::matmul(b(prefix + ".time.w2", td, 2 * td), temb),
                        b(prefix + ".time.b2", td, 1, ad::Init::kZero));
  IrrepVar time_feature;
  time_feature.frames = batch;
  time_feature.blocks[0] = temb;
  const IrrepVar film = concat_channels(cond, time_feature);

  IrrepVar x = x_t;
  if (cfg.position_channels > 0) {
    IrrepVar pos;
    pos.frames = x_t.frames;
    pos.blocks[0] = tape.constant(position_matrix(cfg.position_channels, cfg.horizon, batch));
    x = concat_channels(x, pos);
  }
  int horizon = cfg.horizon;
  std::vector<IrrepVar> skips;
  for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
    x = unet_block(b, prefix + ".down" + std::to_string(i), cfg, x, horizon, cfg.levels[i], film);
    skips.push_back(x);
    x = temporal_pool(x, horizon, cfg.factor);
    horizon /= cfg.factor;
  }
  x = unet_block(b, prefix + ".mid", cfg, x, horizon, cfg.levels.back(), film);
  for (std::size_t k = cfg.levels.size(); k-- > 0;) {
    x = temporal_repeat(x, cfg.factor);
    horizon *= cfg.factor;
    x = concat_channels(x, skips[k]);
    x = unet_block(b, prefix + ".up" + std::to_string(k), cfg, x, horizon, cfg.levels[k], film);
  }
  if (cfg.input_skip) x = concat_channels(x, x_t);
  x = head_gain(b, prefix + ".gain", x, temb, t, cfg);
  const auto head = bind_equi_linear(b, prefix + ".out", x.signature(), cfg.io, true, ad::Init::kZero);
  return equi_linear(x, head);
}

Feature equi_unet_forward(const Feature& x_t, double t, const Feature& cond, const UNetConfig& cfg,
                          const ad::ParamSet& params, const std::string& prefix) {
  ad::Tape tape;
  ad::Binder binder(tape, params, false);
  return unet_forward(binder, prefix, cfg, IrrepVar::constant(tape, x_t), {t},
                      IrrepVar::constant(tape, cond))
      .value();
}

ad::ParamSet init_unet(const UNetConfig& cfg, std::uint64_t seed, const std::string& prefix) {
  ad::ParamSet params;
  std::mt19937_64 rng(seed);
  ad::Tape tape;
  ad::Binder binder(tape, params, false, rng);
  unet_forward(binder, prefix, cfg, IrrepVar::constant(tape, Feature::zeros(cfg.io, cfg.horizon)),
               {0.0}, IrrepVar::constant(tape, Feature::zeros(cfg.cond, 1)));
  return params;
}

}  // namespace sphflow
