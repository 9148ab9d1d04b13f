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

#include "sphflow/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "sphflow/binary_io.hpp"

namespace sphflow {

using ad::Matrix;
using ad::Var;
using Json = nlohmann::json;

namespace {

using Batch = std::vector<const PreparedObservation*>;

constexpr const char* kImagePrefix = "enc.img";
constexpr std::uint64_t kNoiseStream = 0x5eed0f10u;

Feature stack(const Batch& batch, Feature PreparedObservation::*field) {
  std::vector<Feature> parts;
  parts.reserve(batch.size());
  for (const auto* o : batch) parts.push_back(o->*field);
  return concat_frames(parts);
}

Var image_tokens(ad::Binder& b, const PolicyConfig& cfg, const Batch& batch) {
  const int t = cfg.img.tokens();
  Matrix patches(Eigen::Index(batch.size()) * t, cfg.img.patch_features());
  for (std::size_t i = 0; i < batch.size(); ++i) patches.middleRows(Eigen::Index(i) * t, t) = batch[i]->patches;
  return encode_image(b, kImagePrefix, cfg.img, b.tape().constant(std::move(patches)));
}

IrrepVar mlp_velocity(ad::Binder& b, const PolicyConfig& cfg, const Batch& batch, const IrrepVar& x_t,
                 const Var& temb) {
  ad::Tape& tape = b.tape();
  const auto n = Eigen::Index(batch.size());
  const int h = cfg.horizon();
  Matrix cloud(3 * cfg.mlp_points, n), proprio(10, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (batch[i]->flat_cloud.size() != cloud.rows()) {
      throw SignatureError("baseline expects " + std::to_string(cfg.mlp_points) + " points per cloud");
    }
    cloud.col(i) = batch[i]->flat_cloud;
    proprio(0, i) = batch[i]->proprio.block(0)(0, 0);
    proprio.col(i).tail(9) = batch[i]->proprio.block(1).reshaped();
  }
  const Var tokens = ad::transpose(image_tokens(b, cfg, batch));  // (dim x n*tokens)
  const Var input = ad::vcat({tape.constant(std::move(cloud)), tape.constant(std::move(proprio)),
                              ad::reshape(tokens, cfg.img.dim * cfg.img.tokens(), n),
                              ad::reshape(x_t.blocks[0], h, n), ad::reshape(x_t.blocks[1], 9 * h, n),
                              temb});
  const int in = int(input.rows()), hid = cfg.mlp_hidden, out = 10 * h;
  Var z = ad::silu(ad::add_column(ad::matmul(b("mlp.w1", hid, in), input), b("mlp.b1", hid, 1, ad::Init::kZero)));
  z = ad::silu(ad::add_column(ad::matmul(b("mlp.w2", hid, hid), z), b("mlp.b2", hid, 1, ad::Init::kZero)));
  z = ad::add_column(ad::matmul(b("mlp.w3", out, hid, ad::Init::kZero), z),
                     b("mlp.b3", out, 1, ad::Init::kZero));
  IrrepVar v;
  v.frames = x_t.frames;
  v.blocks[0] = ad::reshape(ad::rows(z, 0, h), 1, n * h);
  v.blocks[1] = ad::reshape(ad::rows(z, h, 9 * h), 3, n * h * 3);
  return v;
}

PreparedObservation dummy_observation(const PolicyConfig& cfg) {
  PreparedObservation o;
  o.raw_cloud = Feature::zeros(cfg.pcd.raw_signature(), 1);
  o.patches = Matrix::Zero(cfg.img.tokens(), cfg.img.patch_features());
  o.proprio = Feature::zeros(proprio_signature(), 1);
  o.flat_cloud = Eigen::VectorXd::Zero(3 * std::max(cfg.mlp_points, 0));
  return o;
}

Json signature_json(const Signature& s) { return Json::array({s[0], s[1], s[2]}); }
Signature signature_from(const Json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }

}  // namespace

std::string variant_name(Variant v) { return v == Variant::kEquivariant ? "equivariant" : "mlp-baseline"; }

Variant parse_variant(const std::string& name) {
  if (name == "equivariant") return Variant::kEquivariant;
  if (name == "mlp-baseline" || name == "mlp") return Variant::kMlp;
  throw ConfigError("unknown model variant '" + name + "' (expected equivariant or mlp-baseline)");
}

void PolicyConfig::finalize() {
  unet.io = proprio_signature();
  unet.cond = condition_signature();
  unet.validate();
  if (position_scale <= 0.0) throw ConfigError("position_scale must be positive");
  if (fem_key_dim < 1) throw ConfigError("fem_key_dim must be positive");
  if (variant == Variant::kMlp && mlp_points < 1) {
    throw ConfigError("the dense baseline needs mlp_points (points per cloud)");
  }
  if (mlp_hidden < 1) throw ConfigError("mlp_hidden must be positive");
}

PreparedObservation prepare_observation(const Observation& obs, const PolicyConfig& cfg) {
  const NormalizedCloud n = normalize_cloud(obs.cloud);
  PreparedObservation p;
  p.raw_cloud = point_cloud_features(n.centered, cfg.pcd);
  p.patches = image_patch_features(obs.image, cfg.img);
  p.proprio = embed_proprio(obs.proprio, n.centroid, cfg.position_scale);
  p.centroid = n.centroid;
  p.rotation = obs.proprio.rotation();
  Eigen::MatrixX3d scaled = cfg.position_scale * n.centered.points;
  p.flat_cloud = Eigen::Map<const Eigen::VectorXd>(Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>(scaled).data(),
                                                   scaled.size());
  return p;
}

std::vector<TrainingSample> prepare_dataset(const Dataset& d, const PolicyConfig& cfg) {
  std::vector<TrainingSample> out;
  out.reserve(d.step_count());
  for (const auto& e : d.episodes)
    for (const auto& s : e.steps) {
      if (int(s.action.size()) != cfg.horizon()) {
        throw ConfigError("dataset horizon " + std::to_string(s.action.size()) +
                          " does not match the model horizon " + std::to_string(cfg.horizon()));
      }
      TrainingSample t;
      t.obs = prepare_observation(s.obs, cfg);
      t.target = embed_action_chunk(s.action, t.obs.centroid, cfg.position_scale);
      out.push_back(std::move(t));
    }
  return out;
}

IrrepVar condition_forward(ad::Binder& b, const PolicyConfig& cfg, const Batch& batch) {
  ad::Tape& tape = b.tape();
  const IrrepVar enc =
      encode_point_cloud(b, "enc.pcd", cfg.pcd, IrrepVar::constant(tape, stack(batch, &PreparedObservation::raw_cloud)));
  IrrepVar fused;
  if (cfg.fusion) {
    const Var tokens = image_tokens(b, cfg, batch);
    std::vector<Var> per_sample;
    const int t = cfg.img.tokens();
    for (std::size_t i = 0; i < batch.size(); ++i) per_sample.push_back(ad::rows(tokens, Eigen::Index(i) * t, t));
    const FemVars fem = bind_fem(b, "fem", cfg.pcd.out, cfg.img.dim, cfg.fem_key_dim, cfg.fem_out);
    fused = fem_fuse(enc, per_sample, fem);
  } else {
    fused = equi_linear(enc, bind_equi_linear(b, "fem.proj", cfg.pcd.out, cfg.fem_out, true, ad::Init::kIdentity));
  }
  fused.frames = int(batch.size());
  return concat_channels(fused, IrrepVar::constant(tape, stack(batch, &PreparedObservation::proprio)));
}

IrrepVar velocity_forward(ad::Binder& b, const PolicyConfig& cfg, const Batch& batch, const IrrepVar& x_t,
                          const std::vector<double>& t) {
  if (x_t.signature() != cfg.action_signature() || x_t.frames != int(batch.size()) * cfg.horizon() ||
      t.size() != batch.size()) {
    throw SignatureError("velocity input " + x_t.signature().str() + " with " + std::to_string(x_t.frames) +
                         " frames does not match the batch");
  }
  ad::Tape& tape = b.tape();
  if (cfg.variant == Variant::kMlp) {
    return mlp_velocity(b, cfg, batch, x_t, tape.constant(time_embedding_matrix(t, cfg.unet.time_dim)));
  }
  return unet_forward(b, "unet", cfg.unet, x_t, t, condition_forward(b, cfg, batch));
}

Var rf_loss(ad::Binder& b, const PolicyConfig& cfg, const Batch& batch, const std::vector<FlowPathSample>& paths) {
  if (batch.empty() || paths.size() != batch.size()) {
    throw ValidationError("rf_loss needs one path sample per nonempty batch entry");
  }
  std::vector<Feature> xs, vs;
  std::vector<double> ts;
  for (const auto& p : paths) {
    xs.push_back(p.x_t);
    vs.push_back(p.v_star);
    ts.push_back(p.t);
  }
  ad::Tape& tape = b.tape();
  const Feature target = concat_frames(vs);
  const IrrepVar v = velocity_forward(b, cfg, batch, IrrepVar::constant(tape, concat_frames(xs)), ts);
  Var total;
  for (int l = 0; l <= kMaxDegree; ++l) {
    if (!target.channels(l)) continue;
    const Var sq = ad::sum_squares(ad::sub(v.blocks[l], tape.constant(target.block(l))));
    total = total.valid() ? ad::add(total, sq) : sq;
  }
  const double count = double(target.signature().coefficients()) * target.frames();
  const Var loss = ad::scale(total, 1.0 / count);
  if (!std::isfinite(loss.value()(0, 0))) {
    double worst = 0.0;
    for (int l = 0; l <= kMaxDegree; ++l)
      if (v.has(l)) worst = std::max(worst, v.blocks[l].value().cwiseAbs().maxCoeff());
    throw TrainingError("non-finite loss in the forward pass (batch " + std::to_string(batch.size()) +
                        ", max |velocity| " + std::to_string(worst) + ")");
  }
  return loss;
}

ad::ParamSet init_policy(const PolicyConfig& cfg_in, std::uint64_t seed) {
  PolicyConfig cfg = cfg_in;
  cfg.finalize();
  ad::ParamSet params;
  std::mt19937_64 rng(seed);
  ad::Tape tape;
  ad::Binder binder(tape, params, false, rng);
  const PreparedObservation dummy = dummy_observation(cfg);
  const Feature zero = Feature::zeros(cfg.action_signature(), cfg.horizon());
  rf_loss(binder, cfg, {&dummy}, {make_path_sample(zero, zero, 0.0)});
  return params;
}

VelocityField conditioned_velocity(const PolicyConfig& cfg, const ad::ParamSet& params,
                                   const PreparedObservation& obs) {
  if (cfg.variant == Variant::kMlp) {
    return [cfg, &params, obs](const Feature& x, double t) {
      ad::Tape tape;
      ad::Binder b(tape, params, false);
      return velocity_forward(b, cfg, {&obs}, IrrepVar::constant(tape, x), {t}).value();
    };
  }
  Feature cond;
  {
    ad::Tape tape;
    ad::Binder b(tape, params, false);
    cond = condition_forward(b, cfg, {&obs}).value();
  }
  return [cfg, &params, cond](const Feature& x, double t) {
    return equi_unet_forward(x, t, cond, cfg.unet, params, "unet");
  };
}

ActionChunk decode_policy_output(const Feature& x, const PreparedObservation& obs, const PolicyConfig& cfg) {
  ActionChunk out;
  out.reserve(x.frames());
  for (int t = 0; t < x.frames(); ++t) {
    ProprioState s;
    s.gripper = x.block(0)(0, t);
    s.position = from_degree1(x.coeffs(1, 0, t)) / cfg.position_scale + obs.centroid;
    Eigen::Matrix3d r;
    try {
      r = rotation_from_6d(from_degree1(x.coeffs(1, 1, t)), from_degree1(x.coeffs(1, 2, t)));
    } catch (const ValidationError&) {
      r = obs.rotation;
    }
    s.col1 = r.col(0);
    s.col2 = r.col(1);
    out.push_back(s);
  }
  return out;
}

ActionChunk euler_sample(const PolicyConfig& cfg, const ad::ParamSet& params, const Observation& obs, int steps,
                         std::mt19937_64& rng) {
  const PreparedObservation p = prepare_observation(obs, cfg);
  const Feature x0 = sample_source(cfg.action_signature(), cfg.horizon(), rng);
  return decode_policy_output(euler_integrate(x0, steps, conditioned_velocity(cfg, params, p)), p, cfg);
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in [0, 1)");
  if (sampler_steps < 1) throw ConfigError("sampler_steps must be positive");
  if (log_every < 1) throw ConfigError("log_every must be positive");
  if (probe_size < 1) throw ConfigError("probe_size must be positive");
}

TrainResult train(const std::vector<TrainingSample>& data, const PolicyConfig& cfg_in, const TrainConfig& tc,
                  std::ostream* metrics, std::ostream* timing, const ad::ParamSet* init) {
  tc.validate();
  if (data.empty()) throw ConfigError("training needs a nonempty dataset");
  PolicyConfig cfg = cfg_in;
  cfg.finalize();

  TrainResult r;
  r.params = init ? *init : init_policy(cfg, tc.seed);
  Ema ema{tc.ema_decay, r.params};
  AdamW opt;
  opt.weight_decay = tc.weight_decay;

  const long n = long(data.size());
  const long per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  long total = per_epoch * tc.epochs;
  if (tc.max_steps > 0) total = std::min(total, tc.max_steps);

  std::mt19937_64 rng(derive_seed(tc.seed, kNoiseStream));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const Signature sig = cfg.action_signature();

  // Fixed probe noise: the per-epoch loss is measured on the same
  // (sample, x0, t) triples every epoch.
  const long probe_n = std::max<long>(n, tc.probe_size);
  std::vector<const PreparedObservation*> probe_obs;
  std::vector<FlowPathSample> probe_paths;
  {
    std::mt19937_64 prng(derive_seed(tc.seed, kNoiseStream + 1));
    for (long j = 0; j < probe_n; ++j) {
      const auto& s = data[std::size_t(j % n)];
      const Feature x0 = sample_source(sig, cfg.horizon(), prng);
      probe_obs.push_back(&s.obs);
      probe_paths.push_back(make_path_sample(x0, s.target, uniform(prng)));
    }
  }
  auto probe_loss = [&](const ad::ParamSet& p) {
    double sum = 0.0;
    for (long j = 0; j < probe_n; j += tc.batch_size) {
      const long m = std::min<long>(tc.batch_size, probe_n - j);
      ad::Tape tape;
      ad::Binder b(tape, p, false);
      const Batch batch(probe_obs.begin() + j, probe_obs.begin() + j + m);
      const std::vector<FlowPathSample> paths(probe_paths.begin() + j, probe_paths.begin() + j + m);
      sum += rf_loss(b, cfg, batch, paths).value()(0, 0) * double(m);
    }
    return sum / double(probe_n);
  };

  const auto t_start = std::chrono::steady_clock::now();
  std::vector<long> order(std::size_t(n), 0);
  long step = 0;
  for (int epoch = 0; epoch < tc.epochs && step < total; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    long epoch_steps = 0;
    for (long start = 0; start < n && step < total; start += tc.batch_size, ++step) {
      const long m = std::min<long>(tc.batch_size, n - start);
      Batch batch;
      std::vector<FlowPathSample> paths;
      for (long k = 0; k < m; ++k) {
        const auto& s = data[std::size_t(order[std::size_t(start + k)])];
        const Feature x0 = sample_source(sig, cfg.horizon(), rng);
        batch.push_back(&s.obs);
        paths.push_back(make_path_sample(x0, s.target, uniform(rng)));
      }
      ad::Tape tape;
      ad::Binder b(tape, std::as_const(r.params), true);
      const Var loss = rf_loss(b, cfg, batch, paths);
      const double lv = loss.value()(0, 0);
      if (lv > 1e6) {
        throw TrainingError("training diverged at step " + std::to_string(step) + " (loss " +
                            std::to_string(lv) + ")");
      }
      tape.backward(loss);
      const ad::ParamSet grads = b.gradients();
      const double gnorm = std::sqrt(ad::squared_norm(grads));
      if (!std::isfinite(gnorm)) {
        throw TrainingError("non-finite gradient at step " + std::to_string(step) + " (loss " +
                            std::to_string(lv) + ")");
      }
      const double lr = cosine_lr(tc.lr, step, total, tc.warmup);
      opt.step(r.params, grads, lr);
      ema.update(r.params);
      r.step_loss.push_back(lv);
      epoch_sum += lv;
      ++epoch_steps;
      if (metrics && (step % tc.log_every == 0 || step + 1 == total)) {
        *metrics << Json{{"type", "step"}, {"step", step}, {"epoch", epoch}, {"loss", lv},
                         {"grad_norm", gnorm}, {"lr", lr}}.dump()
                 << '\n';
      }
    }
    const double pl = probe_loss(r.params);
    r.epoch_loss.push_back(pl);
    if (metrics) {
      *metrics << Json{{"type", "epoch"}, {"epoch", epoch}, {"step", step}, {"loss", pl},
                       {"train_loss", epoch_sum / double(std::max<long>(epoch_steps, 1))}}.dump()
               << '\n';
    }
    if (timing) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      *timing << Json{{"epoch", epoch}, {"step", step}, {"wall_time", secs}}.dump() << '\n';
    }
  }
  r.steps = step;
  r.ema = std::move(ema.shadow);
  return r;
}

// ---------------------------------------------------------------------------

std::string policy_config_json(const PolicyConfig& c) {
  Json levels = Json::array();
  for (const auto& s : c.unet.levels) levels.push_back(signature_json(s));
  return Json{{"variant", variant_name(c.variant)},
              {"pcd_shells", c.pcd.shells},
              {"pcd_radius", c.pcd.radius},
              {"pcd_out", signature_json(c.pcd.out)},
              {"img_size", c.img.size},
              {"img_grid", c.img.grid},
              {"img_pool", c.img.pool},
              {"img_dim", c.img.dim},
              {"fusion", c.fusion},
              {"fem_key_dim", c.fem_key_dim},
              {"fem_out", signature_json(c.fem_out)},
              {"horizon", c.unet.horizon},
              {"time_dim", c.unet.time_dim},
              {"levels", levels},
              {"factor", c.unet.factor},
              {"radius", c.unet.radius},
              {"input_skip", c.unet.input_skip},
              {"position_channels", c.unet.position_channels},
              {"stiff_eps", c.unet.stiff_eps},
              {"eps", c.unet.eps},
              {"position_scale", c.position_scale},
              {"mlp_hidden", c.mlp_hidden},
              {"mlp_points", c.mlp_points}}
      .dump();
}

PolicyConfig policy_config_from_json(const std::string& text, bool finalize) {
  PolicyConfig c;
  try {
    const Json j = Json::parse(text);
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.pcd.shells = j.at("pcd_shells").get<int>();
    c.pcd.radius = j.at("pcd_radius").get<double>();
    c.pcd.out = signature_from(j.at("pcd_out"));
    c.img.size = j.at("img_size").get<int>();
    c.img.grid = j.at("img_grid").get<int>();
    c.img.pool = j.at("img_pool").get<int>();
    c.img.dim = j.at("img_dim").get<int>();
    c.fusion = j.at("fusion").get<bool>();
    c.fem_key_dim = j.at("fem_key_dim").get<int>();
    c.fem_out = signature_from(j.at("fem_out"));
    c.unet.horizon = j.at("horizon").get<int>();
    c.unet.time_dim = j.at("time_dim").get<int>();
    c.unet.levels.clear();
    for (const auto& s : j.at("levels")) c.unet.levels.push_back(signature_from(s));
    c.unet.factor = j.at("factor").get<int>();
    c.unet.radius = j.at("radius").get<int>();
    c.unet.input_skip = j.at("input_skip").get<bool>();
    c.unet.position_channels = j.at("position_channels").get<int>();
    c.unet.stiff_eps = j.at("stiff_eps").get<double>();
    c.unet.eps = j.at("eps").get<double>();
    c.position_scale = j.at("position_scale").get<double>();
    c.mlp_hidden = j.at("mlp_hidden").get<int>();
    c.mlp_points = j.at("mlp_points").get<int>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  if (finalize) c.finalize();
  return c;
}

namespace {

constexpr char kCkptMagic[8] = {'S', 'P', 'H', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

void write_string(std::ostream& out, const std::string& s) {
  io::write_u32(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint32_t n = io::read_u32(in);
  if (n > (1u << 24)) throw IoError("checkpoint: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("unexpected end of file");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  out.write(kCkptMagic, sizeof(kCkptMagic));
  io::write_u32(out, kCkptVersion);
  write_string(out, policy_config_json(c.config));
  io::write_u32(out, std::uint32_t(c.params.size() + c.ema.size()));
  auto entry = [&](const std::string& key, const Matrix& m) {
    write_string(out, key);
    io::write_u32(out, std::uint32_t(m.rows()));
    io::write_u32(out, std::uint32_t(m.cols()));
    io::write_f64s(out, m.data(), std::size_t(m.size()));
  };
  for (const auto& [k, m] : c.params) entry(k, m);
  for (const auto& [k, m] : c.ema) entry("ema/" + k, m);
  if (!out) throw IoError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) throw IoError("not a checkpoint file");
  const std::uint32_t version = io::read_u32(in);
  if (version != kCkptVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config = policy_config_from_json(read_string(in));
  const std::uint32_t n = io::read_u32(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string key = read_string(in);
    const std::uint32_t rows = io::read_u32(in), cols = io::read_u32(in);
    if (std::uint64_t(rows) * cols > (1u << 26)) throw IoError("checkpoint: implausible tensor size");
    Matrix m(rows, cols);
    io::read_f64s(in, m.data(), std::size_t(m.size()));
    if (key.rfind("ema/", 0) == 0) {
      c.ema[key.substr(4)] = std::move(m);
    } else {
      c.params[key] = std::move(m);
    }
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_checkpoint(out, c);
  out.close();
  if (!out) throw IoError("failed to write " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

// ---------------------------------------------------------------------------

Policy flow_policy(const PolicyConfig& cfg, const ad::ParamSet& params, int steps, SamplerStats* stats) {
  if (steps < 1) throw ConfigError("sampler steps must be positive");
  return [cfg, &params, steps, stats](const Observation& obs, const World&, std::mt19937_64& rng) {
    const PreparedObservation p = prepare_observation(obs, cfg);
    const Feature x0 = sample_source(cfg.action_signature(), cfg.horizon(), rng);
    const VelocityField v = conditioned_velocity(cfg, params, p);
    const auto t0 = std::chrono::steady_clock::now();
    const Feature x = euler_integrate(x0, steps, v);
    if (stats) {
      stats->seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      ++stats->calls;
    }
    return decode_policy_output(x, p, cfg);
  };
}

}  // namespace sphflow
