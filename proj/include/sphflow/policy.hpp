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

// Flow policies: observation conditioning, the velocity network (equivariant
// U-Net or a dense baseline), training, sampling and checkpoints.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sphflow/dataset.hpp"
#include "sphflow/rectified_flow.hpp"
#include "sphflow/toybench.hpp"

namespace sphflow {

enum class Variant { kEquivariant, kMlp };

std::string variant_name(Variant v);
/// Accepts "equivariant" and "mlp-baseline" (or "mlp").
Variant parse_variant(const std::string& name);

struct PolicyConfig {
  Variant variant = Variant::kEquivariant;
  PointEncoderConfig pcd;
  ImageEncoderConfig img;
  bool fusion = true;
  int fem_key_dim = 8;
  Signature fem_out{16, 8, 4};
  UNetConfig unet;
  /// Positions relative to the cloud centroid are multiplied by this.
  double position_scale = 5.0;
  int mlp_hidden = 256;
  /// Points per cloud for the dense baseline's flattened input.
  int mlp_points = 0;

  int horizon() const { return unet.horizon; }
  Signature action_signature() const { return proprio_signature(); }
  /// Signature of the conditioning feature fed to the U-Net.
  Signature condition_signature() const { return fem_out + proprio_signature(); }
  /// Fills derived fields and checks consistency; throws ConfigError.
  void finalize();
};

/// Parameter-free observation preprocessing, done once per sample.
struct PreparedObservation {
  Feature raw_cloud;                 // point_cloud_features, one frame
  ad::Matrix patches;                // image_patch_features
  Feature proprio;                   // embed_proprio relative to the centroid
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // current gripper rotation
  Eigen::VectorXd flat_cloud;        // scaled centered points (baseline input)
};

PreparedObservation prepare_observation(const Observation& obs, const PolicyConfig& cfg);

struct TrainingSample {
  PreparedObservation obs;
  Feature target;  // embedded action chunk
};

std::vector<TrainingSample> prepare_dataset(const Dataset& d, const PolicyConfig& cfg);

/// Conditioning feature for a batch (frames = batch size). Equivariant
/// variant only.
IrrepVar condition_forward(ad::Binder& b, const PolicyConfig& cfg,
                           const std::vector<const PreparedObservation*>& batch);

/// Velocity for a batch: x_t has batch * horizon frames and `t` one flow
/// time per sample.
IrrepVar velocity_forward(ad::Binder& b, const PolicyConfig& cfg,
                          const std::vector<const PreparedObservation*>& batch, const IrrepVar& x_t,
                          const std::vector<double>& t);

/// Mean squared velocity error of a batch of path samples.
ad::Var rf_loss(ad::Binder& b, const PolicyConfig& cfg,
                const std::vector<const PreparedObservation*>& batch,
                const std::vector<FlowPathSample>& paths);

/// Creates every parameter of the configured model.
ad::ParamSet init_policy(const PolicyConfig& cfg, std::uint64_t seed);

/// Velocity field for one observation; `params` must outlive the result.
VelocityField conditioned_velocity(const PolicyConfig& cfg, const ad::ParamSet& params,
                                   const PreparedObservation& obs);

/// Decodes a sampled chunk; frames with degenerate rotation columns keep the
/// current gripper rotation.
ActionChunk decode_policy_output(const Feature& x, const PreparedObservation& obs,
                                 const PolicyConfig& cfg);

/// Samples the source, integrates `steps` Euler steps and decodes.
ActionChunk euler_sample(const PolicyConfig& cfg, const ad::ParamSet& params,
                         const Observation& obs, int steps, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 64;
  int epochs = 100;
  /// Upper bound on optimizer steps (0: no bound).
  long max_steps = 0;
  double ema_decay = 0.95;
  double weight_decay = 1e-6;
  long warmup = 0;
  int sampler_steps = 10;
  std::uint64_t seed = 0;
  /// Write a step record every `log_every` steps (epoch records always).
  int log_every = 10;
  /// Path samples in the fixed probe set that measures the epoch loss
  /// (at least one per training sample).
  int probe_size = 64;

  void validate() const;
};

struct TrainResult {
  ad::ParamSet params;
  ad::ParamSet ema;
  std::vector<double> epoch_loss;
  std::vector<double> step_loss;
  long steps = 0;
};

/// Minibatch rectified-flow training. Metric records (JSON lines) go to
/// `metrics`; wall-clock records go to `timing` so that `metrics` stays
/// deterministic. Either stream may be null. Throws TrainingError on a
/// non-finite or diverging loss.
TrainResult train(const std::vector<TrainingSample>& data, const PolicyConfig& cfg,
                  const TrainConfig& tc, std::ostream* metrics = nullptr,
                  std::ostream* timing = nullptr, const ad::ParamSet* init = nullptr);

// ---------------------------------------------------------------------------
// Checkpoints.
//
// Little-endian layout: "SPHFCKPT", u32 version, u32 config length, config
// JSON bytes, u32 entry count, then per entry u32 key length, key bytes,
// u32 rows, u32 cols, f64[rows*cols] column-major. EMA entries carry the
// prefix "ema/".

struct Checkpoint {
  PolicyConfig config;
  ad::ParamSet params;
  ad::ParamSet ema;
};

std::string policy_config_json(const PolicyConfig& cfg);
/// Finalizes the result unless `finalize` is false.
PolicyConfig policy_config_from_json(const std::string& text, bool finalize = true);

void write_checkpoint(std::ostream& out, const Checkpoint& c);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Closed-loop use.

struct SamplerStats {
  long calls = 0;
  double seconds = 0.0;
};

/// Learned policy for toybench::evaluate. When `stats` is set, the time spent
/// integrating the flow (not encoding observations) is accumulated there.
Policy flow_policy(const PolicyConfig& cfg, const ad::ParamSet& params, int steps,
                   SamplerStats* stats = nullptr);

}  // namespace sphflow
