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

#include "sphflow/dataset.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "sphflow/binary_io.hpp"

namespace sphflow {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'H', 'F', 'D', 'E', 'M', 'O'};
constexpr std::uint32_t kMaxCount = 1u << 26;

void write_state(std::ostream& out, const ProprioState& s) {
  io::write_f64s(out, s.position.data(), 3);
  io::write_f64s(out, s.col1.data(), 3);
  io::write_f64s(out, s.col2.data(), 3);
  io::write_f64(out, s.gripper);
}

ProprioState read_state(std::istream& in) {
  ProprioState s;
  io::read_f64s(in, s.position.data(), 3);
  io::read_f64s(in, s.col1.data(), 3);
  io::read_f64s(in, s.col2.data(), 3);
  s.gripper = io::read_f64(in);
  return s;
}

void write_rows(std::ostream& out, const Eigen::MatrixX3d& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (int c = 0; c < 3; ++c) io::write_f64(out, m(i, c));
}

Eigen::MatrixX3d read_rows(std::istream& in, std::uint32_t n) {
  Eigen::MatrixX3d m(n, 3);
  for (std::uint32_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) m(i, c) = io::read_f64(in);
  return m;
}

std::uint32_t read_count(std::istream& in, const char* what) {
  const std::uint32_t n = io::read_u32(in);
  if (n > kMaxCount) throw IoError(std::string("dataset: implausible ") + what + " count");
  return n;
}

ProprioState transform_state(const ProprioState& s, const Eigen::Matrix3d& r, const Eigen::Vector3d& shift) {
  ProprioState out = s;
  out.position = r * s.position + shift;
  out.col1 = r * s.col1;
  out.col2 = r * s.col2;
  return out;
}

}  // namespace

Observation transform_observation(const Observation& obs, const Eigen::Matrix3d& rotation,
                                  const Eigen::Vector3d& shift) {
  Observation out = obs;
  out.cloud.points = (obs.cloud.points * rotation.transpose()).rowwise() + shift.transpose();
  out.proprio = transform_state(obs.proprio, rotation, shift);
  return out;
}

ActionChunk transform_chunk(const ActionChunk& chunk, const Eigen::Matrix3d& rotation,
                            const Eigen::Vector3d& shift) {
  ActionChunk out;
  out.reserve(chunk.size());
  for (const auto& s : chunk) out.push_back(transform_state(s, rotation, shift));
  return out;
}

std::size_t Dataset::step_count() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.steps.size();
  return n;
}

void write_dataset(std::ostream& out, const Dataset& d) {
  out.write(kMagic, sizeof(kMagic));
  io::write_u32(out, kDatasetVersion);
  io::write_u32(out, std::uint32_t(d.episodes.size()));
  for (const auto& e : d.episodes) {
    io::write_u32(out, e.task);
    io::write_u64(out, e.seed);
    io::write_u8(out, e.success ? 1 : 0);
    io::write_u32(out, std::uint32_t(e.steps.size()));
    for (const auto& s : e.steps) {
      const auto& pc = s.obs.cloud;
      io::write_u32(out, std::uint32_t(pc.size()));
      write_rows(out, pc.points);
      write_rows(out, pc.colors);
      io::write_u32(out, std::uint32_t(s.obs.image.height));
      io::write_u32(out, std::uint32_t(s.obs.image.width));
      io::write_f64s(out, s.obs.image.rgb.data(), s.obs.image.rgb.size());
      write_state(out, s.obs.proprio);
      io::write_u32(out, std::uint32_t(s.action.size()));
      for (const auto& a : s.action) write_state(out, a);
    }
  }
  if (!out) throw IoError("dataset: write failed");
}

Dataset read_dataset(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError("dataset: bad magic, not a demonstration file");
  }
  const std::uint32_t version = io::read_u32(in);
  if (version != kDatasetVersion) {
    throw IoError("dataset: unsupported version " + std::to_string(version));
  }
  Dataset d;
  d.episodes.resize(read_count(in, "episode"));
  for (auto& e : d.episodes) {
    e.task = io::read_u32(in);
    e.seed = io::read_u64(in);
    e.success = io::read_u8(in) != 0;
    e.steps.resize(read_count(in, "step"));
    for (auto& s : e.steps) {
      const std::uint32_t n = read_count(in, "point");
      s.obs.cloud.points = read_rows(in, n);
      s.obs.cloud.colors = read_rows(in, n);
      const std::uint32_t h = read_count(in, "row"), w = read_count(in, "column");
      s.obs.image = Image(int(h), int(w));
      io::read_f64s(in, s.obs.image.rgb.data(), s.obs.image.rgb.size());
      s.obs.proprio = read_state(in);
      s.action.resize(read_count(in, "action"));
      for (auto& a : s.action) a = read_state(in);
    }
  }
  return d;
}

void save_dataset(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_dataset(out, d);
  out.close();
  if (!out) throw IoError("failed to write " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path);
  return read_dataset(in);
}

}  // namespace sphflow
