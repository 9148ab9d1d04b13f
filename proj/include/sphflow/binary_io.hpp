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

// Little-endian primitive readers/writers for the on-disk formats.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "sphflow/errors.hpp"

namespace sphflow::io {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

template <typename T>
void write_raw(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("unexpected end of file");
  return v;
}

inline void write_u8(std::ostream& out, std::uint8_t v) { write_raw(out, v); }
inline void write_u32(std::ostream& out, std::uint32_t v) { write_raw(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_raw(out, v); }
inline void write_f64(std::ostream& out, double v) { write_raw(out, v); }
inline void write_f64s(std::ostream& out, const double* v, std::size_t n) {
  out.write(reinterpret_cast<const char*>(v), std::streamsize(n * sizeof(double)));
}

inline std::uint8_t read_u8(std::istream& in) { return read_raw<std::uint8_t>(in); }
inline std::uint32_t read_u32(std::istream& in) { return read_raw<std::uint32_t>(in); }
inline std::uint64_t read_u64(std::istream& in) { return read_raw<std::uint64_t>(in); }
inline double read_f64(std::istream& in) { return read_raw<double>(in); }
inline void read_f64s(std::istream& in, double* v, std::size_t n) {
  in.read(reinterpret_cast<char*>(v), std::streamsize(n * sizeof(double)));
  if (!in) throw IoError("unexpected end of file");
}

}  // namespace sphflow::io
