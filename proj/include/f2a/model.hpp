/*
 * Copyright 2026 The F2A Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "f2a/binary_io.hpp"
#include "f2a/error.hpp"
#include "f2a/forecaster.hpp"
#include "f2a/fusion.hpp"

namespace f2a {

struct ModelDims {
  std::uint32_t L = 0;
  std::uint32_t C = 0;
  std::uint32_t D = 0;
  std::uint32_t H = 0;
  std::uint32_t k = 0;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

inline std::string to_string(const ModelDims& d) {
  return "(L=" + std::to_string(d.L) + ", C=" + std::to_string(d.C) + ", D=" + std::to_string(d.D) +
         ", H=" + std::to_string(d.H) + ", k=" + std::to_string(d.k) + ")";
}

struct Model {
  ModelDims dims;
  ForecasterParams forecaster;
  FusionParams fusion;

  void validate() const {
    forecaster.validate();
    require_dims(forecaster.W_enc, dims.L, dims.D, "W_enc");
    require_dims(forecaster.W_dec, dims.D, dims.H, "W_dec");
    fusion.validate(dims.H, dims.C);
  }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "F2AM", version, (L, C, D, H, k), then W_enc, b_enc, W_dec, b_dec,
// Ws, W1, W2, Wap as float64, then CRC32 of everything before it.
inline std::vector<char> serialize_checkpoint(const Model& m) {
  m.validate();
  io::ByteWriter w;
  w.raw("F2AM");
  w.u32(kCheckpointVersion);
  w.u32(m.dims.L);
  w.u32(m.dims.C);
  w.u32(m.dims.D);
  w.u32(m.dims.H);
  w.u32(m.dims.k);
  w.f64s(m.forecaster.W_enc.flat());
  w.f64s(m.forecaster.b_enc);
  w.f64s(m.forecaster.W_dec.flat());
  w.f64s(m.forecaster.b_dec);
  w.f64s(m.fusion.Ws.flat());
  w.f64s(m.fusion.W1.flat());
  w.f64s(m.fusion.W2.flat());
  w.f64s(m.fusion.Wap.flat());
  const std::uint32_t crc = io::crc32(w.bytes());
  w.u32(crc);
  return w.bytes();
}

inline void save_checkpoint(const Model& m, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_checkpoint(m));
}

inline Model parse_checkpoint(std::span<const char> bytes, const std::string& what,
                              const ModelDims* expected = nullptr) {
  io::ByteReader r(bytes, what);
  io::expect_magic(r, "F2AM", kCheckpointVersion);
  Model m;
  m.dims.L = r.u32();
  m.dims.C = r.u32();
  m.dims.D = r.u32();
  m.dims.H = r.u32();
  m.dims.k = r.u32();
  if (expected && !(m.dims == *expected)) {
    throw FormatError(what + ": checkpoint dims " + to_string(m.dims) +
                      " do not match configured " + to_string(*expected));
  }
  const auto& d = m.dims;
  if (d.L == 0 || d.C == 0 || d.D == 0 || d.H == 0) {
    throw FormatError(what + ": checkpoint has a zero dimension " + to_string(d));
  }
  const std::uint64_t HC = std::uint64_t{d.H} * d.C;
  const std::uint64_t n_floats = std::uint64_t{d.L} * d.D + d.D + std::uint64_t{d.D} * d.H + d.H +
                                 HC * HC + d.C + HC + HC * d.H;
  if (r.remaining() != n_floats * 8 + 4) {
    throw FormatError(what + ": checkpoint body is " + std::to_string(r.remaining()) +
                      " bytes, expected " + std::to_string(n_floats * 8 + 4) + " for dims " +
                      to_string(d));
  }
  m.forecaster = ForecasterParams::zeros(d.L, d.D, d.H);
  m.fusion = FusionParams::zeros(d.H, d.C);
  r.f64s(m.forecaster.W_enc.flat());
  r.f64s(m.forecaster.b_enc);
  r.f64s(m.forecaster.W_dec.flat());
  r.f64s(m.forecaster.b_dec);
  r.f64s(m.fusion.Ws.flat());
  r.f64s(m.fusion.W1.flat());
  r.f64s(m.fusion.W2.flat());
  r.f64s(m.fusion.Wap.flat());
  const std::size_t body = r.position();
  const std::uint32_t stored = r.u32();
  const std::uint32_t actual = io::crc32(bytes.first(body));
  if (stored != actual) {
    throw FormatError(what + ": checkpoint CRC32 mismatch (stored " + std::to_string(stored) +
                      ", computed " + std::to_string(actual) + ")");
  }
  return m;
}

inline Model load_checkpoint(const std::filesystem::path& path, const ModelDims* expected = nullptr) {
  const auto bytes = io::read_file(path);
  return parse_checkpoint(bytes, path.string(), expected);
}

// CRC32 over the encoder weights, used to check the freeze contract.
inline std::uint32_t encoder_checksum(const ForecasterParams& p) {
  io::ByteWriter w;
  w.f64s(p.W_enc.flat());
  w.f64s(p.b_enc);
  return io::crc32(w.bytes());
}

}  // namespace f2a
