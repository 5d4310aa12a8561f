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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "f2a/binary_io.hpp"
#include "f2a/dataset.hpp"
#include "f2a/error.hpp"
#include "f2a/rng.hpp"
#include "f2a/tensor.hpp"

namespace f2a {

// Built-in base forecaster: a per-channel encoder x_c -> tanh(x_c W_enc + b)
// in R^D and a per-channel affine decoder R^D -> R^H. Both maps are shared
// across channels.
struct ForecasterParams {
  Matrix W_enc;                // L x D
  std::vector<double> b_enc;   // D
  Matrix W_dec;                // D x H
  std::vector<double> b_dec;   // H
  bool encoder_frozen = false;

  std::size_t context() const { return W_enc.rows(); }
  std::size_t embed_dim() const { return W_enc.cols(); }
  std::size_t horizon() const { return W_dec.cols(); }

  static ForecasterParams zeros(std::size_t L, std::size_t D, std::size_t H) {
    ForecasterParams p;
    p.W_enc = Matrix(L, D);
    p.b_enc.assign(D, 0.0);
    p.W_dec = Matrix(D, H);
    p.b_dec.assign(H, 0.0);
    return p;
  }

  // Uniform(+-1/sqrt(fan_in)) weights, zero biases.
  static ForecasterParams init(std::size_t L, std::size_t D, std::size_t H, Rng& rng) {
    ForecasterParams p = zeros(L, D, H);
    const double ae = 1.0 / std::sqrt(static_cast<double>(L));
    for (double& w : p.W_enc.flat()) w = rng.uniform(-ae, ae);
    const double ad = 1.0 / std::sqrt(static_cast<double>(D));
    for (double& w : p.W_dec.flat()) w = rng.uniform(-ad, ad);
    return p;
  }

  void validate() const {
    const std::size_t L = context(), D = embed_dim(), H = horizon();
    if (L == 0 || D == 0 || H == 0) throw ShapeError("forecaster dimensions must be positive");
    require_dims(W_dec, D, H, "W_dec");
    if (b_enc.size() != D) throw ShapeError("b_enc has length " + std::to_string(b_enc.size()) + ", expected " + std::to_string(D));
    if (b_dec.size() != H) throw ShapeError("b_dec has length " + std::to_string(b_dec.size()) + ", expected " + std::to_string(H));
  }
};

struct Embedding {
  Matrix e;                  // C x D
  std::vector<double> flat;  // row-major flattening of e, length C*D

  static Embedding from_matrix(Matrix m) {
    Embedding out;
    out.flat = m.values();
    out.e = std::move(m);
    return out;
  }
};

inline Embedding encode(const Matrix& x, const ForecasterParams& params) {
  const std::size_t L = params.context(), D = params.embed_dim();
  if (x.rows() != L) {
    throw ShapeError("encoder input has " + std::to_string(x.rows()) + " timesteps, expected L=" +
                     std::to_string(L));
  }
  const std::size_t C = x.cols();
  Matrix e(C, D);
  for (std::size_t c = 0; c < C; ++c) {
    auto row = e.row(c);
    for (std::size_t d = 0; d < D; ++d) row[d] = params.b_enc[d];
    for (std::size_t l = 0; l < L; ++l) {
      const double v = x(l, c);
      if (v == 0.0) continue;
      const auto w = params.W_enc.row(l);
      for (std::size_t d = 0; d < D; ++d) row[d] += v * w[d];
    }
    for (std::size_t d = 0; d < D; ++d) row[d] = std::tanh(row[d]);
  }
  return Embedding::from_matrix(std::move(e));
}

// Forecast H x C: column c is e_c W_dec + b_dec.
inline Matrix decode(const Embedding& emb, const ForecasterParams& params) {
  const std::size_t D = params.embed_dim(), H = params.horizon();
  if (emb.e.cols() != D) {
    throw ShapeError("embedding has width " + std::to_string(emb.e.cols()) + ", expected D=" +
                     std::to_string(D));
  }
  const std::size_t C = emb.e.rows();
  Matrix out(H, C);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < H; ++t) {
      double s = params.b_dec[t];
      for (std::size_t d = 0; d < D; ++d) s += emb.e(c, d) * params.W_dec(d, t);
      out(t, c) = s;
    }
  }
  return out;
}

// Gradients of the forecaster parameters; W_enc/b_enc stay zero-sized unless
// the encoder path was differentiated.
struct ForecasterGrads {
  Matrix W_enc;
  std::vector<double> b_enc;
  Matrix W_dec;
  std::vector<double> b_dec;

  static ForecasterGrads zeros_like(const ForecasterParams& p, bool with_encoder) {
    ForecasterGrads g;
    if (with_encoder) {
      g.W_enc = Matrix(p.W_enc.rows(), p.W_enc.cols());
      g.b_enc.assign(p.b_enc.size(), 0.0);
    }
    g.W_dec = Matrix(p.W_dec.rows(), p.W_dec.cols());
    g.b_dec.assign(p.b_dec.size(), 0.0);
    return g;
  }
};

// Accumulates decoder gradients for upstream dL/dforecast (H x C) and
// returns dL/de (C x D).
inline Matrix decode_backward(const Embedding& emb, const ForecasterParams& params,
                              const Matrix& d_forecast, ForecasterGrads& grads) {
  const std::size_t D = params.embed_dim(), H = params.horizon(), C = emb.e.rows();
  Matrix d_e(C, D);
  for (std::size_t t = 0; t < H; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      const double g = d_forecast(t, c);
      if (g == 0.0) continue;
      grads.b_dec[t] += g;
      for (std::size_t d = 0; d < D; ++d) {
        grads.W_dec(d, t) += emb.e(c, d) * g;
        d_e(c, d) += params.W_dec(d, t) * g;
      }
    }
  }
  return d_e;
}

inline void encode_backward(const Matrix& x, const Embedding& emb, const Matrix& d_e,
                            ForecasterGrads& grads) {
  const std::size_t C = emb.e.rows(), D = emb.e.cols(), L = x.rows();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t d = 0; d < D; ++d) {
      const double e = emb.e(c, d);
      const double dpre = d_e(c, d) * (1.0 - e * e);
      if (dpre == 0.0) continue;
      grads.b_enc[d] += dpre;
      for (std::size_t l = 0; l < L; ++l) grads.W_enc(l, d) += x(l, c) * dpre;
    }
  }
}

// ---------------------------------------------------------------------------
// Embedding/forecast interchange file ("F2AE").

inline constexpr char kInterchangeMagic[] = "F2AE";
inline constexpr std::uint32_t kInterchangeVersion = 1;

struct ExternalWindow {
  WindowOrigin origin;
  Embedding embedding;  // C x D
  Matrix forecast;      // H x C
};

struct InterchangeDims {
  std::uint32_t C = 0;
  std::uint32_t D = 0;
  std::uint32_t H = 0;
};

inline void save_external(const std::filesystem::path& path, InterchangeDims dims,
                          const std::vector<ExternalWindow>& windows) {
  io::ByteWriter w;
  w.raw(kInterchangeMagic);
  w.u32(kInterchangeVersion);
  w.u32(dims.C);
  w.u32(dims.D);
  w.u32(dims.H);
  w.u32(static_cast<std::uint32_t>(windows.size()));
  for (const auto& win : windows) {
    require_dims(win.embedding.e, dims.C, dims.D, "interchange embedding");
    require_dims(win.forecast, dims.H, dims.C, "interchange forecast");
    w.str16(win.origin.series);
    w.u64(win.origin.start);
    w.f64s(win.embedding.flat);
    w.f64s(win.forecast.flat());
  }
  io::write_file_atomic(path, w.bytes());
}

inline std::map<WindowOrigin, ExternalWindow> load_external(const std::filesystem::path& path,
                                                            InterchangeDims expected) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  io::expect_magic(r, "F2AE", kInterchangeVersion);
  const std::uint32_t C = r.u32(), D = r.u32(), H = r.u32();
  auto check = [&](const char* name, std::uint32_t got, std::uint32_t want) {
    if (got != want) {
      throw FormatError(path.string() + ": dimension " + name + " is " + std::to_string(got) +
                        " in file but " + std::to_string(want) + " is configured");
    }
  };
  check("C", C, expected.C);
  check("D", D, expected.D);
  check("H", H, expected.H);
  const std::uint32_t count = r.u32();

  std::map<WindowOrigin, ExternalWindow> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    ExternalWindow win;
    win.origin.series = r.str16();
    win.origin.start = r.u64();
    Matrix e(C, D);
    r.f64s(e.flat());
    win.embedding = Embedding::from_matrix(std::move(e));
    win.forecast = Matrix(H, C);
    r.f64s(win.forecast.flat());
    const auto key = win.origin;
    if (!out.emplace(key, std::move(win)).second) {
      throw FormatError(path.string() + ": duplicate window (" + key.series + ", " +
                        std::to_string(key.start) + ")");
    }
  }
  if (!r.at_end()) {
    throw FormatError(path.string() + ": " + std::to_string(r.remaining()) +
                      " trailing bytes after " + std::to_string(count) + " records");
  }
  return out;
}

}  // namespace f2a
