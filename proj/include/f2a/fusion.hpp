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

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "f2a/error.hpp"
#include "f2a/forecaster.hpp"
#include "f2a/retrieval.hpp"
#include "f2a/rng.hpp"
#include "f2a/tensor.hpp"

namespace f2a {

// Logits are clamped to this magnitude before the sigmoid so that p stays
// strictly inside (0, 1).
inline constexpr double kLogitClamp = 36.7;

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Learnable fusion weights. W1 scores retrieved timesteps (C x 1), W2 scores
// the two fusion branches (HC x 1), Ws rescales the base forecast (HC x HC)
// and Wap maps the fused forecast to H logits (HC x H).
struct FusionParams {
  Matrix W1;
  Matrix W2;
  Matrix Ws;
  Matrix Wap;

  std::size_t channels() const { return W1.rows(); }
  std::size_t horizon() const { return Wap.cols(); }

  static FusionParams zeros(std::size_t H, std::size_t C) {
    return {Matrix(C, 1), Matrix(H * C, 1), Matrix(H * C, H * C), Matrix(H * C, H)};
  }

  // Ws = I and W1 = W2 = 0 make the untrained fusion a pass-through of the
  // base forecast; Wap ~ U(+-1/sqrt(HC)).
  static FusionParams init(std::size_t H, std::size_t C, Rng& rng) {
    FusionParams p = zeros(H, C);
    p.Ws = Matrix::identity(H * C);
    const double a = 1.0 / std::sqrt(static_cast<double>(H * C));
    for (double& w : p.Wap.flat()) w = rng.uniform(-a, a);
    return p;
  }

  void validate(std::size_t H, std::size_t C) const {
    require_dims(W1, C, 1, "W1");
    require_dims(W2, H * C, 1, "W2");
    require_dims(Ws, H * C, H * C, "Ws");
    require_dims(Wap, H * C, H, "Wap");
  }
};

struct FusionGrads {
  Matrix W1, W2, Ws, Wap;

  static FusionGrads zeros_like(const FusionParams& p) {
    return {Matrix(p.W1.rows(), p.W1.cols()), Matrix(p.W2.rows(), p.W2.cols()),
            Matrix(p.Ws.rows(), p.Ws.cols()), Matrix(p.Wap.rows(), p.Wap.cols())};
  }
};

// ---------------------------------------------------------------------------
// Individual stages.

inline Matrix scale_forecast(const Matrix& xhat, const Matrix& Ws) {
  const std::size_t n = xhat.size();
  require_dims(Ws, n, n, "Ws");
  return Matrix(xhat.rows(), xhat.cols(), vecmat(xhat.flat(), Ws));
}

struct Stage1Result {
  Matrix o_hat;              // (kH) x C, retrieved horizons stacked along time
  std::vector<double> phi;   // kH weights summing to 1
  Matrix h1;                 // H x C
};

// Scores every retrieved timestep with o_hat W1, normalizes jointly over all
// kH rows, weights each row by its score and sums the k horizons.
inline Stage1Result aggregate_stage1(const std::vector<Matrix>& retrieved, const Matrix& W1) {
  if (retrieved.empty()) throw DataError("stage-1 aggregation needs k >= 1 retrieved horizons");
  const std::size_t H = retrieved.front().rows(), C = retrieved.front().cols();
  require_dims(W1, C, 1, "W1");
  const std::size_t k = retrieved.size();

  Stage1Result out;
  out.o_hat = Matrix(k * H, C);
  for (std::size_t q = 0; q < k; ++q) {
    require_dims(retrieved[q], H, C, "retrieved horizon");
    std::copy(retrieved[q].flat().begin(), retrieved[q].flat().end(),
              out.o_hat.flat().begin() + static_cast<std::ptrdiff_t>(q * H * C));
  }
  std::vector<double> logits(k * H);
  for (std::size_t r = 0; r < k * H; ++r) logits[r] = dot(out.o_hat.row(r), W1.flat());
  out.phi = softmax(logits);

  out.h1 = Matrix(H, C);
  for (std::size_t q = 0; q < k; ++q) {
    for (std::size_t t = 0; t < H; ++t) {
      const std::size_t r = q * H + t;
      for (std::size_t c = 0; c < C; ++c) out.h1(t, c) += out.phi[r] * out.o_hat(r, c);
    }
  }
  return out;
}

struct Stage2Result {
  double phi1 = 0.5;
  double phi2 = 0.5;
  Matrix h2;
};

// Convex combination of the scaled forecast and the retrieval summary, with
// weights softmax(xs W2, h1 W2).
inline Stage2Result fuse_stage2(const Matrix& xs, const Matrix& h1, const Matrix& W2) {
  if (!xs.same_shape(h1)) {
    throw ShapeError("fusion inputs differ in shape: " + shape_str(xs) + " vs " + shape_str(h1));
  }
  require_dims(W2, xs.size(), 1, "W2");
  const double a = dot(xs.flat(), W2.flat());
  const double b = dot(h1.flat(), W2.flat());
  Stage2Result out;
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  out.phi1 = ea / (ea + eb);
  out.phi2 = eb / (ea + eb);
  out.h2 = Matrix(xs.rows(), xs.cols());
  for (std::size_t i = 0; i < xs.size(); ++i) out.h2[i] = out.phi1 * xs[i] + out.phi2 * h1[i];
  return out;
}

struct HeadResult {
  std::vector<double> logits;  // before clamping
  std::vector<double> p;
};

inline HeadResult anomaly_head(const Matrix& xf, const Matrix& Wap) {
  require_dims(Wap, xf.size(), Wap.cols(), "Wap");
  HeadResult out;
  out.logits = vecmat(xf.flat(), Wap);
  out.p.resize(out.logits.size());
  for (std::size_t j = 0; j < out.p.size(); ++j) {
    out.p[j] = sigmoid(std::clamp(out.logits[j], -kLogitClamp, kLogitClamp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full forward pass.

struct RetrievalTrace {
  RetrievedSet retrieved;
  Matrix o_hat;
  std::vector<double> phi;
  Matrix h1;
  double phi1 = 0.5;
  double phi2 = 0.5;
  Matrix h2;
};

struct ForwardTrace {
  Embedding embedding;
  Matrix xhat;   // base forecast
  Matrix xs;     // scaled forecast
  std::optional<RetrievalTrace> rag;  // absent when k = 0
  Matrix xf;     // fused forecast
  std::vector<double> logits;
  std::vector<double> p;

  std::size_t k() const { return rag ? rag->retrieved.k() : 0; }
};

// Runs decode -> scale -> (aggregate, fuse) -> head from a precomputed
// embedding and retrieval result. An empty retrieval set is the k = 0 bypass.
inline ForwardTrace f2a_forward_from(Embedding embedding, RetrievedSet retrieved,
                                     const ForecasterParams& forecaster, const FusionParams& fusion) {
  ForwardTrace tr;
  tr.embedding = std::move(embedding);
  tr.xhat = decode(tr.embedding, forecaster);
  tr.xs = scale_forecast(tr.xhat, fusion.Ws);
  if (retrieved.k() == 0) {
    tr.xf = tr.xs;
  } else {
    RetrievalTrace rag;
    auto s1 = aggregate_stage1(retrieved.horizons, fusion.W1);
    auto s2 = fuse_stage2(tr.xs, s1.h1, fusion.W2);
    rag.retrieved = std::move(retrieved);
    rag.o_hat = std::move(s1.o_hat);
    rag.phi = std::move(s1.phi);
    rag.h1 = std::move(s1.h1);
    rag.phi1 = s2.phi1;
    rag.phi2 = s2.phi2;
    rag.h2 = s2.h2;
    tr.xf = std::move(s2.h2);
    tr.rag = std::move(rag);
  }
  auto head = anomaly_head(tr.xf, fusion.Wap);
  tr.logits = std::move(head.logits);
  tr.p = std::move(head.p);
  return tr;
}

// encode -> query (same embedding) -> f2a_forward_from. With k = 0 the store
// is never touched and may be null.
inline ForwardTrace f2a_forward(const Matrix& x, const ForecasterParams& forecaster,
                                const RetrievalStore* store, std::size_t k,
                                const FusionParams& fusion, const WindowOrigin* exclude = nullptr) {
  Embedding emb = encode(x, forecaster);
  RetrievedSet retrieved;
  if (k > 0) {
    if (store == nullptr) throw DataError("k=" + std::to_string(k) + " requires a retrieval store");
    retrieved = query(*store, emb.flat, k, exclude);
  }
  return f2a_forward_from(std::move(emb), std::move(retrieved), forecaster, fusion);
}

// ---------------------------------------------------------------------------
// Backward pass.

// Upstream gradients of the loss: w.r.t. p (H), the fused forecast xf (H x C)
// and, optionally, the base forecast xhat directly (H x C, may be empty).
struct UpstreamGrads {
  std::vector<double> d_p;
  Matrix d_xf;
  Matrix d_xhat;
};

struct ModelGrads {
  FusionGrads fusion;
  ForecasterGrads forecaster;
};

// Accumulates gradients into `out` (decoder + fusion weights; the encoder is
// frozen and receives none).
inline void f2a_backward(const ForwardTrace& tr, const UpstreamGrads& up,
                         const ForecasterParams& forecaster, const FusionParams& fusion,
                         ModelGrads& out) {
  const std::size_t H = tr.xhat.rows(), C = tr.xhat.cols(), HC = H * C;
  if (tr.p.size() != H || tr.xs.size() != HC || tr.xf.size() != HC) {
    throw DataError("forward trace is missing intermediates");
  }
  if (up.d_p.size() != H) throw ShapeError("upstream d_p has wrong length");
  require_dims(up.d_xf, H, C, "upstream d_xf");

  // Head: logits = xf Wap, p = sigmoid(clamp(logits)).
  std::vector<double> d_logit(H);
  for (std::size_t j = 0; j < H; ++j) {
    const bool clamped = std::abs(tr.logits[j]) >= kLogitClamp;
    d_logit[j] = clamped ? 0.0 : up.d_p[j] * tr.p[j] * (1.0 - tr.p[j]);
  }
  Matrix d_xf = up.d_xf;
  for (std::size_t i = 0; i < HC; ++i) {
    const auto wrow = fusion.Wap.row(i);
    auto grow = out.fusion.Wap.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < H; ++j) {
      grow[j] += tr.xf[i] * d_logit[j];
      acc += wrow[j] * d_logit[j];
    }
    d_xf[i] += acc;
  }

  Matrix d_xs(H, C);
  if (!tr.rag) {
    d_xs = d_xf;
  } else {
    const auto& rag = *tr.rag;
    // h2 = phi1 xs + phi2 h1
    Matrix d_h1(H, C);
    double d_phi1 = 0.0, d_phi2 = 0.0;
    for (std::size_t i = 0; i < HC; ++i) {
      d_xs[i] = rag.phi1 * d_xf[i];
      d_h1[i] = rag.phi2 * d_xf[i];
      d_phi1 += d_xf[i] * tr.xs[i];
      d_phi2 += d_xf[i] * rag.h1[i];
    }
    const double s = rag.phi1 * d_phi1 + rag.phi2 * d_phi2;
    const double d_a = rag.phi1 * (d_phi1 - s);
    const double d_b = rag.phi2 * (d_phi2 - s);
    for (std::size_t i = 0; i < HC; ++i) {
      out.fusion.W2[i] += d_a * tr.xs[i] + d_b * rag.h1[i];
      d_xs[i] += d_a * fusion.W2[i];
      d_h1[i] += d_b * fusion.W2[i];
    }
    // h1[t] = sum_q phi[qH+t] o_hat[qH+t]; phi = softmax(o_hat W1).
    const std::size_t rows = rag.o_hat.rows();
    std::vector<double> d_phi(rows);
    double sum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      d_phi[r] = dot(d_h1.row(r % H), rag.o_hat.row(r));
      sum += rag.phi[r] * d_phi[r];
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const double d_logit1 = rag.phi[r] * (d_phi[r] - sum);
      for (std::size_t c = 0; c < C; ++c) out.fusion.W1[c] += d_logit1 * rag.o_hat(r, c);
    }
  }

  // xs = xhat Ws
  Matrix d_xhat = up.d_xhat.empty() ? Matrix(H, C) : up.d_xhat;
  require_dims(d_xhat, H, C, "upstream d_xhat");
  for (std::size_t i = 0; i < HC; ++i) {
    const double xi = tr.xhat[i];
    auto grow = out.fusion.Ws.row(i);
    const auto wrow = fusion.Ws.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < HC; ++j) {
      grow[j] += xi * d_xs[j];
      acc += wrow[j] * d_xs[j];
    }
    d_xhat[i] += acc;
  }

  decode_backward(tr.embedding, forecaster, d_xhat, out.forecaster);
}

}  // namespace f2a
