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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "f2a/error.hpp"
#include "f2a/fusion.hpp"
#include "f2a/tensor.hpp"

namespace f2a {

enum class ForecastTarget { kFused, kBase };

struct LossConfig {
  double lambda = 1.0;  // forecast-loss weight
  double psi = 3.0;     // upweight of forecast error at anomalous steps
  double alpha = 0.25;  // focal balance
  double gamma = 2.0;   // focal exponent
  double threshold = 0.5;
  double eps_p = 1e-7;
  ForecastTarget target = ForecastTarget::kFused;

  void validate() const {
    auto fail = [](const char* key, const char* expected) {
      throw ConfigError(std::string("loss.") + key + ": expected " + expected);
    };
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda", "a non-negative finite value");
    if (!(psi >= 1.0) || !std::isfinite(psi)) fail("psi", "a finite value >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha", "a value in (0, 1)");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) fail("gamma", "a non-negative finite value");
    if (!(threshold > 0.0 && threshold < 1.0)) fail("threshold", "a value in (0, 1)");
    if (!(eps_p > 0.0 && eps_p < 0.5)) fail("eps_p", "a value in (0, 0.5)");
  }
};

namespace detail {

inline void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " +
                     std::to_string(b));
  }
}

}  // namespace detail

// Sum over timesteps of the alpha-balanced focal loss.
inline double focal_loss(std::span<const double> p, std::span<const std::uint8_t> y,
                         const LossConfig& cfg) {
  detail::require_same_length(p.size(), y.size(), "focal_loss");
  double total = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    const double pt = std::clamp(p[t], cfg.eps_p, 1.0 - cfg.eps_p);
    if (y[t]) {
      total += -cfg.alpha * std::pow(1.0 - pt, cfg.gamma) * std::log(pt);
    } else {
      total += -(1.0 - cfg.alpha) * std::pow(pt, cfg.gamma) * std::log(1.0 - pt);
    }
  }
  return total;
}

inline std::vector<double> focal_loss_grad(std::span<const double> p,
                                           std::span<const std::uint8_t> y, const LossConfig& cfg) {
  detail::require_same_length(p.size(), y.size(), "focal_loss");
  std::vector<double> g(p.size(), 0.0);
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (p[t] < cfg.eps_p || p[t] > 1.0 - cfg.eps_p) continue;  // clamped: flat
    const double pt = p[t];
    if (y[t]) {
      const double q = 1.0 - pt;
      double d = std::pow(q, cfg.gamma) / pt;
      if (cfg.gamma != 0.0) d -= cfg.gamma * std::pow(q, cfg.gamma - 1.0) * std::log(pt);
      g[t] = -cfg.alpha * d;
    } else {
      const double q = 1.0 - pt;
      double d = -std::pow(pt, cfg.gamma) / q;
      if (cfg.gamma != 0.0) d += cfg.gamma * std::pow(pt, cfg.gamma - 1.0) * std::log(q);
      g[t] = -(1.0 - cfg.alpha) * d;
    }
  }
  return g;
}

// (1/H) sum_t m_t ||xhat_t - z_t||_1 with m_t = psi at anomalous steps, else 1.
inline double weighted_mae(const Matrix& xhat, const Matrix& z, std::span<const std::uint8_t> y,
                           double psi) {
  if (!xhat.same_shape(z)) {
    throw ShapeError("weighted_mae: forecast " + shape_str(xhat) + " vs target " + shape_str(z));
  }
  detail::require_same_length(xhat.rows(), y.size(), "weighted_mae labels");
  double total = 0.0;
  for (std::size_t t = 0; t < xhat.rows(); ++t) {
    double row = 0.0;
    for (std::size_t c = 0; c < xhat.cols(); ++c) row += std::abs(xhat(t, c) - z(t, c));
    total += (y[t] ? psi : 1.0) * row;
  }
  return total / static_cast<double>(xhat.rows());
}

inline Matrix weighted_mae_grad(const Matrix& xhat, const Matrix& z,
                                std::span<const std::uint8_t> y, double psi) {
  Matrix g(xhat.rows(), xhat.cols());
  const double inv_h = 1.0 / static_cast<double>(xhat.rows());
  for (std::size_t t = 0; t < xhat.rows(); ++t) {
    const double m = (y[t] ? psi : 1.0) * inv_h;
    for (std::size_t c = 0; c < xhat.cols(); ++c) {
      const double d = xhat(t, c) - z(t, c);
      g(t, c) = d > 0.0 ? m : (d < 0.0 ? -m : 0.0);
    }
  }
  return g;
}

struct LossParts {
  double total = 0.0;
  double ap = 0.0;  // focal part
  double f = 0.0;   // weighted forecast error (unscaled by lambda)
};

inline const Matrix& forecast_for_loss(const ForwardTrace& tr, const LossConfig& cfg) {
  return cfg.target == ForecastTarget::kFused ? tr.xf : tr.xhat;
}

inline LossParts joint_loss(const ForwardTrace& tr, const Matrix& z,
                            std::span<const std::uint8_t> y, const LossConfig& cfg) {
  LossParts parts;
  parts.ap = focal_loss(tr.p, y, cfg);
  parts.f = weighted_mae(forecast_for_loss(tr, cfg), z, y, cfg.psi);
  parts.total = cfg.lambda == 0.0 ? parts.ap : parts.ap + cfg.lambda * parts.f;
  return parts;
}

inline UpstreamGrads joint_loss_grad(const ForwardTrace& tr, const Matrix& z,
                                     std::span<const std::uint8_t> y, const LossConfig& cfg,
                                     double scale = 1.0) {
  UpstreamGrads up;
  up.d_p = focal_loss_grad(tr.p, y, cfg);
  for (double& g : up.d_p) g *= scale;
  Matrix d_fc = weighted_mae_grad(forecast_for_loss(tr, cfg), z, y, cfg.psi);
  for (double& g : d_fc.flat()) g *= cfg.lambda * scale;
  if (cfg.target == ForecastTarget::kFused) {
    up.d_xf = std::move(d_fc);
  } else {
    up.d_xf = Matrix(tr.xf.rows(), tr.xf.cols());
    up.d_xhat = std::move(d_fc);
  }
  return up;
}

// 1 where p > u (strict).
inline std::vector<std::uint8_t> threshold_labels(std::span<const double> p, double u) {
  std::vector<std::uint8_t> out(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) out[t] = p[t] > u ? 1 : 0;
  return out;
}

}  // namespace f2a
