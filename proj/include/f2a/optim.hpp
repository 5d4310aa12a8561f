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
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "f2a/dataset.hpp"
#include "f2a/error.hpp"
#include "f2a/forecaster.hpp"
#include "f2a/fusion.hpp"
#include "f2a/loss.hpp"
#include "f2a/model.hpp"
#include "f2a/retrieval.hpp"
#include "f2a/rng.hpp"
#include "f2a/text.hpp"

namespace f2a {

struct TrainConfig {
  double lr_max = 1e-3;
  double lr_min = 0.0;
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t pretrain_epochs = 10;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const char* key, const char* expected) {
      throw ConfigError(std::string("train.") + key + ": expected " + expected);
    };
    if (!(lr_min >= 0.0)) fail("lr_min", "a value >= 0");
    if (!(lr_max > lr_min) || !std::isfinite(lr_max)) fail("lr_max", "a finite value > train.lr_min");
    if (epochs == 0) fail("epochs", "at least 1");
    if (batch_size == 0) fail("batch_size", "at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "a value in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "a value in [0, 1)");
    if (!(eps > 0.0)) fail("eps", "a positive value");
    if (!(weight_decay >= 0.0)) fail("weight_decay", "a value >= 0");
  }
};

// Cosine annealing from lr_max at epoch 0 to lr_min at epoch == total.
inline double cosine_lr(std::size_t epoch, std::size_t total, double lr_max, double lr_min) {
  if (epoch > total) {
    throw DataError("cosine schedule queried at epoch " + std::to_string(epoch) + " past " +
                    std::to_string(total));
  }
  const double frac = static_cast<double>(epoch) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

inline double cosine_lr(std::size_t epoch, const TrainConfig& cfg) {
  return cosine_lr(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min);
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay.

struct ParamSlot {
  std::string name;
  std::span<double> value;
  std::span<const double> grad;
  bool frozen = false;
};

struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

inline void optimizer_step(std::span<const ParamSlot> slots, OptimizerState& state, double lr,
                           const TrainConfig& cfg) {
  for (const auto& s : slots) {
    if (s.value.size() != s.grad.size()) {
      throw ShapeError("gradient for " + s.name + " has " + std::to_string(s.grad.size()) +
                       " entries, parameter has " + std::to_string(s.value.size()));
    }
    if (s.frozen) continue;
    for (std::size_t i = 0; i < s.grad.size(); ++i) {
      if (!std::isfinite(s.grad[i])) {
        throw NumericError("non-finite gradient in " + s.name + "[" + std::to_string(i) +
                           "] = " + text::format_double(s.grad[i]));
      }
    }
  }
  if (state.m.empty()) {
    for (const auto& s : slots) {
      state.m.emplace_back(s.value.size(), 0.0);
      state.v.emplace_back(s.value.size(), 0.0);
    }
  }
  if (state.m.size() != slots.size()) throw ShapeError("optimizer state does not match parameter list");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto& s = slots[k];
    if (s.frozen) continue;
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < s.value.size(); ++i) {
      const double g = s.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      const double p = s.value[i];
      s.value[i] = p - lr * m_hat / (std::sqrt(v_hat) + cfg.eps) - lr * cfg.weight_decay * p;
    }
  }
}

// ---------------------------------------------------------------------------
// Training.

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  LossParts loss;  // mean over windows, evaluated during the epoch
};

inline std::string format_log_line(const EpochLog& e) {
  using text::format_double;
  return std::to_string(e.epoch) + "," + format_double(e.lr) + "," + format_double(e.loss.total) +
         "," + format_double(e.loss.ap) + "," + format_double(e.loss.f) + "\n";
}

inline std::vector<ParamSlot> model_slots(Model& m, const ModelGrads& g, bool encoder_trainable,
                                          bool fusion_trainable) {
  auto& f = m.forecaster;
  const bool enc_frozen = !encoder_trainable || f.encoder_frozen;
  std::vector<ParamSlot> slots;
  if (!g.forecaster.W_enc.empty()) {
    slots.push_back({"W_enc", f.W_enc.flat(), g.forecaster.W_enc.flat(), enc_frozen});
    slots.push_back({"b_enc", f.b_enc, g.forecaster.b_enc, enc_frozen});
  }
  slots.push_back({"W_dec", f.W_dec.flat(), g.forecaster.W_dec.flat(), false});
  slots.push_back({"b_dec", f.b_dec, g.forecaster.b_dec, false});
  if (fusion_trainable) {
    slots.push_back({"Ws", m.fusion.Ws.flat(), g.fusion.Ws.flat(), false});
    slots.push_back({"W1", m.fusion.W1.flat(), g.fusion.W1.flat(), false});
    slots.push_back({"W2", m.fusion.W2.flat(), g.fusion.W2.flat(), false});
    slots.push_back({"Wap", m.fusion.Wap.flat(), g.fusion.Wap.flat(), false});
  }
  return slots;
}

inline ModelGrads zero_grads(const Model& m, bool with_encoder) {
  return {FusionGrads::zeros_like(m.fusion), ForecasterGrads::zeros_like(m.forecaster, with_encoder)};
}

inline void clear(ModelGrads& g) {
  for (Matrix* mat : {&g.fusion.W1, &g.fusion.W2, &g.fusion.Ws, &g.fusion.Wap,
                      &g.forecaster.W_enc, &g.forecaster.W_dec}) {
    mat->fill(0.0);
  }
  std::fill(g.forecaster.b_enc.begin(), g.forecaster.b_enc.end(), 0.0);
  std::fill(g.forecaster.b_dec.begin(), g.forecaster.b_dec.end(), 0.0);
}

// Stage A: fit encoder and decoder on the plain forecast error
// (1/H) sum_t ||xhat_t - z_t||_1. Returns one log entry per epoch (loss.f).
inline std::vector<EpochLog> pretrain_forecaster(const std::vector<WindowSample>& samples,
                                                 ForecasterParams& forecaster, const TrainConfig& cfg,
                                                 Rng& rng) {
  std::vector<EpochLog> logs;
  if (cfg.pretrain_epochs == 0) return logs;
  if (samples.empty()) throw DataError("no training windows for forecaster pretraining");
  if (forecaster.encoder_frozen) throw DataError("cannot pretrain a frozen encoder");

  Model holder;
  holder.forecaster = forecaster;
  ModelGrads grads{FusionGrads{}, ForecasterGrads::zeros_like(forecaster, true)};
  OptimizerState state;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.pretrain_epochs, cfg.lr_max, cfg.lr_min);
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      clear(grads);
      for (std::size_t i = b0; i < b1; ++i) {
        const auto& s = samples[order[i]];
        const Embedding emb = encode(s.x, holder.forecaster);
        const Matrix xhat = decode(emb, holder.forecaster);
        const std::vector<std::uint8_t> none(xhat.rows(), 0);
        const double loss = weighted_mae(xhat, s.z, none, 1.0);
        if (!std::isfinite(loss)) {
          throw NumericError("non-finite pretraining loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(b0 / cfg.batch_size));
        }
        epoch_loss += loss;
        Matrix d = weighted_mae_grad(xhat, s.z, none, 1.0);
        for (double& g : d.flat()) g *= scale;
        const Matrix d_e = decode_backward(emb, holder.forecaster, d, grads.forecaster);
        encode_backward(s.x, emb, d_e, grads.forecaster);
      }
      auto slots = model_slots(holder, grads, true, false);
      optimizer_step(slots, state, lr, cfg);
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.loss.f = epoch_loss / static_cast<double>(samples.size());
    log.loss.total = log.loss.f;
    logs.push_back(log);
  }
  forecaster = std::move(holder.forecaster);
  return logs;
}

// A training window with its (fixed) embedding and retrieved horizons. The
// encoder is frozen during fine-tuning, so both are computed once.
struct PreparedWindow {
  Embedding embedding;
  RetrievedSet retrieved;
  Matrix z;
  std::vector<std::uint8_t> y;
  WindowOrigin origin;
};

// retrieval_embedding, when non-empty, replaces the built-in embedding as
// the query key (e.g. embeddings imported from an interchange file).
inline PreparedWindow prepare_window(const WindowSample& s, const ForecasterParams& forecaster,
                                     const RetrievalStore* store, std::size_t k, bool exclude_self,
                                     std::span<const double> retrieval_embedding = {}) {
  PreparedWindow w;
  w.embedding = encode(s.x, forecaster);
  if (k > 0) {
    if (store == nullptr) throw DataError("k=" + std::to_string(k) + " requires a retrieval store");
    const auto key = retrieval_embedding.empty() ? std::span<const double>(w.embedding.flat)
                                                 : retrieval_embedding;
    w.retrieved = query(*store, key, k, exclude_self ? &s.origin : nullptr);
  }
  w.z = s.z;
  w.y = s.y;
  w.origin = s.origin;
  return w;
}

inline ForwardTrace forward(const PreparedWindow& w, const Model& m) {
  return f2a_forward_from(w.embedding, w.retrieved, m.forecaster, m.fusion);
}

// Adds the batch-mean gradient contribution of one window (scale = 1/B) and
// returns its loss parts.
inline LossParts accumulate_window(const PreparedWindow& w, const Model& m, const LossConfig& loss,
                                   double scale, ModelGrads& grads) {
  const ForwardTrace tr = forward(w, m);
  const LossParts parts = joint_loss(tr, w.z, w.y, loss);
  const UpstreamGrads up = joint_loss_grad(tr, w.z, w.y, loss, scale);
  f2a_backward(tr, up, m.forecaster, m.fusion, grads);
  return parts;
}

// Stage B: with the encoder frozen, fine-tune decoder and fusion weights on
// the joint loss under a cosine schedule. Deterministic for a given rng state.
inline std::vector<EpochLog> finetune(const std::vector<PreparedWindow>& windows, Model& model,
                                      const LossConfig& loss, const TrainConfig& cfg, Rng& rng) {
  if (windows.empty()) throw DataError("no training windows for fine-tuning");
  model.forecaster.encoder_frozen = true;
  ModelGrads grads = zero_grads(model, false);
  OptimizerState state;
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> logs;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg);
    rng.shuffle(order.begin(), order.end());
    LossParts sum;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      clear(grads);
      for (std::size_t i = b0; i < b1; ++i) {
        const LossParts parts = accumulate_window(windows[order[i]], model, loss, scale, grads);
        if (!std::isfinite(parts.total)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b0 / cfg.batch_size) + ", window (" +
                             windows[order[i]].origin.series + ", " +
                             std::to_string(windows[order[i]].origin.start) + ")");
        }
        sum.total += parts.total;
        sum.ap += parts.ap;
        sum.f += parts.f;
      }
      auto slots = model_slots(model, grads, false, true);
      optimizer_step(slots, state, lr, cfg);
    }
    const auto n = static_cast<double>(windows.size());
    logs.push_back({epoch, lr, {sum.total / n, sum.ap / n, sum.f / n}});
  }
  return logs;
}

// Threshold maximizing F1 over midpoints between consecutive distinct
// scores; ties go to the smallest threshold.
inline double calibrate_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("calibrate_threshold: length mismatch");
  const std::size_t positives =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  if (positives == 0 || positives == labels.size()) {
    throw DataError("threshold calibration needs both positive and negative labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk thresholds upward; everything strictly above u is predicted positive.
  std::size_t tp = positives, fp = labels.size() - positives;
  double best_u = 0.0, best_f1 = -1.0;
  bool found = false;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      if (labels[order[i]]) --tp;
      else --fp;
    }
    if (i == order.size()) break;
    const double u = 0.5 * (s + scores[order[i]]);
    const std::size_t fn = positives - tp;
    const double f1 = tp == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_u = u;
      found = true;
    }
  }
  if (!found) throw DataError("threshold calibration needs at least two distinct scores");
  return best_u;
}

}  // namespace f2a
