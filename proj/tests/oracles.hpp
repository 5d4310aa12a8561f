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
#include <set>
#include <string>
#include <vector>

#include "f2a/fusion.hpp"
#include "f2a/loss.hpp"
#include "f2a/model.hpp"
#include "f2a/optim.hpp"
#include "f2a/retrieval.hpp"
#include "f2a/rng.hpp"

// Independent reference implementations and random instance generators used
// by the unit tests and the acceptance binary.
namespace f2a::oracle {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = scale * rng.normal();
  return m;
}

inline std::vector<std::uint8_t> random_labels(std::size_t n, double rate, Rng& rng) {
  std::vector<std::uint8_t> y(n);
  for (auto& v : y) v = rng.uniform() < rate ? 1 : 0;
  return y;
}

// ---------------------------------------------------------------------------
// Gradient check.

struct GradInstance {
  Model model;
  Embedding embedding;
  RetrievedSet retrieved;
  Matrix z;
  std::vector<std::uint8_t> y;
  LossConfig loss;

  ForwardTrace forward() const {
    return f2a_forward_from(embedding, retrieved, model.forecaster, model.fusion);
  }
  double objective() const { return joint_loss(forward(), z, y, loss).total; }
};

// Random instance away from the kinks of |.| and of the logit clamp, so that
// central differences are well defined.
inline GradInstance random_grad_instance(Rng& rng, std::size_t H, std::size_t C, std::size_t D,
                                         std::size_t k, std::size_t L = 6) {
  for (;;) {
    GradInstance g;
    g.model.dims = {static_cast<std::uint32_t>(L), static_cast<std::uint32_t>(C),
                    static_cast<std::uint32_t>(D), static_cast<std::uint32_t>(H),
                    static_cast<std::uint32_t>(k)};
    auto& f = g.model.forecaster;
    f = ForecasterParams::zeros(L, D, H);
    f.W_enc = random_matrix(L, D, rng, 0.5);
    for (double& b : f.b_enc) b = 0.2 * rng.normal();
    f.W_dec = random_matrix(D, H, rng, 0.8);
    for (double& b : f.b_dec) b = 0.3 * rng.normal();
    auto& fu = g.model.fusion;
    fu = FusionParams::zeros(H, C);
    fu.Ws = Matrix::identity(H * C);
    for (double& w : fu.Ws.flat()) w += 0.3 * rng.normal();
    fu.W1 = random_matrix(C, 1, rng, 0.7);
    fu.W2 = random_matrix(H * C, 1, rng, 0.3);
    fu.Wap = random_matrix(H * C, H, rng, 0.5);

    g.embedding = encode(random_matrix(L, C, rng), f);
    for (std::size_t q = 0; q < k; ++q) {
      g.retrieved.horizons.push_back(random_matrix(H, C, rng));
      g.retrieved.distances.push_back(static_cast<double>(q));
      g.retrieved.indices.push_back(q);
    }
    g.z = random_matrix(H, C, rng);
    g.y = random_labels(H, 0.4, rng);
    g.loss.lambda = 1.0;
    g.loss.psi = 3.0;

    const auto tr = g.forward();
    bool ok = true;
    for (const Matrix* fc : {&tr.xf, &tr.xhat}) {
      for (std::size_t i = 0; i < fc->size(); ++i) ok = ok && std::abs((*fc)[i] - g.z[i]) > 1e-3;
    }
    for (double l : tr.logits) ok = ok && std::abs(l) < 30.0;
    if (ok) return g;
  }
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]"
  std::size_t checked = 0;
};

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-5});
}

// Analytic gradient of joint_loss against central differences for every
// Stage-B trainable parameter.
inline GradCheckResult check_gradients(GradInstance g, double step = 1e-5) {
  ModelGrads grads = zero_grads(g.model, false);
  {
    const auto tr = g.forward();
    const auto up = joint_loss_grad(tr, g.z, g.y, g.loss);
    f2a_backward(tr, up, g.model.forecaster, g.model.fusion, grads);
  }
  GradCheckResult res;
  auto slots = model_slots(g.model, grads, false, true);
  for (auto& slot : slots) {
    for (std::size_t i = 0; i < slot.value.size(); ++i) {
      const double orig = slot.value[i];
      slot.value[i] = orig + step;
      const double lp = g.objective();
      slot.value[i] = orig - step;
      const double lm = g.objective();
      slot.value[i] = orig;
      const double numeric = (lp - lm) / (2.0 * step);
      const double err = rel_error(slot.grad[i], numeric);
      ++res.checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst = slot.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Metrics.

// Average precision by sweeping every distinct score as a ">= threshold"
// cut, highest first, without sorting the data.
inline double brute_force_ap(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  const std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  double positives = 0.0;
  for (auto y : labels) positives += y;
  double ap = 0.0, prev_recall = 0.0;
  for (double thr : thresholds) {
    double tp = 0.0, predicted = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= thr) {
        predicted += 1.0;
        tp += labels[i];
      }
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / predicted);
    prev_recall = recall;
  }
  return ap;
}

// Hard dilation computed directly from the definition.
inline std::vector<std::uint8_t> brute_force_dilate(const std::vector<std::uint8_t>& labels, std::size_t r) {
  std::vector<std::uint8_t> out(labels.size(), 0);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (!labels[t]) continue;
    const std::size_t lo = t >= r ? t - r : 0;
    const std::size_t hi = std::min(labels.size() - 1, t + r);
    for (std::size_t j = lo; j <= hi; ++j) out[j] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Retrieval.

struct Neighbour {
  std::size_t index;
  double distance;
};

// Full scan, full sort; ties keep store order.
inline std::vector<Neighbour> brute_force_knn(const RetrievalStore& store, const std::vector<double>& q,
                                              std::size_t k) {
  std::vector<Neighbour> all;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.record(i).embedding;
    double s = 0.0;
    for (std::size_t j = 0; j < e.size(); ++j) s += (e[j] - q[j]) * (e[j] - q[j]);
    all.push_back({i, std::sqrt(s)});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Neighbour& a, const Neighbour& b) { return a.distance < b.distance; });
  all.resize(k);
  return all;
}

// Store of n records with small dims; a fraction of records duplicate an
// earlier embedding to exercise ties.
inline RetrievalStore random_store(std::size_t n, StoreDims dims, Rng& rng) {
  const std::size_t width = std::size_t{dims.C} * dims.D;
  std::vector<StoreRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    StoreRecord r;
    if (i > 0 && rng.uniform() < 0.05) {
      r.embedding = records[rng.below(i)].embedding;
    } else {
      r.embedding.resize(width);
      for (double& v : r.embedding) v = rng.normal();
    }
    r.horizon = random_matrix(dims.H, dims.C, rng);
    r.origin = {"s" + std::to_string(i % 3), i};
    records.push_back(std::move(r));
  }
  return RetrievalStore(dims, std::move(records));
}

}  // namespace f2a::oracle
