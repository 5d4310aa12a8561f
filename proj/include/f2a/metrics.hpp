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
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "f2a/error.hpp"
#include "f2a/loss.hpp"
#include "f2a/text.hpp"

namespace f2a {

// Per-timestep scores over an evaluation span that starts at first_timestep.
struct ScoredSeries {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::uint64_t first_timestep = 0;

  std::size_t size() const { return scores.size(); }

  void validate() const {
    if (scores.size() != labels.size()) {
      throw ShapeError("scored series has " + std::to_string(scores.size()) + " scores and " +
                       std::to_string(labels.size()) + " labels");
    }
    for (double s : scores) {
      if (!std::isfinite(s)) throw DataError("scored series contains a non-finite score");
    }
  }
};

struct WindowPrediction {
  std::uint64_t horizon_start = 0;  // series timestep of p[0]
  std::vector<double> p;
};

// Averages overlapping horizon predictions per timestep. The result spans the
// first through last covered timestep; a hole inside that span is an error.
inline ScoredSeries stitch_scores(const std::vector<WindowPrediction>& preds,
                                  std::span<const std::uint8_t> series_labels) {
  if (preds.empty()) throw DataError("no window predictions to stitch");
  std::uint64_t lo = UINT64_MAX, hi = 0;
  for (const auto& w : preds) {
    if (w.p.empty()) continue;
    lo = std::min(lo, w.horizon_start);
    hi = std::max<std::uint64_t>(hi, w.horizon_start + w.p.size());
  }
  if (lo == UINT64_MAX) throw DataError("window predictions are all empty");
  if (hi > series_labels.size()) {
    throw DataError("predictions reach timestep " + std::to_string(hi - 1) +
                    " beyond the series length " + std::to_string(series_labels.size()));
  }
  const std::size_t n = hi - lo;
  std::vector<double> sum(n, 0.0);
  std::vector<std::uint32_t> count(n, 0);
  for (const auto& w : preds) {
    for (std::size_t j = 0; j < w.p.size(); ++j) {
      sum[w.horizon_start - lo + j] += w.p[j];
      ++count[w.horizon_start - lo + j];
    }
  }
  ScoredSeries out;
  out.first_timestep = lo;
  out.scores.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] == 0) {
      std::size_t end = i;
      while (end < n && count[end] == 0) ++end;
      throw DataError("no prediction covers timesteps [" + std::to_string(lo + i) + ", " +
                      std::to_string(lo + end) + ")");
    }
    out.scores[i] = sum[i] / count[i];
  }
  out.labels.assign(series_labels.begin() + static_cast<std::ptrdiff_t>(lo),
                    series_labels.begin() + static_cast<std::ptrdiff_t>(hi));
  return out;
}

// Concatenates several stitched series (e.g. one per dataset file) for a
// pooled metric.
inline ScoredSeries concat(const std::vector<ScoredSeries>& parts) {
  ScoredSeries out;
  for (const auto& s : parts) {
    out.scores.insert(out.scores.end(), s.scores.begin(), s.scores.end());
    out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
  }
  return out;
}

namespace detail {

inline std::size_t count_positives(std::span<const std::uint8_t> labels) {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

}  // namespace detail

// Sum over descending score thresholds of (R_n - R_{n-1}) * P_n, with every
// group of equal scores entering at the same threshold.
inline double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("average_precision: length mismatch");
  const std::size_t positives = detail::count_positives(labels);
  if (positives == 0) throw DataError("average precision is undefined without positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });

  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      tp += labels[order[i]];
      ++seen;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

inline double average_precision(const ScoredSeries& s) {
  s.validate();
  return average_precision(s.scores, s.labels);
}

// Widens every positive run by `radius` steps on both sides, clipped.
inline std::vector<std::uint8_t> dilate_labels(std::span<const std::uint8_t> labels, std::size_t radius) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> prefix(n + 1, 0);
  for (std::size_t t = 0; t < n; ++t) prefix[t + 1] = prefix[t] + labels[t];
  std::vector<std::uint8_t> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t >= radius ? t - radius : 0;
    const std::size_t hi = std::min(n, t + radius + 1);
    out[t] = prefix[hi] > prefix[lo] ? 1 : 0;
  }
  return out;
}

// Mean of AP against labels dilated by 0, 1, ..., buffer steps. This is a
// hard-dilation variant of the volume under the PR surface; buffer = 0
// reduces to plain AP.
inline double vus_pr(const ScoredSeries& s, std::size_t buffer) {
  s.validate();
  double total = 0.0;
  for (std::size_t l = 0; l <= buffer; ++l) {
    if (l == 0) {
      total += average_precision(s.scores, s.labels);
    } else {
      const auto dilated = dilate_labels(s.labels, l);
      total += average_precision(s.scores, dilated);
    }
  }
  return total / static_cast<double>(buffer + 1);
}

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline PrecisionRecall prf1(std::span<const double> scores, std::span<const std::uint8_t> labels, double u) {
  if (scores.size() != labels.size()) throw ShapeError("prf1: length mismatch");
  const auto pred = threshold_labels(scores, u);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (pred[t] && labels[t]) ++tp;
    else if (pred[t]) ++fp;
    else if (labels[t]) ++fn;
  }
  PrecisionRecall r;
  r.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f1 = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

inline PrecisionRecall prf1(const ScoredSeries& s, double u) { return prf1(s.scores, s.labels, u); }

struct MetricReport {
  std::string dataset;
  std::string variant;
  std::size_t k = 0;
  double vus_pr = 0.0;
  double ap = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double u = 0.5;
  std::size_t buffer = 0;
};

inline MetricReport evaluate(const ScoredSeries& s, double u, std::size_t buffer) {
  MetricReport r;
  r.vus_pr = vus_pr(s, buffer);
  r.ap = average_precision(s);
  const auto pr = prf1(s, u);
  r.precision = pr.precision;
  r.recall = pr.recall;
  r.f1 = pr.f1;
  r.u = u;
  r.buffer = buffer;
  return r;
}

inline constexpr const char* kMetricHeader = "dataset,variant,k,vus_pr,ap,precision,recall,f1,u,L_buf\n";

inline std::string metric_row(const MetricReport& r) {
  using text::format_double;
  return r.dataset + "," + r.variant + "," + std::to_string(r.k) + "," + format_double(r.vus_pr) +
         "," + format_double(r.ap) + "," + format_double(r.precision) + "," +
         format_double(r.recall) + "," + format_double(r.f1) + "," + format_double(r.u) + "," +
         std::to_string(r.buffer) + "\n";
}

}  // namespace f2a
