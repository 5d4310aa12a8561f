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
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "f2a/error.hpp"
#include "f2a/rng.hpp"
#include "f2a/tensor.hpp"
#include "f2a/text.hpp"

namespace f2a {

inline constexpr double kNormEpsilon = 1e-8;

// A labeled multivariate series: values is T x C_raw, labels has length T.
struct RawSeries {
  Matrix values;
  std::vector<std::uint8_t> labels;
  std::string name;

  std::size_t length() const { return values.rows(); }
  std::size_t channels() const { return values.cols(); }

  void validate() const {
    if (values.rows() == 0 || values.cols() == 0) {
      throw DataError("series '" + name + "' is empty (" + shape_str(values) + ")");
    }
    if (labels.size() != values.rows()) {
      throw DataError("series '" + name + "' has " + std::to_string(labels.size()) +
                      " labels for " + std::to_string(values.rows()) + " timesteps");
    }
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (labels[t] > 1) {
        throw DataError("series '" + name + "' label at t=" + std::to_string(t) +
                        " is not 0/1");
      }
    }
  }

  // Rows [begin, end) as a new series with the same name.
  RawSeries slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > length()) {
      throw DataError("invalid slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") of series '" + name + "' with length " + std::to_string(length()));
    }
    RawSeries out;
    out.name = name;
    out.values = Matrix(end - begin, channels());
    for (std::size_t t = begin; t < end; ++t) {
      std::copy_n(values.row(t).begin(), channels(), out.values.row(t - begin).begin());
    }
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
  }
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end > begin ? end - begin : 0; }
};

// Which source channels feed the model, in model order, plus the z-score
// statistics (one entry per model channel; padded channels use mean 0, std 1).
struct ChannelPlan {
  std::vector<std::size_t> selected;
  std::size_t pad_count = 0;
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t channels() const { return selected.size() + pad_count; }

  double normalize(std::size_t channel, double raw) const {
    if (std[channel] <= kNormEpsilon) return 0.0;
    return (raw - mean[channel]) / std[channel];
  }
  double denormalize(std::size_t channel, double value) const {
    return value * std[channel] + mean[channel];
  }
};

struct WindowOrigin {
  std::string series;
  std::uint64_t start = 0;

  friend bool operator==(const WindowOrigin&, const WindowOrigin&) = default;
  friend auto operator<=>(const WindowOrigin&, const WindowOrigin&) = default;
};

struct WindowSample {
  Matrix x;  // L x C context
  Matrix z;  // H x C true horizon
  std::vector<std::uint8_t> y;  // H labels
  WindowOrigin origin;
};

// Variance of first-order differences of one channel over [begin, end).
inline double diff_variance(const Matrix& values, std::size_t channel, IndexRange range) {
  if (range.size() < 2) return 0.0;
  const std::size_t n = range.size() - 1;
  double mean = 0.0;
  for (std::size_t t = range.begin + 1; t < range.end; ++t) {
    mean += values(t, channel) - values(t - 1, channel);
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t t = range.begin + 1; t < range.end; ++t) {
    const double d = values(t, channel) - values(t - 1, channel) - mean;
    var += d * d;
  }
  return var / static_cast<double>(n);
}

// Ranks channels by diff-variance over fit_range (descending, ties by index),
// keeps the top c_target and fits z-score statistics on the same range.
inline ChannelPlan select_channels(const RawSeries& series, std::size_t c_target,
                                   IndexRange fit_range) {
  series.validate();
  if (c_target == 0) throw DataError("channel target must be at least 1");
  if (fit_range.size() == 0 || fit_range.end > series.length()) {
    throw DataError("fit range [" + std::to_string(fit_range.begin) + ", " +
                    std::to_string(fit_range.end) + ") is empty or outside series '" +
                    series.name + "' of length " + std::to_string(series.length()));
  }
  const std::size_t c_raw = series.channels();
  std::vector<double> score(c_raw);
  for (std::size_t c = 0; c < c_raw; ++c) score[c] = diff_variance(series.values, c, fit_range);

  std::vector<std::size_t> order(c_raw);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  ChannelPlan plan;
  const std::size_t keep = std::min(c_target, c_raw);
  plan.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  plan.pad_count = c_target - keep;
  plan.mean.assign(c_target, 0.0);
  plan.std.assign(c_target, 1.0);

  const auto n = static_cast<double>(fit_range.size());
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t src = plan.selected[i];
    double mean = 0.0;
    for (std::size_t t = fit_range.begin; t < fit_range.end; ++t) mean += series.values(t, src);
    mean /= n;
    double var = 0.0;
    for (std::size_t t = fit_range.begin; t < fit_range.end; ++t) {
      const double d = series.values(t, src) - mean;
      var += d * d;
    }
    plan.mean[i] = mean;
    plan.std[i] = std::max(std::sqrt(var / n), kNormEpsilon);
  }
  return plan;
}

// Number of windows make_windows emits for a series of length T.
inline std::size_t window_count(std::size_t T, std::size_t L, std::size_t H, std::size_t stride) {
  if (L + H > T || stride == 0) return 0;
  return (T - L - H) / stride + 1;
}

// Full windows only: starts 0, stride, 2*stride, ... while start + L + H <= T.
// origin_offset is added to every reported start (for series slices).
inline std::vector<WindowSample> make_windows(const RawSeries& series, const ChannelPlan& plan,
                                              std::size_t L, std::size_t H, std::size_t stride,
                                              std::uint64_t origin_offset = 0) {
  series.validate();
  if (stride == 0) throw DataError("window stride must be at least 1");
  if (L == 0 || H == 0) throw DataError("window length and horizon must be positive");
  if (L + H > series.length()) {
    throw DataError("series '" + series.name + "' is too short: length " +
                    std::to_string(series.length()) + " < L + H = " + std::to_string(L + H));
  }
  for (std::size_t src : plan.selected) {
    if (src >= series.channels()) {
      throw DataError("channel plan selects channel " + std::to_string(src) + " but series '" +
                      series.name + "' has " + std::to_string(series.channels()));
    }
  }
  const std::size_t C = plan.channels();
  const std::size_t n = window_count(series.length(), L, H, stride);

  // Normalize once, then copy slices.
  Matrix norm(series.length(), C, 0.0);
  for (std::size_t t = 0; t < series.length(); ++t) {
    for (std::size_t i = 0; i < plan.selected.size(); ++i) {
      norm(t, i) = plan.normalize(i, series.values(t, plan.selected[i]));
    }
  }

  std::vector<WindowSample> out;
  out.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    const std::size_t s = w * stride;
    WindowSample ws;
    ws.x = Matrix(L, C);
    ws.z = Matrix(H, C);
    for (std::size_t t = 0; t < L; ++t) {
      std::copy_n(norm.row(s + t).begin(), C, ws.x.row(t).begin());
    }
    for (std::size_t t = 0; t < H; ++t) {
      std::copy_n(norm.row(s + L + t).begin(), C, ws.z.row(t).begin());
    }
    ws.y.assign(series.labels.begin() + static_cast<std::ptrdiff_t>(s + L),
                series.labels.begin() + static_cast<std::ptrdiff_t>(s + L + H));
    ws.origin = {series.name, origin_offset + s};
    out.push_back(std::move(ws));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic precursor-anomaly generator.

struct SynthConfig {
  std::size_t num_series = 1;
  std::size_t length = 10000;
  std::size_t channels = 4;
  double anomaly_rate = 0.02;
  std::size_t precursor_lead = 12;
  double spike_magnitude = 6.0;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  // Period shared by all seasonal components (each channel has its own
  // phase). A period dividing the window stride makes the background of
  // every window identical, so precursors are what distinguishes them.
  std::size_t season_period = 8;
  // Length of the rising ramp on channel 1; its last step sits exactly
  // precursor_lead steps before the spike.
  std::size_t ramp_length = 4;

  // context_length is the model's L; 0 skips the lead check.
  void validate(std::size_t context_length = 0) const {
    auto fail = [](const std::string& key, const std::string& expected) {
      throw ConfigError("synth." + key + ": expected " + expected);
    };
    if (num_series == 0) fail("num_series", "at least 1");
    if (channels < 2) fail("channels", "at least 2 (spikes on channel 0, precursors on channel 1)");
    if (!(anomaly_rate > 0.0 && anomaly_rate < 0.5)) fail("anomaly_rate", "a value in (0, 0.5)");
    if (precursor_lead == 0) fail("precursor_lead", "at least 1");
    if (season_period < 2) fail("season_period", "at least 2");
    if (ramp_length == 0) fail("ramp_length", "at least 1");
    if (context_length != 0 && precursor_lead >= context_length) {
      fail("precursor_lead", "less than the context length " + std::to_string(context_length));
    }
    if (length < precursor_lead + ramp_length + 2) {
      fail("length", "more than precursor_lead + ramp_length + 1");
    }
    if (!(spike_magnitude > 0.0) || !std::isfinite(spike_magnitude)) {
      fail("spike_magnitude", "a positive finite value");
    }
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) fail("noise_std", "a non-negative finite value");
  }
};

// Generates series `index` of the configured set. Every channel is a
// sinusoid of period season_period with random phase plus Gaussian noise. Each anomaly is
// a one-step spike on channel 0, announced by a ramp on channel 1 whose peak
// lies precursor_lead steps earlier.
inline RawSeries gen_synthetic(const SynthConfig& cfg, std::size_t index = 0) {
  cfg.validate();
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + index + 1);
  const std::size_t T = cfg.length;
  const std::size_t C = cfg.channels;

  RawSeries s;
  s.name = "synth_" + std::to_string(cfg.seed) + "_" + std::to_string(index);
  s.values = Matrix(T, C);
  s.labels.assign(T, 0);

  for (std::size_t c = 0; c < C; ++c) {
    const auto period = static_cast<double>(cfg.season_period);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t t = 0; t < T; ++t) {
      s.values(t, c) = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + phase) +
                       cfg.noise_std * rng.normal();
    }
  }

  const std::size_t first = cfg.precursor_lead + cfg.ramp_length - 1;
  const std::size_t slots = T - first;
  const auto wanted = std::min<std::size_t>(
      slots, static_cast<std::size_t>(std::llround(cfg.anomaly_rate * static_cast<double>(T))));
  const std::size_t min_gap = std::max<std::size_t>(
      1, std::min<std::size_t>(cfg.precursor_lead + 1,
                               static_cast<std::size_t>(0.5 / cfg.anomaly_rate)));

  std::vector<std::size_t> spikes;
  std::vector<std::uint8_t> taken(T, 0);
  auto far_enough = [&](std::size_t t) {
    const std::size_t lo = t >= min_gap ? t - min_gap + 1 : 0;
    const std::size_t hi = std::min(T, t + min_gap);
    for (std::size_t u = lo; u < hi; ++u) {
      if (taken[u]) return false;
    }
    return true;
  };
  for (std::size_t attempts = 0; spikes.size() < wanted && attempts < 50 * wanted + 1000; ++attempts) {
    const std::size_t t = first + rng.below(slots);
    if (!far_enough(t)) continue;
    taken[t] = 1;
    spikes.push_back(t);
  }
  // Dense configurations: fill the remainder ignoring the gap.
  for (std::size_t t = first; spikes.size() < wanted && t < T; ++t) {
    if (!taken[t]) {
      taken[t] = 1;
      spikes.push_back(t);
    }
  }
  std::sort(spikes.begin(), spikes.end());

  const double signal_std = std::sqrt(0.5 + cfg.noise_std * cfg.noise_std);
  const double height = cfg.spike_magnitude * signal_std;
  for (std::size_t t : spikes) {
    s.values(t, 0) += height;
    s.labels[t] = 1;
    const std::size_t peak = t - cfg.precursor_lead;
    for (std::size_t i = 0; i < cfg.ramp_length; ++i) {
      const double frac = static_cast<double>(i + 1) / static_cast<double>(cfg.ramp_length);
      s.values(peak - (cfg.ramp_length - 1 - i), 1) += height * frac;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// CSV: header row, one column per channel, final `Label` column (0/1).

inline RawSeries parse_csv(std::string_view content, std::string name, const std::string& what) {
  std::vector<std::string_view> lines;
  for (auto line : text::split(content, '\n')) {
    if (!text::trim(line).empty()) lines.push_back(line);
  }
  if (lines.empty()) throw DataError(what + ": missing header row");
  const auto header = text::split(lines[0], ',');
  if (header.size() < 2) throw DataError(what + ": need at least one channel column and a Label column");
  if (text::to_lower(text::trim(header.back())) != "label") {
    throw DataError(what + ": last column is '" + std::string(text::trim(header.back())) +
                    "', expected 'Label'");
  }
  const std::size_t C = header.size() - 1;
  const std::size_t T = lines.size() - 1;
  if (T == 0) throw DataError(what + ": no data rows");

  RawSeries s;
  s.name = std::move(name);
  s.values = Matrix(T, C);
  s.labels.resize(T);
  for (std::size_t r = 0; r < T; ++r) {
    const auto cells = text::split(lines[r + 1], ',');
    if (cells.size() != C + 1) {
      throw DataError(what + ": row " + std::to_string(r + 2) + " has " +
                      std::to_string(cells.size()) + " columns, expected " + std::to_string(C + 1));
    }
    for (std::size_t c = 0; c < C; ++c) {
      const auto v = text::parse_double(cells[c]);
      if (!v || !std::isfinite(*v)) {
        throw DataError(what + ": row " + std::to_string(r + 2) + " column " +
                        std::to_string(c + 1) + " is not a finite number: '" +
                        std::string(text::trim(cells[c])) + "'");
      }
      s.values(r, c) = *v;
    }
    const auto lab = text::parse_double(cells[C]);
    if (!lab || (*lab != 0.0 && *lab != 1.0)) {
      throw DataError(what + ": row " + std::to_string(r + 2) + " label is not 0/1: '" +
                      std::string(text::trim(cells[C])) + "'");
    }
    s.labels[r] = static_cast<std::uint8_t>(*lab);
  }
  return s;
}

inline RawSeries read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path.stem().string(), path.string());
}

inline std::string to_csv(const RawSeries& s) {
  std::string out;
  for (std::size_t c = 0; c < s.channels(); ++c) out += "ch" + std::to_string(c) + ",";
  out += "Label\n";
  for (std::size_t t = 0; t < s.length(); ++t) {
    for (std::size_t c = 0; c < s.channels(); ++c) {
      out += text::format_double(s.values(t, c));
      out += ',';
    }
    out += s.labels[t] ? "1\n" : "0\n";
  }
  return out;
}

}  // namespace f2a
