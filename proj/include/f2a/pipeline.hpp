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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "f2a/config.hpp"
#include "f2a/dataset.hpp"
#include "f2a/error.hpp"
#include "f2a/forecaster.hpp"
#include "f2a/fusion.hpp"
#include "f2a/loss.hpp"
#include "f2a/metrics.hpp"
#include "f2a/model.hpp"
#include "f2a/optim.hpp"
#include "f2a/retrieval.hpp"
#include "f2a/rng.hpp"

namespace f2a {

// One series split into a training portion [0, split) and a test portion
// [split, T). The leading db_test windows of the test portion join the
// retrieval store; the remaining eval windows are scored.
struct PreparedSeries {
  RawSeries raw;
  ChannelPlan plan;
  std::size_t split = 0;
  std::vector<WindowSample> train;
  std::vector<WindowSample> db_test;
  std::vector<WindowSample> eval;
};

// floor(fraction * n) with a guard against representation error
// (0.3 * 100 must give 30, 0.29 * 100 must give 29).
inline std::size_t fraction_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

inline PreparedSeries prepare_series(RawSeries raw, const ModelDims& dims, const DataConfig& data,
                                     std::size_t stride) {
  raw.validate();
  if (!(data.db_test_fraction >= 0.0 && data.db_test_fraction < 1.0)) {
    throw ConfigError("data.db_test_fraction: expected a value in [0, 1)");
  }
  const std::size_t T = raw.length();
  const std::size_t need = std::size_t{dims.L} + dims.H;
  PreparedSeries ps;
  ps.split = fraction_count(data.train_fraction, T);
  if (ps.split < need || T - ps.split < need) {
    throw DataError("series '" + raw.name + "' of length " + std::to_string(T) +
                    " cannot be split at " + std::to_string(ps.split) +
                    " into train and test portions of at least L + H = " + std::to_string(need));
  }
  ps.plan = select_channels(raw, dims.C, {0, ps.split});
  ps.train = make_windows(raw.slice(0, ps.split), ps.plan, dims.L, dims.H, stride, 0);
  auto test = make_windows(raw.slice(ps.split, T), ps.plan, dims.L, dims.H, stride, ps.split);
  const std::size_t n_db = fraction_count(data.db_test_fraction, test.size());
  if (n_db == test.size()) {
    throw DataError("series '" + raw.name + "': db_test_fraction leaves no evaluation windows");
  }
  ps.db_test.assign(std::make_move_iterator(test.begin()),
                    std::make_move_iterator(test.begin() + static_cast<std::ptrdiff_t>(n_db)));
  ps.eval.assign(std::make_move_iterator(test.begin() + static_cast<std::ptrdiff_t>(n_db)),
                 std::make_move_iterator(test.end()));
  ps.raw = std::move(raw);
  return ps;
}

inline std::vector<RawSeries> load_dataset_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("data directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .csv files in " + dir.string());
  std::vector<RawSeries> out;
  for (const auto& f : files) out.push_back(read_csv(f));
  return out;
}

// Deterministic sub-streams of the run seed.
enum class Stream : std::uint64_t { kForecasterInit = 1, kPretrainShuffle, kFusionInit, kFinetuneShuffle };

inline Rng stream_rng(std::uint64_t seed, Stream s) {
  return Rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(s));
}

// Embeddings used as retrieval keys: the built-in encoder's, or imported
// ones keyed by window origin.
class RetrievalKeys {
 public:
  RetrievalKeys() = default;
  explicit RetrievalKeys(std::map<WindowOrigin, ExternalWindow> external)
      : external_(std::move(external)) {}

  static RetrievalKeys from_settings(const RunSettings& s) {
    if (s.retrieval_embeddings == "builtin") return {};
    return RetrievalKeys(load_external(s.retrieval_embeddings, {s.dims.C, s.dims.D, s.dims.H}));
  }

  bool external() const { return external_.has_value(); }

  // Empty span means "use the built-in embedding".
  std::span<const double> key_for(const WindowSample& w) const {
    if (!external_) return {};
    const auto it = external_->find(w.origin);
    if (it == external_->end()) {
      throw DataError("no imported embedding for window (" + w.origin.series + ", " +
                      std::to_string(w.origin.start) + ")");
    }
    return it->second.embedding.flat;
  }

 private:
  std::optional<std::map<WindowOrigin, ExternalWindow>> external_;
};

inline Model pretrain(const std::vector<PreparedSeries>& data, const ModelDims& dims,
                      const TrainConfig& cfg, std::vector<EpochLog>* logs = nullptr) {
  std::vector<WindowSample> windows;
  for (const auto& ps : data) windows.insert(windows.end(), ps.train.begin(), ps.train.end());
  Model m;
  m.dims = dims;
  Rng init = stream_rng(cfg.seed, Stream::kForecasterInit);
  m.forecaster = ForecasterParams::init(dims.L, dims.D, dims.H, init);
  m.fusion = FusionParams::zeros(dims.H, dims.C);
  Rng shuffle = stream_rng(cfg.seed, Stream::kPretrainShuffle);
  auto l = pretrain_forecaster(windows, m.forecaster, cfg, shuffle);
  if (logs) *logs = std::move(l);
  return m;
}

// Store from every training window plus the leading db_test windows.
inline RetrievalStore build_run_store(const std::vector<PreparedSeries>& data,
                                      const ForecasterParams& encoder, const RetrievalKeys& keys) {
  std::vector<WindowSample> samples;
  for (const auto& ps : data) {
    samples.insert(samples.end(), ps.train.begin(), ps.train.end());
    samples.insert(samples.end(), ps.db_test.begin(), ps.db_test.end());
  }
  if (samples.empty()) throw DataError("no windows available for the retrieval store");
  if (!keys.external()) return build_store(samples, encoder);
  std::vector<StoreRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) {
    const auto key = keys.key_for(s);
    records.push_back({std::vector<double>(key.begin(), key.end()), s.z, s.origin});
  }
  const StoreDims dims{static_cast<std::uint32_t>(samples.front().z.cols()),
                       static_cast<std::uint32_t>(encoder.embed_dim()),
                       static_cast<std::uint32_t>(samples.front().z.rows())};
  return RetrievalStore(dims, std::move(records));
}

inline std::vector<PreparedWindow> prepare_windows(const std::vector<WindowSample>& samples,
                                                   const Model& m, const RetrievalStore* store,
                                                   std::size_t k, bool exclude_self,
                                                   const RetrievalKeys& keys) {
  std::vector<PreparedWindow> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back(prepare_window(s, m.forecaster, store, k, exclude_self, k > 0 ? keys.key_for(s)
                                                                                : std::span<const double>{}));
  }
  return out;
}

// Stage B on a pretrained model: fresh fusion weights, frozen encoder.
// Training windows never retrieve themselves.
inline std::vector<EpochLog> finetune_run(const std::vector<PreparedSeries>& data, Model& m,
                                          const RetrievalStore* store, std::size_t k,
                                          const LossConfig& loss, const TrainConfig& cfg,
                                          const RetrievalKeys& keys) {
  std::vector<WindowSample> windows;
  for (const auto& ps : data) windows.insert(windows.end(), ps.train.begin(), ps.train.end());
  m.dims.k = static_cast<std::uint32_t>(k);
  Rng init = stream_rng(cfg.seed, Stream::kFusionInit);
  m.fusion = FusionParams::init(m.dims.H, m.dims.C, init);
  const auto prepared = prepare_windows(windows, m, store, k, true, keys);
  Rng shuffle = stream_rng(cfg.seed, Stream::kFinetuneShuffle);
  return finetune(prepared, m, loss, cfg, shuffle);
}

inline std::vector<WindowPrediction> predict_windows(const std::vector<WindowSample>& samples,
                                                     const Model& m, const RetrievalStore* store,
                                                     bool exclude_self, const RetrievalKeys& keys) {
  const auto prepared = prepare_windows(samples, m, store, m.dims.k, exclude_self, keys);
  std::vector<WindowPrediction> out;
  out.reserve(prepared.size());
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    out.push_back({samples[i].origin.start + m.dims.L, forward(prepared[i], m).p});
  }
  return out;
}

// Stitched scores over each series' evaluation windows.
inline std::vector<ScoredSeries> predict_eval(const std::vector<PreparedSeries>& data, const Model& m,
                                              const RetrievalStore* store, const RetrievalKeys& keys) {
  std::vector<ScoredSeries> out;
  for (const auto& ps : data) {
    out.push_back(stitch_scores(predict_windows(ps.eval, m, store, false, keys), ps.raw.labels));
  }
  return out;
}

// Threshold calibrated on the training windows (leave-one-out retrieval).
inline double calibrate_on_train(const std::vector<PreparedSeries>& data, const Model& m,
                                 const RetrievalStore* store, const RetrievalKeys& keys) {
  std::vector<ScoredSeries> parts;
  for (const auto& ps : data) {
    parts.push_back(stitch_scores(predict_windows(ps.train, m, store, true, keys), ps.raw.labels));
  }
  const auto pooled = concat(parts);
  return calibrate_threshold(pooled.scores, pooled.labels);
}

inline std::string score_csv(const ScoredSeries& s) {
  std::string out = "timestep,score,label\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s.first_timestep + i) + "," + text::format_double(s.scores[i]) + "," +
           (s.labels[i] ? "1" : "0") + "\n";
  }
  return out;
}

inline ScoredSeries parse_score_csv(std::string_view content, const std::string& what) {
  ScoredSeries s;
  bool header = true;
  std::optional<std::uint64_t> prev;
  for (auto line : text::split(content, '\n')) {
    if (text::trim(line).empty()) continue;
    if (header) {
      if (text::trim(line) != "timestep,score,label") {
        throw DataError(what + ": expected header 'timestep,score,label'");
      }
      header = false;
      continue;
    }
    const auto cells = text::split(line, ',');
    const auto t = cells.size() == 3 ? text::parse_uint(cells[0]) : std::nullopt;
    const auto v = cells.size() == 3 ? text::parse_double(cells[1]) : std::nullopt;
    const auto y = cells.size() == 3 ? text::parse_uint(cells[2]) : std::nullopt;
    if (!t || !v || !y || *y > 1) throw DataError(what + ": malformed row '" + std::string(line) + "'");
    if (prev && *t != *prev + 1) throw DataError(what + ": timesteps are not consecutive at " + std::to_string(*t));
    if (!prev) s.first_timestep = *t;
    prev = t;
    s.scores.push_back(*v);
    s.labels.push_back(static_cast<std::uint8_t>(*y));
  }
  if (header) throw DataError(what + ": empty score file");
  return s;
}

// ---------------------------------------------------------------------------
// In-process experiment: pretrain once, then fine-tune and score variants.

struct Variant {
  std::string name;
  std::size_t k = 0;
  LossConfig loss;
};

struct VariantResult {
  Variant variant;
  Model model;
  std::vector<EpochLog> logs;
  std::vector<ScoredSeries> scores;
  std::vector<MetricReport> reports;  // one per series
};

class Experiment {
 public:
  Experiment(const RunSettings& settings, std::vector<RawSeries> series) : settings_(settings) {
    for (auto& s : series) {
      data_.push_back(prepare_series(std::move(s), settings_.dims, settings_.data, settings_.stride()));
    }
    keys_ = RetrievalKeys::from_settings(settings_);
  }

  const std::vector<PreparedSeries>& data() const { return data_; }
  const RunSettings& settings() const { return settings_; }
  const RetrievalKeys& keys() const { return keys_; }

  const Model& pretrained() {
    if (!pretrained_) pretrained_ = pretrain(data_, settings_.dims, settings_.train, &pretrain_logs_);
    return *pretrained_;
  }
  const std::vector<EpochLog>& pretrain_logs() {
    pretrained();
    return pretrain_logs_;
  }

  const RetrievalStore& store() {
    if (!store_) store_ = build_run_store(data_, pretrained().forecaster, keys_);
    return *store_;
  }

  VariantResult run(const Variant& v) {
    VariantResult r;
    r.variant = v;
    r.model = pretrained();
    const RetrievalStore* st = v.k > 0 ? &store() : nullptr;
    r.logs = finetune_run(data_, r.model, st, v.k, v.loss, settings_.train, keys_);
    r.scores = predict_eval(data_, r.model, st, keys_);
    double u = v.loss.threshold;
    if (settings_.eval_calibrate) u = calibrate_on_train(data_, r.model, st, keys_);
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      MetricReport rep = evaluate(r.scores[i], u, settings_.eval_buffer);
      rep.dataset = data_[i].raw.name;
      rep.variant = v.name;
      rep.k = v.k;
      r.reports.push_back(rep);
    }
    return r;
  }

 private:
  RunSettings settings_;
  std::vector<PreparedSeries> data_;
  RetrievalKeys keys_;
  std::optional<Model> pretrained_;
  std::vector<EpochLog> pretrain_logs_;
  std::optional<RetrievalStore> store_;
};

// Variants covering the retrieval-count sweep and the two loss ablations.
inline std::vector<Variant> ablation_variants(const RunSettings& s) {
  std::vector<Variant> out;
  for (std::size_t k : s.ablate_k) out.push_back({"rag" + std::to_string(k), k, s.loss});
  const std::size_t k = s.dims.k;
  for (double lambda : {0.0, 1.0}) {
    LossConfig l = s.loss;
    l.lambda = lambda;
    out.push_back({"lambda" + text::format_double(lambda), k, l});
  }
  for (double psi : {1.0, 3.0}) {
    LossConfig l = s.loss;
    l.psi = psi;
    out.push_back({"psi" + text::format_double(psi), k, l});
  }
  return out;
}

}  // namespace f2a
