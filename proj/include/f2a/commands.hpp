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

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "f2a/config.hpp"
#include "f2a/pipeline.hpp"

// Pipeline commands behind the f2a command-line tool. Every command reads its
// inputs from the run directory (run.out_dir), refuses to replace existing
// outputs unless `force` is set, and writes files atomically.
namespace f2a::cmd {

namespace fs = std::filesystem;

struct Paths {
  fs::path out;
  fs::path data;

  explicit Paths(const RunSettings& s) : out(s.out_dir), data(s.data_dir) {}

  fs::path pretrained() const { return out / "pretrained.ckpt"; }
  fs::path pretrain_log() const { return out / "pretrain_log.csv"; }
  fs::path store() const { return out / "store.f2ar"; }
  fs::path model() const { return out / "model.ckpt"; }
  fs::path train_log() const { return out / "train_log.csv"; }
  fs::path scores_dir() const { return out / "scores"; }
  fs::path scores(const std::string& series) const { return scores_dir() / (series + ".csv"); }
  fs::path metrics() const { return out / "metrics.csv"; }
  fs::path ablation() const { return out / "ablation.csv"; }
};

enum class Stage { kPretrain, kFinetune, kAll };

inline Stage parse_stage(const std::string& s) {
  if (s == "pretrain") return Stage::kPretrain;
  if (s == "finetune") return Stage::kFinetune;
  if (s == "all") return Stage::kAll;
  throw ConfigError("--stage: expected pretrain, finetune or all, got '" + s + "'");
}

namespace detail {

inline void guard_output(const fs::path& p, bool force) {
  if (!force && fs::exists(p)) {
    throw IoError(p.string() + " already exists; pass --force to overwrite");
  }
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() +
                  (ec ? ": " + ec.message() : std::string()));
  }
}

inline void require_input(const fs::path& p, const std::string& produced_by) {
  if (!fs::exists(p)) throw IoError("missing input " + p.string() + " (run '" + produced_by + "' first)");
}

inline std::string log_text(const std::vector<EpochLog>& logs) {
  std::string out;
  for (const auto& e : logs) out += format_log_line(e);
  return out;
}

inline std::vector<PreparedSeries> load_data(const RunSettings& s) {
  std::vector<PreparedSeries> out;
  for (auto& raw : load_dataset_dir(s.data_dir)) {
    out.push_back(prepare_series(std::move(raw), s.dims, s.data, s.stride()));
  }
  return out;
}

inline ModelDims pretrained_dims(const RunSettings& s) {
  ModelDims d = s.dims;
  d.k = 0;
  return d;
}

inline StoreDims store_dims(const RunSettings& s) { return {s.dims.C, s.dims.D, s.dims.H}; }

inline std::optional<RetrievalStore> load_run_store(const RunSettings& s, std::size_t k) {
  if (k == 0) return std::nullopt;
  const Paths paths(s);
  require_input(paths.store(), "build-db");
  const StoreDims dims = store_dims(s);
  return load_store(paths.store(), &dims);
}

}  // namespace detail

using Log = std::function<void(const std::string&)>;

// Writes one CSV per synthetic series into the data directory.
inline void synth(const RunSettings& s, bool force, const Log& log = {}) {
  const Paths paths(s);
  detail::ensure_dir(paths.data);
  std::vector<RawSeries> series;
  for (std::size_t i = 0; i < s.synth.num_series; ++i) {
    series.push_back(gen_synthetic(s.synth, i));
    detail::guard_output(paths.data / (series.back().name + ".csv"), force);
  }
  for (const auto& r : series) {
    const auto path = paths.data / (r.name + ".csv");
    io::write_text_atomic(path, to_csv(r));
    if (log) log("wrote " + path.string());
  }
}

// Stage A: fit the forecaster on the training windows.
inline void pretrain_stage(const RunSettings& s, bool force, const Log& log = {}) {
  const Paths paths(s);
  detail::guard_output(paths.pretrained(), force);
  detail::guard_output(paths.pretrain_log(), force);
  const auto data = detail::load_data(s);
  std::vector<EpochLog> logs;
  const Model m = pretrain(data, detail::pretrained_dims(s), s.train, &logs);
  detail::ensure_dir(paths.out);
  save_checkpoint(m, paths.pretrained());
  io::write_text_atomic(paths.pretrain_log(), detail::log_text(logs));
  if (log) log("wrote " + paths.pretrained().string());
}

// Store from the training windows plus the leading db_test fraction of each
// test split, embedded with the pretrained encoder.
inline void build_db(const RunSettings& s, bool force, const Log& log = {}) {
  const Paths paths(s);
  detail::guard_output(paths.store(), force);
  detail::require_input(paths.pretrained(), "train --stage pretrain");
  const ModelDims expected = detail::pretrained_dims(s);
  const Model m = load_checkpoint(paths.pretrained(), &expected);
  const auto data = detail::load_data(s);
  const auto keys = RetrievalKeys::from_settings(s);
  const auto store = build_run_store(data, m.forecaster, keys);
  detail::ensure_dir(paths.out);
  save_store(store, paths.store());
  if (log) {
    std::size_t eval = 0;
    for (const auto& ps : data) eval += ps.eval.size();
    log("wrote " + paths.store().string() + " with " + std::to_string(store.size()) +
        " records; " + std::to_string(eval) + " windows held out for evaluation");
  }
}

// Stage B: frozen encoder, fine-tuned decoder and fusion weights.
inline void finetune_stage(const RunSettings& s, bool force, const Log& log = {}) {
  const Paths paths(s);
  detail::guard_output(paths.model(), force);
  detail::guard_output(paths.train_log(), force);
  detail::require_input(paths.pretrained(), "train --stage pretrain");
  const ModelDims expected = detail::pretrained_dims(s);
  Model m = load_checkpoint(paths.pretrained(), &expected);
  const auto data = detail::load_data(s);
  const auto keys = RetrievalKeys::from_settings(s);
  const auto store = detail::load_run_store(s, s.dims.k);
  const auto logs = finetune_run(data, m, store ? &*store : nullptr, s.dims.k, s.loss, s.train, keys);
  save_checkpoint(m, paths.model());
  io::write_text_atomic(paths.train_log(), detail::log_text(logs));
  if (log) {
    log("wrote " + paths.model().string() + " (final loss " +
        text::format_double(logs.back().loss.total) + ")");
  }
}

inline void train(const RunSettings& s, Stage stage, bool force, const Log& log = {}) {
  if (stage != Stage::kFinetune) pretrain_stage(s, force, log);
  if (stage == Stage::kAll && s.dims.k > 0) build_db(s, force, log);
  if (stage != Stage::kPretrain) finetune_stage(s, force, log);
}

// Stitched per-series scores over the evaluation windows.
inline void predict(const RunSettings& s, bool force, const Log& log = {}) {
  const Paths paths(s);
  detail::require_input(paths.model(), "train");
  const Model m = load_checkpoint(paths.model(), &s.dims);
  const auto data = detail::load_data(s);
  for (const auto& ps : data) detail::guard_output(paths.scores(ps.raw.name), force);
  const auto keys = RetrievalKeys::from_settings(s);
  const auto store = detail::load_run_store(s, m.dims.k);
  const auto scores = predict_eval(data, m, store ? &*store : nullptr, keys);
  detail::ensure_dir(paths.scores_dir());
  for (std::size_t i = 0; i < data.size(); ++i) {
    io::write_text_atomic(paths.scores(data[i].raw.name), score_csv(scores[i]));
    if (log) log("wrote " + paths.scores(data[i].raw.name).string());
  }
}

// Metric rows from the score files; the threshold is calibrated on the
// training windows when eval.calibrate is set, else loss.threshold.
inline void eval(const RunSettings& s, bool force, const Log& log = {}) {
  const Paths paths(s);
  detail::guard_output(paths.metrics(), force);
  const auto data = detail::load_data(s);
  double u = s.loss.threshold;
  if (s.eval_calibrate) {
    detail::require_input(paths.model(), "train");
    const Model m = load_checkpoint(paths.model(), &s.dims);
    const auto store = detail::load_run_store(s, m.dims.k);
    u = calibrate_on_train(data, m, store ? &*store : nullptr, RetrievalKeys::from_settings(s));
  }
  std::string out = kMetricHeader;
  for (const auto& ps : data) {
    const auto path = paths.scores(ps.raw.name);
    detail::require_input(path, "predict");
    const auto bytes = io::read_file(path);
    const ScoredSeries scores = parse_score_csv(std::string_view(bytes.data(), bytes.size()), path.string());
    MetricReport r = evaluate(scores, u, s.eval_buffer);
    r.dataset = ps.raw.name;
    r.variant = "rag" + std::to_string(s.dims.k);
    r.k = s.dims.k;
    out += metric_row(r);
  }
  io::write_text_atomic(paths.metrics(), out);
  if (log) log("wrote " + paths.metrics().string());
}

// Retrieval-count sweep plus the lambda and psi ablations, each fine-tuned
// from one shared pretrained forecaster.
inline void ablate(const RunSettings& s, bool force, const Log& log = {}) {
  const Paths paths(s);
  detail::guard_output(paths.ablation(), force);
  Experiment ex(s, load_dataset_dir(s.data_dir));
  std::string out = kMetricHeader;
  for (const auto& v : ablation_variants(s)) {
    const auto result = ex.run(v);
    for (const auto& r : result.reports) out += metric_row(r);
    if (log) log("variant " + v.name + " done");
  }
  detail::ensure_dir(paths.out);
  io::write_text_atomic(paths.ablation(), out);
  if (log) log("wrote " + paths.ablation().string());
}

}  // namespace f2a::cmd
