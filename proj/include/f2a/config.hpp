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
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "f2a/dataset.hpp"
#include "f2a/error.hpp"
#include "f2a/loss.hpp"
#include "f2a/model.hpp"
#include "f2a/optim.hpp"
#include "f2a/text.hpp"

namespace f2a {

enum class KeyKind { kString, kUint, kReal, kBool, kChoice, kUintList };

struct KeySpec {
  KeyKind kind;
  std::string default_value;
  std::string choices;  // '|'-separated, for kChoice
};

// Every recognised key and its default. Defaults follow the full-size
// hyperparameters; configs/desk.cfg overrides them for CI-sized runs.
inline const std::map<std::string, KeySpec>& config_schema() {
  static const std::map<std::string, KeySpec> schema = {
      {"run.out_dir", {KeyKind::kString, "runs/default", ""}},
      {"data.dir", {KeyKind::kString, "", ""}},
      {"data.train_fraction", {KeyKind::kReal, "0.5", ""}},
      {"data.db_test_fraction", {KeyKind::kReal, "0.3", ""}},
      {"data.stride", {KeyKind::kUint, "0", ""}},
      {"model.L", {KeyKind::kUint, "512", ""}},
      {"model.H", {KeyKind::kUint, "16", ""}},
      {"model.C", {KeyKind::kUint, "10", ""}},
      {"model.D", {KeyKind::kUint, "32", ""}},
      {"retrieval.k", {KeyKind::kUint, "3", ""}},
      {"retrieval.embeddings", {KeyKind::kString, "builtin", ""}},
      {"loss.lambda", {KeyKind::kReal, "1", ""}},
      {"loss.psi", {KeyKind::kReal, "3", ""}},
      {"loss.alpha", {KeyKind::kReal, "0.25", ""}},
      {"loss.gamma", {KeyKind::kReal, "2", ""}},
      {"loss.threshold", {KeyKind::kReal, "0.5", ""}},
      {"loss.eps_p", {KeyKind::kReal, "1e-7", ""}},
      {"loss.forecast_target", {KeyKind::kChoice, "fused", "fused|base"}},
      {"train.lr_max", {KeyKind::kReal, "0.001", ""}},
      {"train.lr_min", {KeyKind::kReal, "0", ""}},
      {"train.epochs", {KeyKind::kUint, "50", ""}},
      {"train.batch_size", {KeyKind::kUint, "256", ""}},
      {"train.beta1", {KeyKind::kReal, "0.9", ""}},
      {"train.beta2", {KeyKind::kReal, "0.999", ""}},
      {"train.eps", {KeyKind::kReal, "1e-8", ""}},
      {"train.weight_decay", {KeyKind::kReal, "0.01", ""}},
      {"train.pretrain_epochs", {KeyKind::kUint, "10", ""}},
      {"train.seed", {KeyKind::kUint, "0", ""}},
      {"eval.buffer", {KeyKind::kString, "auto", ""}},
      {"eval.calibrate", {KeyKind::kBool, "false", ""}},
      {"synth.num_series", {KeyKind::kUint, "1", ""}},
      {"synth.length", {KeyKind::kUint, "10000", ""}},
      {"synth.channels", {KeyKind::kUint, "4", ""}},
      {"synth.anomaly_rate", {KeyKind::kReal, "0.02", ""}},
      {"synth.precursor_lead", {KeyKind::kUint, "12", ""}},
      {"synth.spike_magnitude", {KeyKind::kReal, "6", ""}},
      {"synth.noise_std", {KeyKind::kReal, "0.1", ""}},
      {"synth.seed", {KeyKind::kUint, "0", ""}},
      {"synth.season_period", {KeyKind::kUint, "8", ""}},
      {"synth.ramp_length", {KeyKind::kUint, "4", ""}},
      {"ablate.k_values", {KeyKind::kUintList, "0,3,5,7", ""}},
  };
  return schema;
}

struct DataConfig {
  double train_fraction = 0.5;
  double db_test_fraction = 0.3;
  std::size_t stride = 0;  // 0 means H
};

struct RunSettings {
  std::filesystem::path out_dir;
  std::filesystem::path data_dir;
  ModelDims dims;
  DataConfig data;
  std::string retrieval_embeddings;  // "builtin" or an interchange file path
  LossConfig loss;
  TrainConfig train;
  std::size_t eval_buffer = 0;
  bool eval_calibrate = false;
  SynthConfig synth;
  std::vector<std::size_t> ablate_k;

  std::size_t stride() const { return data.stride == 0 ? dims.H : data.stride; }
};

class RunConfig {
 public:
  RunConfig() {
    for (const auto& [key, spec] : config_schema()) values_[key] = spec.default_value;
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      std::string_view body = text::trim(std::string_view(line).substr(0, hash));
      if (body.empty()) continue;
      const auto eq = body.find('=');
      const std::string where = path.string() + ":" + std::to_string(lineno);
      if (eq == std::string_view::npos) {
        throw ConfigError(where + ": expected 'key = value', got '" + std::string(body) + "'");
      }
      set(std::string(text::trim(body.substr(0, eq))), std::string(text::trim(body.substr(eq + 1))), where);
    }
  }

  // Accepts "key=value" as given to --set.
  void set_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set " + assignment + ": expected key=value");
    }
    set(std::string(text::trim(std::string_view(assignment).substr(0, eq))),
        std::string(text::trim(std::string_view(assignment).substr(eq + 1))), "--set");
  }

  void set(const std::string& key, const std::string& value, const std::string& where = "") {
    const auto& schema = config_schema();
    const auto it = schema.find(key);
    const std::string prefix = where.empty() ? "" : where + ": ";
    if (it == schema.end()) throw ConfigError(prefix + "unknown key '" + key + "'");
    check_type(key, it->second, value, prefix);
    values_[key] = value;
    origins_[key] = where.empty() ? "<api>" : where;
  }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
    return it->second;
  }

  std::string str(const std::string& key) const { return raw(key); }
  std::uint64_t uint(const std::string& key) const { return *text::parse_uint(raw(key)); }
  double real(const std::string& key) const { return *text::parse_double(raw(key)); }
  bool flag(const std::string& key) const { return raw(key) == "true" || raw(key) == "1"; }

  std::vector<std::size_t> uint_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (auto part : text::split(raw(key), ',')) out.push_back(*text::parse_uint(part));
    return out;
  }

  // Key/value dump in schema order, for provenance files.
  std::string dump() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  // Converts to typed settings and range-checks every section. Errors are
  // prefixed with the file:line (or --set) that supplied the offending key.
  RunSettings settings() const {
    try {
      return settings_unchecked();
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      const auto key = msg.substr(0, msg.find(':'));
      const auto it = origins_.find(key);
      if (it != origins_.end()) throw ConfigError(it->second + ": " + msg);
      throw;
    }
  }

 private:
  RunSettings settings_unchecked() const {
    RunSettings s;
    s.out_dir = str("run.out_dir");
    s.data_dir = str("data.dir").empty() ? s.out_dir / "data" : std::filesystem::path(str("data.dir"));

    auto dim = [&](const char* key) {
      const auto v = uint(key);
      if (v == 0 || v > 1u << 20) throw ConfigError(std::string(key) + ": expected a value in [1, 1048576]");
      return static_cast<std::uint32_t>(v);
    };
    s.dims.L = dim("model.L");
    s.dims.H = dim("model.H");
    s.dims.C = dim("model.C");
    s.dims.D = dim("model.D");
    s.dims.k = static_cast<std::uint32_t>(uint("retrieval.k"));
    s.retrieval_embeddings = str("retrieval.embeddings");
    if (s.retrieval_embeddings.empty()) throw ConfigError("retrieval.embeddings: expected 'builtin' or a file path");

    s.data.train_fraction = real("data.train_fraction");
    if (!(s.data.train_fraction > 0.0 && s.data.train_fraction < 1.0)) {
      throw ConfigError("data.train_fraction: expected a value in (0, 1)");
    }
    s.data.db_test_fraction = real("data.db_test_fraction");
    if (!(s.data.db_test_fraction >= 0.0 && s.data.db_test_fraction < 1.0)) {
      throw ConfigError("data.db_test_fraction: expected a value in [0, 1); 1 would leave no evaluation data");
    }
    s.data.stride = uint("data.stride");

    s.loss.lambda = real("loss.lambda");
    s.loss.psi = real("loss.psi");
    s.loss.alpha = real("loss.alpha");
    s.loss.gamma = real("loss.gamma");
    s.loss.threshold = real("loss.threshold");
    s.loss.eps_p = real("loss.eps_p");
    s.loss.target = str("loss.forecast_target") == "base" ? ForecastTarget::kBase : ForecastTarget::kFused;
    s.loss.validate();

    s.train.lr_max = real("train.lr_max");
    s.train.lr_min = real("train.lr_min");
    s.train.epochs = uint("train.epochs");
    s.train.batch_size = uint("train.batch_size");
    s.train.beta1 = real("train.beta1");
    s.train.beta2 = real("train.beta2");
    s.train.eps = real("train.eps");
    s.train.weight_decay = real("train.weight_decay");
    s.train.pretrain_epochs = uint("train.pretrain_epochs");
    s.train.seed = uint("train.seed");
    s.train.validate();

    const std::string buf = str("eval.buffer");
    if (buf == "auto") {
      s.eval_buffer = s.dims.H;
    } else if (auto v = text::parse_uint(buf)) {
      s.eval_buffer = *v;
    } else {
      throw ConfigError("eval.buffer: expected 'auto' or a non-negative integer, got '" + buf + "'");
    }
    s.eval_calibrate = flag("eval.calibrate");

    s.synth.num_series = uint("synth.num_series");
    s.synth.length = uint("synth.length");
    s.synth.channels = uint("synth.channels");
    s.synth.anomaly_rate = real("synth.anomaly_rate");
    s.synth.precursor_lead = uint("synth.precursor_lead");
    s.synth.spike_magnitude = real("synth.spike_magnitude");
    s.synth.noise_std = real("synth.noise_std");
    s.synth.seed = uint("synth.seed");
    s.synth.season_period = uint("synth.season_period");
    s.synth.ramp_length = uint("synth.ramp_length");
    s.synth.validate(s.dims.L);

    s.ablate_k = uint_list("ablate.k_values");
    return s;
  }

  static void check_type(const std::string& key, const KeySpec& spec, const std::string& value,
                         const std::string& prefix) {
    auto bad = [&](const std::string& expected) {
      throw ConfigError(prefix + key + " = '" + value + "': expected " + expected);
    };
    switch (spec.kind) {
      case KeyKind::kString:
        break;
      case KeyKind::kUint:
        if (!text::parse_uint(value)) bad("a non-negative integer");
        break;
      case KeyKind::kReal: {
        const auto v = text::parse_double(value);
        if (!v || !std::isfinite(*v)) bad("a finite real number");
        break;
      }
      case KeyKind::kBool:
        if (value != "true" && value != "false" && value != "1" && value != "0") bad("true or false");
        break;
      case KeyKind::kChoice: {
        bool ok = false;
        for (auto c : text::split(spec.choices, '|')) ok = ok || c == value;
        if (!ok) bad("one of " + spec.choices);
        break;
      }
      case KeyKind::kUintList:
        for (auto part : text::split(value, ',')) {
          if (!text::parse_uint(part)) bad("a comma-separated list of non-negative integers");
        }
        break;
    }
  }

  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origins_;
};

}  // namespace f2a
