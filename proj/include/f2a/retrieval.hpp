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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "f2a/binary_io.hpp"
#include "f2a/dataset.hpp"
#include "f2a/error.hpp"
#include "f2a/forecaster.hpp"
#include "f2a/tensor.hpp"

namespace f2a {

struct StoreDims {
  std::uint32_t C = 0;
  std::uint32_t D = 0;
  std::uint32_t H = 0;
  friend bool operator==(const StoreDims&, const StoreDims&) = default;
};

struct StoreRecord {
  std::vector<double> embedding;  // flat, length C*D
  Matrix horizon;                 // H x C
  WindowOrigin origin;
  friend bool operator==(const StoreRecord&, const StoreRecord&) = default;
};

// The retrieval database: (embedding, true horizon, origin) triplets with
// exact l2 nearest-neighbour lookup. Immutable once constructed.
class RetrievalStore {
 public:
  RetrievalStore(StoreDims dims, std::vector<StoreRecord> records)
      : dims_(dims), records_(std::move(records)) {
    const std::size_t width = std::size_t{dims_.C} * dims_.D;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (r.embedding.size() != width) {
        throw ShapeError("store record " + std::to_string(i) + " has embedding length " +
                         std::to_string(r.embedding.size()) + ", expected C*D=" + std::to_string(width));
      }
      require_dims(r.horizon, dims_.H, dims_.C, "store record horizon");
    }
  }

  StoreDims dims() const { return dims_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const StoreRecord& record(std::size_t i) const { return records_[i]; }
  const std::vector<StoreRecord>& records() const { return records_; }

  friend bool operator==(const RetrievalStore&, const RetrievalStore&) = default;

 private:
  StoreDims dims_;
  std::vector<StoreRecord> records_;
};

struct RetrievedSet {
  std::vector<Matrix> horizons;        // k entries, each H x C
  std::vector<double> distances;       // ascending
  std::vector<std::size_t> indices;    // store record indices

  std::size_t k() const { return horizons.size(); }
};

// One record per sample, in input order, embedding = encode(x).flat.
inline RetrievalStore build_store(const std::vector<WindowSample>& samples,
                                  const ForecasterParams& encoder) {
  if (samples.empty()) throw DataError("cannot build a retrieval store from zero samples");
  const auto C = static_cast<std::uint32_t>(samples.front().x.cols());
  const StoreDims dims{C, static_cast<std::uint32_t>(encoder.embed_dim()),
                       static_cast<std::uint32_t>(samples.front().z.rows())};
  std::vector<StoreRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.x.cols() != dims.C || s.z.rows() != dims.H || s.z.cols() != dims.C) {
      throw ShapeError("sample (" + s.origin.series + ", " + std::to_string(s.origin.start) +
                       ") has context " + shape_str(s.x) + " / horizon " + shape_str(s.z) +
                       " inconsistent with the first sample");
    }
    records.push_back({encode(s.x, encoder).flat, s.z, s.origin});
  }
  return RetrievalStore(dims, std::move(records));
}

// Exact k-NN by flat scan. Ties in distance go to the lower record index.
// Records whose origin equals *exclude are skipped (leave-one-out queries
// for windows that are themselves in the store).
inline RetrievedSet query(const RetrievalStore& store, std::span<const double> embedding,
                          std::size_t k, const WindowOrigin* exclude = nullptr) {
  const std::size_t width = std::size_t{store.dims().C} * store.dims().D;
  if (k == 0) throw DataError("retrieval k must be at least 1; use the k=0 bypass instead");
  if (embedding.size() != width) {
    throw ShapeError("query embedding has length " + std::to_string(embedding.size()) +
                     ", store expects C*D=" + std::to_string(width));
  }
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& rec = store.record(i);
    if (exclude && rec.origin == *exclude) continue;
    double sq = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      const double d = rec.embedding[j] - embedding[j];
      sq += d * d;
    }
    scored.emplace_back(std::sqrt(sq), i);
  }
  if (k > scored.size()) {
    throw DataError("retrieval k=" + std::to_string(k) + " exceeds the " +
                    std::to_string(scored.size()) + " eligible store records");
  }
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());

  RetrievedSet out;
  out.horizons.reserve(k);
  for (std::size_t q = 0; q < k; ++q) {
    out.distances.push_back(scored[q].first);
    out.indices.push_back(scored[q].second);
    out.horizons.push_back(store.record(scored[q].second).horizon);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Store file ("F2AR").

inline constexpr std::uint32_t kStoreVersion = 1;

inline std::vector<char> serialize_store(const RetrievalStore& store) {
  io::ByteWriter w;
  w.raw("F2AR");
  w.u32(kStoreVersion);
  w.u32(store.dims().C);
  w.u32(store.dims().D);
  w.u32(store.dims().H);
  w.u64(store.size());
  for (const auto& r : store.records()) {
    w.f64s(r.embedding);
    w.f64s(r.horizon.flat());
    w.str16(r.origin.series);
    w.u64(r.origin.start);
  }
  return w.bytes();
}

inline void save_store(const RetrievalStore& store, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_store(store));
}

// expected, when given, must match the file's (C, D, H).
inline RetrievalStore load_store(const std::filesystem::path& path,
                                 const StoreDims* expected = nullptr) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  io::expect_magic(r, "F2AR", kStoreVersion);
  StoreDims dims;
  dims.C = r.u32();
  dims.D = r.u32();
  dims.H = r.u32();
  if (expected && !(dims == *expected)) {
    throw FormatError(path.string() + ": store dims (C=" + std::to_string(dims.C) +
                      ", D=" + std::to_string(dims.D) + ", H=" + std::to_string(dims.H) +
                      ") do not match configured (C=" + std::to_string(expected->C) +
                      ", D=" + std::to_string(expected->D) + ", H=" + std::to_string(expected->H) + ")");
  }
  const std::uint64_t count = r.u64();
  const std::size_t width = std::size_t{dims.C} * dims.D;
  const std::size_t min_record = (width + std::size_t{dims.H} * dims.C) * 8 + 2 + 8;
  if (count > r.remaining() / min_record) {
    throw FormatError(path.string() + ": truncated file, header declares " +
                      std::to_string(count) + " records");
  }
  std::vector<StoreRecord> records(count);
  for (auto& rec : records) {
    rec.embedding.resize(width);
    r.f64s(rec.embedding);
    rec.horizon = Matrix(dims.H, dims.C);
    r.f64s(rec.horizon.flat());
    rec.origin.series = r.str16();
    rec.origin.start = r.u64();
  }
  if (!r.at_end()) {
    throw FormatError(path.string() + ": " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return RetrievalStore(dims, std::move(records));
}

}  // namespace f2a
