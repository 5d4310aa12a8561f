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

#include <gtest/gtest.h>

#include <filesystem>

#include "f2a/retrieval.hpp"
#include "oracles.hpp"

namespace f2a {
namespace {

namespace fs = std::filesystem;

RetrievalStore two_point_store() {
  std::vector<StoreRecord> r(2);
  r[0] = {{0.0, 0.0}, Matrix{{1.0}}, {"a", 0}};
  r[1] = {{3.0, 4.0}, Matrix{{2.0}}, {"a", 1}};
  return RetrievalStore({1, 2, 1}, std::move(r));
}

TEST(Query, SelfMatchAndOrdering) {
  const auto store = two_point_store();
  const std::vector<double> q{0.0, 0.0};
  const auto one = query(store, q, 1);
  EXPECT_EQ(one.indices, std::vector<std::size_t>{0});
  EXPECT_EQ(one.distances[0], 0.0);
  EXPECT_EQ(one.horizons[0](0, 0), 1.0);
  const auto two = query(store, q, 2);
  EXPECT_EQ(two.indices, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(two.distances[1], 5.0);
}

TEST(Query, EquidistantGoesToLowerIndex) {
  std::vector<StoreRecord> r(3);
  r[0] = {{2.0}, Matrix{{0.0}}, {"a", 0}};
  r[1] = {{-1.0}, Matrix{{0.0}}, {"a", 1}};
  r[2] = {{1.0}, Matrix{{0.0}}, {"a", 2}};
  const RetrievalStore store({1, 1, 1}, std::move(r));
  const std::vector<double> q{0.0};
  EXPECT_EQ(query(store, q, 2).indices, (std::vector<std::size_t>{1, 2}));
}

TEST(Query, ExcludesOwnOrigin) {
  const auto store = two_point_store();
  const WindowOrigin self{"a", 0};
  const auto res = query(store, std::vector<double>{0.0, 0.0}, 1, &self);
  EXPECT_EQ(res.indices, std::vector<std::size_t>{1});
  EXPECT_THROW(query(store, std::vector<double>{0.0, 0.0}, 2, &self), DataError);
}

TEST(Query, Preconditions) {
  const auto store = two_point_store();
  EXPECT_THROW(query(store, std::vector<double>{0.0, 0.0}, 0), DataError);
  EXPECT_THROW(query(store, std::vector<double>{0.0, 0.0}, 3), DataError);
  EXPECT_THROW(query(store, std::vector<double>{0.0}, 1), ShapeError);
}

TEST(Query, MatchesBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto store = oracle::random_store(7 + rng.below(300), {2, 3, 2}, rng);
    std::vector<double> q(6);
    for (double& v : q) v = rng.normal();
    if (trial % 4 == 0) q = store.record(rng.below(store.size())).embedding;
    for (std::size_t k : {1u, 3u, 5u, 7u}) {
      const auto got = query(store, q, k);
      const auto want = oracle::brute_force_knn(store, q, k);
      ASSERT_EQ(got.k(), k);
      for (std::size_t i = 0; i < k; ++i) {
        EXPECT_EQ(got.indices[i], want[i].index);
        EXPECT_NEAR(got.distances[i], want[i].distance, 1e-12);
        EXPECT_EQ(got.horizons[i], store.record(want[i].index).horizon);
      }
    }
  }
}

std::vector<WindowSample> random_samples(std::size_t n, Rng& rng) {
  std::vector<WindowSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    WindowSample s;
    s.x = oracle::random_matrix(6, 2, rng);
    s.z = oracle::random_matrix(3, 2, rng);
    s.y = oracle::random_labels(3, 0.2, rng);
    s.origin = {"s", 3 * i};
    out.push_back(std::move(s));
  }
  return out;
}

TEST(BuildStore, PreservesOrderAndHorizons) {
  Rng rng(4);
  const auto enc = ForecasterParams::init(6, 4, 3, rng);
  const auto one = build_store(random_samples(1, rng), enc);
  EXPECT_EQ(one.size(), 1u);
  const auto samples = random_samples(25, rng);
  const auto store = build_store(samples, enc);
  ASSERT_EQ(store.size(), 25u);
  EXPECT_EQ(store.dims(), (StoreDims{2, 4, 3}));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(store.record(i).origin, samples[i].origin);
    EXPECT_EQ(store.record(i).horizon, samples[i].z);
    EXPECT_EQ(store.record(i).embedding, encode(samples[i].x, enc).flat);
  }
  EXPECT_EQ(serialize_store(store), serialize_store(build_store(samples, enc)));
  EXPECT_THROW(build_store({}, enc), DataError);
}

TEST(StoreFile, RoundTripAndValidation) {
  Rng rng(8);
  const auto store = oracle::random_store(100, {3, 2, 4}, rng);
  const auto dir = fs::temp_directory_path() / "f2a_unit";
  fs::create_directories(dir);
  const auto path = dir / "store.f2ar";
  save_store(store, path);
  const StoreDims dims{3, 2, 4};
  EXPECT_EQ(load_store(path, &dims), store);

  const StoreDims other{3, 5, 4};
  try {
    load_store(path, &other);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("do not match"), std::string::npos);
  }
  EXPECT_THROW(load_store(""), IoError);
  EXPECT_THROW(load_store(dir / "missing.f2ar"), IoError);

  auto bytes = io::read_file(path);
  bytes.resize(bytes.size() / 2);
  io::write_file_atomic(path, bytes);
  EXPECT_THROW(load_store(path), FormatError);
  bytes = serialize_store(store);
  bytes[1] = 'Q';
  io::write_file_atomic(path, bytes);
  EXPECT_THROW(load_store(path), FormatError);
}

}  // namespace
}  // namespace f2a
