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

#include <numeric>

#include "f2a/binary_io.hpp"
#include "f2a/dataset.hpp"
#include "f2a/rng.hpp"
#include "f2a/text.hpp"

namespace f2a {
namespace {

RawSeries series_from_columns(const std::vector<std::vector<double>>& cols, std::string name = "s") {
  RawSeries s;
  s.name = std::move(name);
  const std::size_t T = cols.front().size();
  s.values = Matrix(T, cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t t = 0; t < T; ++t) s.values(t, c) = cols[c][t];
  }
  s.labels.assign(T, 0);
  return s;
}

RawSeries random_series(std::size_t T, std::size_t C, Rng& rng) {
  RawSeries s;
  s.name = "r";
  s.values = Matrix(T, C);
  for (std::size_t c = 0; c < C; ++c) {
    const double scale = 0.5 + static_cast<double>(c);
    for (std::size_t t = 0; t < T; ++t) s.values(t, c) = scale * rng.normal() + 3.0 * static_cast<double>(c);
  }
  s.labels.resize(T);
  for (auto& y : s.labels) y = rng.uniform() < 0.1;
  return s;
}

TEST(ByteIo, LittleEndianLayoutAndTruncation) {
  io::ByteWriter w;
  w.u32(0x01020304);
  w.str16("ab");
  const auto& b = w.bytes();
  ASSERT_EQ(b.size(), 8u);
  EXPECT_EQ(b[0], 0x04);
  EXPECT_EQ(b[3], 0x01);
  EXPECT_EQ(b[4], 2);
  io::ByteReader r(b, "buf");
  EXPECT_EQ(r.u32(), 0x01020304u);
  EXPECT_EQ(r.str16(), "ab");
  EXPECT_TRUE(r.at_end());
  EXPECT_THROW(r.u16(), FormatError);
}

TEST(ByteIo, Crc32MatchesCheckValue) {
  const std::string s = "123456789";
  EXPECT_EQ(io::crc32(std::span<const char>(s.data(), s.size())), 0xCBF43926u);
}

TEST(ByteIo, MissingAndEmptyPaths) {
  EXPECT_THROW(io::read_file(""), IoError);
  EXPECT_THROW(io::read_file("/nonexistent/dir/file.bin"), IoError);
}

TEST(Text, FormatDoubleRoundTrips) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
    EXPECT_EQ(*text::parse_double(text::format_double(v)), v);
  }
  EXPECT_FALSE(text::parse_double("1.5x"));
  EXPECT_FALSE(text::parse_uint("-3"));
}

TEST(SelectChannels, PrefersVolatileChannel) {
  const auto s = series_from_columns({{0, 0, 0, 10, 0}, {5, 5, 5, 5, 5}});
  const auto plan = select_channels(s, 1, {0, 5});
  EXPECT_EQ(plan.selected, std::vector<std::size_t>{0});
  const auto swapped = series_from_columns({{5, 5, 5, 5, 5}, {0, 0, 0, 10, 0}});
  EXPECT_EQ(select_channels(swapped, 1, {0, 5}).selected, std::vector<std::size_t>{1});
}

TEST(SelectChannels, TiesKeepOriginalOrder) {
  const auto s = series_from_columns({{1, 2, 1, 2}, {4, 5, 4, 5}, {0, 1, 0, 1}});
  EXPECT_EQ(select_channels(s, 3, {0, 4}).selected, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(SelectChannels, PadsShortSeries) {
  const auto s = series_from_columns({{1, 2, 3, 4}});
  const auto plan = select_channels(s, 3, {0, 4});
  EXPECT_EQ(plan.selected, std::vector<std::size_t>{0});
  EXPECT_EQ(plan.pad_count, 2u);
  EXPECT_EQ(plan.channels(), 3u);
}

TEST(SelectChannels, FitsOnlyOnFitRange) {
  auto s = series_from_columns({{0, 1, 0, 1, 100, -100}, {0, 2, 0, 2, 0, 2}});
  const auto plan = select_channels(s, 1, {0, 4});
  EXPECT_EQ(plan.selected, std::vector<std::size_t>{1});
  EXPECT_DOUBLE_EQ(plan.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(plan.std[0], 1.0);
}

TEST(SelectChannels, RejectsBadArguments) {
  const auto s = series_from_columns({{1, 2, 3}});
  EXPECT_THROW(select_channels(s, 0, {0, 3}), DataError);
  EXPECT_THROW(select_channels(s, 1, {2, 2}), DataError);
  EXPECT_THROW(select_channels(s, 1, {0, 4}), DataError);
}

TEST(SelectChannels, PermutationEquivariant) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_series(50, 5, rng);
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    RawSeries p = s;
    for (std::size_t t = 0; t < 50; ++t) {
      for (std::size_t c = 0; c < 5; ++c) p.values(t, c) = s.values(t, perm[c]);
    }
    const auto a = select_channels(s, 3, {0, 50});
    const auto b = select_channels(p, 3, {0, 50});
    std::set<std::size_t> mapped;
    for (std::size_t c : b.selected) mapped.insert(perm[c]);
    EXPECT_EQ(mapped, std::set<std::size_t>(a.selected.begin(), a.selected.end()));
  }
}

TEST(ChannelPlan, NormalizeInverts) {
  Rng rng(5);
  const auto s = random_series(200, 3, rng);
  const auto plan = select_channels(s, 3, {0, 200});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t t = 0; t < 200; ++t) {
      const double raw = s.values(t, plan.selected[i]);
      const double back = plan.denormalize(i, plan.normalize(i, raw));
      EXPECT_LE(std::abs(back - raw), 1e-9 * std::max(1.0, std::abs(raw)));
    }
  }
}

TEST(MakeWindows, EnumeratesFullWindowsOnly) {
  Rng rng(1);
  const auto s = random_series(10, 1, rng);
  const auto plan = select_channels(s, 1, {0, 10});
  const auto w = make_windows(s, plan, 4, 2, 2);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].origin.start, 0u);
  EXPECT_EQ(w[1].origin.start, 2u);
  EXPECT_EQ(w[2].origin.start, 4u);
  EXPECT_EQ(make_windows(s.slice(0, 6), plan, 4, 2, 1).size(), 1u);
  EXPECT_THROW(make_windows(s, plan, 8, 3, 1), DataError);
  EXPECT_THROW(make_windows(s, plan, 4, 2, 0), DataError);
}

TEST(MakeWindows, ConstantSeriesNormalizesToZero) {
  const auto s = series_from_columns({std::vector<double>(12, 7.5)});
  const auto plan = select_channels(s, 2, {0, 12});
  for (const auto& w : make_windows(s, plan, 4, 2, 2)) {
    for (double v : w.x.flat()) EXPECT_EQ(v, 0.0);
    for (double v : w.z.flat()) EXPECT_EQ(v, 0.0);
  }
}

TEST(MakeWindows, LosslessAtStrideL) {
  Rng rng(8);
  const auto s = random_series(103, 3, rng);
  const auto plan = select_channels(s, 2, {0, 103});
  const std::size_t L = 10, H = 3;
  const auto w = make_windows(s, plan, L, H, L);
  for (const auto& win : w) {
    EXPECT_LE(win.origin.start + L + H, s.length());
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t i = 0; i < 2; ++i) {
        const double raw = s.values(win.origin.start + t, plan.selected[i]);
        EXPECT_NEAR(plan.denormalize(i, win.x(t, i)), raw, 1e-9 * std::max(1.0, std::abs(raw)));
      }
    }
    for (std::size_t t = 0; t < H; ++t) EXPECT_EQ(win.y[t], s.labels[win.origin.start + L + t]);
  }
}

TEST(MakeWindows, PaddedChannelsAreZero) {
  Rng rng(2);
  const auto s = random_series(30, 1, rng);
  const auto plan = select_channels(s, 3, {0, 30});
  for (const auto& w : make_windows(s, plan, 5, 2, 2)) {
    for (std::size_t t = 0; t < 5; ++t) {
      EXPECT_EQ(w.x(t, 1), 0.0);
      EXPECT_EQ(w.x(t, 2), 0.0);
    }
  }
}

TEST(Synthetic, DeterministicPerSeed) {
  SynthConfig cfg;
  cfg.length = 2000;
  const auto a = gen_synthetic(cfg);
  const auto b = gen_synthetic(cfg);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.labels, b.labels);
  cfg.seed = 1;
  EXPECT_NE(gen_synthetic(cfg).values, a.values);
}

TEST(Synthetic, AnomalyCountNearRate) {
  SynthConfig cfg;
  cfg.length = 10000;
  cfg.anomaly_rate = 0.02;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const auto s = gen_synthetic(cfg);
    const auto n = std::count(s.labels.begin(), s.labels.end(), 1);
    EXPECT_GE(n, 160);
    EXPECT_LE(n, 240);
  }
}

TEST(Synthetic, EveryAnomalyHasPrecursor) {
  SynthConfig cfg;
  cfg.length = 3000;
  cfg.noise_std = 0.0;
  const auto s = gen_synthetic(cfg);
  // Without noise the background is a pure sinusoid in [-1, 1]; the ramp
  // peak lifts channel 1 well above it.
  for (std::size_t t = 0; t < s.length(); ++t) {
    if (!s.labels[t]) continue;
    EXPECT_GT(s.values(t - cfg.precursor_lead, 1), 1.5);
    EXPECT_GT(s.values(t, 0), 1.5);
  }
}

TEST(Synthetic, ValidatesConfig) {
  SynthConfig cfg;
  cfg.anomaly_rate = 0.9;
  try {
    gen_synthetic(cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("synth.anomaly_rate"), std::string::npos);
  }
  SynthConfig lead;
  lead.precursor_lead = 64;
  EXPECT_THROW(lead.validate(64), ConfigError);
  EXPECT_NO_THROW(lead.validate(65));
}

TEST(Csv, RoundTripsExactly) {
  SynthConfig cfg;
  cfg.length = 500;
  const auto s = gen_synthetic(cfg);
  const auto back = parse_csv(to_csv(s), s.name, "mem");
  EXPECT_EQ(back.values, s.values);
  EXPECT_EQ(back.labels, s.labels);
}

TEST(Csv, RejectsMalformedInput) {
  EXPECT_THROW(parse_csv("", "x", "f"), DataError);
  EXPECT_THROW(parse_csv("a,b\n1,2\n", "x", "f"), DataError);
  EXPECT_THROW(parse_csv("a,Label\n1,2\n", "x", "f"), DataError);
  EXPECT_THROW(parse_csv("a,Label\n1\n", "x", "f"), DataError);
  EXPECT_THROW(parse_csv("a,Label\nnan,0\n", "x", "f"), DataError);
  const auto ok = parse_csv("a,b,label\r\n1,2.5,0\r\n3,4,1\r\n", "x", "f");
  EXPECT_EQ(ok.length(), 2u);
  EXPECT_EQ(ok.labels[1], 1);
}

}  // namespace
}  // namespace f2a
