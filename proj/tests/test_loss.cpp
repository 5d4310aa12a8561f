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

#include "f2a/loss.hpp"
#include "oracles.hpp"

namespace f2a {
namespace {

std::vector<double> one(double p) { return {p}; }
std::vector<std::uint8_t> lab(std::uint8_t y) { return {y}; }

TEST(Focal, WorkedValues) {
  const LossConfig cfg;
  EXPECT_NEAR(focal_loss(one(0.5), lab(1), cfg), 0.043322, 1e-6);
  EXPECT_NEAR(focal_loss(one(0.5), lab(0), cfg), 0.129965, 1e-6);
  EXPECT_DOUBLE_EQ(focal_loss(one(0.5), lab(1), cfg), 0.25 * 0.25 * std::log(2.0));
}

TEST(Focal, ReducesToHalfCrossEntropy) {
  LossConfig cfg;
  cfg.gamma = 0.0;
  cfg.alpha = 0.5;
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> p{rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99)};
    const std::vector<std::uint8_t> y{1, 0};
    const double bce = -std::log(p[0]) - std::log(1.0 - p[1]);
    EXPECT_NEAR(focal_loss(p, y, cfg), 0.5 * bce, 1e-12);
  }
}

TEST(Focal, ClampsProbabilities) {
  const LossConfig cfg;
  EXPECT_TRUE(std::isfinite(focal_loss(one(0.0), lab(1), cfg)));
  EXPECT_TRUE(std::isfinite(focal_loss(one(1.0), lab(0), cfg)));
  EXPECT_EQ(focal_loss_grad(one(0.0), lab(1), cfg)[0], 0.0);
  EXPECT_THROW(focal_loss(std::vector<double>{0.5, 0.5}, lab(1), cfg), ShapeError);
}

TEST(Focal, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (double gamma : {0.0, 0.5, 2.0}) {
    LossConfig cfg;
    cfg.gamma = gamma;
    for (int i = 0; i < 50; ++i) {
      const double p = rng.uniform(0.02, 0.98);
      for (std::uint8_t y : {0, 1}) {
        const double num = (focal_loss(one(p + 1e-6), lab(y), cfg) - focal_loss(one(p - 1e-6), lab(y), cfg)) / 2e-6;
        EXPECT_LT(oracle::rel_error(focal_loss_grad(one(p), lab(y), cfg)[0], num), 1e-6);
      }
    }
  }
}

TEST(WeightedMae, PlainWhenPsiIsOne) {
  Rng rng(3);
  const Matrix x = oracle::random_matrix(4, 3, rng), z = oracle::random_matrix(4, 3, rng);
  const std::vector<std::uint8_t> y{1, 0, 1, 1};
  double plain = 0.0;
  for (std::size_t t = 0; t < 4; ++t) {
    double row = 0.0;
    for (std::size_t c = 0; c < 3; ++c) row += std::abs(x(t, c) - z(t, c));
    plain += row;
  }
  plain /= 4.0;
  EXPECT_EQ(weighted_mae(x, z, y, 1.0), plain);
  EXPECT_EQ(weighted_mae(x, z, std::vector<std::uint8_t>(4, 0), 3.0), plain);
}

TEST(WeightedMae, UpweightsAnomalousSteps) {
  const Matrix x{{1.0}, {0.0}}, z{{0.0}, {0.0}};
  const std::vector<std::uint8_t> y{1, 0};
  EXPECT_DOUBLE_EQ(weighted_mae(x, z, y, 3.0), 1.5);
  double prev = weighted_mae(x, z, y, 1.0);
  for (double psi : {1.5, 2.0, 3.0, 10.0}) {
    const double v = weighted_mae(x, z, y, psi);
    EXPECT_GT(v, prev);
    prev = v;
  }
  EXPECT_THROW(weighted_mae(x, Matrix(3, 1), y, 1.0), ShapeError);
}

TEST(JointLoss, LambdaZeroIsFocalOnly) {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    auto g = oracle::random_grad_instance(rng, 4, 2, 3, 2);
    g.loss.lambda = 0.0;
    const auto tr = g.forward();
    const auto parts = joint_loss(tr, g.z, g.y, g.loss);
    EXPECT_EQ(parts.total, focal_loss(tr.p, g.y, g.loss));
    EXPECT_EQ(parts.total, parts.ap);
  }
}

TEST(JointLoss, UsesFusedForecastByDefault) {
  Rng rng(5);
  auto g = oracle::random_grad_instance(rng, 4, 2, 3, 2);
  const auto tr = g.forward();
  EXPECT_EQ(joint_loss(tr, g.z, g.y, g.loss).f, weighted_mae(tr.xf, g.z, g.y, g.loss.psi));
  g.loss.target = ForecastTarget::kBase;
  EXPECT_EQ(joint_loss(tr, g.z, g.y, g.loss).f, weighted_mae(tr.xhat, g.z, g.y, g.loss.psi));
}

TEST(Threshold, StrictInequality) {
  EXPECT_EQ(threshold_labels(one(0.5), 0.5), lab(0));
  EXPECT_EQ(threshold_labels(std::vector<double>{0.9, 0.1}, 0.5), (std::vector<std::uint8_t>{1, 0}));
}

TEST(LossConfig, Validation) {
  LossConfig c;
  EXPECT_NO_THROW(c.validate());
  c.psi = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lambda = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace f2a
