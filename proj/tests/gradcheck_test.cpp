// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0

#include "fdconv/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fdconv;

TEST(FdGradient, QuadraticAndLinear) {
  auto square = [](const std::vector<double>& t) { return t[0] * t[0]; };
  const auto g = fd_gradient(square, {3.0}, 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-9);

  auto linear = [](const std::vector<double>& t) { return 2.5 * t[0] - 1.0 * t[1]; };
  const auto gl = fd_gradient(linear, {0.3, -0.7}, 1e-4);
  EXPECT_NEAR(gl[0], 2.5, 1e-10);
  EXPECT_NEAR(gl[1], -1.0, 1e-10);
}

TEST(FdGradient, RejectsBadStepAndNonFinite) {
  auto f = [](const std::vector<double>& t) { return t[0]; };
  EXPECT_THROW(fd_gradient(f, {1.0}, 0.0), ArgumentError);
  auto bad = [](const std::vector<double>& t) { return std::log(t[0]); };
  EXPECT_THROW(fd_gradient(bad, {0.0}, 0.5), NumericError);
}

TEST(FdGradient, HalvingStepShrinksErrorQuadratically) {
  // Central differences on a smooth function converge at order ~2.
  auto f = [](const std::vector<double>& t) { return std::sin(2.0 * t[0]) + t[0] * t[0] * t[0]; };
  const double theta = 0.71, exact = 2.0 * std::cos(2.0 * theta) + 3.0 * theta * theta;
  double prev_err = 0.0;
  double order_sum = 0.0;
  int count = 0;
  for (double step : {1e-3, 5e-4, 2.5e-4}) {
    const double err = std::fabs(fd_gradient(f, {theta}, step)[0] - exact);
    if (prev_err > 0.0 && err > 0.0) {
      order_sum += std::log2(prev_err / err);
      ++count;
    }
    prev_err = err;
  }
  EXPECT_GE(order_sum / count, 1.8);
}

TEST(CheckLayer, DefaultConfigPasses) {
  const GradReport rep = check_layer(GradCheckConfig{});
  EXPECT_TRUE(rep.pass);
  ASSERT_EQ(rep.entries.size(), 4u);
  EXPECT_EQ(rep.entries[0].name, "d_weights");
  EXPECT_EQ(rep.entries[1].name, "d_bias");
  EXPECT_EQ(rep.entries[2].name, "d_dilation");
  EXPECT_EQ(rep.entries[3].name, "d_input");
}

TEST(CheckLayer, LatticeGuardRejectsIntegerDilations) {
  GradCheckConfig cfg;
  cfg.dilations = {2.0, 1.7};
  EXPECT_THROW(check_layer(cfg), ArgumentError);
  // Half-integer dilation puts the i=2 tap of a 5x5 kernel on the lattice.
  GradCheckConfig cfg5;
  cfg5.kernel = 5;
  cfg5.dilations = {1.5, 1.7};
  EXPECT_THROW(check_layer(cfg5), ArgumentError);
}

TEST(CheckLayer, ZeroToleranceFails) {
  GradCheckConfig cfg;
  cfg.tolerance = 0.0;
  cfg.abs_floor = 0.0;
  const GradReport rep = check_layer(cfg);
  EXPECT_FALSE(rep.pass);
}

TEST(LatticeDistance, MeasuresWorstTap) {
  EXPECT_DOUBLE_EQ(lattice_distance({1.25}, 1), 0.25);
  EXPECT_DOUBLE_EQ(lattice_distance({1.25}, 2), 0.25);  // 2*1.25 = 2.5
  EXPECT_DOUBLE_EQ(lattice_distance({2.0}, 1), 0.0);
  EXPECT_NEAR(lattice_distance({1.9}, 2), 0.1, 1e-12);  // 1*1.9 -> 0.1 from 2
}
