// Copyright 2026 The ddmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ddmpc/signals.hpp"

#include <random>

#include <gtest/gtest.h>

#include "ddmpc/errors.hpp"

namespace ddmpc {
namespace {

Trajectory scalars(std::initializer_list<double> v) {
  Eigen::RowVectorXd row(static_cast<int>(v.size()));
  int k = 0;
  for (double x : v) row(k++) = x;
  return Trajectory(Eigen::MatrixXd(row));
}

Trajectory random_trajectory(int dim, int length, std::uint64_t seed, bool normal = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Eigen::MatrixXd s(dim, length);
  for (int c = 0; c < length; ++c) {
    for (int r = 0; r < dim; ++r) s(r, c) = normal ? gauss(rng) : unif(rng);
  }
  return Trajectory(s);
}

int svd_rank(const Eigen::MatrixXd& m, double rel_tol) {
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  int r = 0;
  for (int i = 0; i < sv.size(); ++i) r += sv(i) > rel_tol * sv(0) ? 1 : 0;
  return r;
}

GTEST_TEST(TrajectoryTest, IndexingWithOffset) {
  Trajectory t = Trajectory::zeros(2, 4, -2);
  EXPECT_EQ(t.start_index(), -2);
  EXPECT_EQ(t.last_index(), 1);
  EXPECT_TRUE(t.contains(-2));
  EXPECT_FALSE(t.contains(2));
  t.set(0, Eigen::Vector2d(3.0, 4.0));
  EXPECT_EQ(t.at(0), Eigen::Vector2d(3.0, 4.0));
  const Trajectory s = t.slice(-1, 0);
  EXPECT_EQ(s.length(), 2);
  EXPECT_EQ(s.at(0), Eigen::Vector2d(3.0, 4.0));
  EXPECT_EQ(t.slice(1, 0).length(), 0);
  EXPECT_THROW(t.at(5), WindowError);
}

GTEST_TEST(TrajectoryTest, StackedRoundTrip) {
  const Trajectory t = random_trajectory(3, 5, 11);
  const Trajectory back = Trajectory::from_stacked(t.stacked(), 3, 0);
  EXPECT_EQ(back, t);
  EXPECT_DOUBLE_EQ(t.stacked()(4), t.at(1)(1));
}

GTEST_TEST(BuildHankelTest, ScalarExample) {
  const HankelMatrix h = build_hankel(scalars({1, 2, 3, 4}), 2);
  Eigen::MatrixXd expected(2, 3);
  expected << 1, 2, 3, 2, 3, 4;
  EXPECT_EQ(h.entries, expected);
  EXPECT_EQ(h.depth, 2);
  EXPECT_EQ(h.source_dim, 1);
}

GTEST_TEST(BuildHankelTest, ZeroSequence) {
  const HankelMatrix h = build_hankel(scalars({0, 0, 0}), 2);
  EXPECT_EQ(h.entries, Eigen::MatrixXd::Zero(2, 2));
}

GTEST_TEST(BuildHankelTest, GaussianRankMatchesSvd) {
  const Trajectory x = random_trajectory(1, 20, 3);
  const HankelMatrix h = build_hankel(x, 3);
  ASSERT_EQ(h.rows(), 3);
  ASSERT_EQ(h.cols(), 18);
  EXPECT_EQ(svd_rank(h.entries, 1e-9), 3);
}

GTEST_TEST(BuildHankelTest, DepthBeyondLengthThrows) {
  EXPECT_THROW(build_hankel(scalars({1, 2}), 3), DimensionError);
}

GTEST_TEST(BuildHankelTest, EntriesFollowBlockStructure) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Trajectory x = random_trajectory(2, 12, seed);
    const int depth = 1 + static_cast<int>(seed % 5);
    const HankelMatrix h = build_hankel(x, depth);
    for (int r = 0; r < depth; ++r) {
      for (int c = 0; c < h.cols(); ++c) {
        EXPECT_EQ(h.entries.block(2 * r, c, 2, 1), x.at(r + c));
      }
    }
    // Block column 0 recovers the first samples.
    EXPECT_EQ(h.entries.col(0), x.slice(0, depth - 1).stacked());
  }
}

GTEST_TEST(BuildHankelTest, ShiftStructure) {
  const Trajectory x = random_trajectory(2, 15, 5);
  const HankelMatrix h = build_hankel(x, 4);
  const HankelMatrix shifted = build_hankel(x.slice(1, 14).reindexed(0), 4);
  for (int c = 0; c + 1 < h.cols(); ++c) EXPECT_EQ(h.entries.col(c + 1), shifted.entries.col(c));
}

GTEST_TEST(PersistentExcitationTest, ConstantSequenceIsNot) {
  const Trajectory x(Eigen::MatrixXd::Constant(1, 10, 2.5));
  EXPECT_FALSE(check_persistent_excitation(x, 2));
}

GTEST_TEST(PersistentExcitationTest, ImpulseIsNot) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(1, 10);
  s(0, 0) = 1.0;
  EXPECT_FALSE(check_persistent_excitation(Trajectory(s), 2));
}

GTEST_TEST(PersistentExcitationTest, UniformNoiseIsOfOrderSeven) {
  const Trajectory x = random_trajectory(1, 100, 17, false);
  EXPECT_TRUE(check_persistent_excitation(x, 7));
  EXPECT_EQ(svd_rank(build_hankel(x, 7).entries, 1e-9), 7);
}

GTEST_TEST(PersistentExcitationTest, TooFewColumnsIsNot) {
  // 10 samples give 10 - 6 + 1 = 5 columns for 6 rows.
  EXPECT_FALSE(check_persistent_excitation(random_trajectory(1, 10, 2), 6));
}

GTEST_TEST(PersistentExcitationTest, DeficiencyPropagatesUpward) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    // Periodic signals of period 3 have Hankel rank at most 3.
    const Trajectory base = random_trajectory(1, 3, seed);
    Eigen::MatrixXd s(1, 40);
    for (int k = 0; k < 40; ++k) s(0, k) = base.at(k % 3)(0);
    const Trajectory x(s);
    EXPECT_FALSE(check_persistent_excitation(x, 4));
    for (int order = 5; order < 12; ++order) EXPECT_FALSE(check_persistent_excitation(x, order));
  }
}

GTEST_TEST(StackSignalsTest, Example) {
  const Trajectory s = stack_signals({scalars({1, 2}), scalars({3, 4})});
  EXPECT_EQ(s.dim(), 2);
  EXPECT_EQ(s.at(0), Eigen::Vector2d(1, 3));
  EXPECT_EQ(s.at(1), Eigen::Vector2d(2, 4));
}

GTEST_TEST(StackSignalsTest, SinglePartIsIdentity) {
  const Trajectory x = random_trajectory(2, 6, 9);
  EXPECT_EQ(stack_signals({x}), x);
}

GTEST_TEST(StackSignalsTest, UnstackRecoversParts) {
  const Trajectory u = random_trajectory(1, 8, 1);
  const Trajectory y = random_trajectory(2, 8, 2);
  const Trajectory s = stack_signals({u, y});
  ASSERT_EQ(s.dim(), 3);
  const std::vector<Trajectory> parts = unstack(s, {1, 2});
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0], u);
  EXPECT_EQ(parts[1], y);
}

GTEST_TEST(StackSignalsTest, LengthMismatchThrows) {
  EXPECT_THROW(stack_signals({scalars({1, 2}), scalars({1, 2, 3})}), DimensionError);
}

}  // namespace
}  // namespace ddmpc
