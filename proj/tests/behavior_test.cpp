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

#include "ddmpc/behavior.hpp"

#include <random>

#include <gtest/gtest.h>

#include "ddmpc/errors.hpp"
#include "ddmpc/linalg.hpp"
#include "test_support.hpp"

namespace ddmpc {
namespace {

constexpr int kLag = 2;
constexpr int kHorizon = 5;

class BehaviorTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    net_ = new NetworkModel(make_chain_network(ChainParameters{.size = 3}));
    data_ = new std::vector<DataSet>(
        collect_data(*net_, 100, std::vector<InputBox>(3, InputBox::symmetric(1, 2.0)), 1,
                     required_excitation_order(kHorizon, kLag))
            .data);
  }
  static void TearDownTestSuite() {
    delete net_;
    delete data_;
  }

  // Plant-generated window of length `length` for node 1 after a random
  // transient.
  testing::NodeRecord plant_window(int length, std::uint64_t seed, int start_index = 0) const {
    std::mt19937_64 rng(seed);
    NetworkModel net = *net_;
    testing::randomize_states(net, rng, 2.0);
    testing::record_node(net, 1, 3, rng);
    return testing::record_node(net, 1, length, rng, 2.0, start_index);
  }

  static NetworkModel* net_;
  static std::vector<DataSet>* data_;
};

NetworkModel* BehaviorTest::net_ = nullptr;
std::vector<DataSet>* BehaviorTest::data_ = nullptr;

InitialWindow init_of(const testing::NodeRecord& r) {
  return {r.u.slice(-kLag, -1), r.y_neighbors.slice(-kLag, -1), r.y.slice(-kLag, -1)};
}

double relative_error(const Trajectory& a, const Trajectory& b) {
  return (a.samples() - b.samples()).norm() / std::max(1.0, b.samples().norm());
}

TEST_F(BehaviorTest, PredictorShapes) {
  const BehavioralPredictor pred((*data_)[1], kHorizon + kLag);
  EXPECT_EQ(pred.H_u().rows(), 7);
  EXPECT_EQ(pred.H_yn().rows(), 2 * 6);
  EXPECT_EQ(pred.H_y().rows(), 7);
  EXPECT_EQ(pred.num_columns(), 100 - 7 + 1);
  EXPECT_EQ(pred.H_yn().cols(), pred.num_columns());
}

TEST_F(BehaviorTest, ZeroTrajectoryIsMember) {
  const BehavioralPredictor pred((*data_)[1], 7);
  const TrajectoryCheck c = check_trajectory(pred, Trajectory::zeros(1, 7), Trajectory::zeros(2, 6),
                                             Trajectory::zeros(1, 7), 1e-8);
  EXPECT_TRUE(c.is_trajectory);
  EXPECT_EQ(c.alpha.norm(), 0.0);
}

TEST_F(BehaviorTest, DataSliceIsMember) {
  const DataSet& d = (*data_)[1];
  const BehavioralPredictor pred(d, 7);
  for (int s : {0, 13, 50, 93}) {
    const TrajectoryCheck c = check_trajectory(pred, d.u.slice(s, s + 6), d.y_neighbors.slice(s, s + 5),
                                               d.y.slice(s, s + 6), 1e-8);
    EXPECT_TRUE(c.is_trajectory) << "slice at " << s << " residual " << c.residual;
  }
}

TEST_F(BehaviorTest, PlantTrajectoriesAcceptedPerturbedRejected) {
  const BehavioralPredictor pred((*data_)[1], 7);
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const testing::NodeRecord r = plant_window(7, seed);
    const Trajectory yn = r.y_neighbors.slice(0, 5);
    const TrajectoryCheck ok = check_trajectory(pred, r.u, yn, r.y, 1e-8);
    EXPECT_TRUE(ok.is_trajectory) << ok.residual;
    EXPECT_LE(ok.residual, 1e-8);
    Trajectory y = r.y;
    const int k = static_cast<int>(rng() % 7);
    y.set(k, y.at(k) + Eigen::VectorXd::Constant(1, 0.1));
    EXPECT_FALSE(check_trajectory(pred, r.u, yn, y, 1e-8).is_trajectory);
  }
}

TEST_F(BehaviorTest, DimensionMismatchThrows) {
  const BehavioralPredictor pred((*data_)[1], 7);
  EXPECT_THROW(check_trajectory(pred, Trajectory::zeros(1, 6), Trajectory::zeros(2, 6),
                                Trajectory::zeros(1, 7), 1e-8),
               DimensionError);
}

TEST_F(BehaviorTest, SimulateZero) {
  const DataDrivenSimulator sim((*data_)[1], kLag, kHorizon + 1);
  const InitialWindow init{Trajectory::zeros(1, 2, -2), Trajectory::zeros(2, 2, -2),
                           Trajectory::zeros(1, 2, -2)};
  const Trajectory y = sim.simulate(init, Trajectory::zeros(1, 4), Trajectory::zeros(2, 3));
  EXPECT_EQ(y.length(), 4);
  EXPECT_LT(y.samples().norm(), 1e-12);
}

TEST_F(BehaviorTest, SimulateReplaysRecordedData) {
  const DataSet& d = (*data_)[1];
  const DataDrivenSimulator sim(d, kLag, kHorizon + 1);
  for (int s : {2, 30, 80}) {
    const InitialWindow init{d.u.slice(s - 2, s - 1).reindexed(-2),
                             d.y_neighbors.slice(s - 2, s - 1).reindexed(-2),
                             d.y.slice(s - 2, s - 1).reindexed(-2)};
    const Trajectory y = sim.simulate(init, d.u.slice(s, s + 5).reindexed(0),
                                      d.y_neighbors.slice(s, s + 4).reindexed(0));
    EXPECT_LT((y.samples() - d.y.slice(s, s + 5).samples()).norm(), 1e-8);
  }
}

TEST_F(BehaviorTest, SimulateMatchesPlant) {
  const DataDrivenSimulator sim((*data_)[1], kLag, kHorizon + 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int h = 1 + static_cast<int>(seed % 6);
    const testing::NodeRecord r = plant_window(h + kLag, seed, -kLag);
    const Trajectory y =
        sim.simulate(init_of(r), r.u.slice(0, h - 1), r.y_neighbors.slice(0, h - 2));
    EXPECT_LE(relative_error(y, r.y.slice(0, h - 1)), 1e-6) << "horizon " << h;
  }
}

TEST_F(BehaviorTest, InconsistentWindowThrows) {
  // With lag 3 > state dimension 2 the initial window is overdetermined.
  const DataDrivenSimulator sim((*data_)[1], 3, 2);
  testing::NodeRecord r = plant_window(5, 3, -3);
  const InitialWindow good{r.u.slice(-3, -1), r.y_neighbors.slice(-3, -1), r.y.slice(-3, -1)};
  EXPECT_NO_THROW(sim.simulate(good, r.u.slice(0, 1), r.y_neighbors.slice(0, 0)));
  r.y.set(-1, r.y.at(-1) + Eigen::VectorXd::Constant(1, 0.5));
  const InitialWindow bad{r.u.slice(-3, -1), r.y_neighbors.slice(-3, -1), r.y.slice(-3, -1)};
  EXPECT_THROW(sim.simulate(bad, r.u.slice(0, 1), r.y_neighbors.slice(0, 0)),
               InconsistentInitializationError);
  EXPECT_GT(sim.residual(bad, r.u.slice(0, 1), r.y_neighbors.slice(0, 0)), 1e-8);
}

// Any alpha solving the initial-window equations yields the same outputs.
TEST_F(BehaviorTest, OutputIndependentOfAlpha) {
  const DataSet& d = (*data_)[1];
  const int h = 4, depth = kLag + h, cols = d.length() - depth + 1;
  const Eigen::MatrixXd hu = build_hankel(d.u, depth).entries;
  const Eigen::MatrixXd hyn = build_hankel(d.y_neighbors.slice(0, d.length() - 2), depth - 1).entries;
  const Eigen::MatrixXd hy = build_hankel(d.y, depth).entries;
  ASSERT_EQ(hyn.cols(), cols);
  Eigen::MatrixXd lhs(hu.rows() + hyn.rows() + kLag, cols);
  lhs << hu, hyn, hy.topRows(kLag);
  const Eigen::MatrixXd null = left_null_space(lhs.transpose(), 1e-10);
  ASSERT_GT(null.cols(), 0);
  const DataDrivenSimulator sim(d, kLag, kHorizon + 1);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const testing::NodeRecord r = plant_window(h + kLag, seed, -kLag);
    Eigen::VectorXd rhs(lhs.rows());
    rhs << r.u.stacked(), r.y_neighbors.slice(-kLag, h - 2).stacked(), r.y.slice(-kLag, -1).stacked();
    const Eigen::VectorXd a0 = pseudo_inverse(lhs) * rhs;
    Eigen::VectorXd v(null.cols());
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = g(rng);
    const Eigen::VectorXd a1 = a0 + null * v;
    ASSERT_LT((lhs * a1 - rhs).norm(), 1e-8);
    const Eigen::VectorXd y0 = hy.bottomRows(h) * a0, y1 = hy.bottomRows(h) * a1;
    EXPECT_LT((y0 - y1).norm(), 1e-8 * std::max(1.0, y0.norm()));
    const Trajectory ys = sim.simulate(init_of(r), r.u.slice(0, h - 1), r.y_neighbors.slice(0, h - 2));
    EXPECT_LT((ys.stacked() - y0).norm(), 1e-8 * std::max(1.0, y0.norm()));
  }
}

TEST_F(BehaviorTest, SimulationIsLinear) {
  const DataDrivenSimulator sim((*data_)[1], kLag, kHorizon + 1);
  const testing::NodeRecord a = plant_window(5 + kLag, 1, -kLag);
  const testing::NodeRecord b = plant_window(5 + kLag, 2, -kLag);
  const double ca = 0.7, cb = -1.3;
  auto combine = [&](const Trajectory& x, const Trajectory& y) {
    return Trajectory(ca * x.samples() + cb * y.samples(), x.start_index());
  };
  const testing::NodeRecord c{combine(a.u, b.u), combine(a.y_neighbors, b.y_neighbors),
                              combine(a.y, b.y)};
  auto run = [&](const testing::NodeRecord& r) {
    return sim.simulate(init_of(r), r.u.slice(0, 4), r.y_neighbors.slice(0, 3)).samples();
  };
  EXPECT_LT((run(c) - ca * run(a) - cb * run(b)).norm(), 1e-8);
}

TEST_F(BehaviorTest, HorizonConsistency) {
  const DataDrivenSimulator sim((*data_)[1], kLag, kHorizon + 1);
  for (int h = 2; h <= kHorizon + 1; ++h) {
    const testing::NodeRecord r = plant_window(h + kLag, 10 + h, -kLag);
    const Trajectory full = sim.simulate(init_of(r), r.u.slice(0, h - 1), r.y_neighbors.slice(0, h - 2));
    const Trajectory part =
        sim.simulate(init_of(r), r.u.slice(0, h - 2), r.y_neighbors.slice(0, h - 3));
    // Own outputs over [-n, h-2] from the window and the shorter run.
    Trajectory y = r.y.slice(-kLag, -1);
    for (int k = 0; k <= h - 2; ++k) y.push_back(part.at(k));
    const InitialWindow shifted{r.u.slice(h - 1 - kLag, h - 2).reindexed(-kLag),
                                r.y_neighbors.slice(h - 1 - kLag, h - 2).reindexed(-kLag),
                                y.slice(h - 1 - kLag, h - 2).reindexed(-kLag)};
    const Trajectory last = sim.simulate(shifted, r.u.slice(h - 1, h - 1).reindexed(0),
                                         Trajectory::zeros(2, 0));
    EXPECT_LT((last.at(0) - full.at(h - 1)).norm(), 1e-8) << "horizon " << h;
    EXPECT_LT((part.samples() - full.slice(0, h - 2).samples()).norm(), 1e-8);
  }
}

}  // namespace
}  // namespace ddmpc
