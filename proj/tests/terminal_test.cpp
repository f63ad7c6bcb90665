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

#include "ddmpc/terminal.hpp"

#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "ddmpc/errors.hpp"
#include "ddmpc/linalg.hpp"
#include "ddmpc/solvers/lmi.hpp"
#include "test_support.hpp"

namespace ddmpc {
namespace {

constexpr int kLag = 2;

class TerminalTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new ExperimentConfig(testing::chain_config(3));
    net_ = new NetworkModel(cfg_->build_network());
    data_ = new std::vector<DataSet>(generate_data(*cfg_, *net_).data);
    synth_ = new std::vector<SynthesisResult>();
    cal_ = new std::vector<CalibrationReport>();
    for (int i = 0; i < 2; ++i) {
      SynthesisResult s;
      cal_->push_back(synthesize_node(*cfg_, *net_, i, (*data_)[i], &s));
      synth_->push_back(s);
    }
  }
  static void TearDownTestSuite() {
    delete cfg_;
    delete net_;
    delete data_;
    delete synth_;
    delete cal_;
  }

  static ShiftStructure shift(int i) {
    return build_shift_structure(NodeDims{1, 1, net_->neighbor_output_dim(i), kLag});
  }

  // Uniform samples on the boundary of {xi' P xi <= level}.
  static std::vector<Eigen::VectorXd> ellipsoid_boundary(const Eigen::MatrixXd& P, double level,
                                                         int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    const Eigen::MatrixXd L = P.llt().matrixL();
    std::vector<Eigen::VectorXd> out;
    for (int k = 0; k < count; ++k) {
      Eigen::VectorXd s(P.rows());
      for (Eigen::Index r = 0; r < s.size(); ++r) s(r) = g(rng);
      s *= std::sqrt(level) / s.norm();
      out.push_back(L.transpose().triangularView<Eigen::Upper>().solve(s));
    }
    return out;
  }

  static ExperimentConfig* cfg_;
  static NetworkModel* net_;
  static std::vector<DataSet>* data_;
  static std::vector<SynthesisResult>* synth_;
  static std::vector<CalibrationReport>* cal_;
};

ExperimentConfig* TerminalTest::cfg_ = nullptr;
NetworkModel* TerminalTest::net_ = nullptr;
std::vector<DataSet>* TerminalTest::data_ = nullptr;
std::vector<SynthesisResult>* TerminalTest::synth_ = nullptr;
std::vector<CalibrationReport>* TerminalTest::cal_ = nullptr;

GTEST_TEST(ShiftStructureTest, ShiftBlocksAreZeroOrIdentity) {
  const NodeDims dims{1, 1, 2, 3};
  const ShiftStructure s = build_shift_structure(dims);
  ASSERT_EQ(s.A_bar.rows(), dims.xi_dim());
  for (Eigen::Index r = 0; r < s.A_bar.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.A_bar.cols(); ++c) {
      EXPECT_TRUE(s.A_bar(r, c) == 0.0 || s.A_bar(r, c) == 1.0);
    }
  }
  // Shifting a window moves every sample one slot towards the past.
  Eigen::VectorXd xi = Eigen::VectorXd::LinSpaced(dims.xi_dim(), 1, dims.xi_dim());
  const Eigen::VectorXd next = s.A_bar * xi;
  EXPECT_EQ(next(0), xi(1));
  EXPECT_EQ(next(2), 0.0);
  EXPECT_EQ(next(dims.yn_offset()), xi(dims.yn_offset() + 2));
}

GTEST_TEST(ShiftStructureTest, NeighborOutputsEnterLastSlot) {
  const NodeDims dims{1, 1, 2, 2};
  const ShiftStructure s = build_shift_structure(dims);
  const Eigen::VectorXd e = s.B_yn * Eigen::Vector2d(3.0, 4.0);
  EXPECT_EQ(e(dims.yn_offset() + 2), 3.0);
  EXPECT_EQ(e(dims.yn_offset() + 3), 4.0);
  EXPECT_EQ(e.norm(), 5.0);
  EXPECT_EQ((s.T_y * s.B_w), Eigen::MatrixXd::Identity(1, 1));
}

TEST_F(TerminalTest, ZeroDataGivesZeroMatrices) {
  DataSet d;
  d.u = Trajectory::zeros(1, 20);
  d.y = Trajectory::zeros(1, 20);
  d.y_neighbors = Trajectory::zeros(2, 20);
  const ShiftStructure sh = shift(1);
  const SynthesisData s = build_synthesis_data(d, sh);
  EXPECT_EQ(s.Xi.cols(), 20 - kLag);
  EXPECT_EQ(s.Z.norm(), 0.0);
  EXPECT_EQ(s.M_res.norm(), 0.0);
  EXPECT_EQ(build_uncertainty_multiplier(s, sh).norm(), 0.0);
}

TEST_F(TerminalTest, ResidualLivesInUnknownRows) {
  for (int i = 0; i < 2; ++i) {
    const ShiftStructure sh = shift(i);
    const SynthesisData s = build_synthesis_data((*data_)[i], sh);
    EXPECT_EQ(s.Xi.cols(), 100 - kLag);
    const Eigen::MatrixXd outside = s.M_res - sh.B_w * (sh.B_w.transpose() * s.M_res);
    EXPECT_LT(outside.norm(), 1e-12);
    EXPECT_GT((sh.B_w.transpose() * s.M_res).norm(), 1e-3);
  }
}

TEST_F(TerminalTest, MultiplierIsSymmetric) {
  const ShiftStructure sh = shift(1);
  const Eigen::MatrixXd pbar = build_uncertainty_multiplier(build_synthesis_data((*data_)[1], sh), sh);
  EXPECT_LT((pbar - pbar.transpose()).norm(), 1e-12 * pbar.norm());
}

// With M = Delta Z the true Delta makes the multiplier's quadratic
// constraint tight; a perturbed Delta violates it.
TEST_F(TerminalTest, TrueOutputMapSatisfiesMultiplier) {
  for (int i = 0; i < 2; ++i) {
    const ShiftStructure sh = shift(i);
    const SynthesisData s = build_synthesis_data((*data_)[i], sh);
    const Eigen::MatrixXd pbar = build_uncertainty_multiplier(s, sh);
    const Eigen::MatrixXd delta = true_output_map(*net_, i, kLag);
    EXPECT_LT((delta * s.Z - sh.B_w.transpose() * s.M_res).norm(), 1e-9);
    auto form = [&](const Eigen::MatrixXd& d) {
      Eigen::MatrixXd w(sh.B_w.rows() + d.cols(), d.rows());
      w << sh.B_w, d.transpose();
      return Eigen::MatrixXd(w.transpose() * pbar * w);
    };
    EXPECT_LT(form(delta).norm(), 1e-8 * pbar.norm());
    Eigen::MatrixXd wrong = delta;
    wrong(0, 0) += 0.1;
    EXPECT_LT(max_eigenvalue(form(wrong)), -1e-6);
  }
}

TEST_F(TerminalTest, SynthesisGivesStableClosedLoop) {
  for (int i = 0; i < 2; ++i) {
    const SynthesisResult& s = (*synth_)[i];
    EXPECT_LT((s.P - s.P.transpose()).norm(), 1e-9 * s.P.norm());
    EXPECT_GT(min_eigenvalue(s.P), 0.0);
    EXPECT_GT(s.eta_bar, 0.0);
    const Eigen::MatrixXd acl = closed_loop_matrix(shift(i), true_output_map(*net_, i, kLag), s.K);
    EXPECT_LT(spectral_radius(acl), 1.0) << "node " << i;
  }
}

// |A xi|_P^2 - |xi|_P^2 + |T_y xi+|_Q^2 + |K xi|_R^2 <= -eta_bar |xi|_P^2
// for the true decoupled dynamics.
TEST_F(TerminalTest, DecreaseInequalityOnSamples) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  for (int i = 0; i < 2; ++i) {
    const SynthesisResult& s = (*synth_)[i];
    const ShiftStructure sh = shift(i);
    const Eigen::MatrixXd acl = closed_loop_matrix(sh, true_output_map(*net_, i, kLag), s.K);
    double worst = -1e300;
    for (int k = 0; k < 1000; ++k) {
      Eigen::VectorXd xi(s.P.rows());
      for (Eigen::Index r = 0; r < xi.size(); ++r) xi(r) = g(rng);
      xi /= std::sqrt(xi.dot(s.P * xi));
      const Eigen::VectorXd next = acl * xi;
      const Eigen::VectorXd y = sh.T_y * next;
      const Eigen::VectorXd u = s.K * xi;
      const double lhs = next.dot(s.P * next) - xi.dot(s.P * xi) + y.squaredNorm() + u.squaredNorm();
      worst = std::max(worst, lhs + s.eta_bar * xi.dot(s.P * xi));
    }
    EXPECT_LE(worst, 1e-8) << "node " << i;
  }
}

TEST_F(TerminalTest, ZeroGainClosedLoopIsOpenLoop) {
  const ShiftStructure sh = shift(1);
  const Eigen::MatrixXd delta = true_output_map(*net_, 1, kLag);
  const Eigen::MatrixXd k0 = Eigen::MatrixXd::Zero(1, sh.dims.xi_dim());
  const Eigen::MatrixXd expected = sh.A_bar + sh.B_w * delta.leftCols(sh.dims.xi_dim());
  EXPECT_LT((closed_loop_matrix(sh, delta, k0) - expected).norm(), 1e-14);
}

TEST_F(TerminalTest, CalibrationSetsTighteningBounds) {
  for (const CalibrationReport& c : *cal_) {
    const TerminalIngredients& t = c.ingredients;
    EXPECT_DOUBLE_EQ(t.epsilon, 1e-5);
    EXPECT_GT(t.theta, 0.0);
    EXPECT_LT(t.theta, 1.0);
    EXPECT_GE(t.theta, 1.0 - t.eta / max_eigenvalue(t.P) - 1e-15);
    EXPECT_GT(t.eta, 0.0);
    EXPECT_LE(c.input_usage, 1.0);
  }
}

TEST_F(TerminalTest, InputSupportMatchesMaximizer) {
  for (const CalibrationReport& c : *cal_) {
    const TerminalIngredients& t = c.ingredients;
    const Eigen::VectorXd support = ellipsoid_input_support(t.P, t.K, t.epsilon);
    const Eigen::VectorXd dir = t.P.ldlt().solve(t.K.row(0).transpose());
    const Eigen::VectorXd xi = std::sqrt(t.epsilon / t.K.row(0).dot(dir)) * dir;
    EXPECT_NEAR(xi.dot(t.P * xi), t.epsilon, 1e-12);
    EXPECT_NEAR((t.K * xi)(0), support(0), 1e-9 * support(0));
    for (const Eigen::VectorXd& s : ellipsoid_boundary(t.P, t.epsilon, 1000, 3)) {
      EXPECT_LE(std::abs((t.K * s)(0)), support(0) * (1 + 1e-12));
      EXPECT_LE(std::abs((t.K * s)(0)), 2.0);
    }
  }
}

TEST_F(TerminalTest, TerminalSetMonotoneInTheta) {
  const TerminalIngredients& t = (*cal_)[1].ingredients;
  for (const Eigen::VectorXd& s : ellipsoid_boundary(t.P, 0.6 * t.epsilon, 200, 4)) {
    const double v = s.dot(t.P * s);
    for (double th : {0.6, 0.7, 0.9, 1.0}) EXPECT_LE(v, th * t.epsilon * (1 + 1e-12));
    EXPECT_GT(v, 0.5 * t.epsilon);
  }
}

TEST_F(TerminalTest, IngredientsRoundTrip) {
  const TerminalIngredients& t = (*cal_)[0].ingredients;
  const std::string path =
      (std::filesystem::temp_directory_path() / "ddmpc_terminal_test.txt").string();
  write_ingredients(path, t);
  const TerminalIngredients back = read_ingredients(path);
  EXPECT_EQ(back.P, t.P);
  EXPECT_EQ(back.K, t.K);
  EXPECT_EQ(back.epsilon, t.epsilon);
  EXPECT_EQ(back.eta, t.eta);
  EXPECT_EQ(back.theta, t.theta);
  std::filesystem::remove(path);
}

GTEST_TEST(TerminalIngredientsTest, ValidateRejectsBadValues) {
  TerminalIngredients t;
  t.P = Eigen::MatrixXd::Identity(2, 2);
  t.K = Eigen::MatrixXd::Zero(1, 2);
  t.eta = 0.1;
  t.theta = 0.95;
  EXPECT_NO_THROW(t.validate());
  TerminalIngredients bad = t;
  bad.theta = 1.5;
  EXPECT_THROW(bad.validate(), Error);
  bad = t;
  bad.P(1, 1) = -1.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = t;
  bad.epsilon = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}

}  // namespace
}  // namespace ddmpc
