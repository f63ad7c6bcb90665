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

#pragma once

#include <map>

#include <Eigen/Dense>

#include "ddmpc/plant.hpp"
#include "ddmpc/signals.hpp"

namespace ddmpc {

/// Hankel blocks H_D(u), H_{D-1}(y_neighbors over [0, N-2]), H_D(y) of one
/// node's data, stacked for trajectory membership tests of length D.
class BehavioralPredictor {
 public:
  BehavioralPredictor(const DataSet& data, int depth, double rank_tol = 1e-9);

  int depth() const { return depth_; }
  int m() const { return m_; }
  int p() const { return p_; }
  int q() const { return q_; }
  int num_columns() const { return static_cast<int>(stacked_.cols()); }

  const HankelMatrix& H_u() const { return h_u_; }
  const HankelMatrix& H_yn() const { return h_yn_; }
  const HankelMatrix& H_y() const { return h_y_; }
  /// [H_u; H_yn; H_y].
  const Eigen::MatrixXd& stacked() const { return stacked_; }
  /// Orthonormal N with N' stacked() = 0. A stacked window w = (u; yn; y)
  /// is a system trajectory iff N' w = 0.
  const Eigen::MatrixXd& left_null_basis() const { return left_null_; }

  /// Minimum-norm alpha with stacked() alpha closest to w.
  Eigen::VectorXd min_norm_alpha(const Eigen::VectorXd& w) const { return pinv_ * w; }

  /// (u; yn; y) window vector in the row order of stacked().
  Eigen::VectorXd window(const Trajectory& u, const Trajectory& y_n, const Trajectory& y) const;

 private:
  int depth_, m_, p_, q_;
  HankelMatrix h_u_, h_yn_, h_y_;
  Eigen::MatrixXd stacked_;
  Eigen::MatrixXd pinv_;
  Eigen::MatrixXd left_null_;
};

struct TrajectoryCheck {
  bool is_trajectory = false;
  Eigen::VectorXd alpha;
  double residual = 0.0;
};

/// Least-squares test of u (length D), y_n (length D-1), y (length D) against
/// the predictor's Hankel data.
TrajectoryCheck check_trajectory(const BehavioralPredictor& pred, const Trajectory& u,
                                 const Trajectory& y_n, const Trajectory& y, double tol);

/// Inputs, neighbor outputs and outputs over [-n, -1].
struct InitialWindow {
  Trajectory u;
  Trajectory y_neighbors;
  Trajectory y;
};

/// Model-free output simulation from an initial window, precomputed for
/// horizons 1..max_horizon.
class DataDrivenSimulator {
 public:
  DataDrivenSimulator(const DataSet& data, int lag, int max_horizon, double residual_tol = 1e-8);

  int lag() const { return n_; }
  int max_horizon() const { return max_horizon_; }

  /// Outputs over the index range of new_u. new_u has length H and
  /// new_y_n length H - 1. Throws InconsistentInitializationError when the
  /// initial window is not reproducible by the data.
  Trajectory simulate(const InitialWindow& init, const Trajectory& new_u,
                      const Trajectory& new_y_n) const;

  /// Residual of the alpha system for the given inputs (no throw).
  double residual(const InitialWindow& init, const Trajectory& new_u,
                  const Trajectory& new_y_n) const;

 private:
  struct Horizon {
    Eigen::MatrixXd gain;      // outputs = gain * rhs
    Eigen::MatrixXd residual;  // (lhs lhs^+ - I)
  };
  Eigen::VectorXd rhs(const InitialWindow& init, const Trajectory& new_u,
                      const Trajectory& new_y_n) const;
  const Horizon& horizon(int h) const;

  int n_, max_horizon_, m_, p_, q_;
  double residual_tol_;
  std::map<int, Horizon> horizons_;
};

/// Free-function form of DataDrivenSimulator::simulate.
Trajectory datadriven_simulate(const DataDrivenSimulator& sim, const InitialWindow& init,
                               const Trajectory& new_u, const Trajectory& new_y_n);

}  // namespace ddmpc
