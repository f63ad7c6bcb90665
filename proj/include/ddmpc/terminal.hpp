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

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddmpc/behavior.hpp"
#include "ddmpc/plant.hpp"
#include "ddmpc/solvers/lmi.hpp"

namespace ddmpc {

/// Signal dimensions of one node and its extended state layout
/// xi = (u window, neighbor output window, own output window).
struct NodeDims {
  int m = 1;
  int p = 1;
  int q = 0;  // stacked neighbor output dimension
  int n = 1;  // lag

  int xi_dim() const { return n * (m + q + p); }
  int u_offset() const { return 0; }
  int yn_offset() const { return n * m; }
  int y_offset() const { return n * (m + q); }
};

/// Known part of the extended-state recursion
/// xi+ = A_bar xi + B_u u + B_yn y_neighbors + B_w w, w = y_t.
struct ShiftStructure {
  NodeDims dims;
  Eigen::MatrixXd A_bar;
  Eigen::MatrixXd B_u;
  Eigen::MatrixXd B_yn;
  Eigen::MatrixXd B_w;
  /// Selects the most recent own output sample of xi.
  Eigen::MatrixXd T_y;
};

ShiftStructure build_shift_structure(const NodeDims& dims);

struct SynthesisData {
  Eigen::MatrixXd Xi;
  Eigen::MatrixXd Xi_plus;
  Eigen::MatrixXd U;
  Eigen::MatrixXd Y_n;
  Eigen::MatrixXd Z;
  Eigen::MatrixXd M_res;
};

SynthesisData build_synthesis_data(const DataSet& data, const ShiftStructure& shift);

/// Quadratic multiplier of the uncertainty channel built from Z and M_res.
Eigen::MatrixXd build_uncertainty_multiplier(const SynthesisData& s, const ShiftStructure& shift);

/// Right-multiplies Z and M_res by V S^-1 from the thin SVD of Z. The data
/// consistent uncertainty set is unchanged and Z Z' becomes the identity.
SynthesisData whiten(const SynthesisData& s, double rel_tol = 1e-10);

struct SynthesisSettings {
  double margin = 1e-6;
  double tau_max = 1e4;
  bool whiten_data = true;
  // Lower bound c in P >= c I; nonpositive disables the bound.
  double p_floor = 1.0;
  // Required contraction of the sum of terminal cost and output penalty
  // under the terminal controller, in [0, 1).
  double decay = 0.3;
  solvers::LmiSettings lmi = default_lmi();

  static solvers::LmiSettings default_lmi() {
    solvers::LmiSettings s;
    s.gap_tol = 1e-6;
    return s;
  }
};

struct SynthesisResult {
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;
  Eigen::MatrixXd X;
  Eigen::MatrixXd M;
  double tau = 0.0;
  double trace_gamma = 0.0;
  /// Weighted decrease rate certified by the LMI solution.
  double eta_bar = 0.0;
  int newton_steps = 0;
};

/// Solves the terminal-ingredient LMIs (trace bound on Gamma, Schur block,
/// and the decrease LMI with multiplier) minimizing trace(Gamma).
SynthesisResult synthesize(const SynthesisData& s, const ShiftStructure& shift,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                           const solvers::LmiBackend& backend,
                           const SynthesisSettings& settings = {});

struct TerminalIngredients {
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;
  double epsilon = 1e-5;
  double eta = 0.0;
  double theta = 0.5;

  int xi_dim() const { return static_cast<int>(P.rows()); }
  int m() const { return static_cast<int>(K.rows()); }
  void validate() const;
};

void write_ingredients(const std::string& path, const TerminalIngredients& ing);
TerminalIngredients read_ingredients(const std::string& path);

struct CalibrationSettings {
  double epsilon_target = 1e-5;
  double theta_floor = 0.5;
  /// Used instead of the computed tightening when positive.
  double theta_override = -1.0;
  int samples = 1000;
  std::uint64_t seed = 7;
  double epsilon_shrink = 0.5;
  int max_shrink_steps = 60;
  /// Neighbor output magnitudes tried, relative to |xi|_inf.
  std::vector<double> coupling_ratios = {0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1e-1, 1.0};
};

struct CalibrationReport {
  TerminalIngredients ingredients;
  int epsilon_shrink_steps = 0;
  /// Largest ellipsoid support of |K_j xi| relative to the input bound.
  double input_usage = 0.0;
  /// Largest neighbor output ratio for which every sampled coupled decrease
  /// held, -1 if none did.
  double max_coupling_ratio = -1.0;
  double worst_uncoupled_residual = 0.0;
};

/// Worst-case |K_j xi| over {xi' P xi <= epsilon} for row j.
Eigen::VectorXd ellipsoid_input_support(const Eigen::MatrixXd& P, const Eigen::MatrixXd& K,
                                        double epsilon);

/// Sets epsilon, eta and theta from a synthesized (P, K) and validates input
/// feasibility and the coupled decrease by sampling, with outputs predicted
/// by the data-driven simulator (no model access).
CalibrationReport calibrate(const SynthesisResult& synth, const ShiftStructure& shift,
                            const InputBox& box, const DataDrivenSimulator& sim,
                            const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                            const CalibrationSettings& settings = {});

/// A_bar + B_u K + B_w (Delta_xi + Delta_u K) for a known output map Delta.
Eigen::MatrixXd closed_loop_matrix(const ShiftStructure& shift, const Eigen::MatrixXd& delta,
                                   const Eigen::MatrixXd& K);

/// Splits a stacked extended state into the windows over [-n, -1].
InitialWindow window_from_xi(const NodeDims& dims, const Eigen::VectorXd& xi);
Eigen::VectorXd xi_from_window(const InitialWindow& w);

}  // namespace ddmpc
