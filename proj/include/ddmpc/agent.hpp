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

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ddmpc/behavior.hpp"
#include "ddmpc/plant.hpp"
#include "ddmpc/signals.hpp"
#include "ddmpc/solvers/assembly.hpp"
#include "ddmpc/solvers/qcqp.hpp"
#include "ddmpc/terminal.hpp"

namespace ddmpc {

struct AgentConfig {
  int id = 0;
  int L = 5;
  NodeDims dims;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  double omega = 0.0;
  InputBox u_box;
  TerminalIngredients terminal;
  std::shared_ptr<const BehavioralPredictor> predictor;  // depth L + n
  std::shared_ptr<const DataDrivenSimulator> simulator;  // horizons 1..L + 1

  int n() const { return dims.n; }
  void validate() const;
};

AgentConfig make_agent_config(int id, const DataSet& data, int L, int n, const Eigen::MatrixXd& Q,
                              const Eigen::MatrixXd& R, double omega, const InputBox& box,
                              const TerminalIngredients& terminal);

/// Stacked neighbor output predictions as sent at the previous step, i.e.
/// the sender-relative window [-n+1, L]. received() reindexes it to the
/// receiver's current step, [-n, L-1].
struct NeighborTrajectory {
  Trajectory values;

  Trajectory received() const { return values.reindexed(values.start_index() - 1); }
};

/// Measured inputs and outputs over [-n, -1] relative to the solve time.
struct LocalHistory {
  Trajectory u;
  Trajectory y;
};

/// Candidate and previous-solution trajectories of the consistency
/// constraints. u_prev(k) and y_prev(k) hold the previous optimal values
/// at k + 1, so all four are indexed over [0, L-1].
struct ConsistencyReference {
  Trajectory u_hat;
  Trajectory y_hat;
  Trajectory u_prev;
  Trajectory y_prev;
};

struct MpcSolution {
  Eigen::VectorXd alpha;
  Trajectory u_star;  // [-n, L-1]
  Trajectory y_star;  // [-n, L-1]
  Eigen::VectorXd xi_L;
  double cost = 0.0;
  bool extended = false;
  Eigen::VectorXd u_ext;
  Eigen::VectorXd y_ext;
  int iterations = 0;
};

/// Constraint values of a plugged-in trajectory. Violations are positive
/// when a constraint fails; the terminal entry is scaled by theta * epsilon.
struct ConstraintReport {
  std::vector<std::pair<std::string, double>> violations;
  double hankel_residual = 0.0;
  double terminal_value = 0.0;  // |xi_L|_P^2
  double cost = 0.0;
  double min_consistency_margin = 0.0;
  Eigen::VectorXd xi_L;
  Eigen::VectorXd alpha;

  double worst_violation() const;
  std::string worst_constraint() const;
};

/// Evaluates every constraint of the local problem at (u, y) over [-n, L-1].
/// A null reference skips the consistency constraints.
ConstraintReport evaluate_local_constraints(const AgentConfig& cfg, const LocalHistory& history,
                                            const NeighborTrajectory& msg,
                                            const ConsistencyReference* reference,
                                            const Trajectory& u, const Trajectory& y);

/// Independent certification of a returned solution: recomputes alpha, the
/// pinned window, input bounds, terminal level, consistency and the cost.
bool recheck_solution(const AgentConfig& cfg, const LocalHistory& history,
                      const NeighborTrajectory& msg, const ConsistencyReference* reference,
                      const MpcSolution& sol, double tol, ConstraintReport* report = nullptr);

/// Signals of one agent's local problem inside a (possibly joint) QCQP.
/// u, y over [-n, L-1]; y_neighbors over [-n, L-1] (the Hankel constraint
/// uses [-n, L-2], the terminal state [L-n, L-1]).
struct LocalSignals {
  solvers::AffineSignal u;
  solvers::AffineSignal y_neighbors;
  solvers::AffineSignal y;
};

/// Adds objective, Hankel, input, terminal and (if reference is non-null)
/// consistency terms of one agent.
void add_local_problem(solvers::QcqpAssembler& qp, const AgentConfig& cfg,
                       const LocalSignals& sig, const ConsistencyReference* reference);

MpcSolution solve_local_mpc(const AgentConfig& cfg, const LocalHistory& history,
                            const NeighborTrajectory& msg, const ConsistencyReference& reference,
                            const solvers::QcqpBackend& backend);

/// Terminal controller input and simulated output one step past the horizon.
MpcSolution extend(const AgentConfig& cfg, const MpcSolution& sol, const NeighborTrajectory& msg);

/// The trajectory a node transmits after extending: y* over [-n+1, L].
Trajectory outgoing_message(const AgentConfig& cfg, const MpcSolution& sol);

struct Candidate {
  ConsistencyReference reference;
  Trajectory u;  // [-n, L-1]
  Trajectory y;  // [-n, L-1]
  Eigen::VectorXd xi_hat_L_minus_1;
};

/// Shifted candidate at the new step from the previous extended solution,
/// the newly received neighbor message and the measured outputs over
/// [-n, -1] (relative to the new step).
Candidate build_candidate(const AgentConfig& cfg, const MpcSolution& prev,
                          const NeighborTrajectory& new_msg, const Trajectory& measured_y);

}  // namespace ddmpc
