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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ddmpc/signals.hpp"

namespace ddmpc {

/// x+ = A x + B u + sum_j coupling[j] y_j,  y = C x + D u.
struct SubsystemModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  Eigen::MatrixXd D;
  std::map<int, Eigen::MatrixXd> coupling;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int p() const { return static_cast<int>(C.rows()); }
  void validate() const;
};

/// Directed coupling graph on nodes 0..size-1. Node i receives outputs from
/// every j in neighbors(i).
class CouplingGraph {
 public:
  CouplingGraph() = default;
  explicit CouplingGraph(std::vector<std::vector<int>> neighbor_sets);

  /// Bidirectional path 0 - 1 - ... - size-1.
  static CouplingGraph chain(int size);

  int size() const { return static_cast<int>(neighbors_.size()); }
  const std::vector<int>& neighbors(int i) const { return neighbors_.at(i); }
  /// Directed edges (j, i) with j in neighbors(i).
  std::vector<std::pair<int, int>> edges() const;

  bool operator==(const CouplingGraph& other) const { return neighbors_ == other.neighbors_; }

 private:
  std::vector<std::vector<int>> neighbors_;
};

/// Assembled global LTI system of the whole network.
struct GlobalSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  Eigen::MatrixXd D;
};

class NetworkModel {
 public:
  NetworkModel() = default;
  NetworkModel(CouplingGraph graph, std::vector<SubsystemModel> subsystems);

  int size() const { return graph_.size(); }
  const CouplingGraph& graph() const { return graph_; }
  const SubsystemModel& subsystem(int i) const { return subsystems_.at(i); }
  const std::vector<Eigen::VectorXd>& states() const { return states_; }
  void set_state(int i, const Eigen::VectorXd& x);
  void set_states(const std::vector<Eigen::VectorXd>& x);

  /// y_t for every node at the current state.
  std::vector<Eigen::VectorXd> outputs(const std::vector<Eigen::VectorXd>& inputs) const;

  /// Stacked outputs of the neighbors of node i, ascending neighbor id.
  Eigen::VectorXd neighbor_outputs(int i, const std::vector<Eigen::VectorXd>& outputs) const;
  int neighbor_output_dim(int i) const;

  GlobalSystem global_system() const;

 private:
  CouplingGraph graph_;
  std::vector<SubsystemModel> subsystems_;
  std::vector<Eigen::VectorXd> states_;
};

/// Computes all outputs at time t, then advances every state. Returns the
/// outputs at time t.
std::vector<Eigen::VectorXd> step_network(NetworkModel& model,
                                          const std::vector<Eigen::VectorXd>& inputs);

/// Recorded input, own output and stacked neighbor output of one node.
struct DataSet {
  Trajectory u;
  Trajectory y;
  Trajectory y_neighbors;

  int length() const { return u.length(); }
  void validate() const;
};

void write_dataset_csv(const std::string& path, const DataSet& data);
DataSet read_dataset_csv(const std::string& path);

/// Box-shaped excitation / input constraint set.
struct InputBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static InputBox symmetric(int m, double bound);
  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Eigen::VectorXd& u, double tol = 0.0) const;
};

/// Excitation order L + 1 + 2n on the stacked [u; y_neighbors] signal.
int required_excitation_order(int horizon, int lag);

struct DataCollection {
  std::vector<DataSet> data;
  std::uint64_t seed_used = 0;
  int attempts = 0;
};

/// Runs the network from a random state in [-1, 1]^n per node under i.i.d.
/// uniform inputs and records one data set per node. Retries with seed + 1
/// while any node fails the excitation test.
DataCollection collect_data(const NetworkModel& model, int length,
                            const std::vector<InputBox>& excitation, std::uint64_t seed,
                            int excitation_order, int retry_cap = 10,
                            double rank_tol = 1e-9);

struct ExtendedState {
  Eigen::VectorXd u_window;
  Eigen::VectorXd y_neighbors_window;
  Eigen::VectorXd y_window;

  Eigen::VectorXd stacked() const;
  int dim() const {
    return static_cast<int>(u_window.size() + y_neighbors_window.size() + y_window.size());
  }
};

/// Windows over [t - n, t - 1] of the three histories.
ExtendedState extended_state_from_history(const Trajectory& u, const Trajectory& y_neighbors,
                                          const Trajectory& y, int t, int n);

struct StructuralReport {
  std::vector<bool> controllable;
  bool observable = false;

  bool all_pass() const;
};

StructuralReport verify_structural_assumptions(const NetworkModel& model);

/// Matrix Delta with y_t = Delta [xi_t; u_t] for node i, derived from the
/// model through the local observability matrix. Needs (A_ii, C_ii)
/// observable in n steps. Used only by tests and verification tools.
Eigen::MatrixXd true_output_map(const NetworkModel& model, int i, int n);

/// Mass-spring-damper chain node discretized with step dt.
struct ChainParameters {
  int size = 64;
  double mass = 1.0;
  double damping = 0.75;
  double spring = 1.25;
  double dt = 0.2;
  /// Multiplies the coupling blocks only; the local spring term keeps the
  /// unscaled stiffness. Zero drops the coupling blocks and the graph edges.
  double coupling_scale = 1.0;
};

SubsystemModel mass_spring_subsystem(double mass, double damping,
                                     const std::map<int, double>& springs, double dt,
                                     double coupling_scale = 1.0);
NetworkModel make_chain_network(const ChainParameters& params);

/// Measurements over [-n, -1] of every node.
struct PreRunHistory {
  std::vector<Trajectory> u;
  std::vector<Trajectory> y;
  std::vector<Trajectory> y_neighbors;
};

/// Places the network so that it reaches `x0` at time 0 after n steps of the
/// held input, by inverting the global dynamics. The model is left at x0.
PreRunHistory rewind_pre_run(NetworkModel& model, const std::vector<Eigen::VectorXd>& x0,
                             int n, const std::vector<Eigen::VectorXd>& held_input);

}  // namespace ddmpc
