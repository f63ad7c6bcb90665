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

// Synchronous distributed closed loop: bootstrap, message exchange, logging
// and the post-hoc diagnostics computed from a finished run.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ddmpc/agent.hpp"
#include "ddmpc/plant.hpp"
#include "ddmpc/signals.hpp"
#include "ddmpc/solvers/qcqp.hpp"

namespace ddmpc {

/// In-process mailbox with one slot per directed edge (j, i).
class MessageBus {
 public:
  MessageBus() = default;
  explicit MessageBus(const CouplingGraph& graph);

  void begin_round();
  /// Delivers `values` to every node that has `from` as a neighbor.
  void send(int from, const Trajectory& values);
  /// Throws if any edge carried a number of messages other than one.
  void end_round();
  /// Stacked messages of the neighbors of i in ascending id order.
  NeighborTrajectory collect(int i) const;

  int rounds() const { return rounds_; }
  long total_messages() const { return total_; }
  int num_edges() const { return static_cast<int>(count_.size()); }

 private:
  CouplingGraph graph_;
  std::map<std::pair<int, int>, Trajectory> mailbox_;
  std::map<std::pair<int, int>, int> count_;
  std::vector<std::vector<int>> receivers_;
  bool open_ = false;
  int rounds_ = 0;
  long total_ = 0;
};

/// Initial measurements over [-n, -1] for every node.
struct InitialHistory {
  std::vector<Trajectory> u;
  std::vector<Trajectory> y;
};

InitialHistory initial_history_from_pre_run(const PreRunHistory& pre);

/// Per-component uniform sampling of initial states with rejection of nodes
/// the decoupled model cannot bring to rest within `steps` inputs of size at
/// most `input_bound`. Neighbor outputs are ignored by the test, so a bound
/// below the true box leaves room for the coupling.
struct InitialStateSampling {
  Eigen::VectorXd range;  // per state component; a single entry is broadcast
  int steps = 3;
  double input_bound = 1.6;
  int max_tries = 10000;
};

bool steerable_to_rest(const SubsystemModel& model, const Eigen::VectorXd& x0, int steps,
                       double input_bound);

std::vector<Eigen::VectorXd> sample_initial_states(const NetworkModel& model,
                                                   const InitialStateSampling& sampling,
                                                   std::uint64_t seed);

/// Candidate trajectories at t = 0 and the messages that seed the first solve.
struct BootstrapResult {
  std::vector<Trajectory> u;  // [-n, L-1]
  std::vector<Trajectory> y;  // [-n, L-1]
  std::vector<NeighborTrajectory> messages;
  std::vector<ConsistencyReference> references;
  double cost = 0.0;
};

enum class BootstrapMode { kCentralized, kFile };

/// Joint program over all agents with neighbor outputs shared as variables.
/// Consistency constraints are absent and terminal sets use level theta*eps.
BootstrapResult bootstrap_centralized(const std::vector<AgentConfig>& agents,
                                      const CouplingGraph& graph, const InitialHistory& history,
                                      const solvers::QcqpBackend& backend);

/// Derives messages and references from candidate trajectories and checks
/// every local constraint with the given tolerance.
BootstrapResult bootstrap_from_candidates(const std::vector<AgentConfig>& agents,
                                          const CouplingGraph& graph,
                                          const InitialHistory& history,
                                          std::vector<Trajectory> u, std::vector<Trajectory> y,
                                          double tol = 1e-6);

void write_bootstrap(const std::string& path, const BootstrapResult& boot);
BootstrapResult read_bootstrap(const std::string& path, const std::vector<AgentConfig>& agents,
                               const CouplingGraph& graph, const InitialHistory& history);

struct StepRecord {
  int t = 0;
  int agent = 0;
  Eigen::VectorXd u;       // applied input
  Eigen::VectorXd y;       // measured output
  Eigen::VectorXd x_true;  // plant state at t, oracle only
  Eigen::VectorXd xi;      // measured extended state at t
  double cost_local = 0.0;
  std::string status;
  int solver_iterations = 0;
  bool recheck_passed = false;
  double min_consistency_margin = 0.0;
  // Slack of the candidate in the consistency constraints minus Omega.
  double candidate_slack_error = 0.0;
  double candidate_cost = 0.0;
  // Largest constraint violation of the candidate (nonpositive if feasible).
  double candidate_violation = 0.0;
  double prediction_error = 0.0;  // |y_t - y*_0(t)|
  // Deviation between the candidate built at t+1 and the solution at t.
  double xi_deviation = 0.0;
  double y_deviation = 0.0;
  double terminal_value = 0.0;
  Trajectory u_star;
  Trajectory y_star;
  Eigen::VectorXd xi_L;
};

struct ClosedLoopLog {
  int num_agents = 0;
  int steps = 0;
  std::vector<StepRecord> records;  // t-major, agent-minor
  std::vector<double> global_cost;
  std::vector<double> xi_norm;  // norm of the stacked global extended state
  long messages = 0;

  const StepRecord& at(int t, int agent) const;
  void write_csv(const std::string& path) const;
};

struct RunSettings {
  int steps = 10;
  int threads = 1;
  double recheck_tol = 1e-6;
};

/// Runs the closed loop from the bootstrap candidates. Any local
/// infeasibility is rethrown as MpcInfeasibleError carrying the step.
ClosedLoopLog run_closed_loop(NetworkModel& plant, const std::vector<AgentConfig>& agents,
                              const InitialHistory& history, const BootstrapResult& boot,
                              MessageBus& bus, const solvers::QcqpBackend& backend,
                              const RunSettings& settings);

double compute_global_cost(const ClosedLoopLog& log, int t);

struct DeviationBound {
  int agent = 0;
  double max_xi_deviation = 0.0;
  double max_y_deviation = 0.0;
  double threshold = 0.0;  // (1 - sqrt(theta)) sqrt(eps)
  bool certified = false;
};

std::vector<DeviationBound> estimate_deviation_bounds(const ClosedLoopLog& log,
                                                      const std::vector<AgentConfig>& agents);

/// Least-squares fit V* ~ c |xi|^2 through the origin over logged steps.
struct CostBoundFit {
  double c_fit = 0.0;
  double c_max = 0.0;  // max V*/|xi|^2 over steps with |xi| > 0
  int samples = 0;
};

CostBoundFit fit_cost_bound(const ClosedLoopLog& log);

}  // namespace ddmpc
