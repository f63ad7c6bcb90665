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

#include "ddmpc/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ddmpc/errors.hpp"
#include "ddmpc/linalg.hpp"

namespace ddmpc {

namespace {

using solvers::AffineSignal;

// Samples of a followed by samples of b, starting at a's start index.
Trajectory join(const Trajectory& a, const Trajectory& b) {
  if (a.dim() != b.dim()) throw DimensionError("cannot join trajectories of different dims");
  Eigen::MatrixXd data(a.dim(), a.length() + b.length());
  data << a.samples(), b.samples();
  return Trajectory(std::move(data), a.start_index());
}

Trajectory single(const Eigen::VectorXd& v, int index) {
  return Trajectory(Eigen::MatrixXd(v), index);
}

Eigen::MatrixXd block_diag(const Eigen::MatrixXd& w, int copies) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(w.rows() * copies, w.cols() * copies);
  for (int k = 0; k < copies; ++k) out.block(k * w.rows(), k * w.cols(), w.rows(), w.cols()) = w;
  return out;
}

Eigen::VectorXd terminal_state(const AgentConfig& cfg, const Trajectory& u,
                               const Trajectory& y_neighbors, const Trajectory& y) {
  const int L = cfg.L;
  const int n = cfg.n();
  ExtendedState xi;
  xi.u_window = u.slice(L - n, L - 1).stacked();
  xi.y_neighbors_window = y_neighbors.slice(L - n, L - 1).stacked();
  xi.y_window = y.slice(L - n, L - 1).stacked();
  return xi.stacked();
}

void check_message(const AgentConfig& cfg, const NeighborTrajectory& msg) {
  const Trajectory& v = msg.values;
  if (v.start_index() != -cfg.n() + 1 || v.length() != cfg.L + cfg.n() ||
      (cfg.dims.q > 0 && v.dim() != cfg.dims.q)) {
    std::ostringstream os;
    os << "agent " << cfg.id << ": neighbor message must cover [" << -cfg.n() + 1 << ", "
       << cfg.L << "] with dimension " << cfg.dims.q;
    throw DimensionError(os.str());
  }
}

}  // namespace

void AgentConfig::validate() const {
  if (omega < 0.0) throw ConfigError("Omega must be nonnegative");
  if (L <= dims.n) throw ConfigError("horizon L must exceed the lag n");
  if (Q.rows() != dims.p || R.rows() != dims.m || min_eigenvalue(Q) <= 0.0 ||
      min_eigenvalue(R) <= 0.0) {
    throw ConfigError("Q and R must be positive definite of matching size");
  }
  if (u_box.dim() != dims.m || ((u_box.upper - u_box.lower).array() < 0.0).any()) {
    throw ConfigError("input box must be nonempty with dimension m");
  }
  if (!predictor || predictor->depth() != L + dims.n) {
    throw ConfigError("predictor depth must be L + n");
  }
  if (!simulator || simulator->max_horizon() < L + 1) {
    throw ConfigError("simulator must cover horizons up to L + 1");
  }
  if (terminal.xi_dim() != dims.xi_dim() || terminal.m() != dims.m) {
    throw ConfigError("terminal ingredients do not match the extended state");
  }
}

AgentConfig make_agent_config(int id, const DataSet& data, int L, int n, const Eigen::MatrixXd& Q,
                              const Eigen::MatrixXd& R, double omega, const InputBox& box,
                              const TerminalIngredients& terminal) {
  AgentConfig cfg;
  cfg.id = id;
  cfg.L = L;
  cfg.dims = NodeDims{data.u.dim(), data.y.dim(), data.y_neighbors.dim(), n};
  cfg.Q = Q;
  cfg.R = R;
  cfg.omega = omega;
  cfg.u_box = box;
  cfg.terminal = terminal;
  cfg.predictor = std::make_shared<const BehavioralPredictor>(data, L + n);
  cfg.simulator = std::make_shared<const DataDrivenSimulator>(data, n, L + 1);
  cfg.validate();
  return cfg;
}

double ConstraintReport::worst_violation() const {
  double w = -std::numeric_limits<double>::infinity();
  for (const auto& v : violations) w = std::max(w, v.second);
  return w;
}

std::string ConstraintReport::worst_constraint() const {
  std::string name;
  double w = -std::numeric_limits<double>::infinity();
  for (const auto& v : violations) {
    if (v.second > w) {
      w = v.second;
      name = v.first;
    }
  }
  return name;
}

ConstraintReport evaluate_local_constraints(const AgentConfig& cfg, const LocalHistory& history,
                                            const NeighborTrajectory& msg,
                                            const ConsistencyReference* ref, const Trajectory& u,
                                            const Trajectory& y) {
  check_message(cfg, msg);
  const int L = cfg.L, n = cfg.n();
  const Trajectory recv = msg.received();
  ConstraintReport rep;
  rep.violations.emplace_back(
      "init_u", (u.slice(-n, -1).samples() - history.u.samples()).cwiseAbs().maxCoeff());
  rep.violations.emplace_back(
      "init_y", (y.slice(-n, -1).samples() - history.y.samples()).cwiseAbs().maxCoeff());

  const BehavioralPredictor& pred = *cfg.predictor;
  const Eigen::VectorXd w = pred.window(u, recv.slice(-n, L - 2), y);
  rep.alpha = pred.min_norm_alpha(w);
  rep.hankel_residual = (pred.stacked() * rep.alpha - w).norm();
  rep.violations.emplace_back("hankel", rep.hankel_residual / std::max(1.0, w.norm()));

  double box = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < L; ++k) {
    const Eigen::VectorXd uk = u.at(k);
    box = std::max(box, (uk - cfg.u_box.upper).maxCoeff());
    box = std::max(box, (cfg.u_box.lower - uk).maxCoeff());
  }
  rep.violations.emplace_back("input_box", box);

  const TerminalIngredients& term = cfg.terminal;
  rep.xi_L = terminal_state(cfg, u, recv, y);
  rep.terminal_value = rep.xi_L.dot(term.P * rep.xi_L);
  rep.violations.emplace_back("terminal", rep.terminal_value / (term.theta * term.epsilon) - 1.0);

  rep.cost = rep.terminal_value;
  for (int k = 0; k < L; ++k) {
    rep.cost += y.at(k).dot(cfg.Q * y.at(k)) + u.at(k).dot(cfg.R * u.at(k));
  }

  rep.min_consistency_margin = std::numeric_limits<double>::infinity();
  if (ref != nullptr) {
    double worst_u = -std::numeric_limits<double>::infinity();
    double worst_y = worst_u;
    for (int k = 0; k < L; ++k) {
      const double rhs_u = (ref->u_hat.at(k) - ref->u_prev.at(k)).squaredNorm() + cfg.omega;
      const double rhs_y = (ref->y_hat.at(k) - ref->y_prev.at(k)).squaredNorm() + cfg.omega;
      const double mu = rhs_u - (u.at(k) - ref->u_prev.at(k)).squaredNorm();
      const double my = rhs_y - (y.at(k) - ref->y_prev.at(k)).squaredNorm();
      worst_u = std::max(worst_u, -mu);
      worst_y = std::max(worst_y, -my);
      rep.min_consistency_margin = std::min({rep.min_consistency_margin, mu, my});
    }
    rep.violations.emplace_back("consistency_u", worst_u);
    rep.violations.emplace_back("consistency_y", worst_y);
  }
  return rep;
}

bool recheck_solution(const AgentConfig& cfg, const LocalHistory& history,
                      const NeighborTrajectory& msg, const ConsistencyReference* reference,
                      const MpcSolution& sol, double tol, ConstraintReport* report) {
  ConstraintReport rep =
      evaluate_local_constraints(cfg, history, msg, reference, sol.u_star, sol.y_star);
  bool ok = rep.worst_violation() <= tol;
  if (std::abs(rep.cost - sol.cost) > tol * std::max(1.0, std::abs(rep.cost))) ok = false;
  if (sol.alpha.size() == cfg.predictor->num_columns()) {
    const Eigen::VectorXd w = cfg.predictor->window(
        sol.u_star, msg.received().slice(-cfg.n(), cfg.L - 2), sol.y_star);
    if ((cfg.predictor->stacked() * sol.alpha - w).norm() > tol * std::max(1.0, w.norm())) {
      ok = false;
    }
  } else {
    ok = false;
  }
  if (report != nullptr) *report = std::move(rep);
  return ok;
}

void add_local_problem(solvers::QcqpAssembler& qp, const AgentConfig& cfg,
                       const LocalSignals& sig, const ConsistencyReference* ref) {
  const int L = cfg.L, n = cfg.n();
  const int m = cfg.dims.m, p = cfg.dims.p, q = cfg.dims.q;
  if (sig.u.size() != (L + n) * m || sig.y.size() != (L + n) * p ||
      sig.y_neighbors.size() != (L + n) * q) {
    throw DimensionError("local problem signals have wrong sizes");
  }
  const AffineSignal window = AffineSignal::concat(
      {sig.u, sig.y_neighbors.segment(0, (L + n - 1) * q), sig.y});
  const Eigen::MatrixXd& nl = cfg.predictor->left_null_basis();
  qp.add_equalities(window, nl.transpose(), Eigen::VectorXd::Zero(nl.cols()));

  qp.add_objective(sig.u.segment(n * m, L * m), block_diag(cfg.R, L));
  qp.add_objective(sig.y.segment(n * p, L * p), block_diag(cfg.Q, L));
  const AffineSignal xi = AffineSignal::concat(
      {sig.u.segment(L * m, n * m), sig.y_neighbors.segment(L * q, n * q),
       sig.y.segment(L * p, n * p)});
  const TerminalIngredients& term = cfg.terminal;
  qp.add_objective(xi, term.P);

  const std::string tag = "agent " + std::to_string(cfg.id) + " ";
  for (int k = 0; k < L; ++k) {
    for (int j = 0; j < m; ++j) {
      const AffineSignal uk = sig.u.segment((n + k) * m + j, 1);
      const std::string idx = "[" + std::to_string(k) + "," + std::to_string(j) + "]";
      qp.add_inequality(uk, {}, Eigen::VectorXd::Ones(1), -cfg.u_box.upper(j),
                        tag + "input_upper" + idx);
      qp.add_inequality(uk, {}, -Eigen::VectorXd::Ones(1), cfg.u_box.lower(j),
                        tag + "input_lower" + idx);
    }
  }
  qp.add_inequality(xi, term.P / (term.theta * term.epsilon), Eigen::VectorXd(), -1.0,
                    tag + "terminal");

  if (ref != nullptr) {
    for (int k = 0; k < L; ++k) {
      const Eigen::VectorXd au = ref->u_prev.at(k), ay = ref->y_prev.at(k);
      const double ru = (ref->u_hat.at(k) - au).squaredNorm() + cfg.omega;
      const double ry = (ref->y_hat.at(k) - ay).squaredNorm() + cfg.omega;
      qp.add_inequality(sig.u.segment((n + k) * m, m), Eigen::MatrixXd::Identity(m, m), -2.0 * au,
                        au.squaredNorm() - ru, tag + "consistency_u[" + std::to_string(k) + "]");
      qp.add_inequality(sig.y.segment((n + k) * p, p), Eigen::MatrixXd::Identity(p, p), -2.0 * ay,
                        ay.squaredNorm() - ry, tag + "consistency_y[" + std::to_string(k) + "]");
    }
  }
}

MpcSolution solve_local_mpc(const AgentConfig& cfg, const LocalHistory& history,
                            const NeighborTrajectory& msg, const ConsistencyReference& reference,
                            const solvers::QcqpBackend& backend) {
  check_message(cfg, msg);
  const int L = cfg.L, n = cfg.n();
  const int m = cfg.dims.m, p = cfg.dims.p;
  if (history.u.length() != n || history.y.length() != n) {
    throw WindowError("local history must contain the last n samples");
  }
  const Trajectory recv = msg.received();
  solvers::QcqpAssembler qp(L * (m + p));
  LocalSignals sig;
  sig.u = AffineSignal::concat(
      {AffineSignal::constants(history.u.stacked()), AffineSignal::variables(0, L * m)});
  sig.y = AffineSignal::concat(
      {AffineSignal::constants(history.y.stacked()), AffineSignal::variables(L * m, L * p)});
  sig.y_neighbors = AffineSignal::constants(recv.stacked());
  add_local_problem(qp, cfg, sig, &reference);
  if (qp.equality_inconsistency() > 1e-8) {
    throw InconsistentInitializationError(
        "agent " + std::to_string(cfg.id) + ": measured window is not reproducible by the data",
        qp.equality_inconsistency());
  }
  const solvers::QcqpProblem prob = qp.build();

  Eigen::VectorXd warm(L * (m + p));
  warm << reference.u_hat.stacked(), reference.y_hat.stacked();
  const solvers::QcqpResult res = backend.solve(prob, &warm);

  auto infeasible = [&](const std::string& why) {
    const ConstraintReport cand = evaluate_local_constraints(
        cfg, history, msg, &reference, join(history.u, reference.u_hat),
        join(history.y, reference.y_hat));
    std::ostringstream os;
    os << "agent " << cfg.id << ": local MPC " << why << "; candidate violates '"
       << cand.worst_constraint() << "' by " << cand.worst_violation();
    return MpcInfeasibleError(os.str(), cfg.id, -1, cand.worst_constraint());
  };
  if (res.status == solvers::QcqpStatus::kInfeasible ||
      res.status == solvers::QcqpStatus::kNumericalError) {
    throw infeasible("returned " + solvers::to_string(res.status));
  }

  MpcSolution sol;
  sol.u_star = join(history.u, Trajectory::from_stacked(res.x.head(L * m), m, 0));
  sol.y_star = join(history.y, Trajectory::from_stacked(res.x.tail(L * p), p, 0));
  sol.iterations = res.iterations;
  const ConstraintReport rep =
      evaluate_local_constraints(cfg, history, msg, &reference, sol.u_star, sol.y_star);
  sol.alpha = rep.alpha;
  sol.xi_L = rep.xi_L;
  sol.cost = rep.cost;
  ConstraintReport check;
  if (!recheck_solution(cfg, history, msg, &reference, sol, 1e-6, &check)) {
    if (res.status != solvers::QcqpStatus::kOptimal) {
      throw infeasible("stopped with " + solvers::to_string(res.status));
    }
    throw SolverError("agent " + std::to_string(cfg.id) + ": solution fails re-check on '" +
                      check.worst_constraint() + "' by " + std::to_string(check.worst_violation()));
  }
  return sol;
}

MpcSolution extend(const AgentConfig& cfg, const MpcSolution& sol, const NeighborTrajectory& msg) {
  check_message(cfg, msg);
  const int L = cfg.L, n = cfg.n();
  const Trajectory recv = msg.received();
  MpcSolution out = sol;
  out.u_ext = cfg.terminal.K * sol.xi_L;
  if (!cfg.u_box.contains(out.u_ext, 1e-9)) {
    throw TerminalDesignError("agent " + std::to_string(cfg.id) +
                              ": terminal controller input leaves the input set");
  }
  const InitialWindow init{sol.u_star.slice(-n, -1), recv.slice(-n, -1), sol.y_star.slice(-n, -1)};
  const Trajectory new_u = join(sol.u_star.slice(0, L - 1), single(out.u_ext, L));
  const Trajectory y = cfg.simulator->simulate(init, new_u, recv.slice(0, L - 1));
  out.y_ext = y.at(L);
  out.extended = true;
  return out;
}

Trajectory outgoing_message(const AgentConfig& cfg, const MpcSolution& sol) {
  if (!sol.extended) throw Error("solution must be extended before it is transmitted");
  return join(sol.y_star.slice(-cfg.n() + 1, cfg.L - 1), single(sol.y_ext, cfg.L));
}

Candidate build_candidate(const AgentConfig& cfg, const MpcSolution& prev,
                          const NeighborTrajectory& new_msg, const Trajectory& measured_y) {
  check_message(cfg, new_msg);
  if (!prev.extended) throw Error("candidate needs the extended previous solution");
  const int L = cfg.L, n = cfg.n();
  if (measured_y.length() != n) throw WindowError("measured outputs must cover n samples");
  const Trajectory recv = new_msg.received();
  const Trajectory y_meas = measured_y.reindexed(-n);

  // Shift of the previous input over [-n, L-2].
  Trajectory u_hat = prev.u_star.slice(-n + 1, L - 1).reindexed(-n);
  const InitialWindow init{u_hat.slice(-n, -1), recv.slice(-n, -1), y_meas};
  const Trajectory y_first = cfg.simulator->simulate(init, u_hat.slice(0, L - 2),
                                                     recv.slice(0, L - 3));
  Candidate c;
  ExtendedState xi;
  xi.u_window = u_hat.slice(L - n - 1, L - 2).stacked();
  xi.y_neighbors_window = recv.slice(L - n - 1, L - 2).stacked();
  xi.y_window = y_first.slice(L - n - 1, L - 2).stacked();
  c.xi_hat_L_minus_1 = xi.stacked();
  u_hat = join(u_hat, single(cfg.terminal.K * c.xi_hat_L_minus_1, L - 1));
  const Trajectory y_full_h =
      cfg.simulator->simulate(init, u_hat.slice(0, L - 1), recv.slice(0, L - 2));
  const Trajectory y_hat = join(y_first, y_full_h.slice(L - 1, L - 1));

  c.u = u_hat;
  c.y = join(y_meas, y_hat);
  c.reference.u_hat = u_hat.slice(0, L - 1);
  c.reference.y_hat = y_hat;
  c.reference.u_prev = join(prev.u_star.slice(1, L - 1), single(prev.u_ext, L)).reindexed(0);
  c.reference.y_prev = join(prev.y_star.slice(1, L - 1), single(prev.y_ext, L)).reindexed(0);
  return c;
}

}  // namespace ddmpc
