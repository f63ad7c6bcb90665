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

#include "ddmpc/scheme.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ddmpc/errors.hpp"
#include "ddmpc/solvers/assembly.hpp"

namespace ddmpc {

namespace {

using solvers::AffineSignal;

Trajectory join(const Trajectory& a, const Trajectory& b) {
  Eigen::MatrixXd data(a.dim(), a.length() + b.length());
  data << a.samples(), b.samples();
  return Trajectory(std::move(data), a.start_index());
}

// Stacks same-length trajectories sample-wise; dimension-0 result when empty.
Trajectory stack_or_empty(const std::vector<Trajectory>& parts, int length, int start) {
  if (parts.empty()) return Trajectory(Eigen::MatrixXd(0, length), start);
  return stack_signals(parts);
}

void check_history(const std::vector<AgentConfig>& agents, const InitialHistory& history) {
  if (history.u.size() != agents.size() || history.y.size() != agents.size()) {
    throw DimensionError("initial history must cover every agent");
  }
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const int n = agents[i].n();
    if (history.u[i].length() != n || history.y[i].length() != n ||
        history.u[i].start_index() != -n || history.y[i].start_index() != -n) {
      throw WindowError("initial history of agent " + std::to_string(i) + " must cover [-n, -1]");
    }
  }
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. The exception of
// the lowest failing index is rethrown.
template <typename Fn>
void parallel_for(int count, int threads, Fn fn) {
  std::vector<std::exception_ptr> errors(count);
  auto body = [&](int i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  threads = std::clamp(threads, 1, std::max(1, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) body(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

MessageBus::MessageBus(const CouplingGraph& graph) : graph_(graph) {
  receivers_.assign(graph.size(), {});
  for (const auto& [j, i] : graph.edges()) {
    receivers_[j].push_back(i);
    count_[{j, i}] = 0;
  }
}

void MessageBus::begin_round() {
  if (open_) throw Error("message round already open");
  for (auto& [edge, c] : count_) c = 0;
  open_ = true;
}

void MessageBus::send(int from, const Trajectory& values) {
  if (!open_) throw Error("send outside of a message round");
  for (int to : receivers_.at(from)) {
    mailbox_[{from, to}] = values;
    ++count_[{from, to}];
    ++total_;
  }
}

void MessageBus::end_round() {
  for (const auto& [edge, c] : count_) {
    if (c != 1) {
      std::ostringstream os;
      os << "edge (" << edge.first << ", " << edge.second << ") carried " << c
         << " messages in round " << rounds_;
      throw Error(os.str());
    }
  }
  open_ = false;
  ++rounds_;
}

NeighborTrajectory MessageBus::collect(int i) const {
  if (open_) throw Error("collect before the round is closed");
  std::vector<Trajectory> parts;
  for (int j : graph_.neighbors(i)) parts.push_back(mailbox_.at({j, i}));
  if (parts.empty()) throw Error("node has no neighbors to collect from");
  return NeighborTrajectory{stack_signals(parts)};
}

InitialHistory initial_history_from_pre_run(const PreRunHistory& pre) {
  return InitialHistory{pre.u, pre.y};
}

bool steerable_to_rest(const SubsystemModel& model, const Eigen::VectorXd& x0, int steps,
                       double input_bound) {
  const int nx = model.n();
  const int m = model.m();
  // A^steps x0 + sum_k A^(steps-1-k) B u_k = 0 with |u_k| <= input_bound.
  Eigen::MatrixXd reach(nx, m * steps);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(nx, nx);
  for (int k = steps - 1; k >= 0; --k) {
    reach.middleCols(k * m, m) = power * model.B;
    power = model.A * power;
  }
  // The barrier method needs an interior; a zero bound leaves only u = 0.
  if (input_bound <= 0.0) return (power * x0).norm() <= 1e-12 * std::max(1.0, x0.norm());
  solvers::QcqpProblem prob;
  prob.num_vars = m * steps;
  prob.P.resize(prob.num_vars, prob.num_vars);
  prob.q = Eigen::VectorXd::Zero(prob.num_vars);
  prob.A = reach.sparseView();
  prob.b = -power * x0;
  for (int v = 0; v < prob.num_vars; ++v) {
    for (double sign : {1.0, -1.0}) {
      solvers::QuadraticConstraint c;
      c.q.resize(prob.num_vars);
      c.q.insert(v) = sign;
      c.r = -input_bound;
      prob.constraints.push_back(std::move(c));
    }
  }
  const solvers::QcqpResult res = solvers::BarrierQcqp().solve(prob);
  return res.status == solvers::QcqpStatus::kOptimal;
}

std::vector<Eigen::VectorXd> sample_initial_states(const NetworkModel& model,
                                                   const InitialStateSampling& sampling,
                                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < model.size(); ++i) {
    const SubsystemModel& s = model.subsystem(i);
    Eigen::VectorXd range = sampling.range.size() == 1
                                ? Eigen::VectorXd::Constant(s.n(), sampling.range(0))
                                : sampling.range;
    if (range.size() != s.n()) throw DimensionError("initial-state range has the wrong size");
    bool found = false;
    Eigen::VectorXd x(s.n());
    for (int k = 0; k < sampling.max_tries && !found; ++k) {
      for (int c = 0; c < s.n(); ++c) x(c) = range(c) * unit(rng);
      found = steerable_to_rest(s, x, sampling.steps, sampling.input_bound);
    }
    if (!found) {
      throw Error("no steerable initial state found for node " + std::to_string(i));
    }
    out.push_back(x);
  }
  return out;
}

BootstrapResult bootstrap_from_candidates(const std::vector<AgentConfig>& agents,
                                          const CouplingGraph& graph,
                                          const InitialHistory& history,
                                          std::vector<Trajectory> u, std::vector<Trajectory> y,
                                          double tol) {
  check_history(agents, history);
  const int count = static_cast<int>(agents.size());
  if (graph.size() != count || static_cast<int>(u.size()) != count ||
      static_cast<int>(y.size()) != count) {
    throw DimensionError("bootstrap candidates must cover every agent");
  }
  BootstrapResult boot;
  for (int i = 0; i < count; ++i) {
    const AgentConfig& cfg = agents[i];
    if (u[i].start_index() != -cfg.n() || u[i].length() != cfg.L + cfg.n() ||
        y[i].start_index() != -cfg.n() || y[i].length() != cfg.L + cfg.n()) {
      throw WindowError("bootstrap candidate of agent " + std::to_string(i) +
                        " must cover [-n, L-1]");
    }
  }
  for (int i = 0; i < count; ++i) {
    const AgentConfig& cfg = agents[i];
    std::vector<Trajectory> parts;
    for (int j : graph.neighbors(i)) parts.push_back(y[j].reindexed(-cfg.n() + 1));
    NeighborTrajectory msg{stack_or_empty(parts, cfg.L + cfg.n(), -cfg.n() + 1)};
    ConsistencyReference ref;
    ref.u_hat = u[i].slice(0, cfg.L - 1);
    ref.y_hat = y[i].slice(0, cfg.L - 1);
    ref.u_prev = ref.u_hat;
    ref.y_prev = ref.y_hat;
    const LocalHistory hist{history.u[i], history.y[i]};
    const ConstraintReport rep = evaluate_local_constraints(cfg, hist, msg, nullptr, u[i], y[i]);
    if (rep.worst_violation() > tol) {
      std::ostringstream os;
      os << "bootstrap candidate of agent " << i << " violates '" << rep.worst_constraint()
         << "' by " << rep.worst_violation();
      throw BootstrapError(os.str());
    }
    boot.cost += rep.cost;
    boot.messages.push_back(std::move(msg));
    boot.references.push_back(std::move(ref));
  }
  boot.u = std::move(u);
  boot.y = std::move(y);
  return boot;
}

BootstrapResult bootstrap_centralized(const std::vector<AgentConfig>& agents,
                                      const CouplingGraph& graph, const InitialHistory& history,
                                      const solvers::QcqpBackend& backend) {
  check_history(agents, history);
  const int count = static_cast<int>(agents.size());
  if (graph.size() != count) throw DimensionError("graph and agent count differ");
  std::vector<int> offset(count + 1, 0);
  for (int i = 0; i < count; ++i) {
    offset[i + 1] = offset[i] + agents[i].L * (agents[i].dims.m + agents[i].dims.p);
  }
  std::vector<AffineSignal> u_sig(count), y_sig(count);
  for (int i = 0; i < count; ++i) {
    const AgentConfig& a = agents[i];
    u_sig[i] = AffineSignal::concat({AffineSignal::constants(history.u[i].stacked()),
                                     AffineSignal::variables(offset[i], a.L * a.dims.m)});
    y_sig[i] = AffineSignal::concat(
        {AffineSignal::constants(history.y[i].stacked()),
         AffineSignal::variables(offset[i] + a.L * a.dims.m, a.L * a.dims.p)});
  }
  solvers::QcqpAssembler qp(offset[count]);
  for (int i = 0; i < count; ++i) {
    const AgentConfig& a = agents[i];
    const int n = a.n();
    std::vector<AffineSignal> yn;
    for (int k = -n; k < a.L; ++k) {
      for (int j : graph.neighbors(i)) {
        const AgentConfig& b = agents[j];
        if (b.n() != n || b.L != a.L) {
          throw ConfigError("bootstrap requires a common horizon and lag");
        }
        yn.push_back(y_sig[j].segment((k + n) * b.dims.p, b.dims.p));
      }
    }
    LocalSignals sig{u_sig[i], AffineSignal::concat(yn), y_sig[i]};
    add_local_problem(qp, a, sig, nullptr);
  }
  if (qp.equality_inconsistency() > 1e-8) {
    throw BootstrapError("initial measurements are not reproducible by the recorded data");
  }
  const solvers::QcqpResult res = backend.solve(qp.build());
  if (res.status != solvers::QcqpStatus::kOptimal) {
    throw BootstrapError("joint initial program returned " + solvers::to_string(res.status));
  }
  std::vector<Trajectory> u(count), y(count);
  for (int i = 0; i < count; ++i) {
    const AgentConfig& a = agents[i];
    const int lm = a.L * a.dims.m;
    u[i] = join(history.u[i],
                Trajectory::from_stacked(res.x.segment(offset[i], lm), a.dims.m, 0));
    y[i] = join(history.y[i], Trajectory::from_stacked(
                                  res.x.segment(offset[i] + lm, a.L * a.dims.p), a.dims.p, 0));
  }
  return bootstrap_from_candidates(agents, graph, history, std::move(u), std::move(y));
}

namespace {

nlohmann::json trajectory_json(const Trajectory& x) {
  nlohmann::json samples = nlohmann::json::array();
  for (int k = x.start_index(); k <= x.last_index(); ++k) {
    const Eigen::VectorXd v = x.at(k);
    samples.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  return {{"start", x.start_index()}, {"dim", x.dim()}, {"samples", samples}};
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  const int dim = j.at("dim").get<int>();
  std::vector<Eigen::VectorXd> samples;
  for (const auto& s : j.at("samples")) {
    const auto v = s.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != dim) throw DimensionError("sample dimension mismatch");
    samples.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), dim));
  }
  return Trajectory(samples, dim, j.at("start").get<int>());
}

}  // namespace

void write_bootstrap(const std::string& path, const BootstrapResult& boot) {
  nlohmann::json agents = nlohmann::json::array();
  for (std::size_t i = 0; i < boot.u.size(); ++i) {
    agents.push_back({{"u", trajectory_json(boot.u[i])}, {"y", trajectory_json(boot.y[i])}});
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  // Round-trip exact doubles.
  out << std::setprecision(17) << nlohmann::json{{"agents", agents}}.dump(1) << "\n";
}

BootstrapResult read_bootstrap(const std::string& path, const std::vector<AgentConfig>& agents,
                               const CouplingGraph& graph, const InitialHistory& history) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  std::vector<Trajectory> u, y;
  for (const auto& a : doc.at("agents")) {
    u.push_back(trajectory_from_json(a.at("u")));
    y.push_back(trajectory_from_json(a.at("y")));
  }
  return bootstrap_from_candidates(agents, graph, history, std::move(u), std::move(y));
}

const StepRecord& ClosedLoopLog::at(int t, int agent) const {
  return records.at(static_cast<std::size_t>(t) * num_agents + agent);
}

void ClosedLoopLog::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  auto columns = [&](const char* name, long size) {
    for (long k = 0; k < size; ++k) out << "," << name << "[" << k << "]";
  };
  // Widest agent sets the column count; narrower agents leave cells empty.
  long nu = 0, ny = 0, nx = 0;
  for (const auto& r : records) {
    nu = std::max<long>(nu, r.u.size());
    ny = std::max<long>(ny, r.y.size());
    nx = std::max<long>(nx, r.x_true.size());
  }
  out << "t,agent";
  columns("u", nu);
  columns("y", ny);
  columns("x_true", nx);
  out << ",cost_local,V_global,status,min_consistency_margin,xi_deviation,y_deviation\n";
  out << std::setprecision(17);
  auto cells = [&](const Eigen::VectorXd& v, long size) {
    for (long k = 0; k < size; ++k) {
      out << ",";
      if (k < v.size()) out << v(k);
    }
  };
  for (const auto& r : records) {
    out << r.t << "," << r.agent;
    cells(r.u, nu);
    cells(r.y, ny);
    cells(r.x_true, nx);
    out << "," << r.cost_local << "," << global_cost.at(r.t) << "," << r.status << ","
        << r.min_consistency_margin << "," << r.xi_deviation << "," << r.y_deviation << "\n";
  }
}

ClosedLoopLog run_closed_loop(NetworkModel& plant, const std::vector<AgentConfig>& agents,
                              const InitialHistory& history, const BootstrapResult& boot,
                              MessageBus& bus, const solvers::QcqpBackend& backend,
                              const RunSettings& settings) {
  check_history(agents, history);
  const int count = static_cast<int>(agents.size());
  if (plant.size() != count || static_cast<int>(boot.messages.size()) != count) {
    throw DimensionError("plant, agents and bootstrap disagree on the network size");
  }
  const CouplingGraph& graph = plant.graph();

  // Measured input/output records from t - n onwards, indexed by absolute time.
  std::vector<Trajectory> u_meas = history.u, y_meas = history.y;
  std::vector<NeighborTrajectory> msgs = boot.messages;
  std::vector<ConsistencyReference> refs = boot.references;

  ClosedLoopLog log;
  log.num_agents = count;
  log.steps = settings.steps;
  log.records.resize(static_cast<std::size_t>(settings.steps) * count);
  log.global_cost.assign(settings.steps, 0.0);
  log.xi_norm.assign(settings.steps, 0.0);

  std::vector<MpcSolution> sols(count);
  for (int t = 0; t < settings.steps; ++t) {
    std::vector<LocalHistory> hist(count);
    double xi_sq = 0.0;
    for (int i = 0; i < count; ++i) {
      const int n = agents[i].n();
      hist[i].u = u_meas[i].slice(t - n, t - 1).reindexed(-n);
      hist[i].y = y_meas[i].slice(t - n, t - 1).reindexed(-n);
      std::vector<Trajectory> parts;
      for (int j : graph.neighbors(i)) parts.push_back(y_meas[j].slice(t - n, t - 1));
      ExtendedState xi;
      xi.u_window = hist[i].u.stacked();
      xi.y_neighbors_window =
          parts.empty() ? Eigen::VectorXd() : stack_signals(parts).stacked();
      xi.y_window = hist[i].y.stacked();
      StepRecord& r = log.records[static_cast<std::size_t>(t) * count + i];
      r.t = t;
      r.agent = i;
      r.xi = xi.stacked();
      r.x_true = plant.states()[i];
      xi_sq += r.xi.squaredNorm();
    }
    log.xi_norm[t] = std::sqrt(xi_sq);

    // (1) local solves on immutable snapshots.
    parallel_for(count, settings.threads, [&](int i) {
      const AgentConfig& cfg = agents[i];
      StepRecord& r = log.records[static_cast<std::size_t>(t) * count + i];
      const ConstraintReport cand = evaluate_local_constraints(
          cfg, hist[i], msgs[i], &refs[i], join(hist[i].u, refs[i].u_hat),
          join(hist[i].y, refs[i].y_hat));
      r.candidate_slack_error = std::abs(cand.min_consistency_margin - cfg.omega);
      r.candidate_cost = cand.cost;
      r.candidate_violation = cand.worst_violation();
      try {
        sols[i] = solve_local_mpc(cfg, hist[i], msgs[i], refs[i], backend);
      } catch (const MpcInfeasibleError& e) {
        std::ostringstream os;
        os << "step " << t << ": " << e.what();
        throw MpcInfeasibleError(os.str(), i, t, e.constraint());
      }
      ConstraintReport rep;
      r.recheck_passed =
          recheck_solution(cfg, hist[i], msgs[i], &refs[i], sols[i], settings.recheck_tol, &rep);
      r.status = r.recheck_passed ? "optimal" : "recheck_failed";
      r.solver_iterations = sols[i].iterations;
      r.cost_local = sols[i].cost;
      r.min_consistency_margin = rep.min_consistency_margin;
      r.terminal_value = rep.terminal_value;
      r.u_star = sols[i].u_star;
      r.y_star = sols[i].y_star;
      r.xi_L = sols[i].xi_L;
    });

    // (2)-(3) apply the first inputs and measure.
    std::vector<Eigen::VectorXd> inputs(count);
    for (int i = 0; i < count; ++i) inputs[i] = sols[i].u_star.at(0);
    const std::vector<Eigen::VectorXd> outputs = step_network(plant, inputs);
    for (int i = 0; i < count; ++i) {
      StepRecord& r = log.records[static_cast<std::size_t>(t) * count + i];
      r.u = inputs[i];
      r.y = outputs[i];
      r.prediction_error = (outputs[i] - sols[i].y_star.at(0)).norm();
      log.global_cost[t] += r.cost_local;
      u_meas[i].push_back(inputs[i]);
      y_meas[i].push_back(outputs[i]);
    }

    // (4) extensions, (5)-(6) exchange.
    parallel_for(count, settings.threads,
                 [&](int i) { sols[i] = extend(agents[i], sols[i], msgs[i]); });
    bus.begin_round();
    for (int i = 0; i < count; ++i) bus.send(i, outgoing_message(agents[i], sols[i]));
    bus.end_round();

    // (7)-(8) advance time and build the next candidates.
    parallel_for(count, settings.threads, [&](int i) {
      const AgentConfig& cfg = agents[i];
      NeighborTrajectory next =
          graph.neighbors(i).empty()
              ? NeighborTrajectory{Trajectory(Eigen::MatrixXd(0, cfg.L + cfg.n()), -cfg.n() + 1)}
              : bus.collect(i);
      const Candidate c =
          build_candidate(cfg, sols[i], next, y_meas[i].slice(t + 1 - cfg.n(), t));
      StepRecord& r = log.records[static_cast<std::size_t>(t) * count + i];
      const Eigen::VectorXd d = c.xi_hat_L_minus_1 - sols[i].xi_L;
      r.xi_deviation = std::sqrt(std::max(0.0, d.dot(cfg.terminal.P * d)));
      r.y_deviation = 0.0;
      for (int k = 0; k + 1 < cfg.L; ++k) {
        const Eigen::VectorXd e = c.reference.y_hat.at(k) - c.reference.y_prev.at(k);
        r.y_deviation = std::max(r.y_deviation, std::sqrt(e.dot(cfg.Q * e)));
      }
      refs[i] = c.reference;
      msgs[i] = std::move(next);
    });
  }
  log.messages = bus.total_messages();
  return log;
}

double compute_global_cost(const ClosedLoopLog& log, int t) {
  double v = 0.0;
  for (int i = 0; i < log.num_agents; ++i) v += log.at(t, i).cost_local;
  return v;
}

std::vector<DeviationBound> estimate_deviation_bounds(const ClosedLoopLog& log,
                                                      const std::vector<AgentConfig>& agents) {
  std::vector<DeviationBound> out(log.num_agents);
  for (int i = 0; i < log.num_agents; ++i) {
    DeviationBound& b = out[i];
    b.agent = i;
    for (int t = 0; t < log.steps; ++t) {
      b.max_xi_deviation = std::max(b.max_xi_deviation, log.at(t, i).xi_deviation);
      b.max_y_deviation = std::max(b.max_y_deviation, log.at(t, i).y_deviation);
    }
    const TerminalIngredients& term = agents.at(i).terminal;
    b.threshold = (1.0 - std::sqrt(term.theta)) * std::sqrt(term.epsilon);
    b.certified = b.max_xi_deviation <= b.threshold;
  }
  return out;
}

CostBoundFit fit_cost_bound(const ClosedLoopLog& log) {
  CostBoundFit fit;
  double num = 0.0, den = 0.0;
  for (int t = 0; t < log.steps; ++t) {
    const double s = log.xi_norm[t] * log.xi_norm[t];
    if (s <= 0.0) continue;
    num += s * log.global_cost[t];
    den += s * s;
    fit.c_max = std::max(fit.c_max, log.global_cost[t] / s);
    ++fit.samples;
  }
  if (den > 0.0) fit.c_fit = num / den;
  return fit;
}

}  // namespace ddmpc
