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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddmpc/agent.hpp"
#include "ddmpc/behavior.hpp"
#include "ddmpc/commands.hpp"
#include "ddmpc/config.hpp"
#include "ddmpc/errors.hpp"
#include "ddmpc/linalg.hpp"
#include "ddmpc/plant.hpp"
#include "ddmpc/scheme.hpp"
#include "ddmpc/solvers/qcqp.hpp"
#include "ddmpc/terminal.hpp"
#include "test_support.hpp"

namespace ddmpc {
namespace {

constexpr int kLag = 2;
constexpr double kInputBound = 2.0;
const char* const kPreset = DDMPC_SOURCE_DIR "/configs/chain64.json";

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

/// Random mass-spring chain of `size` nodes: mass, damping and each spring
/// drawn independently.
NetworkModel random_chain(int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mass(0.5, 2.0), damping(0.3, 1.2), spring(0.5, 2.0);
  const CouplingGraph chain = CouplingGraph::chain(size);
  std::vector<double> edge(size > 1 ? size - 1 : 0);
  for (double& k : edge) k = spring(rng);
  std::vector<SubsystemModel> subs;
  for (int i = 0; i < size; ++i) {
    std::map<int, double> springs;
    for (int j : chain.neighbors(i)) springs[j] = edge[std::min(i, j)];
    subs.push_back(mass_spring_subsystem(mass(rng), damping(rng), springs, 0.2));
  }
  return NetworkModel(chain, std::move(subs));
}

std::vector<DataSet> record_data(const NetworkModel& net, int horizon, std::uint64_t seed) {
  std::vector<InputBox> boxes;
  for (int i = 0; i < net.size(); ++i) boxes.push_back(InputBox::symmetric(net.subsystem(i).m(), kInputBound));
  return collect_data(net, 100, boxes, seed, required_excitation_order(horizon, kLag)).data;
}

// Data-driven output prediction against the plant.
Outcome criterion1() {
  constexpr int kCases = 100;
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int c = 0; c < kCases; ++c) {
    NetworkModel net = random_chain(3, rng);
    const std::vector<DataSet> data = record_data(net, 6, 1000 + c);
    const int node = c % 3;
    const int h = 1 + (c / 3) % 6;
    const DataDrivenSimulator sim(data[node], kLag, 6);
    testing::randomize_states(net, rng, 2.0);
    const testing::NodeRecord r = testing::record_node(net, node, kLag + h, rng, kInputBound, -kLag);
    const InitialWindow init{r.u.slice(-kLag, -1), r.y_neighbors.slice(-kLag, -1), r.y.slice(-kLag, -1)};
    const Trajectory yn = r.y_neighbors.slice(0, h - 2);
    const Eigen::MatrixXd pred = sim.simulate(init, r.u.slice(0, h - 1), yn).samples();
    const Eigen::MatrixXd truth = r.y.slice(0, h - 1).samples();
    worst = std::max(worst, (pred - truth).norm() / std::max(truth.norm(), 1e-300));
  }
  return {worst <= 1e-6, "worst relative error " + fmt(worst) + " over " + std::to_string(kCases) + " cases"};
}

// Trajectory membership in both directions.
Outcome criterion2() {
  constexpr int kDepth = 7;
  std::mt19937_64 rng(202);
  NetworkModel net = random_chain(3, rng);
  const std::vector<DataSet> data = record_data(net, kDepth - kLag, 7);
  std::vector<BehavioralPredictor> preds;
  for (const DataSet& d : data) preds.emplace_back(d, kDepth);
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  double worst_true = 0.0, best_false = std::numeric_limits<double>::infinity();
  int accepted = 0, rejected = 0;
  for (int c = 0; c < 100; ++c) {
    const int node = c % 3;
    testing::randomize_states(net, rng, 2.0);
    const testing::NodeRecord r = testing::record_node(net, node, kDepth, rng);
    const Trajectory yn = r.y_neighbors.slice(0, kDepth - 2);
    const TrajectoryCheck ok = check_trajectory(preds[node], r.u, yn, r.y, 1e-8);
    worst_true = std::max(worst_true, ok.residual);
    accepted += ok.is_trajectory && ok.residual <= 1e-8;
    Trajectory y = r.y;
    const int k = static_cast<int>(rng() % kDepth);
    const double sign = (rng() % 2) ? 1.0 : -1.0;
    y.set(k, y.at(k) + Eigen::VectorXd::Constant(1, sign * mag(rng)));
    const TrajectoryCheck bad = check_trajectory(preds[node], r.u, yn, y, 1e-8);
    best_false = std::min(best_false, bad.residual);
    rejected += !bad.is_trajectory;
  }
  return {accepted == 100 && rejected == 100,
          std::to_string(accepted) + "/100 accepted (max residual " + fmt(worst_true) + "), " +
              std::to_string(rejected) + "/100 rejected (min residual " + fmt(best_false) + ")"};
}

// Terminal ingredients of the end and interior node classes.
Outcome criterion3() {
  const ExperimentConfig cfg = load_config(kPreset);
  const NetworkModel model = cfg.build_network();
  const std::vector<DataSet> data = generate_data(cfg, model).data;
  std::mt19937_64 rng(303);
  std::normal_distribution<double> gauss;
  std::ostringstream detail;
  bool pass = true;
  for (int node : {0, 1}) {
    TerminalIngredients t;
    try {
      t = synthesize_node(cfg, model, node, data[node]).ingredients;
    } catch (const Error& e) {
      detail << "node " << node << " infeasible: " << e.what() << "; ";
      pass = false;
      continue;
    }
    const NodeDims dims{1, 1, model.neighbor_output_dim(node), kLag};
    const ShiftStructure sh = build_shift_structure(dims);
    const Eigen::MatrixXd delta = true_output_map(model, node, kLag);
    const Eigen::LLT<Eigen::MatrixXd> llt(t.P);
    const bool pd = llt.info() == Eigen::Success && min_eigenvalue(t.P) > 0.0;
    const Eigen::MatrixXd lt = llt.matrixU();
    double worst_decrease = -std::numeric_limits<double>::infinity(), worst_input = 0.0;
    for (int k = 0; k < 1000; ++k) {
      Eigen::VectorXd v(dims.xi_dim());
      for (Eigen::Index r = 0; r < v.size(); ++r) v(r) = gauss(rng);
      v.normalize();
      // xi with xi' P xi = 1 for the decrease, scaled onto the ellipsoid for the input.
      const Eigen::VectorXd xi = lt.triangularView<Eigen::Upper>().solve(v);
      const Eigen::VectorXd u = t.K * xi;
      Eigen::VectorXd xu(xi.size() + u.size());
      xu << xi, u;
      const Eigen::VectorXd y = delta * xu;
      const Eigen::VectorXd next = sh.A_bar * xi + sh.B_u * u + sh.B_w * y;
      const double lhs = next.dot(t.P * next) - xi.dot(t.P * xi) + t.eta * xi.squaredNorm() +
                         y.squaredNorm() + u.squaredNorm();
      worst_decrease = std::max(worst_decrease, lhs);
      worst_input = std::max(worst_input, (t.K * (std::sqrt(t.epsilon) * xi)).cwiseAbs().maxCoeff());
    }
    const bool ok = pd && worst_decrease <= 1e-8 && worst_input <= kInputBound;
    pass = pass && ok;
    detail << (node == 0 ? "end" : "interior") << ": decrease " << fmt(worst_decrease) << ", max|K xi| "
           << fmt(worst_input) << ", theta " << t.theta << "; ";
  }
  std::string d = detail.str();
  if (d.size() >= 2) d.resize(d.size() - 2);
  return {pass, d};
}

struct FullRun {
  bool feasible = false;
  std::string error;
  std::vector<Eigen::VectorXd> x0;
  ClosedLoopLog log;
};

FullRun& preset_run() {
  static FullRun* run = [] {
    auto* r = new FullRun;
    ExperimentConfig cfg = load_config(kPreset);
    cfg.run.steps = 11;  // t = 0..10, so that V_10 and x_10 are logged
    try {
      const testing::Pipeline p = testing::build_pipeline(cfg);
      NetworkModel plant = p.model;
      RunOutcome out = simulate_closed_loop(cfg, plant, p.agents);
      r->x0 = std::move(out.x0);
      r->log = std::move(out.log);
      r->feasible = true;
    } catch (const Error& e) {
      r->error = e.what();
    }
    return r;
  }();
  return *run;
}

// Full-scale closed loop on the 64-node preset.
Outcome criterion4() {
  const FullRun& r = preset_run();
  if (!r.feasible) return {false, "run aborted: " + r.error};
  double x0_max = 0.0, u_max = 0.0, late_state = 0.0;
  for (const Eigen::VectorXd& x : r.x0) x0_max = std::max(x0_max, x.cwiseAbs().maxCoeff());
  int bad_status = 0;
  for (const StepRecord& s : r.log.records) {
    u_max = std::max(u_max, s.u.cwiseAbs().maxCoeff());
    if (s.t >= 6) late_state = std::max(late_state, s.x_true.cwiseAbs().maxCoeff());
    bad_status += !s.recheck_passed;
  }
  const bool pass = x0_max <= 3.3 && u_max <= kInputBound && late_state <= 0.05 && bad_status == 0;
  return {pass, "max|x0| " + fmt(x0_max) + ", max|u| " + fmt(u_max) + ", max|x_t| for t in [6,10] " +
                    fmt(late_state) + ", failed rechecks " + std::to_string(bad_status)};
}

struct StressRuns {
  int infeasible = 0;
  int rechecks_failed = 0;
  int records = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  double max_slack_error = 0.0;
  std::string first_error;
};

const StressRuns& stress_runs() {
  static StressRuns* runs = [] {
    auto* s = new StressRuns;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      ExperimentConfig cfg = testing::chain_config(5, seed);
      cfg.run.steps = 15;
      try {
        const testing::Pipeline p = testing::build_pipeline(cfg);
        NetworkModel plant = p.model;
        const RunOutcome out = simulate_closed_loop(cfg, plant, p.agents);
        for (const StepRecord& r : out.log.records) {
          ++s->records;
          s->rechecks_failed += !r.recheck_passed;
          s->min_margin = std::min(s->min_margin, r.min_consistency_margin);
          s->max_slack_error = std::max(s->max_slack_error, std::abs(r.candidate_slack_error));
        }
      } catch (const Error& e) {
        ++s->infeasible;
        if (s->first_error.empty()) s->first_error = "seed " + std::to_string(seed) + ": " + e.what();
      }
    }
    return s;
  }();
  return *runs;
}

// Recursive feasibility over seeded runs.
Outcome criterion5() {
  const StressRuns& s = stress_runs();
  std::string d = std::to_string(s.infeasible) + " infeasible runs, " + std::to_string(s.rechecks_failed) +
                  "/" + std::to_string(s.records) + " failed rechecks";
  if (!s.first_error.empty()) d += " (" + s.first_error + ")";
  return {s.infeasible == 0 && s.rechecks_failed == 0 && s.records == 10 * 15 * 5, d};
}

// Consistency margins and candidate slack.
Outcome criterion6() {
  const StressRuns& s = stress_runs();
  const bool pass = s.records == 10 * 15 * 5 && s.min_margin >= -1e-6 && s.max_slack_error <= 1e-9;
  return {pass, "min margin " + fmt(s.min_margin) + ", max |candidate slack - Omega| " + fmt(s.max_slack_error)};
}

// Global cost decrease on the preset run.
Outcome criterion7() {
  const FullRun& r = preset_run();
  if (!r.feasible) return {false, "run aborted: " + r.error};
  const std::vector<double>& v = r.log.global_cost;
  int checked = 0, increases = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int t = 0; t + 1 < static_cast<int>(v.size()) && t < 10; ++t) {
    if (r.log.xi_norm[t] < 0.1) continue;
    ++checked;
    worst = std::max(worst, v[t + 1] - v[t]);
    increases += v[t + 1] > v[t];
  }
  const double ratio = v.size() > 10 ? v[10] / v[0] : std::numeric_limits<double>::infinity();
  return {increases == 0 && ratio <= 1e-2,
          std::to_string(checked) + " steps with |xi| >= 0.1, largest V change " + fmt(worst) +
              ", V_10/V_0 " + fmt(ratio)};
}

ClosedLoopLog decoupled_run(const testing::Pipeline& p, const std::vector<Eigen::VectorXd>& x0,
                            int steps, long* messages) {
  NetworkModel plant = p.model;
  const PreRunHistory pre =
      rewind_pre_run(plant, x0, kLag, std::vector<Eigen::VectorXd>(plant.size(), Eigen::VectorXd::Zero(1)));
  const InitialHistory hist = initial_history_from_pre_run(pre);
  const solvers::BarrierQcqp backend;
  const BootstrapResult boot = bootstrap_centralized(p.agents, plant.graph(), hist, backend);
  MessageBus bus(plant.graph());
  RunSettings rs;
  rs.steps = steps;
  ClosedLoopLog log = run_closed_loop(plant, p.agents, hist, boot, bus, backend, rs);
  if (messages) *messages = bus.total_messages();
  return log;
}

// Zero coupling.
Outcome criterion8() {
  constexpr int kNodes = 5, kSteps = 10;
  ExperimentConfig cfg = testing::chain_config(kNodes, 8);
  cfg.network.coupling_scale = 0.0;
  const testing::Pipeline p = testing::build_pipeline(cfg);
  InitialStateSampling smp;
  smp.range = Eigen::VectorXd::Constant(1, 3.3);
  const std::vector<Eigen::VectorXd> x0 = sample_initial_states(p.model, smp, 8);
  const std::vector<Eigen::VectorXd> other = sample_initial_states(p.model, smp, 9);
  long messages = 0;
  const ClosedLoopLog base = decoupled_run(p, x0, kSteps, &messages);
  double worst_dev = 0.0;
  for (const StepRecord& s : base.records) worst_dev = std::max({worst_dev, s.xi_deviation, s.y_deviation});
  // Each node's closed loop must not change when every other initial state does.
  double worst_diff = 0.0;
  for (int i = 0; i < kNodes; ++i) {
    std::vector<Eigen::VectorXd> x = other;
    x[i] = x0[i];
    const ClosedLoopLog alt = decoupled_run(p, x, kSteps, nullptr);
    for (int t = 0; t < kSteps; ++t) {
      worst_diff = std::max({worst_diff, (base.at(t, i).u - alt.at(t, i).u).cwiseAbs().maxCoeff(),
                             (base.at(t, i).x_true - alt.at(t, i).x_true).cwiseAbs().maxCoeff()});
    }
  }
  // Deviations are zero up to the round-off of two evaluations of the same prediction.
  const bool pass = worst_dev <= 1e-12 && messages == 0 && base.messages == 0 && worst_diff <= 1e-6;
  return {pass, "max deviation " + fmt(worst_dev) + ", messages " + std::to_string(messages) +
                    ", max change under other initial states " + fmt(worst_diff)};
}

struct Criterion {
  int id;
  const char* title;
  double time_limit_s;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace ddmpc

int main() {
  using ddmpc::Criterion;
  using ddmpc::Outcome;
  const std::vector<Criterion> criteria = {
      {1, "data-driven simulation matches the plant", 10.0, ddmpc::criterion1},
      {2, "trajectory test accepts plant data and rejects perturbed data", 10.0, ddmpc::criterion2},
      {3, "terminal ingredients for end and interior nodes", 60.0, ddmpc::criterion3},
      {4, "64-node closed loop: feasible, inputs in box, converged by t=6", 300.0, ddmpc::criterion4},
      {5, "recursive feasibility on 10 seeded 5-node runs", 0.0, ddmpc::criterion5},
      {6, "consistency margins and candidate slack", 0.0, ddmpc::criterion6},
      {7, "global cost decrease on the 64-node run", 0.0, ddmpc::criterion7},
      {8, "zero coupling decouples the agents", 0.0, ddmpc::criterion8},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string detail = o.detail;
    if (c.time_limit_s > 0.0 && secs > c.time_limit_s) {
      o.passed = false;
      detail += ", over the " + ddmpc::fmt(c.time_limit_s) + " s limit";
    }
    failures += !o.passed;
    std::printf("%s criterion %d: %s [%s] (%.1f s)\n", o.passed ? "PASS" : "FAIL", c.id, c.title,
                detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
