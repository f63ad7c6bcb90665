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

#include "ddmpc/plant.hpp"

#include <algorithm>
#include <complex>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "ddmpc/errors.hpp"
#include "ddmpc/linalg.hpp"

namespace ddmpc {

namespace {

void expect_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                  const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << name << " is " << m.rows() << "x" << m.cols() << ", expected " << rows << "x" << cols;
    throw DimensionError(os.str());
  }
}

// Stacked coupling matrix [B_ij1 B_ij2 ...] in neighbor order.
Eigen::MatrixXd coupling_matrix(const NetworkModel& model, int i) {
  const auto& sub = model.subsystem(i);
  Eigen::MatrixXd e(sub.n(), model.neighbor_output_dim(i));
  int col = 0;
  for (int j : model.graph().neighbors(i)) {
    const auto& bij = sub.coupling.at(j);
    e.middleCols(col, bij.cols()) = bij;
    col += static_cast<int>(bij.cols());
  }
  return e;
}

// Popov-Belevitch-Hautus observability test.
bool pbh_observable(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c) {
  const Eigen::Index n = a.rows();
  Eigen::ComplexEigenSolver<Eigen::MatrixXd> es(a, false);
  const Eigen::MatrixXcd ac = a.cast<std::complex<double>>();
  const Eigen::MatrixXcd cc = c.cast<std::complex<double>>();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::MatrixXcd test(n + c.rows(), n);
    test.topRows(n) = ac - es.eigenvalues()(k) * Eigen::MatrixXcd::Identity(n, n);
    test.bottomRows(c.rows()) = cc;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(test);
    const auto& s = svd.singularValues();
    if (s(n - 1) <= 1e-9 * std::max(1.0, s(0))) return false;
  }
  return true;
}

}  // namespace

void SubsystemModel::validate() const {
  const int nx = n();
  expect_shape(A, nx, nx, "A");
  expect_shape(B, nx, m(), "B");
  expect_shape(C, p(), nx, "C");
  expect_shape(D, p(), m(), "D");
  for (const auto& [j, bij] : coupling) {
    if (bij.rows() != nx) throw DimensionError("coupling block of neighbor " + std::to_string(j));
  }
}

CouplingGraph::CouplingGraph(std::vector<std::vector<int>> neighbor_sets)
    : neighbors_(std::move(neighbor_sets)) {
  if (neighbors_.size() < 1) throw DimensionError("coupling graph needs at least one node");
  const int n = size();
  for (int i = 0; i < n; ++i) {
    auto& ni = neighbors_[i];
    std::sort(ni.begin(), ni.end());
    if (std::adjacent_find(ni.begin(), ni.end()) != ni.end()) {
      throw DimensionError("duplicate neighbor of node " + std::to_string(i));
    }
    for (int j : ni) {
      if (j == i) throw DimensionError("self-loop at node " + std::to_string(i));
      if (j < 0 || j >= n) throw DimensionError("neighbor id out of range at node " + std::to_string(i));
    }
  }
}

CouplingGraph CouplingGraph::chain(int size) {
  std::vector<std::vector<int>> sets(size);
  for (int i = 0; i < size; ++i) {
    if (i > 0) sets[i].push_back(i - 1);
    if (i + 1 < size) sets[i].push_back(i + 1);
  }
  return CouplingGraph(std::move(sets));
}

std::vector<std::pair<int, int>> CouplingGraph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < size(); ++i) {
    for (int j : neighbors_[i]) out.emplace_back(j, i);
  }
  return out;
}

NetworkModel::NetworkModel(CouplingGraph graph, std::vector<SubsystemModel> subsystems)
    : graph_(std::move(graph)), subsystems_(std::move(subsystems)) {
  if (static_cast<int>(subsystems_.size()) != graph_.size()) {
    throw DimensionError("number of subsystems differs from number of graph nodes");
  }
  for (int i = 0; i < size(); ++i) {
    const auto& sub = subsystems_[i];
    sub.validate();
    const auto& ni = graph_.neighbors(i);
    if (sub.coupling.size() != ni.size()) {
      throw DimensionError("coupling keys of node " + std::to_string(i) +
                           " differ from its neighbor set");
    }
    for (int j : ni) {
      auto it = sub.coupling.find(j);
      if (it == sub.coupling.end()) {
        throw DimensionError("node " + std::to_string(i) + " lacks coupling to " +
                             std::to_string(j));
      }
      if (it->second.cols() != subsystems_[j].p()) {
        throw DimensionError("coupling block " + std::to_string(j) + "->" + std::to_string(i) +
                             " does not match the neighbor output dimension");
      }
    }
    states_.push_back(Eigen::VectorXd::Zero(sub.n()));
  }
}

void NetworkModel::set_state(int i, const Eigen::VectorXd& x) {
  if (x.size() != subsystems_.at(i).n()) throw DimensionError("state dimension mismatch");
  states_[i] = x;
}

void NetworkModel::set_states(const std::vector<Eigen::VectorXd>& x) {
  if (static_cast<int>(x.size()) != size()) throw DimensionError("state count mismatch");
  for (int i = 0; i < size(); ++i) set_state(i, x[i]);
}

int NetworkModel::neighbor_output_dim(int i) const {
  int q = 0;
  for (int j : graph_.neighbors(i)) q += subsystems_[j].p();
  return q;
}

std::vector<Eigen::VectorXd> NetworkModel::outputs(
    const std::vector<Eigen::VectorXd>& inputs) const {
  if (static_cast<int>(inputs.size()) != size()) throw DimensionError("input count mismatch");
  std::vector<Eigen::VectorXd> y(size());
  for (int i = 0; i < size(); ++i) {
    const auto& sub = subsystems_[i];
    if (inputs[i].size() != sub.m()) {
      throw DimensionError("input of node " + std::to_string(i) + " has wrong dimension");
    }
    y[i] = sub.C * states_[i] + sub.D * inputs[i];
  }
  return y;
}

Eigen::VectorXd NetworkModel::neighbor_outputs(int i,
                                               const std::vector<Eigen::VectorXd>& outputs) const {
  Eigen::VectorXd out(neighbor_output_dim(i));
  int row = 0;
  for (int j : graph_.neighbors(i)) {
    out.segment(row, outputs[j].size()) = outputs[j];
    row += static_cast<int>(outputs[j].size());
  }
  return out;
}

GlobalSystem NetworkModel::global_system() const {
  std::vector<int> xo(size() + 1, 0), uo(size() + 1, 0), yo(size() + 1, 0);
  for (int i = 0; i < size(); ++i) {
    xo[i + 1] = xo[i] + subsystems_[i].n();
    uo[i + 1] = uo[i] + subsystems_[i].m();
    yo[i + 1] = yo[i] + subsystems_[i].p();
  }
  GlobalSystem g;
  g.A = Eigen::MatrixXd::Zero(xo.back(), xo.back());
  g.B = Eigen::MatrixXd::Zero(xo.back(), uo.back());
  g.C = Eigen::MatrixXd::Zero(yo.back(), xo.back());
  g.D = Eigen::MatrixXd::Zero(yo.back(), uo.back());
  for (int i = 0; i < size(); ++i) {
    const auto& s = subsystems_[i];
    g.A.block(xo[i], xo[i], s.n(), s.n()) = s.A;
    g.B.block(xo[i], uo[i], s.n(), s.m()) = s.B;
    g.C.block(yo[i], xo[i], s.p(), s.n()) = s.C;
    g.D.block(yo[i], uo[i], s.p(), s.m()) = s.D;
    for (int j : graph_.neighbors(i)) {
      const auto& sj = subsystems_[j];
      const auto& bij = s.coupling.at(j);
      g.A.block(xo[i], xo[j], s.n(), sj.n()) += bij * sj.C;
      g.B.block(xo[i], uo[j], s.n(), sj.m()) += bij * sj.D;
    }
  }
  return g;
}

std::vector<Eigen::VectorXd> step_network(NetworkModel& model,
                                          const std::vector<Eigen::VectorXd>& inputs) {
  const auto y = model.outputs(inputs);
  std::vector<Eigen::VectorXd> next(model.size());
  for (int i = 0; i < model.size(); ++i) {
    const auto& sub = model.subsystem(i);
    next[i] = sub.A * model.states()[i] + sub.B * inputs[i];
    for (int j : model.graph().neighbors(i)) next[i] += sub.coupling.at(j) * y[j];
  }
  model.set_states(next);
  return y;
}

void DataSet::validate() const {
  if (y.length() != u.length() || y_neighbors.length() != u.length()) {
    throw DimensionError("data set trajectories differ in length");
  }
}

void write_dataset_csv(const std::string& path, const DataSet& data) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  std::vector<std::string> header;
  for (int k = 0; k < data.u.dim(); ++k) header.push_back("u[" + std::to_string(k) + "]");
  for (int k = 0; k < data.y.dim(); ++k) header.push_back("y[" + std::to_string(k) + "]");
  for (int k = 0; k < data.y_neighbors.dim(); ++k) {
    header.push_back("y_neighbors[" + std::to_string(k) + "]");
  }
  for (size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << '\n' << std::setprecision(17);
  for (int t = 0; t < data.length(); ++t) {
    bool first = true;
    for (const auto* traj : {&data.u, &data.y, &data.y_neighbors}) {
      for (int k = 0; k < traj->dim(); ++k) {
        out << (first ? "" : ",") << traj->samples()(k, t);
        first = false;
      }
    }
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path);
}

DataSet read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open data file " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty data file " + path);
  int m = 0, p = 0, q = 0;
  {
    std::stringstream ss(line);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (name.rfind("u[", 0) == 0) {
        ++m;
      } else if (name.rfind("y_neighbors[", 0) == 0) {
        ++q;
      } else if (name.rfind("y[", 0) == 0) {
        ++p;
      } else {
        throw Error("unknown column '" + name + "' in " + path);
      }
    }
  }
  std::vector<Eigen::VectorXd> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Eigen::VectorXd row(m + p + q);
    std::stringstream ss(line);
    std::string cell;
    int k = 0;
    while (std::getline(ss, cell, ',')) {
      if (k >= row.size()) throw Error("too many columns in " + path);
      row(k++) = std::stod(cell);
    }
    if (k != row.size()) throw Error("too few columns in " + path);
    rows.push_back(row);
  }
  Eigen::MatrixXd all(m + p + q, static_cast<Eigen::Index>(rows.size()));
  for (size_t t = 0; t < rows.size(); ++t) all.col(static_cast<Eigen::Index>(t)) = rows[t];
  DataSet ds;
  ds.u = Trajectory(all.topRows(m));
  ds.y = Trajectory(all.middleRows(m, p));
  ds.y_neighbors = Trajectory(all.bottomRows(q));
  return ds;
}

InputBox InputBox::symmetric(int m, double bound) {
  return InputBox{Eigen::VectorXd::Constant(m, -bound), Eigen::VectorXd::Constant(m, bound)};
}

bool InputBox::contains(const Eigen::VectorXd& u, double tol) const {
  if (u.size() != lower.size()) throw DimensionError("input box dimension mismatch");
  return ((u - lower).array() >= -tol).all() && ((upper - u).array() >= -tol).all();
}

int required_excitation_order(int horizon, int lag) { return horizon + 1 + 2 * lag; }

DataCollection collect_data(const NetworkModel& model, int length,
                            const std::vector<InputBox>& excitation, std::uint64_t seed,
                            int excitation_order, int retry_cap, double rank_tol) {
  if (static_cast<int>(excitation.size()) != model.size()) {
    throw DimensionError("one excitation box per node is required");
  }
  if (length < excitation_order) throw DimensionError("data length below excitation order");
  int failing = -1;
  for (int attempt = 0; attempt < retry_cap; ++attempt) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(attempt);
    std::mt19937_64 rng(s);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    NetworkModel sim = model;
    for (int i = 0; i < sim.size(); ++i) {
      Eigen::VectorXd x(sim.subsystem(i).n());
      for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = unit(rng);
      sim.set_state(i, x);
    }
    std::vector<Eigen::MatrixXd> u(sim.size()), y(sim.size()), yn(sim.size());
    for (int i = 0; i < sim.size(); ++i) {
      u[i].resize(sim.subsystem(i).m(), length);
      y[i].resize(sim.subsystem(i).p(), length);
      yn[i].resize(sim.neighbor_output_dim(i), length);
    }
    for (int t = 0; t < length; ++t) {
      std::vector<Eigen::VectorXd> inputs(sim.size());
      for (int i = 0; i < sim.size(); ++i) {
        const auto& box = excitation[i];
        inputs[i].resize(box.dim());
        for (int k = 0; k < box.dim(); ++k) {
          inputs[i](k) = box.lower(k) + (box.upper(k) - box.lower(k)) * frac(rng);
        }
        u[i].col(t) = inputs[i];
      }
      const auto out = step_network(sim, inputs);
      for (int i = 0; i < sim.size(); ++i) {
        y[i].col(t) = out[i];
        yn[i].col(t) = sim.neighbor_outputs(i, out);
      }
    }
    DataCollection result;
    result.seed_used = s;
    result.attempts = attempt + 1;
    failing = -1;
    for (int i = 0; i < sim.size(); ++i) {
      DataSet ds{Trajectory(u[i]), Trajectory(y[i]), Trajectory(yn[i])};
      if (failing < 0 &&
          !check_persistent_excitation(stack_signals({ds.u, ds.y_neighbors}), excitation_order,
                                       rank_tol)) {
        failing = i;
      }
      result.data.push_back(std::move(ds));
    }
    if (failing < 0) return result;
  }
  throw ExcitationError("data of node " + std::to_string(failing) +
                            " is not persistently exciting of order " +
                            std::to_string(excitation_order) + " after " +
                            std::to_string(retry_cap) + " attempts",
                        failing);
}

Eigen::VectorXd ExtendedState::stacked() const {
  Eigen::VectorXd out(dim());
  out << u_window, y_neighbors_window, y_window;
  return out;
}

ExtendedState extended_state_from_history(const Trajectory& u, const Trajectory& y_neighbors,
                                          const Trajectory& y, int t, int n) {
  for (const auto* h : {&u, &y_neighbors, &y}) {
    if (!h->contains(t - n) || !h->contains(t - 1)) {
      throw WindowError("history does not cover [" + std::to_string(t - n) + ", " +
                        std::to_string(t - 1) + "]");
    }
  }
  ExtendedState xi;
  xi.u_window = u.slice(t - n, t - 1).stacked();
  xi.y_neighbors_window = y_neighbors.slice(t - n, t - 1).stacked();
  xi.y_window = y.slice(t - n, t - 1).stacked();
  return xi;
}

bool StructuralReport::all_pass() const {
  return observable && std::all_of(controllable.begin(), controllable.end(),
                                   [](bool b) { return b; });
}

StructuralReport verify_structural_assumptions(const NetworkModel& model) {
  StructuralReport report;
  for (int i = 0; i < model.size(); ++i) {
    const auto& sub = model.subsystem(i);
    Eigen::MatrixXd b(sub.n(), sub.m() + model.neighbor_output_dim(i));
    b << sub.B, coupling_matrix(model, i);
    report.controllable.push_back(is_controllable(sub.A, b));
  }
  const GlobalSystem g = model.global_system();
  report.observable = pbh_observable(g.A, g.C);
  return report;
}

Eigen::MatrixXd true_output_map(const NetworkModel& model, int i, int n) {
  const auto& sub = model.subsystem(i);
  const int nx = sub.n(), m = sub.m(), p = sub.p();
  const int q = model.neighbor_output_dim(i);
  const Eigen::MatrixXd e = coupling_matrix(model, i);
  Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(n * p, nx);
  Eigen::MatrixXd tu = Eigen::MatrixXd::Zero(n * p, n * m);
  Eigen::MatrixXd tn = Eigen::MatrixXd::Zero(n * p, n * q);
  std::vector<Eigen::MatrixXd> apow(n + 1);
  apow[0] = Eigen::MatrixXd::Identity(nx, nx);
  for (int k = 1; k <= n; ++k) apow[k] = sub.A * apow[k - 1];
  for (int k = 0; k < n; ++k) {
    obs.middleRows(k * p, p) = sub.C * apow[k];
    tu.block(k * p, k * m, p, m) = sub.D;
    for (int l = 0; l < k; ++l) {
      tu.block(k * p, l * m, p, m) = sub.C * apow[k - 1 - l] * sub.B;
      tn.block(k * p, l * q, p, q) = sub.C * apow[k - 1 - l] * e;
    }
  }
  if (numerical_rank(obs, 1e-10) != nx) {
    throw DimensionError("local pair (A, C) of node " + std::to_string(i) +
                         " is not observable in " + std::to_string(n) + " steps");
  }
  const Eigen::MatrixXd obs_pinv = pseudo_inverse(obs);
  Eigen::MatrixXd cu(nx, n * m), cn(nx, n * q);
  for (int l = 0; l < n; ++l) {
    cu.middleCols(l * m, m) = apow[n - 1 - l] * sub.B;
    cn.middleCols(l * q, q) = apow[n - 1 - l] * e;
  }
  const Eigen::MatrixXd gain = apow[n] * obs_pinv;
  Eigen::MatrixXd delta(p, n * (m + q + p) + m);
  delta << sub.C * (cu - gain * tu), sub.C * (cn - gain * tn), sub.C * gain, sub.D;
  return delta;
}

SubsystemModel mass_spring_subsystem(double mass, double damping,
                                     const std::map<int, double>& springs, double dt,
                                     double coupling_scale) {
  double k_total = 0.0;
  for (const auto& [j, k] : springs) k_total += k;
  SubsystemModel s;
  s.A.resize(2, 2);
  s.A << 1.0, dt, -dt * k_total / mass, 1.0 - dt * damping / mass;
  s.B.resize(2, 1);
  s.B << 0.0, 1.0;
  s.C.resize(1, 2);
  s.C << dt / mass, 0.0;
  s.D = Eigen::MatrixXd::Zero(1, 1);
  if (coupling_scale == 0.0) return s;
  for (const auto& [j, k] : springs) {
    Eigen::MatrixXd bij(2, 1);
    bij << 0.0, coupling_scale * k;
    s.coupling[j] = bij;
  }
  return s;
}

NetworkModel make_chain_network(const ChainParameters& params) {
  const CouplingGraph chain = CouplingGraph::chain(params.size);
  std::vector<SubsystemModel> subs;
  for (int i = 0; i < params.size; ++i) {
    std::map<int, double> springs;
    for (int j : chain.neighbors(i)) springs[j] = params.spring;
    subs.push_back(mass_spring_subsystem(params.mass, params.damping, springs, params.dt,
                                         params.coupling_scale));
  }
  // Neighbors are the nodes with a nonzero coupling block.
  if (params.coupling_scale == 0.0) {
    return NetworkModel(CouplingGraph(std::vector<std::vector<int>>(params.size)), std::move(subs));
  }
  return NetworkModel(chain, std::move(subs));
}

PreRunHistory rewind_pre_run(NetworkModel& model, const std::vector<Eigen::VectorXd>& x0,
                             int n, const std::vector<Eigen::VectorXd>& held_input) {
  const GlobalSystem g = model.global_system();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(g.A);
  if (!lu.isInvertible()) throw Error("network transition matrix is singular; cannot rewind");
  Eigen::VectorXd ug(g.B.cols()), x(g.A.rows());
  {
    int ur = 0, xr = 0;
    for (int i = 0; i < model.size(); ++i) {
      ug.segment(ur, held_input.at(i).size()) = held_input[i];
      x.segment(xr, x0.at(i).size()) = x0[i];
      ur += static_cast<int>(held_input[i].size());
      xr += static_cast<int>(x0[i].size());
    }
  }
  for (int k = 0; k < n; ++k) x = lu.solve(x - g.B * ug);
  std::vector<Eigen::VectorXd> start(model.size());
  for (int i = 0, xr = 0; i < model.size(); ++i) {
    start[i] = x.segment(xr, model.subsystem(i).n());
    xr += model.subsystem(i).n();
  }
  model.set_states(start);
  PreRunHistory h;
  for (int i = 0; i < model.size(); ++i) {
    h.u.push_back(Trajectory::zeros(model.subsystem(i).m(), n, -n));
    h.y.push_back(Trajectory::zeros(model.subsystem(i).p(), n, -n));
    h.y_neighbors.push_back(Trajectory::zeros(model.neighbor_output_dim(i), n, -n));
  }
  for (int t = -n; t < 0; ++t) {
    const auto y = step_network(model, held_input);
    for (int i = 0; i < model.size(); ++i) {
      h.u[i].set(t, held_input[i]);
      h.y[i].set(t, y[i]);
      h.y_neighbors[i].set(t, model.neighbor_outputs(i, y));
    }
  }
  model.set_states(x0);
  return h;
}

}  // namespace ddmpc
