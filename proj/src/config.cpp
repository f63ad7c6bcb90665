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


#include "ddmpc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ddmpc/errors.hpp"

namespace ddmpc {

namespace {

using Json = nlohmann::json;

// Reads the keys of one object and rejects anything not consumed.
class Section {
 public:
  Section(const Json& parent, const std::string& key, const std::string& display = "")
      : name_(display.empty() ? key : display) {
    if (parent.contains(key)) {
      node_ = parent.at(key);
      if (!node_.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
    } else {
      node_ = Json::object();
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    try {
      out = node_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }
  bool has(const char* key) const { return node_.contains(key); }
  const Json& raw(const char* key) {
    seen_.insert(key);
    return node_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key '" + name_ + "." + key + "'");
    }
  }

 private:
  Json node_;
  std::string name_;
  std::set<std::string> seen_;
};

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& what) {
  if (j.is_number()) return Eigen::MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array()) throw ConfigError(what + " must be a matrix (array of rows)");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols) {
      throw ConfigError(what + " has ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

ExplicitNode node_from_json(const Json& j, int index) {
  const std::string name = "network.nodes[" + std::to_string(index) + "]";
  if (!j.is_object()) throw ConfigError(name + " must be an object");
  Section s(Json{{"node", j}}, "node", name);
  ExplicitNode n;
  n.A = matrix_from_json(s.raw("A"), name + ".A");
  n.B = matrix_from_json(s.raw("B"), name + ".B");
  n.C = matrix_from_json(s.raw("C"), name + ".C");
  n.D = s.has("D") ? matrix_from_json(s.raw("D"), name + ".D")
                   : Eigen::MatrixXd::Zero(n.C.rows(), n.B.cols());
  if (s.has("coupling")) {
    const Json& c = s.raw("coupling");
    if (!c.is_object()) throw ConfigError(name + ".coupling must map neighbor ids to matrices");
    for (const auto& [key, value] : c.items()) {
      int j_id = 0;
      try {
        j_id = std::stoi(key);
      } catch (const std::exception&) {
        throw ConfigError(name + ".coupling key '" + key + "' is not a node id");
      }
      n.coupling[j_id] = matrix_from_json(value, name + ".coupling." + key);
    }
  }
  s.finish();
  return n;
}

Json node_to_json(const ExplicitNode& n) {
  Json j;
  j["A"] = matrix_to_json(n.A);
  j["B"] = matrix_to_json(n.B);
  j["C"] = matrix_to_json(n.C);
  j["D"] = matrix_to_json(n.D);
  Json c = Json::object();
  for (const auto& [id, m] : n.coupling) c[std::to_string(id)] = matrix_to_json(m);
  j["coupling"] = c;
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto& nw = network;
  if (nw.size < 1) throw ConfigError("network.size must be positive");
  if (nw.topology != "chain" && nw.topology != "adjacency" && nw.topology != "explicit") {
    throw ConfigError("network.topology must be chain, adjacency or explicit");
  }
  if (nw.topology == "adjacency" && static_cast<int>(nw.adjacency.size()) != nw.size) {
    throw ConfigError("network.adjacency needs one neighbor list per node");
  }
  if (nw.topology == "explicit" && static_cast<int>(nw.nodes.size()) != nw.size) {
    throw ConfigError("network.nodes needs one entry per node");
  }
  if (nw.lag < 1) throw ConfigError("network.lag must be at least 1");
  if (!(nw.mass > 0.0) || !(nw.dt > 0.0)) throw ConfigError("network.mass and dt must be positive");
  if (data.length < 1) throw ConfigError("data.length must be positive");
  if (!(data.excitation > 0.0)) throw ConfigError("data.excitation must be positive");
  if (mpc.horizon <= nw.lag) throw ConfigError("mpc.horizon must exceed network.lag");
  if (!(mpc.q > 0.0) || !(mpc.r > 0.0)) throw ConfigError("mpc.q and mpc.r must be positive");
  if (!(mpc.omega >= 0.0)) throw ConfigError("mpc.omega must be nonnegative");
  if (!(mpc.epsilon > 0.0)) throw ConfigError("mpc.epsilon must be positive");
  if (!(mpc.input_bound > 0.0)) throw ConfigError("mpc.input_bound must be positive (nonempty box)");
  if (mpc.theta_override > 0.0 && !(mpc.theta_override < 1.0)) {
    throw ConfigError("mpc.theta_override must lie in (0, 1)");
  }
  if (!(mpc.theta_floor > 0.0 && mpc.theta_floor < 1.0)) {
    throw ConfigError("mpc.theta_floor must lie in (0, 1)");
  }
  if (!(terminal.decay >= 0.0 && terminal.decay < 1.0)) {
    throw ConfigError("terminal.decay must lie in [0, 1)");
  }
  if (terminal.calibration_samples < 1) throw ConfigError("terminal.calibration_samples must be positive");
  if (run.steps < 1) throw ConfigError("run.steps must be positive");
  if (run.initial_range.empty()) throw ConfigError("run.initial_range must not be empty");
  for (double r : run.initial_range) {
    if (!(r >= 0.0)) throw ConfigError("run.initial_range entries must be nonnegative");
  }
  if (run.bootstrap != "centralized" && run.bootstrap != "file") {
    throw ConfigError("run.bootstrap must be centralized or file");
  }
  if (run.bootstrap == "file" && run.bootstrap_file.empty()) {
    throw ConfigError("run.bootstrap_file is required for run.bootstrap = file");
  }
  if (run.threads < 1) throw ConfigError("run.threads must be positive");
  for (int i : run.plot_nodes) {
    if (i < 0 || i >= nw.size) throw ConfigError("run.plot_nodes entry out of range");
  }
  if (solver.qcqp.max_newton_steps < 1) throw ConfigError("solver.max_newton_steps must be positive");
  if (!(solver.recheck_tol > 0.0)) throw ConfigError("solver.recheck_tol must be positive");
}

NetworkModel ExperimentConfig::build_network() const {
  const auto& nw = network;
  if (nw.topology == "chain") {
    ChainParameters p;
    p.size = nw.size;
    p.mass = nw.mass;
    p.damping = nw.damping;
    p.spring = nw.spring;
    p.dt = nw.dt;
    p.coupling_scale = nw.coupling_scale;
    return make_chain_network(p);
  }
  if (nw.topology == "adjacency") {
    std::vector<SubsystemModel> subs;
    for (int i = 0; i < nw.size; ++i) {
      std::map<int, double> springs;
      for (int j : nw.adjacency[i]) springs[j] = nw.spring;
      subs.push_back(mass_spring_subsystem(nw.mass, nw.damping, springs, nw.dt, nw.coupling_scale));
    }
    if (nw.coupling_scale == 0.0) {
      return NetworkModel(CouplingGraph(std::vector<std::vector<int>>(nw.size)), std::move(subs));
    }
    return NetworkModel(CouplingGraph(nw.adjacency), std::move(subs));
  }
  std::vector<std::vector<int>> sets;
  std::vector<SubsystemModel> subs;
  for (const ExplicitNode& n : nw.nodes) {
    SubsystemModel s;
    s.A = n.A;
    s.B = n.B;
    s.C = n.C;
    s.D = n.D;
    s.coupling = n.coupling;
    std::vector<int> nb;
    for (const auto& [j, m] : n.coupling) nb.push_back(j);
    sets.push_back(nb);
    subs.push_back(std::move(s));
  }
  return NetworkModel(CouplingGraph(sets), std::move(subs));
}

InputBox ExperimentConfig::input_box(int m) const { return InputBox::symmetric(m, mpc.input_bound); }

SynthesisSettings ExperimentConfig::synthesis_settings() const {
  SynthesisSettings s;
  s.decay = terminal.decay;
  s.p_floor = terminal.p_floor;
  s.margin = terminal.margin;
  s.tau_max = terminal.tau_max;
  s.lmi.gap_tol = solver.lmi_gap_tol;
  s.lmi.max_outer_iterations = solver.lmi_max_outer_iterations;
  return s;
}

CalibrationSettings ExperimentConfig::calibration_settings() const {
  CalibrationSettings c;
  c.epsilon_target = mpc.epsilon;
  c.theta_floor = mpc.theta_floor;
  c.theta_override = mpc.theta_override;
  c.samples = terminal.calibration_samples;
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  {
    Section s(root, "network");
    s.get("size", c.network.size);
    s.get("topology", c.network.topology);
    s.get("adjacency", c.network.adjacency);
    s.get("mass", c.network.mass);
    s.get("damping", c.network.damping);
    s.get("spring", c.network.spring);
    s.get("dt", c.network.dt);
    s.get("coupling_scale", c.network.coupling_scale);
    s.get("lag", c.network.lag);
    if (s.has("nodes")) {
      const Json& nodes = s.raw("nodes");
      if (!nodes.is_array()) throw ConfigError("network.nodes must be an array");
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        c.network.nodes.push_back(node_from_json(nodes[k], static_cast<int>(k)));
      }
    }
    s.finish();
  }
  {
    Section s(root, "data");
    s.get("length", c.data.length);
    s.get("seed", c.data.seed);
    s.get("excitation", c.data.excitation);
    s.finish();
  }
  {
    Section s(root, "mpc");
    s.get("horizon", c.mpc.horizon);
    s.get("q", c.mpc.q);
    s.get("r", c.mpc.r);
    s.get("omega", c.mpc.omega);
    s.get("epsilon", c.mpc.epsilon);
    s.get("theta_override", c.mpc.theta_override);
    s.get("theta_floor", c.mpc.theta_floor);
    s.get("input_bound", c.mpc.input_bound);
    s.finish();
  }
  {
    Section s(root, "terminal");
    s.get("decay", c.terminal.decay);
    s.get("p_floor", c.terminal.p_floor);
    s.get("margin", c.terminal.margin);
    s.get("tau_max", c.terminal.tau_max);
    s.get("calibration_samples", c.terminal.calibration_samples);
    s.finish();
  }
  {
    Section s(root, "run");
    s.get("steps", c.run.steps);
    s.get("seed", c.run.seed);
    s.get("initial_range", c.run.initial_range);
    s.get("steer_steps", c.run.steer_steps);
    s.get("steer_input_bound", c.run.steer_input_bound);
    s.get("bootstrap", c.run.bootstrap);
    s.get("bootstrap_file", c.run.bootstrap_file);
    s.get("threads", c.run.threads);
    s.get("plot_nodes", c.run.plot_nodes);
    s.finish();
  }
  {
    Section s(root, "solver");
    auto& q = c.solver.qcqp;
    s.get("max_newton_steps", q.max_newton_steps);
    s.get("max_newton_per_center", q.max_newton_per_center);
    s.get("barrier_growth", q.barrier_growth);
    s.get("gap_abs", q.gap_abs);
    s.get("gap_rel", q.gap_rel);
    s.get("newton_tol", q.newton_tol);
    s.get("equality_tol", q.equality_tol);
    s.get("regularization", q.regularization);
    s.get("lmi_gap_tol", c.solver.lmi_gap_tol);
    s.get("lmi_max_outer_iterations", c.solver.lmi_max_outer_iterations);
    s.get("recheck_tol", c.solver.recheck_tol);
    s.finish();
  }
  for (const auto& [key, value] : root.items()) {
    static const std::set<std::string> known = {"network", "data", "mpc", "terminal", "run", "solver"};
    if (!known.count(key)) throw ConfigError("unknown section '" + key + "'");
  }
  c.validate();
  return c;
}

std::string serialize_config(const ExperimentConfig& c) {
  Json root;
  Json nw;
  nw["size"] = c.network.size;
  nw["topology"] = c.network.topology;
  nw["adjacency"] = c.network.adjacency;
  nw["mass"] = c.network.mass;
  nw["damping"] = c.network.damping;
  nw["spring"] = c.network.spring;
  nw["dt"] = c.network.dt;
  nw["coupling_scale"] = c.network.coupling_scale;
  nw["lag"] = c.network.lag;
  Json nodes = Json::array();
  for (const auto& n : c.network.nodes) nodes.push_back(node_to_json(n));
  nw["nodes"] = nodes;
  root["network"] = nw;
  root["data"] = {{"length", c.data.length}, {"seed", c.data.seed}, {"excitation", c.data.excitation}};
  root["mpc"] = {{"horizon", c.mpc.horizon},
                 {"q", c.mpc.q},
                 {"r", c.mpc.r},
                 {"omega", c.mpc.omega},
                 {"epsilon", c.mpc.epsilon},
                 {"theta_override", c.mpc.theta_override},
                 {"theta_floor", c.mpc.theta_floor},
                 {"input_bound", c.mpc.input_bound}};
  root["terminal"] = {{"decay", c.terminal.decay},
                      {"p_floor", c.terminal.p_floor},
                      {"margin", c.terminal.margin},
                      {"tau_max", c.terminal.tau_max},
                      {"calibration_samples", c.terminal.calibration_samples}};
  root["run"] = {{"steps", c.run.steps},
                 {"seed", c.run.seed},
                 {"initial_range", c.run.initial_range},
                 {"steer_steps", c.run.steer_steps},
                 {"steer_input_bound", c.run.steer_input_bound},
                 {"bootstrap", c.run.bootstrap},
                 {"bootstrap_file", c.run.bootstrap_file},
                 {"threads", c.run.threads},
                 {"plot_nodes", c.run.plot_nodes}};
  const auto& q = c.solver.qcqp;
  root["solver"] = {{"max_newton_steps", q.max_newton_steps},
                    {"max_newton_per_center", q.max_newton_per_center},
                    {"barrier_growth", q.barrier_growth},
                    {"gap_abs", q.gap_abs},
                    {"gap_rel", q.gap_rel},
                    {"newton_tol", q.newton_tol},
                    {"equality_tol", q.equality_tol},
                    {"regularization", q.regularization},
                    {"lmi_gap_tol", c.solver.lmi_gap_tol},
                    {"lmi_max_outer_iterations", c.solver.lmi_max_outer_iterations},
                    {"recheck_tol", c.solver.recheck_tol}};
  return root.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << serialize_config(cfg);
}

}  // namespace ddmpc
