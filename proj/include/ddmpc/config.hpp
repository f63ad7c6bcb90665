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
#include <vector>

#include <Eigen/Dense>

#include "ddmpc/plant.hpp"
#include "ddmpc/solvers/lmi.hpp"
#include "ddmpc/solvers/qcqp.hpp"
#include "ddmpc/terminal.hpp"

namespace ddmpc {

/// Explicit node description for topology "explicit". Neighbors are the keys
/// of `coupling`.
struct ExplicitNode {
  Eigen::MatrixXd A, B, C, D;
  std::map<int, Eigen::MatrixXd> coupling;
};

struct NetworkSection {
  int size = 64;
  std::string topology = "chain";  // chain | adjacency | explicit
  std::vector<std::vector<int>> adjacency;
  double mass = 1.0;
  double damping = 0.75;
  double spring = 1.25;
  double dt = 0.2;
  double coupling_scale = 1.0;
  std::vector<ExplicitNode> nodes;
  int lag = 2;
};

struct DataSection {
  int length = 100;
  std::uint64_t seed = 1;
  double excitation = 2.0;
};

struct MpcSection {
  int horizon = 5;
  double q = 1.0;  // Q = q I
  double r = 1.0;  // R = r I
  double omega = 0.01;
  double epsilon = 1e-5;
  double theta_override = -1.0;  // negative: computed
  double theta_floor = 0.5;
  double input_bound = 2.0;
};

struct TerminalSection {
  double decay = 0.3;
  double p_floor = 1.0;
  double margin = 1e-6;
  double tau_max = 1e4;
  int calibration_samples = 1000;
};

struct RunSection {
  int steps = 10;
  std::uint64_t seed = 1;
  std::vector<double> initial_range = {3.3};
  int steer_steps = 3;
  double steer_input_bound = 1.6;
  std::string bootstrap = "centralized";  // centralized | file
  std::string bootstrap_file;
  int threads = 1;
  std::vector<int> plot_nodes = {0, 1, 2, 3, 4};
};

struct SolverSection {
  solvers::QcqpSettings qcqp;
  double lmi_gap_tol = 1e-6;
  int lmi_max_outer_iterations = 60;
  double recheck_tol = 1e-6;
};

struct ExperimentConfig {
  NetworkSection network;
  DataSection data;
  MpcSection mpc;
  TerminalSection terminal;
  RunSection run;
  SolverSection solver;

  /// Throws ConfigError on inconsistent values.
  void validate() const;

  NetworkModel build_network() const;
  InputBox input_box(int m) const;
  SynthesisSettings synthesis_settings() const;
  CalibrationSettings calibration_settings() const;
};

/// Unknown keys are rejected so typos surface as ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
std::string serialize_config(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& cfg);

}  // namespace ddmpc
