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
#include <ostream>
#include <string>
#include <vector>

#include "ddmpc/agent.hpp"
#include "ddmpc/config.hpp"
#include "ddmpc/plant.hpp"
#include "ddmpc/scheme.hpp"
#include "ddmpc/terminal.hpp"

namespace ddmpc {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitExcitation = 2,
  kExitSynthesis = 3,
  kExitInfeasible = 4,
  kExitVerify = 5,
};

// Pipeline stages shared by the commands and the acceptance tests. They
// throw library errors; the cmd_* wrappers map them to exit codes.

DataCollection generate_data(const ExperimentConfig& cfg, const NetworkModel& model);

/// Synthesis and calibration of one node; SynthesisInfeasibleError names it.
CalibrationReport synthesize_node(const ExperimentConfig& cfg, const NetworkModel& model, int node,
                                  const DataSet& data, SynthesisResult* synth = nullptr);

std::vector<AgentConfig> build_agents(const ExperimentConfig& cfg, const NetworkModel& model,
                                      const std::vector<DataSet>& data,
                                      const std::vector<TerminalIngredients>& terminal);

struct RunOutcome {
  std::vector<Eigen::VectorXd> x0;
  BootstrapResult bootstrap;
  ClosedLoopLog log;
};

/// Samples the initial states, rewinds the plant, bootstraps and runs the
/// closed loop. `model` is left at the final state.
RunOutcome simulate_closed_loop(const ExperimentConfig& cfg, NetworkModel& model,
                                const std::vector<AgentConfig>& agents);

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  /// Sufficient conditions that are reported but do not fail verification.
  std::vector<VerifyCheck> flags;
  bool all_pass() const;
};

/// `logged_deviation` holds the per-agent deviation proxy from a run log and
/// may be empty when no run is available.
VerifyReport verify_artifacts(const ExperimentConfig& cfg, const NetworkModel& model,
                              const std::vector<DataSet>& data,
                              const std::vector<TerminalIngredients>& terminal,
                              const std::vector<double>& logged_deviation);

// Commands. Artifacts live under out_dir in data/, terminal/ and run/.
int cmd_generate_data(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& os);
int cmd_synthesize(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& os);
int cmd_run(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& os);
int cmd_verify(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& os);

}  // namespace ddmpc
