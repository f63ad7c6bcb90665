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


// Command-line driver: generate-data, synthesize, run, verify.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ddmpc/commands.hpp"
#include "ddmpc/config.hpp"
#include "ddmpc/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Data-driven distributed MPC for networks of coupled LTI subsystems"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const ddmpc::ExperimentConfig&, const std::string&, std::ostream&);
    bool seeds_data;
  };
  const Command commands[] = {
      {"generate-data", "record one persistently exciting data set per node",
       ddmpc::cmd_generate_data, true},
      {"synthesize", "compute terminal ingredients per node from the recorded data",
       ddmpc::cmd_synthesize, false},
      {"run", "bootstrap and simulate the closed loop; writes log.csv and states.svg",
       ddmpc::cmd_run, false},
      {"verify", "check structural, excitation and terminal conditions", ddmpc::cmd_verify, false},
  };
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "artifact directory")->capture_default_str();
    sub->add_option("--seed", seed,
                    c.seeds_data ? "overrides data.seed" : "overrides run.seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : ddmpc::kExitUsage;
  }

  for (const Command& c : commands) {
    if (!app.got_subcommand(c.name)) continue;
    ddmpc::ExperimentConfig cfg;
    try {
      cfg = ddmpc::load_config(config_path);
    } catch (const ddmpc::Error& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return ddmpc::kExitUsage;
    }
    if (seed) (c.seeds_data ? cfg.data.seed : cfg.run.seed) = *seed;
    const int code = c.fn(cfg, out_dir, std::cout);
    std::cout.flush();
    return code;
  }
  return ddmpc::kExitUsage;
}
