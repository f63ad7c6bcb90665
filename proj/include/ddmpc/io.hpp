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

#include <string>
#include <vector>

#include "ddmpc/scheme.hpp"

namespace ddmpc {

/// dir/stem_NNN.ext with a zero-padded node id.
std::string node_path(const std::string& dir, const std::string& stem, int node,
                      const std::string& ext);

void ensure_directory(const std::string& dir);

/// Line chart of every true-state component of the listed nodes over time.
void write_state_svg(const std::string& path, const ClosedLoopLog& log,
                     const std::vector<int>& nodes);

/// Largest logged xi_deviation per agent from a closed-loop log CSV.
std::vector<double> read_logged_xi_deviation(const std::string& path, int num_agents);

}  // namespace ddmpc
