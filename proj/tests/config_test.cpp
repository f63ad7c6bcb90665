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

#include <gtest/gtest.h>

#include "ddmpc/errors.hpp"

namespace ddmpc {
namespace {

const char* const kPreset = DDMPC_SOURCE_DIR "/configs/chain64.json";

GTEST_TEST(ConfigTest, PresetLoads) {
  const ExperimentConfig c = load_config(kPreset);
  EXPECT_EQ(c.network.size, 64);
  EXPECT_EQ(c.network.lag, 2);
  EXPECT_EQ(c.data.length, 100);
  EXPECT_EQ(c.mpc.horizon, 5);
  EXPECT_DOUBLE_EQ(c.mpc.omega, 0.01);
  EXPECT_DOUBLE_EQ(c.mpc.epsilon, 1e-5);
  EXPECT_DOUBLE_EQ(c.mpc.input_bound, 2.0);
  EXPECT_EQ(c.run.steps, 10);
  const NetworkModel net = c.build_network();
  EXPECT_EQ(net.size(), 64);
  EXPECT_NEAR(net.subsystem(0).A(1, 1), 0.85, 1e-15);
}

GTEST_TEST(ConfigTest, RoundTripIsIdentity) {
  ExperimentConfig c = load_config(kPreset);
  c.network.topology = "explicit";
  c.network.size = 2;
  ExplicitNode n;
  n.A = (Eigen::Matrix2d() << 1, 0.2, -0.25, 0.85).finished();
  n.B = Eigen::Vector2d(0, 1);
  n.C = Eigen::RowVector2d(0.2, 0);
  n.D = Eigen::MatrixXd::Zero(1, 1);
  n.coupling[1] = Eigen::Vector2d(0, 0.25);
  c.network.nodes = {n, n};
  c.network.nodes[1].coupling = {{0, Eigen::Vector2d(0, 0.25)}};
  c.run.plot_nodes = {0, 1};
  const std::string a = serialize_config(c);
  const ExperimentConfig back = parse_config(a);
  EXPECT_EQ(serialize_config(back), a);
  EXPECT_EQ(back.network.nodes[1].coupling.at(0), Eigen::MatrixXd(Eigen::Vector2d(0, 0.25)));
  const NetworkModel net = back.build_network();
  EXPECT_EQ(net.graph().neighbors(0), std::vector<int>{1});
}

GTEST_TEST(ConfigTest, DefaultsRoundTrip) {
  const std::string a = serialize_config(ExperimentConfig{});
  EXPECT_EQ(serialize_config(parse_config(a)), a);
}

GTEST_TEST(ConfigTest, UnknownKeysRejected) {
  EXPECT_THROW(parse_config(R"({"mpc": {"horizon": 5, "horizn": 4}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"mcp": {}})"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
}

GTEST_TEST(ConfigTest, WrongTypesRejected) {
  EXPECT_THROW(parse_config(R"({"mpc": {"horizon": "five"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"run": {"initial_range": 3}})"), ConfigError);
}

GTEST_TEST(ConfigTest, InvariantsValidated) {
  EXPECT_THROW(parse_config(R"({"mpc": {"horizon": 2}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"mpc": {"omega": -1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"mpc": {"input_bound": 0}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"run": {"bootstrap": "file"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"network": {"size": 3, "topology": "adjacency", "adjacency": [[1]]}})"),
               ConfigError);
  EXPECT_NO_THROW(parse_config(R"({"network": {"size": 3}, "run": {"plot_nodes": [0, 2]}})"));
}

GTEST_TEST(ConfigTest, AdjacencyTopology) {
  const ExperimentConfig c = parse_config(
      R"({"network": {"size": 3, "topology": "adjacency", "adjacency": [[1, 2], [0], [0]]},
          "run": {"plot_nodes": [0]}})");
  const NetworkModel net = c.build_network();
  EXPECT_EQ(net.neighbor_output_dim(0), 2);
  EXPECT_NEAR(net.subsystem(0).A(1, 0), -0.2 * 2.5, 1e-15);
}

}  // namespace
}  // namespace ddmpc
