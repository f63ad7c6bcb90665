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

#include <stdexcept>
#include <string>
#include <utility>

namespace ddmpc {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of matrices or trajectories do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A history is too short to extract the requested window.
class WindowError : public Error {
 public:
  using Error::Error;
};

/// Recorded data is not persistently exciting.
class ExcitationError : public Error {
 public:
  ExcitationError(const std::string& what, int node) : Error(what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

/// The initial window handed to data-driven simulation is not a trajectory of
/// the system that generated the data.
class InconsistentInitializationError : public Error {
 public:
  InconsistentInitializationError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// A numerical backend failed (did not converge, factorization broke down).
class SolverError : public Error {
 public:
  using Error::Error;
};

class SynthesisInfeasibleError : public Error {
 public:
  using Error::Error;
};

/// The terminal controller leaves the input constraint set.
class TerminalDesignError : public Error {
 public:
  using Error::Error;
};

/// A local MPC problem has no feasible point. Carries the agent, the closed
/// loop step (-1 when raised outside a run) and the constraint that the
/// plugged-in candidate violates most.
class MpcInfeasibleError : public Error {
 public:
  MpcInfeasibleError(const std::string& what, int agent, int step, std::string constraint)
      : Error(what), agent_(agent), step_(step), constraint_(std::move(constraint)) {}
  int agent() const { return agent_; }
  int step() const { return step_; }
  const std::string& constraint() const { return constraint_; }

 private:
  int agent_;
  int step_;
  std::string constraint_;
};

class WeakCouplingError : public Error {
 public:
  using Error::Error;
};

class BootstrapError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ddmpc
