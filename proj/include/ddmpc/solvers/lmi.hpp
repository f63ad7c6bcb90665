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

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ddmpc::solvers {

/// Affine matrix constraint F(y) = constant + sum_i y_i * terms[i] >= 0 (PSD).
struct LmiBlock {
  std::string label;
  Eigen::MatrixXd constant;
  std::vector<std::pair<int, Eigen::MatrixXd>> terms;

  Eigen::MatrixXd evaluate(const Eigen::VectorXd& y) const;
};

/// minimize c' y subject to every block being positive semidefinite.
struct LmiProblem {
  int num_vars = 0;
  Eigen::VectorXd c;
  std::vector<LmiBlock> blocks;
};

/// Builds LmiProblem instances from matrix-valued decision variables and
/// affine maps, so callers can write constraints in their natural block form.
class LmiBuilder {
 public:
  class Variable {
   public:
    Eigen::MatrixXd value(const Eigen::VectorXd& y) const;
    int rows() const { return rows_; }
    int cols() const { return cols_; }

   private:
    friend class LmiBuilder;
    int rows_ = 0;
    int cols_ = 0;
    bool symmetric_ = false;
    int offset_ = 0;
  };

  Variable add_symmetric(int dim);
  Variable add_matrix(int rows, int cols);
  Variable add_scalar();

  /// `affine` must be affine in y and return a symmetric matrix; it is
  /// probed at the origin and at every unit vector.
  void add_block(std::string label,
                 const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& affine);

  void set_objective(const std::function<double(const Eigen::VectorXd&)>& linear);

  int num_vars() const { return num_vars_; }
  LmiProblem build() const;

 private:
  int num_vars_ = 0;
  std::vector<std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>> maps_;
  std::vector<std::string> labels_;
  std::function<double(const Eigen::VectorXd&)> objective_;
};

struct LmiSettings {
  double gap_tol = 1e-8;
  double barrier_growth = 10.0;
  int max_newton_per_center = 50;
  int max_outer_iterations = 60;
  double newton_tol = 1e-6;
  /// Every variable vector is confined to the ball ||y|| <= variable_bound.
  double variable_bound = 1e8;
  bool verbose = false;
};

enum class LmiStatus { kOptimal, kInfeasible, kMaxIterations, kNumericalError };

std::string to_string(LmiStatus status);

struct LmiResult {
  LmiStatus status = LmiStatus::kNumericalError;
  Eigen::VectorXd y;
  double objective = 0.0;
  /// Smallest eigenvalue of each block at y.
  std::vector<double> block_min_eigenvalues;
  int newton_steps = 0;
};

/// Capability-specific backend for offline synthesis (semidefinite cones).
class LmiBackend {
 public:
  virtual ~LmiBackend() = default;
  virtual LmiResult solve(const LmiProblem& problem) const = 0;
};

/// Log-det barrier path following with a phase-one feasibility search.
class BarrierLmiSolver final : public LmiBackend {
 public:
  explicit BarrierLmiSolver(LmiSettings settings = {}) : settings_(settings) {}
  LmiResult solve(const LmiProblem& problem) const override;

 private:
  LmiSettings settings_;
};

}  // namespace ddmpc::solvers
