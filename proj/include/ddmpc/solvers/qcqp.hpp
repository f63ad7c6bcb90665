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

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace ddmpc::solvers {

using SparseMatrix = Eigen::SparseMatrix<double>;
using SparseVector = Eigen::SparseVector<double>;

/// Convex constraint 0.5 x' P x + q' x + r <= 0 with P symmetric PSD.
/// An empty (0x0) P marks a linear constraint.
struct QuadraticConstraint {
  SparseMatrix P;
  SparseVector q;
  double r = 0.0;
  std::string label;

  double evaluate(const Eigen::VectorXd& x) const;
};

/// minimize 0.5 x' P x + q' x + c  s.t.  A x = b,  constraints_i(x) <= 0.
struct QcqpProblem {
  int num_vars = 0;
  SparseMatrix P;
  Eigen::VectorXd q;
  double c = 0.0;
  SparseMatrix A;
  Eigen::VectorXd b;
  std::vector<QuadraticConstraint> constraints;

  double objective(const Eigen::VectorXd& x) const;
  void validate() const;
};

struct QcqpSettings {
  int max_newton_steps = 600;
  int max_newton_per_center = 80;
  double barrier_growth = 20.0;
  // Stop once m / t <= max(gap_abs, gap_rel * |objective|).
  double gap_abs = 1e-9;
  double gap_rel = 1e-11;
  double newton_tol = 1e-11;
  // Relative residual of A x = b accepted at the solution.
  double equality_tol = 1e-9;
  // Relative diagonal shift of the reduced Newton matrix.
  double regularization = 1e-14;
};

enum class QcqpStatus { kOptimal, kInfeasible, kMaxIterations, kNumericalError };

std::string to_string(QcqpStatus status);

struct QcqpResult {
  QcqpStatus status = QcqpStatus::kNumericalError;
  Eigen::VectorXd x;
  Eigen::VectorXd ineq_multipliers;
  double objective = 0.0;
  int iterations = 0;
  double equality_residual = 0.0;
  double newton_decrement = 0.0;
  double gap = 0.0;  // m / t at the last center
};

/// Capability-specific backend for the online problems: only convex quadratic
/// constraints are required.
class QcqpBackend {
 public:
  virtual ~QcqpBackend() = default;
  virtual QcqpResult solve(const QcqpProblem& problem,
                           const Eigen::VectorXd* warm_start = nullptr) const = 0;
};

/// Log-barrier path following on the null space of the equalities. A
/// phase-one problem in (x, s) with f_i(x) <= s supplies the first strictly
/// feasible point when the warm start is not one.
class BarrierQcqp final : public QcqpBackend {
 public:
  explicit BarrierQcqp(QcqpSettings settings = {}) : settings_(settings) {}
  QcqpResult solve(const QcqpProblem& problem,
                   const Eigen::VectorXd* warm_start = nullptr) const override;
  const QcqpSettings& settings() const { return settings_; }

 private:
  QcqpSettings settings_;
};

}  // namespace ddmpc::solvers
