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

#include "ddmpc/solvers/qcqp.hpp"

namespace ddmpc::solvers {

/// Stacked signal whose entries are either decision variables or constants.
struct AffineSignal {
  std::vector<int> index;    // variable index, -1 for a constant entry
  Eigen::VectorXd constant;  // used where index == -1

  int size() const { return static_cast<int>(index.size()); }

  static AffineSignal constants(const Eigen::VectorXd& values);
  static AffineSignal variables(int first, int count);
  static AffineSignal concat(const std::vector<AffineSignal>& parts);
  AffineSignal segment(int start, int length) const;

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const;
};

/// Accumulates a sparse QCQP from quadratic forms of affine signals.
class QcqpAssembler {
 public:
  explicit QcqpAssembler(int num_vars);

  int num_vars() const { return num_vars_; }

  /// Adds w' W w + g' w to the objective.
  void add_objective(const AffineSignal& w, const Eigen::MatrixXd& W,
                     const Eigen::VectorXd& g = Eigen::VectorXd());

  /// Adds G w = h. Rows are compressed to an orthonormal basis of their
  /// variable part; rows acting on constants only are checked and dropped.
  void add_equalities(const AffineSignal& w, const Eigen::MatrixXd& G, const Eigen::VectorXd& h,
                      double rank_tol = 1e-9);

  /// Adds w' W w + g' w + r <= 0. An empty W gives a linear constraint.
  void add_inequality(const AffineSignal& w, const Eigen::MatrixXd& W, const Eigen::VectorXd& g,
                      double r, std::string label);

  /// Largest residual of equality rows that involve no variables.
  double equality_inconsistency() const { return inconsistency_; }

  QcqpProblem build() const;

 private:
  struct Expanded {
    std::vector<Eigen::Triplet<double>> quad;  // x' A x entries (full symmetric)
    Eigen::VectorXd lin;                       // sparse in practice
    double constant = 0.0;
  };
  Expanded expand(const AffineSignal& w, const Eigen::MatrixXd& W,
                  const Eigen::VectorXd& g) const;

  int num_vars_;
  std::vector<Eigen::Triplet<double>> obj_quad_;
  Eigen::VectorXd obj_lin_;
  double obj_const_ = 0.0;
  std::vector<Eigen::Triplet<double>> eq_trips_;
  std::vector<double> eq_rhs_;
  std::vector<QuadraticConstraint> constraints_;
  double inconsistency_ = 0.0;
};

}  // namespace ddmpc::solvers
