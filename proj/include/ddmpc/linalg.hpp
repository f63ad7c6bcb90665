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

#include <Eigen/Dense>

namespace ddmpc {

/// Number of singular values above `rel_tol` times the largest one.
int numerical_rank(const Eigen::MatrixXd& m, double rel_tol);

/// Moore-Penrose pseudoinverse with relative singular value cutoff.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double rel_tol = 1e-10);

/// Orthonormal basis of the left null space {v : v' m = 0}, one column per
/// direction.
Eigen::MatrixXd left_null_space(const Eigen::MatrixXd& m, double rel_tol);

/// Symmetric square root factor R with R' R = s for s positive semidefinite.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& s);

double min_eigenvalue(const Eigen::MatrixXd& symmetric);
double max_eigenvalue(const Eigen::MatrixXd& symmetric);

/// Spectral radius of a general square matrix.
double spectral_radius(const Eigen::MatrixXd& m);

/// Kalman rank test: rank [B, AB, ..., A^{n-1}B] == n.
bool is_controllable(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                     double rel_tol = 1e-10);
bool is_observable(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                   double rel_tol = 1e-10);

}  // namespace ddmpc
