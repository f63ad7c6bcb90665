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

#include <vector>

#include <Eigen/Dense>

namespace ddmpc {

/// Sequence of equally sized real vectors indexed from `start_index`.
///
/// Samples are stored column-wise. Index arguments are absolute time
/// indices, e.g. a window over [-n, L-1] has start_index -n.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(Eigen::MatrixXd samples, int start_index = 0);
  Trajectory(const std::vector<Eigen::VectorXd>& samples, int dim, int start_index = 0);

  static Trajectory zeros(int dim, int length, int start_index = 0);
  /// Splits a stacked column (sample-major) into `dim`-sized samples.
  static Trajectory from_stacked(const Eigen::VectorXd& stacked, int dim, int start_index = 0);

  int dim() const { return static_cast<int>(data_.rows()); }
  int length() const { return static_cast<int>(data_.cols()); }
  int start_index() const { return start_; }
  /// Last valid index (start_index() + length() - 1).
  int last_index() const { return start_ + length() - 1; }
  bool contains(int k) const { return k >= start_ && k <= last_index(); }

  Eigen::VectorXd at(int k) const;
  void set(int k, const Eigen::VectorXd& v);
  void push_back(const Eigen::VectorXd& v);

  /// Samples over the closed index range [first, last]; empty if last < first.
  Trajectory slice(int first, int last) const;
  /// Same samples with start_index replaced.
  Trajectory reindexed(int new_start) const;

  /// dim x length sample matrix.
  const Eigen::MatrixXd& samples() const { return data_; }
  /// Column vector (x_first; ...; x_last).
  Eigen::VectorXd stacked() const;

  bool operator==(const Trajectory& other) const;

 private:
  int column(int k) const;

  Eigen::MatrixXd data_;
  int start_ = 0;
};

struct HankelMatrix {
  Eigen::MatrixXd entries;
  int depth = 0;
  int source_dim = 0;

  int rows() const { return static_cast<int>(entries.rows()); }
  int cols() const { return static_cast<int>(entries.cols()); }
};

/// Block-Hankel matrix whose column c is (x_c; ...; x_{c+depth-1}).
HankelMatrix build_hankel(const Trajectory& x, int depth);

/// Full row rank test of H_order(x) with rank counted relative to the
/// largest singular value.
bool check_persistent_excitation(const Trajectory& x, int order, double rank_tol = 1e-9);

/// Per-sample vertical concatenation.
Trajectory stack_signals(const std::vector<Trajectory>& parts);

/// Inverse of stack_signals for the given part dimensions.
std::vector<Trajectory> unstack(const Trajectory& x, const std::vector<int>& dims);

}  // namespace ddmpc
