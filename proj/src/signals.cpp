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

#include "ddmpc/signals.hpp"

#include <numeric>
#include <string>

#include "ddmpc/errors.hpp"
#include "ddmpc/linalg.hpp"

namespace ddmpc {

Trajectory::Trajectory(Eigen::MatrixXd samples, int start_index)
    : data_(std::move(samples)), start_(start_index) {}

Trajectory::Trajectory(const std::vector<Eigen::VectorXd>& samples, int dim, int start_index)
    : data_(dim, static_cast<Eigen::Index>(samples.size())), start_(start_index) {
  for (size_t k = 0; k < samples.size(); ++k) {
    if (samples[k].size() != dim) {
      throw DimensionError("trajectory sample " + std::to_string(k) + " has dimension " +
                           std::to_string(samples[k].size()) + ", expected " +
                           std::to_string(dim));
    }
    data_.col(static_cast<Eigen::Index>(k)) = samples[k];
  }
}

Trajectory Trajectory::zeros(int dim, int length, int start_index) {
  if (dim < 0 || length < 0) throw DimensionError("negative trajectory size");
  return Trajectory(Eigen::MatrixXd::Zero(dim, length), start_index);
}

Trajectory Trajectory::from_stacked(const Eigen::VectorXd& stacked, int dim, int start_index) {
  if (dim <= 0 || stacked.size() % dim != 0) {
    throw DimensionError("stacked vector of size " + std::to_string(stacked.size()) +
                         " is not a multiple of " + std::to_string(dim));
  }
  const Eigen::Index len = stacked.size() / dim;
  Eigen::MatrixXd data = Eigen::Map<const Eigen::MatrixXd>(stacked.data(), dim, len);
  return Trajectory(std::move(data), start_index);
}

int Trajectory::column(int k) const {
  if (!contains(k)) {
    throw WindowError("index " + std::to_string(k) + " outside trajectory range [" +
                      std::to_string(start_) + ", " + std::to_string(last_index()) + "]");
  }
  return k - start_;
}

Eigen::VectorXd Trajectory::at(int k) const { return data_.col(column(k)); }

void Trajectory::set(int k, const Eigen::VectorXd& v) {
  if (v.size() != dim()) throw DimensionError("sample dimension mismatch in set");
  data_.col(column(k)) = v;
}

void Trajectory::push_back(const Eigen::VectorXd& v) {
  if (length() == 0 && dim() == 0) data_.resize(v.size(), 0);
  if (v.size() != dim()) throw DimensionError("sample dimension mismatch in push_back");
  data_.conservativeResize(Eigen::NoChange, data_.cols() + 1);
  data_.col(data_.cols() - 1) = v;
}

Trajectory Trajectory::slice(int first, int last) const {
  if (last < first) return Trajectory(Eigen::MatrixXd(dim(), 0), first);
  const int c0 = column(first);
  column(last);
  return Trajectory(data_.middleCols(c0, last - first + 1), first);
}

Trajectory Trajectory::reindexed(int new_start) const { return Trajectory(data_, new_start); }

Eigen::VectorXd Trajectory::stacked() const {
  return Eigen::Map<const Eigen::VectorXd>(data_.data(), data_.size());
}

bool Trajectory::operator==(const Trajectory& other) const {
  return start_ == other.start_ && data_.rows() == other.data_.rows() &&
         data_.cols() == other.data_.cols() && data_ == other.data_;
}

HankelMatrix build_hankel(const Trajectory& x, int depth) {
  if (depth <= 0) throw DimensionError("hankel depth must be positive");
  if (depth > x.length()) {
    throw DimensionError("hankel depth " + std::to_string(depth) +
                         " exceeds trajectory length " + std::to_string(x.length()));
  }
  const int d = x.dim();
  const int cols = x.length() - depth + 1;
  HankelMatrix h;
  h.depth = depth;
  h.source_dim = d;
  h.entries.resize(static_cast<Eigen::Index>(d) * depth, cols);
  for (int r = 0; r < depth; ++r) {
    h.entries.middleRows(static_cast<Eigen::Index>(r) * d, d) =
        x.samples().middleCols(r, cols);
  }
  return h;
}

bool check_persistent_excitation(const Trajectory& x, int order, double rank_tol) {
  if (order <= 0) throw DimensionError("excitation order must be positive");
  if (x.length() < order) throw DimensionError("trajectory shorter than excitation order");
  const int rows = x.dim() * order;
  if (x.length() - order + 1 < rows) return false;
  const HankelMatrix h = build_hankel(x, order);
  return numerical_rank(h.entries, rank_tol) == rows;
}

Trajectory stack_signals(const std::vector<Trajectory>& parts) {
  if (parts.empty()) throw DimensionError("stack_signals needs at least one part");
  const int len = parts.front().length();
  const int start = parts.front().start_index();
  int dim = 0;
  for (const auto& p : parts) {
    if (p.length() != len || p.start_index() != start) {
      throw DimensionError("stack_signals: parts differ in length or start index");
    }
    dim += p.dim();
  }
  Eigen::MatrixXd data(dim, len);
  int row = 0;
  for (const auto& p : parts) {
    data.middleRows(row, p.dim()) = p.samples();
    row += p.dim();
  }
  return Trajectory(std::move(data), start);
}

std::vector<Trajectory> unstack(const Trajectory& x, const std::vector<int>& dims) {
  if (std::accumulate(dims.begin(), dims.end(), 0) != x.dim()) {
    throw DimensionError("unstack: part dimensions do not sum to the trajectory dimension");
  }
  std::vector<Trajectory> out;
  int row = 0;
  for (int d : dims) {
    out.emplace_back(x.samples().middleRows(row, d), x.start_index());
    row += d;
  }
  return out;
}

}  // namespace ddmpc
