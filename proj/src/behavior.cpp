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

#include "ddmpc/behavior.hpp"

#include <string>

#include "ddmpc/errors.hpp"
#include "ddmpc/linalg.hpp"

namespace ddmpc {

BehavioralPredictor::BehavioralPredictor(const DataSet& data, int depth, double rank_tol)
    : depth_(depth), m_(data.u.dim()), p_(data.y.dim()), q_(data.y_neighbors.dim()) {
  data.validate();
  const int len = data.length();
  if (depth < 1 || depth > len - 1) throw DimensionError("predictor depth does not fit the data");
  h_u_ = build_hankel(data.u, depth);
  h_y_ = build_hankel(data.y, depth);
  if (depth > 1) {
    h_yn_ = build_hankel(data.y_neighbors.slice(0, len - 2), depth - 1);
  } else {
    h_yn_.entries = Eigen::MatrixXd(0, h_u_.cols());
    h_yn_.source_dim = q_;
  }
  stacked_.resize(h_u_.rows() + h_yn_.rows() + h_y_.rows(), h_u_.cols());
  stacked_ << h_u_.entries, h_yn_.entries, h_y_.entries;
  pinv_ = pseudo_inverse(stacked_, 1e-10);
  left_null_ = left_null_space(stacked_, rank_tol);
}

Eigen::VectorXd BehavioralPredictor::window(const Trajectory& u, const Trajectory& y_n,
                                            const Trajectory& y) const {
  if (u.length() != depth_ || y.length() != depth_ || y_n.length() != depth_ - 1 ||
      u.dim() != m_ || y.dim() != p_ || (depth_ > 1 && y_n.dim() != q_)) {
    throw DimensionError("trajectory window does not match the predictor depth " +
                         std::to_string(depth_));
  }
  Eigen::VectorXd w(stacked_.rows());
  w << u.stacked(), y_n.stacked(), y.stacked();
  return w;
}

TrajectoryCheck check_trajectory(const BehavioralPredictor& pred, const Trajectory& u,
                                 const Trajectory& y_n, const Trajectory& y, double tol) {
  const Eigen::VectorXd w = pred.window(u, y_n, y);
  TrajectoryCheck out;
  out.alpha = pred.min_norm_alpha(w);
  out.residual = (pred.stacked() * out.alpha - w).norm();
  out.is_trajectory = out.residual <= tol;
  return out;
}

DataDrivenSimulator::DataDrivenSimulator(const DataSet& data, int lag, int max_horizon,
                                         double residual_tol)
    : n_(lag),
      max_horizon_(max_horizon),
      m_(data.u.dim()),
      p_(data.y.dim()),
      q_(data.y_neighbors.dim()),
      residual_tol_(residual_tol) {
  data.validate();
  const int len = data.length();
  if (lag < 1 || max_horizon < 1 || len < max_horizon + 2 * lag) {
    throw DimensionError("data too short for the requested simulation horizon");
  }
  for (int h = 1; h <= max_horizon; ++h) {
    const HankelMatrix hu = build_hankel(data.u, h + n_);
    const HankelMatrix hn = build_hankel(data.y_neighbors.slice(0, len - 2), h + n_ - 1);
    const HankelMatrix hy = build_hankel(data.y.slice(0, len - h - 1), n_);
    const HankelMatrix out = build_hankel(data.y.slice(n_, len - 1), h);
    Eigen::MatrixXd lhs(hu.rows() + hn.rows() + hy.rows(), hu.cols());
    lhs << hu.entries, hn.entries, hy.entries;
    const Eigen::MatrixXd pinv = pseudo_inverse(lhs, 1e-10);
    Horizon entry;
    entry.gain = out.entries * pinv;
    entry.residual = lhs * pinv - Eigen::MatrixXd::Identity(lhs.rows(), lhs.rows());
    horizons_.emplace(h, std::move(entry));
  }
}

const DataDrivenSimulator::Horizon& DataDrivenSimulator::horizon(int h) const {
  auto it = horizons_.find(h);
  if (it == horizons_.end()) {
    throw DimensionError("simulation horizon " + std::to_string(h) + " outside [1, " +
                         std::to_string(max_horizon_) + "]");
  }
  return it->second;
}

Eigen::VectorXd DataDrivenSimulator::rhs(const InitialWindow& init, const Trajectory& new_u,
                                         const Trajectory& new_y_n) const {
  const int h = new_u.length();
  if (init.u.length() != n_ || init.y_neighbors.length() != n_ || init.y.length() != n_) {
    throw DimensionError("initial window must have length " + std::to_string(n_));
  }
  if (new_y_n.length() != h - 1) {
    throw DimensionError("new neighbor outputs must be one sample shorter than new inputs");
  }
  if (init.u.dim() != m_ || new_u.dim() != m_ || init.y.dim() != p_ ||
      init.y_neighbors.dim() != q_ || (h > 1 && new_y_n.dim() != q_)) {
    throw DimensionError("simulation signal dimensions do not match the data");
  }
  Eigen::VectorXd w((h + n_) * m_ + (h + n_ - 1) * q_ + n_ * p_);
  w << init.u.stacked(), new_u.stacked(), init.y_neighbors.stacked(), new_y_n.stacked(),
      init.y.stacked();
  return w;
}

double DataDrivenSimulator::residual(const InitialWindow& init, const Trajectory& new_u,
                                     const Trajectory& new_y_n) const {
  return (horizon(new_u.length()).residual * rhs(init, new_u, new_y_n)).norm();
}

Trajectory DataDrivenSimulator::simulate(const InitialWindow& init, const Trajectory& new_u,
                                         const Trajectory& new_y_n) const {
  const Horizon& hz = horizon(new_u.length());
  const Eigen::VectorXd w = rhs(init, new_u, new_y_n);
  const double res = (hz.residual * w).norm();
  if (res > residual_tol_ * std::max(1.0, w.norm())) {
    throw InconsistentInitializationError(
        "initial window is not a trajectory of the data-generating system (residual " +
            std::to_string(res) + ")",
        res);
  }
  return Trajectory::from_stacked(hz.gain * w, p_, new_u.start_index());
}

Trajectory datadriven_simulate(const DataDrivenSimulator& sim, const InitialWindow& init,
                               const Trajectory& new_u, const Trajectory& new_y_n) {
  return sim.simulate(init, new_u, new_y_n);
}

}  // namespace ddmpc
