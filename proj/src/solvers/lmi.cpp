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

#include "ddmpc/solvers/lmi.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ddmpc/errors.hpp"

namespace ddmpc::solvers {

Eigen::MatrixXd LmiBlock::evaluate(const Eigen::VectorXd& y) const {
  Eigen::MatrixXd out = constant;
  for (const auto& [index, coeff] : terms) out += y(index) * coeff;
  return out;
}

Eigen::MatrixXd LmiBuilder::Variable::value(const Eigen::VectorXd& y) const {
  Eigen::MatrixXd out(rows_, cols_);
  int k = offset_;
  if (symmetric_) {
    for (int j = 0; j < cols_; ++j) {
      for (int i = 0; i <= j; ++i) {
        out(i, j) = y(k);
        out(j, i) = y(k);
        ++k;
      }
    }
  } else {
    for (int j = 0; j < cols_; ++j) {
      for (int i = 0; i < rows_; ++i) out(i, j) = y(k++);
    }
  }
  return out;
}

LmiBuilder::Variable LmiBuilder::add_symmetric(int dim) {
  Variable v;
  v.rows_ = dim;
  v.cols_ = dim;
  v.symmetric_ = true;
  v.offset_ = num_vars_;
  num_vars_ += dim * (dim + 1) / 2;
  return v;
}

LmiBuilder::Variable LmiBuilder::add_matrix(int rows, int cols) {
  Variable v;
  v.rows_ = rows;
  v.cols_ = cols;
  v.offset_ = num_vars_;
  num_vars_ += rows * cols;
  return v;
}

LmiBuilder::Variable LmiBuilder::add_scalar() { return add_matrix(1, 1); }

void LmiBuilder::add_block(
    std::string label, const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& affine) {
  labels_.push_back(std::move(label));
  maps_.push_back(affine);
}

void LmiBuilder::set_objective(const std::function<double(const Eigen::VectorXd&)>& linear) {
  objective_ = linear;
}

LmiProblem LmiBuilder::build() const {
  LmiProblem prob;
  prob.num_vars = num_vars_;
  prob.c = Eigen::VectorXd::Zero(num_vars_);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(num_vars_);
  const double c0 = objective_ ? objective_(y) : 0.0;
  for (size_t b = 0; b < maps_.size(); ++b) {
    LmiBlock block;
    block.label = labels_[b];
    block.constant = maps_[b](y);
    if (block.constant.rows() != block.constant.cols()) {
      throw DimensionError("lmi block '" + block.label + "' is not square");
    }
    block.constant = 0.5 * (block.constant + block.constant.transpose()).eval();
    for (int i = 0; i < num_vars_; ++i) {
      y(i) = 1.0;
      Eigen::MatrixXd coeff = maps_[b](y) - block.constant;
      y(i) = 0.0;
      coeff = 0.5 * (coeff + coeff.transpose()).eval();
      if (coeff.cwiseAbs().maxCoeff() > 0.0) block.terms.emplace_back(i, std::move(coeff));
    }
    prob.blocks.push_back(std::move(block));
  }
  if (objective_) {
    for (int i = 0; i < num_vars_; ++i) {
      y(i) = 1.0;
      prob.c(i) = objective_(y) - c0;
      y(i) = 0.0;
    }
  }
  return prob;
}

std::string to_string(LmiStatus status) {
  switch (status) {
    case LmiStatus::kOptimal: return "optimal";
    case LmiStatus::kInfeasible: return "infeasible";
    case LmiStatus::kMaxIterations: return "max_iterations";
    case LmiStatus::kNumericalError: return "numerical_error";
  }
  return "unknown";
}

namespace {

struct PathResult {
  LmiStatus status = LmiStatus::kMaxIterations;
  Eigen::VectorXd y;
  int newton_steps = 0;
};

// Newton data of the barrier  t c'y - sum_j log det F_j(y) - log(R^2 - |y|^2)
// at a strictly feasible point. Each block is whitened by its Cholesky
// factor, G_ji = L_j^-1 M_ji L_j^-T, so steps can be evaluated exactly.
struct NewtonModel {
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  std::vector<std::vector<Eigen::MatrixXd>> g;
};

bool build_model(const LmiProblem& prob, const Eigen::VectorXd& y, double t, double bound_sq,
                 NewtonModel& nm) {
  const int m = prob.num_vars;
  const double slack = bound_sq - y.squaredNorm();
  if (!(slack > 0.0)) return false;
  nm.grad = t * prob.c + (2.0 / slack) * y;
  nm.hess = (2.0 / slack) * Eigen::MatrixXd::Identity(m, m) +
            (4.0 / (slack * slack)) * y * y.transpose();
  nm.g.assign(prob.blocks.size(), {});
  for (size_t b = 0; b < prob.blocks.size(); ++b) {
    const auto& block = prob.blocks[b];
    Eigen::LLT<Eigen::MatrixXd> llt(block.evaluate(y));
    if (llt.info() != Eigen::Success) return false;
    const Eigen::MatrixXd lower = llt.matrixL();
    auto& gb = nm.g[b];
    gb.reserve(block.terms.size());
    for (const auto& [index, coeff] : block.terms) {
      const Eigen::MatrixXd half = lower.triangularView<Eigen::Lower>().solve(coeff);
      Eigen::MatrixXd gi =
          lower.triangularView<Eigen::Lower>().solve(half.transpose()).transpose();
      gi = 0.5 * (gi + gi.transpose()).eval();
      nm.grad(index) -= gi.trace();
      gb.push_back(std::move(gi));
    }
    for (size_t a = 0; a < gb.size(); ++a) {
      const int ia = block.terms[a].first;
      for (size_t c = a; c < gb.size(); ++c) {
        const int ic = block.terms[c].first;
        const double v = gb[a].cwiseProduct(gb[c]).sum();
        nm.hess(ia, ic) += v;
        if (ic != ia) nm.hess(ic, ia) += v;
      }
    }
  }
  return true;
}

// Newton direction with Jacobi scaling of the Hessian.
Eigen::VectorXd newton_direction(const NewtonModel& nm) {
  const Eigen::VectorXd d = nm.hess.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd h = d.asDiagonal() * nm.hess * d.asDiagonal();
  h.diagonal().array() += 1e-13;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  return -(d.asDiagonal() * ldlt.solve(d.asDiagonal() * nm.grad)).eval();
}

// Barrier change phi(alpha) - phi(0) along dy, evaluated from the eigenvalues
// of the whitened step matrices; +inf outside the domain.
class StepFunction {
 public:
  StepFunction(const LmiProblem& prob, const NewtonModel& nm, const Eigen::VectorXd& y,
               const Eigen::VectorXd& dy, double t, double bound_sq)
      : linear_(t * prob.c.dot(dy)), y_(y), dy_(dy), bound_sq_(bound_sq) {
    for (size_t b = 0; b < prob.blocks.size(); ++b) {
      const auto& gb = nm.g[b];
      if (gb.empty()) continue;
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(gb.front().rows(), gb.front().cols());
      for (size_t k = 0; k < gb.size(); ++k) w += dy(prob.blocks[b].terms[k].first) * gb[k];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w, Eigen::EigenvaluesOnly);
      eigs_.push_back(es.eigenvalues());
    }
    slack0_ = bound_sq_ - y_.squaredNorm();
    max_step_ = std::numeric_limits<double>::infinity();
    for (const auto& e : eigs_) {
      if (e(0) < 0.0) max_step_ = std::min(max_step_, -1.0 / e(0));
    }
    // |y + a dy|^2 = R^2 at the positive root.
    const double qa = dy_.squaredNorm(), qb = 2.0 * y_.dot(dy_), qc = -slack0_;
    if (qa > 0.0) {
      const double root = (-qb + std::sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa);
      max_step_ = std::min(max_step_, root);
    }
  }

  double max_step() const { return max_step_; }

  double operator()(double alpha) const {
    if (!(alpha < max_step_)) return std::numeric_limits<double>::infinity();
    double v = alpha * linear_;
    for (const auto& e : eigs_) v -= (1.0 + alpha * e.array()).log().sum();
    const double slack = bound_sq_ - (y_ + alpha * dy_).squaredNorm();
    if (!(slack > 0.0)) return std::numeric_limits<double>::infinity();
    v -= std::log(slack / slack0_);
    return v;
  }

 private:
  double linear_;
  const Eigen::VectorXd& y_;
  const Eigen::VectorXd& dy_;
  double bound_sq_;
  double slack0_ = 0.0;
  double max_step_ = 0.0;
  std::vector<Eigen::VectorXd> eigs_;
};

bool in_domain(const LmiProblem& prob, const Eigen::VectorXd& y) {
  for (const auto& block : prob.blocks) {
    Eigen::LLT<Eigen::MatrixXd> llt(block.evaluate(y));
    if (llt.info() != Eigen::Success) return false;
  }
  return true;
}

double block_min_eig(const Eigen::MatrixXd& f) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

// Stricter than the Cholesky test: every block has a positive eigenvalue.
bool strictly_inside(const LmiProblem& prob, const Eigen::VectorXd& y) {
  for (const auto& block : prob.blocks) {
    if (!(block_min_eig(block.evaluate(y)) > 0.0)) return false;
  }
  return true;
}

PathResult breakdown(PathResult out, const Eigen::VectorXd& y) {
  if (out.y.size() == 0) {
    out.status = LmiStatus::kNumericalError;
    out.y = y;
  } else {
    out.status = LmiStatus::kMaxIterations;
  }
  return out;
}

int barrier_dim(const LmiProblem& prob) {
  int d = 1;
  for (const auto& block : prob.blocks) d += static_cast<int>(block.constant.rows());
  return d;
}

// Path following from a strictly feasible y. `stop` is checked after every
// Newton step and ends the run early when it returns true.
PathResult follow_path(const LmiProblem& prob, Eigen::VectorXd y, const LmiSettings& st,
                       const std::function<bool(const Eigen::VectorXd&)>& stop) {
  PathResult out;
  const double bound_sq = st.variable_bound * st.variable_bound;
  const int dim = barrier_dim(prob);
  double t = 1.0;
  NewtonModel nm;
  for (int outer = 0; outer < st.max_outer_iterations; ++outer) {
    double last_decrement = 0.0;
    double last_alpha = 0.0;
    for (int k = 0; k < st.max_newton_per_center; ++k) {
      // A breakdown keeps the last strictly feasible center when there is one.
      if (!build_model(prob, y, t, bound_sq, nm)) return breakdown(out, y);
      const Eigen::VectorXd dy = newton_direction(nm);
      if (!dy.allFinite()) return breakdown(out, y);
      const double decrement = -nm.grad.dot(dy);
      last_decrement = decrement;
      if (decrement / 2.0 <= st.newton_tol) break;
      const StepFunction phi(prob, nm, y, dy, t, bound_sq);
      double alpha = std::min(1.0, 0.99 * phi.max_step());
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        if (phi(alpha) <= -0.01 * alpha * decrement && in_domain(prob, y + alpha * dy)) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      ++out.newton_steps;
      if (!accepted) break;
      y += alpha * dy;
      last_alpha = alpha;
      if (stop && stop(y)) {
        out.status = LmiStatus::kOptimal;
        out.y = y;
        return out;
      }
    }
    if (strictly_inside(prob, y)) out.y = y;
    const double scale = std::max(1.0, std::abs(prob.c.dot(y)));
    if (st.verbose) {
      std::cerr << "lmi: t=" << t << " obj=" << prob.c.dot(y) << " newton=" << out.newton_steps
                << " decrement=" << last_decrement << " alpha=" << last_alpha << '\n';
    }
    if (dim / t < st.gap_tol * scale) {
      out.status = LmiStatus::kOptimal;
      if (out.y.size() == 0) out.y = y;
      return out;
    }
    t *= st.barrier_growth;
  }
  if (out.y.size() == 0) out.y = y;
  return out;
}

}  // namespace

LmiResult BarrierLmiSolver::solve(const LmiProblem& prob) const {
  if (prob.c.size() != prob.num_vars) throw DimensionError("lmi: objective size");
  for (const auto& block : prob.blocks) {
    for (const auto& term : block.terms) {
      if (term.first < 0 || term.first >= prob.num_vars) {
        throw DimensionError("lmi: variable index out of range in " + block.label);
      }
    }
  }
  LmiResult result;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(prob.num_vars);

  auto min_eigs = [&](const Eigen::VectorXd& v) {
    std::vector<double> eigs;
    for (const auto& block : prob.blocks) eigs.push_back(block_min_eig(block.evaluate(v)));
    return eigs;
  };
  auto worst = [&](const Eigen::VectorXd& v) {
    double w = std::numeric_limits<double>::infinity();
    for (double e : min_eigs(v)) w = std::min(w, e);
    return w;
  };

  if (worst(y) <= 0.0) {
    // Phase one: minimize s subject to F_j(y) + s I >= 0.
    LmiProblem phase1 = prob;
    phase1.num_vars = prob.num_vars + 1;
    phase1.c = Eigen::VectorXd::Zero(phase1.num_vars);
    phase1.c(prob.num_vars) = 1.0;
    for (auto& block : phase1.blocks) {
      block.terms.emplace_back(
          prob.num_vars, Eigen::MatrixXd::Identity(block.constant.rows(), block.constant.cols()));
    }
    Eigen::VectorXd z = Eigen::VectorXd::Zero(phase1.num_vars);
    z(prob.num_vars) = 1.0 - worst(y);
    LmiSettings st1 = settings_;
    st1.variable_bound = std::max(settings_.variable_bound, 10.0 * std::abs(z(prob.num_vars)));
    PathResult p1 = follow_path(phase1, z, st1, [&](const Eigen::VectorXd& v) {
      return v(prob.num_vars) < 0.0 && worst(v.head(prob.num_vars)) > 0.0;
    });
    result.newton_steps += p1.newton_steps;
    y = p1.y.head(prob.num_vars);
    if (worst(y) <= 0.0 || y.norm() >= settings_.variable_bound) {
      result.status = p1.status == LmiStatus::kNumericalError ? LmiStatus::kNumericalError
                                                              : LmiStatus::kInfeasible;
      result.y = y;
      result.block_min_eigenvalues = min_eigs(y);
      return result;
    }
  }

  PathResult p2 = follow_path(prob, y, settings_, nullptr);
  result.newton_steps += p2.newton_steps;
  result.status = p2.status;
  result.y = p2.y;
  result.objective = prob.c.dot(p2.y);
  result.block_min_eigenvalues = min_eigs(p2.y);
  return result;
}

}  // namespace ddmpc::solvers
