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

#include "ddmpc/solvers/qcqp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "ddmpc/errors.hpp"

namespace ddmpc::solvers {

namespace {

// Problem restricted to x = x0 + N z, so the equalities hold identically.
struct ReducedConstraint {
  Eigen::MatrixXd P;  // empty for linear constraints
  Eigen::VectorXd q;
  double r = 0.0;

  double value(const Eigen::VectorXd& z) const {
    double v = r + q.dot(z);
    if (P.size() > 0) v += 0.5 * z.dot(P * z);
    return v;
  }
  Eigen::VectorXd grad(const Eigen::VectorXd& z) const {
    return P.size() > 0 ? Eigen::VectorXd(q + P * z) : q;
  }
  double curvature(const Eigen::VectorXd& d) const { return P.size() > 0 ? d.dot(P * d) : 0.0; }
};

struct Reduced {
  int k = 0;
  ReducedConstraint objective;
  std::vector<ReducedConstraint> constraints;
};

// N^T P N using only the rows of N that P touches.
Eigen::MatrixXd project_quadratic(const SparseMatrix& P, const Eigen::MatrixXd& N) {
  std::vector<int> rows;
  std::vector<int> pos(P.rows(), -1);
  for (int c = 0; c < P.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(P, c); it; ++it) {
      for (int idx : {static_cast<int>(it.row()), static_cast<int>(it.col())}) {
        if (pos[idx] < 0) {
          pos[idx] = static_cast<int>(rows.size());
          rows.push_back(idx);
        }
      }
    }
  }
  const int s = static_cast<int>(rows.size());
  Eigen::MatrixXd sub = Eigen::MatrixXd::Zero(s, s);
  Eigen::MatrixXd nsub(s, N.cols());
  for (int a = 0; a < s; ++a) nsub.row(a) = N.row(rows[a]);
  for (int c = 0; c < P.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(P, c); it; ++it) {
      sub(pos[it.row()], pos[it.col()]) += it.value();
    }
  }
  Eigen::MatrixXd out = nsub.transpose() * sub * nsub;
  return 0.5 * (out + out.transpose());
}

ReducedConstraint reduce(const SparseMatrix& P, const Eigen::VectorXd& q, double r,
                         const Eigen::VectorXd& x0, const Eigen::MatrixXd& N) {
  ReducedConstraint c;
  Eigen::VectorXd g = q;
  double v = r + q.dot(x0);
  if (P.nonZeros() > 0) {
    const Eigen::VectorXd px = P * x0;
    g += px;
    v += 0.5 * x0.dot(px);
    c.P = project_quadratic(P, N);
  }
  c.q = N.transpose() * g;
  c.r = v;
  return c;
}

// Smallest positive root of c + b a + 0.5 q a^2 = 0 for c < 0, or +inf.
double boundary_step(double c, double b, double q) {
  const double inf = std::numeric_limits<double>::infinity();
  const double a2 = 0.5 * q;
  if (std::abs(a2) <= 1e-300) return b > 0.0 ? -c / b : inf;
  const double disc = b * b - 4.0 * a2 * c;
  if (disc < 0.0) return inf;
  const double sq = std::sqrt(disc);
  // Cancellation-free pair of roots.
  const double qq = -0.5 * (b + (b >= 0.0 ? sq : -sq));
  double best = inf;
  for (double root : {qq / a2, qq != 0.0 ? c / qq : inf}) {
    if (root > 0.0 && std::isfinite(root)) best = std::min(best, root);
  }
  return best;
}

struct PathOutcome {
  QcqpStatus status = QcqpStatus::kMaxIterations;
  Eigen::VectorXd z;
  int newton_steps = 0;
  double t = 1.0;
  double decrement = 0.0;
  bool stopped = false;
};

class BarrierPath {
 public:
  BarrierPath(const Reduced& prob, const QcqpSettings& st) : prob_(prob), st_(st) {}

  bool strictly_feasible(const Eigen::VectorXd& z) const {
    for (const auto& c : prob_.constraints) {
      if (!(c.value(z) < 0.0)) return false;
    }
    return true;
  }

  PathOutcome follow(Eigen::VectorXd z, const std::function<bool(const Eigen::VectorXd&)>& stop,
                     int budget) const {
    PathOutcome out;
    const int m = static_cast<int>(prob_.constraints.size());
    const int k = prob_.k;
    double t = std::max(1.0, static_cast<double>(m)) /
               std::max(1.0, std::abs(prob_.objective.value(z)));
    auto finish = [&](QcqpStatus status) {
      out.status = status;
      out.z = z;
      out.t = t;
      return out;
    };
    if (k == 0) return finish(QcqpStatus::kOptimal);
    while (true) {
      for (int it = 0; it < st_.max_newton_per_center; ++it) {
        if (out.newton_steps >= budget) return finish(QcqpStatus::kMaxIterations);
        Eigen::VectorXd grad = t * prob_.objective.grad(z);
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(k, k);
        if (prob_.objective.P.size() > 0) H += t * prob_.objective.P;
        std::vector<double> f(m);
        for (int i = 0; i < m; ++i) {
          const auto& c = prob_.constraints[i];
          f[i] = c.value(z);
          const double inv = -1.0 / f[i];
          const Eigen::VectorXd g = c.grad(z);
          grad += inv * g;
          if (c.P.size() > 0) H += inv * c.P;
          H.selfadjointView<Eigen::Lower>().rankUpdate(g, inv * inv);
        }
        H = H.selfadjointView<Eigen::Lower>();
        H.diagonal().array() += st_.regularization * std::max(1.0, H.diagonal().maxCoeff());
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        Eigen::VectorXd dz = -ldlt.solve(grad);
        if (ldlt.info() != Eigen::Success || !dz.allFinite()) {
          return finish(QcqpStatus::kNumericalError);
        }
        ++out.newton_steps;
        const double slope = grad.dot(dz);
        out.decrement = -slope;
        if (-0.5 * slope <= st_.newton_tol) break;

        // Exact step to the boundary, then backtracking on the barrier change
        // computed in incremental form.
        double amax = std::numeric_limits<double>::infinity();
        std::vector<double> b(m), cq(m);
        for (int i = 0; i < m; ++i) {
          const auto& c = prob_.constraints[i];
          b[i] = c.grad(z).dot(dz);
          cq[i] = c.curvature(dz);
          amax = std::min(amax, boundary_step(f[i], b[i], cq[i]));
        }
        const double b0 = prob_.objective.grad(z).dot(dz);
        const double c0 = prob_.objective.curvature(dz);
        auto change = [&](double a) {
          double v = t * (a * b0 + 0.5 * a * a * c0);
          for (int i = 0; i < m; ++i) {
            const double ratio = (a * b[i] + 0.5 * a * a * cq[i]) / f[i];
            if (!(ratio > -1.0)) return std::numeric_limits<double>::infinity();
            v -= std::log1p(ratio);
          }
          return v;
        };
        double a = std::min(1.0, 0.99 * amax);
        bool accepted = false;
        for (int ls = 0; ls < 80; ++ls) {
          if (change(a) <= 0.01 * a * slope) {
            accepted = true;
            break;
          }
          a *= 0.5;
        }
        if (!accepted) break;
        const Eigen::VectorXd next = z + a * dz;
        if (!strictly_feasible(next)) break;
        z = next;
        if (stop && stop(z)) {
          out.stopped = true;
          return finish(QcqpStatus::kOptimal);
        }
      }
      const double gap = m / t;
      if (m == 0 || gap <= std::max(st_.gap_abs, st_.gap_rel * std::abs(prob_.objective.value(z)))) {
        return finish(QcqpStatus::kOptimal);
      }
      t *= st_.barrier_growth;
    }
  }

 private:
  const Reduced& prob_;
  const QcqpSettings& st_;
};

// min s  s.t.  f_i(z) - s <= 0, over (z, s).
Reduced phase_one(const Reduced& prob) {
  const int k = prob.k;
  Reduced p1;
  p1.k = k + 1;
  p1.objective.q = Eigen::VectorXd::Zero(k + 1);
  p1.objective.q(k) = 1.0;
  for (const auto& c : prob.constraints) {
    ReducedConstraint d;
    d.r = c.r;
    d.q.resize(k + 1);
    d.q << c.q, -1.0;
    if (c.P.size() > 0) {
      d.P = Eigen::MatrixXd::Zero(k + 1, k + 1);
      d.P.topLeftCorner(k, k) = c.P;
    }
    p1.constraints.push_back(std::move(d));
  }
  return p1;
}

}  // namespace

double QuadraticConstraint::evaluate(const Eigen::VectorXd& x) const {
  double value = r + q.dot(x);
  if (P.nonZeros() > 0) value += 0.5 * x.dot(P * x);
  return value;
}

double QcqpProblem::objective(const Eigen::VectorXd& x) const {
  double value = c + q.dot(x);
  if (P.nonZeros() > 0) value += 0.5 * x.dot(P * x);
  return value;
}

void QcqpProblem::validate() const {
  if (q.size() != num_vars) throw DimensionError("qcqp: objective vector size");
  if (P.nonZeros() > 0 && (P.rows() != num_vars || P.cols() != num_vars)) {
    throw DimensionError("qcqp: objective matrix size");
  }
  if (A.rows() != b.size()) throw DimensionError("qcqp: equality rows");
  if (A.rows() > 0 && A.cols() != num_vars) throw DimensionError("qcqp: equality cols");
  for (const auto& con : constraints) {
    if (con.q.size() != num_vars) throw DimensionError("qcqp: constraint " + con.label);
    if (con.P.nonZeros() > 0 && (con.P.rows() != num_vars || con.P.cols() != num_vars)) {
      throw DimensionError("qcqp: constraint matrix " + con.label);
    }
  }
}

std::string to_string(QcqpStatus status) {
  switch (status) {
    case QcqpStatus::kOptimal: return "optimal";
    case QcqpStatus::kInfeasible: return "infeasible";
    case QcqpStatus::kMaxIterations: return "max_iterations";
    case QcqpStatus::kNumericalError: return "numerical_error";
  }
  return "unknown";
}

QcqpResult BarrierQcqp::solve(const QcqpProblem& prob, const Eigen::VectorXd* warm_start) const {
  prob.validate();
  const int n = prob.num_vars;
  const int p = static_cast<int>(prob.A.rows());
  const auto& st = settings_;
  QcqpResult result;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (warm_start != nullptr && warm_start->size() == n && warm_start->allFinite()) {
    x = *warm_start;
  }

  // Orthonormal null-space basis of A and the least-norm correction of x.
  Eigen::MatrixXd N = Eigen::MatrixXd::Identity(n, n);
  const double b_scale = 1.0 + (p > 0 ? prob.b.cwiseAbs().maxCoeff() : 0.0);
  auto eq_residual = [&](const Eigen::VectorXd& v) {
    return p > 0 ? (prob.A * v - prob.b).cwiseAbs().maxCoeff() / b_scale : 0.0;
  };
  if (p > 0) {
    const Eigen::MatrixXd A = Eigen::MatrixXd(prob.A);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV | Eigen::ComputeThinU);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double tol = 1e-12 * std::max(1.0, sv.size() > 0 ? sv(0) : 0.0) * std::max(n, p);
    int rank = 0;
    while (rank < sv.size() && sv(rank) > tol) ++rank;
    const Eigen::MatrixXd V = svd.matrixV();
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd res = prob.b - A * x;
      const Eigen::VectorXd ut = svd.matrixU().leftCols(rank).transpose() * res;
      x += V.leftCols(rank) * ut.cwiseQuotient(sv.head(rank));
    }
    N = V.rightCols(n - rank);
    if (eq_residual(x) > st.equality_tol) {
      result.status = QcqpStatus::kInfeasible;
      result.x = x;
      result.equality_residual = eq_residual(x);
      return result;
    }
  }

  Reduced red;
  red.k = static_cast<int>(N.cols());
  SparseMatrix P0 = prob.P;
  if (P0.rows() != n) P0.resize(n, n);
  red.objective = reduce(P0, prob.q, prob.c, x, N);
  for (const auto& c : prob.constraints) {
    red.constraints.push_back(reduce(c.P, Eigen::VectorXd(c.q), c.r, x, N));
  }
  BarrierPath path(red, st);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(red.k);

  int used = 0;
  if (!path.strictly_feasible(z)) {
    const Reduced p1 = phase_one(red);
    Eigen::VectorXd w(red.k + 1);
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& c : red.constraints) worst = std::max(worst, c.value(z));
    w << z, worst + 1.0;
    BarrierPath path1(p1, st);
    const int k = red.k;
    const PathOutcome o1 = path1.follow(
        w, [&](const Eigen::VectorXd& v) { return v(k) < 0.0 && path.strictly_feasible(v.head(k)); },
        st.max_newton_steps);
    used += o1.newton_steps;
    z = o1.z.head(k);
    if (!o1.stopped) {
      result.status = o1.status == QcqpStatus::kOptimal ? QcqpStatus::kInfeasible : o1.status;
      result.x = x + N * z;
      result.iterations = used;
      result.equality_residual = eq_residual(result.x);
      return result;
    }
  }

  const PathOutcome o2 = path.follow(z, nullptr, st.max_newton_steps - used);
  result.status = o2.status;
  result.x = x + N * o2.z;
  result.iterations = used + o2.newton_steps;
  result.newton_decrement = o2.decrement;
  result.gap = prob.constraints.empty() ? 0.0 : prob.constraints.size() / o2.t;
  result.equality_residual = eq_residual(result.x);
  if (result.status == QcqpStatus::kOptimal && result.equality_residual > st.equality_tol) {
    result.status = QcqpStatus::kNumericalError;
  }
  result.objective = prob.objective(result.x);
  result.ineq_multipliers.resize(static_cast<Eigen::Index>(prob.constraints.size()));
  for (size_t i = 0; i < prob.constraints.size(); ++i) {
    result.ineq_multipliers(static_cast<Eigen::Index>(i)) =
        -1.0 / (o2.t * red.constraints[i].value(o2.z));
  }
  return result;
}

}  // namespace ddmpc::solvers
