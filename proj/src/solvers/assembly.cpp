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

#include "ddmpc/solvers/assembly.hpp"

#include <map>

#include <Eigen/SVD>

#include "ddmpc/errors.hpp"

namespace ddmpc::solvers {

AffineSignal AffineSignal::constants(const Eigen::VectorXd& values) {
  AffineSignal s;
  s.index.assign(static_cast<size_t>(values.size()), -1);
  s.constant = values;
  return s;
}

AffineSignal AffineSignal::variables(int first, int count) {
  AffineSignal s;
  s.index.resize(static_cast<size_t>(count));
  for (int k = 0; k < count; ++k) s.index[static_cast<size_t>(k)] = first + k;
  s.constant = Eigen::VectorXd::Zero(count);
  return s;
}

AffineSignal AffineSignal::concat(const std::vector<AffineSignal>& parts) {
  AffineSignal s;
  int total = 0;
  for (const auto& p : parts) total += p.size();
  s.constant.resize(total);
  int at = 0;
  for (const auto& p : parts) {
    s.index.insert(s.index.end(), p.index.begin(), p.index.end());
    s.constant.segment(at, p.size()) = p.constant;
    at += p.size();
  }
  return s;
}

AffineSignal AffineSignal::segment(int start, int length) const {
  if (start < 0 || length < 0 || start + length > size()) {
    throw DimensionError("affine signal segment out of range");
  }
  AffineSignal s;
  s.index.assign(index.begin() + start, index.begin() + start + length);
  s.constant = constant.segment(start, length);
  return s;
}

Eigen::VectorXd AffineSignal::evaluate(const Eigen::VectorXd& x) const {
  Eigen::VectorXd v = constant;
  for (int k = 0; k < size(); ++k) {
    if (index[static_cast<size_t>(k)] >= 0) v(k) = x(index[static_cast<size_t>(k)]);
  }
  return v;
}

QcqpAssembler::QcqpAssembler(int num_vars)
    : num_vars_(num_vars), obj_lin_(Eigen::VectorXd::Zero(num_vars)) {}

QcqpAssembler::Expanded QcqpAssembler::expand(const AffineSignal& w, const Eigen::MatrixXd& W,
                                              const Eigen::VectorXd& g) const {
  const int k = w.size();
  Expanded e;
  e.lin = Eigen::VectorXd::Zero(num_vars_);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(k);  // constant part of w
  for (int a = 0; a < k; ++a) {
    if (w.index[static_cast<size_t>(a)] < 0) c(a) = w.constant(a);
  }
  if (W.size() > 0) {
    if (W.rows() != k || W.cols() != k) throw DimensionError("assembler: weight size");
    const Eigen::VectorXd wc = (W + W.transpose()) * c;
    for (int a = 0; a < k; ++a) {
      const int ia = w.index[static_cast<size_t>(a)];
      if (ia < 0) continue;
      e.lin(ia) += wc(a);
      for (int b = 0; b < k; ++b) {
        const int ib = w.index[static_cast<size_t>(b)];
        if (ib < 0 || W(a, b) == 0.0) continue;
        e.quad.emplace_back(ia, ib, W(a, b));
      }
    }
    e.constant += c.dot(W * c);
  }
  if (g.size() > 0) {
    if (g.size() != k) throw DimensionError("assembler: linear term size");
    for (int a = 0; a < k; ++a) {
      const int ia = w.index[static_cast<size_t>(a)];
      if (ia >= 0) e.lin(ia) += g(a);
    }
    e.constant += g.dot(c);
  }
  return e;
}

void QcqpAssembler::add_objective(const AffineSignal& w, const Eigen::MatrixXd& W,
                                  const Eigen::VectorXd& g) {
  Expanded e = expand(w, W, g);
  // The problem stores 0.5 x' P x, so P = 2 A.
  for (const auto& t : e.quad) obj_quad_.emplace_back(t.row(), t.col(), 2.0 * t.value());
  obj_lin_ += e.lin;
  obj_const_ += e.constant;
}

void QcqpAssembler::add_equalities(const AffineSignal& w, const Eigen::MatrixXd& G,
                                   const Eigen::VectorXd& h, double rank_tol) {
  if (G.cols() != w.size() || G.rows() != h.size()) {
    throw DimensionError("assembler: equality dimensions");
  }
  // Split G w = h into G_v x_local = h - G_c c.
  std::vector<int> vars;
  std::map<int, int> local;
  for (int a = 0; a < w.size(); ++a) {
    const int ia = w.index[static_cast<size_t>(a)];
    if (ia >= 0 && local.emplace(ia, static_cast<int>(vars.size())).second) vars.push_back(ia);
  }
  Eigen::MatrixXd gv = Eigen::MatrixXd::Zero(G.rows(), static_cast<Eigen::Index>(vars.size()));
  Eigen::VectorXd rhs = h;
  for (int a = 0; a < w.size(); ++a) {
    const int ia = w.index[static_cast<size_t>(a)];
    if (ia >= 0) {
      gv.col(local[ia]) += G.col(a);
    } else {
      rhs -= G.col(a) * w.constant(a);
    }
  }
  if (vars.empty()) {
    if (rhs.size() > 0) inconsistency_ = std::max(inconsistency_, rhs.cwiseAbs().maxCoeff());
    return;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gv, Eigen::ComputeFullU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  int rank = 0;
  const double top = sv.size() > 0 ? sv(0) : 0.0;
  while (rank < sv.size() && sv(rank) > rank_tol * std::max(top, 1e-300)) ++rank;
  const Eigen::MatrixXd& u = svd.matrixU();
  if (rank < u.cols()) {
    const double resid = (u.rightCols(u.cols() - rank).transpose() * rhs).cwiseAbs().maxCoeff();
    inconsistency_ = std::max(inconsistency_, resid);
  }
  const Eigen::MatrixXd rows = u.leftCols(rank).transpose() * gv;
  const Eigen::VectorXd r = u.leftCols(rank).transpose() * rhs;
  const int base = static_cast<int>(eq_rhs_.size());
  for (int i = 0; i < rank; ++i) {
    for (size_t j = 0; j < vars.size(); ++j) {
      const double v = rows(i, static_cast<Eigen::Index>(j));
      if (v != 0.0) eq_trips_.emplace_back(base + i, vars[j], v);
    }
    eq_rhs_.push_back(r(i));
  }
}

void QcqpAssembler::add_inequality(const AffineSignal& w, const Eigen::MatrixXd& W,
                                   const Eigen::VectorXd& g, double r, std::string label) {
  Expanded e = expand(w, W, g);
  QuadraticConstraint con;
  con.label = std::move(label);
  if (!e.quad.empty()) {
    std::vector<Eigen::Triplet<double>> t2;
    t2.reserve(e.quad.size());
    for (const auto& t : e.quad) t2.emplace_back(t.row(), t.col(), 2.0 * t.value());
    con.P.resize(num_vars_, num_vars_);
    con.P.setFromTriplets(t2.begin(), t2.end());
    // Symmetrize in case W was not symmetric.
    SparseMatrix pt = con.P.transpose();
    con.P = 0.5 * (con.P + pt);
  }
  con.q = e.lin.sparseView();
  con.q.conservativeResize(num_vars_);
  con.r = r + e.constant;
  constraints_.push_back(std::move(con));
}

QcqpProblem QcqpAssembler::build() const {
  QcqpProblem prob;
  prob.num_vars = num_vars_;
  prob.P.resize(num_vars_, num_vars_);
  prob.P.setFromTriplets(obj_quad_.begin(), obj_quad_.end());
  SparseMatrix pt = prob.P.transpose();
  prob.P = 0.5 * (prob.P + pt);
  prob.q = obj_lin_;
  prob.c = obj_const_;
  prob.A.resize(static_cast<Eigen::Index>(eq_rhs_.size()), num_vars_);
  prob.A.setFromTriplets(eq_trips_.begin(), eq_trips_.end());
  prob.b = Eigen::Map<const Eigen::VectorXd>(eq_rhs_.data(),
                                             static_cast<Eigen::Index>(eq_rhs_.size()));
  prob.constraints = constraints_;
  return prob;
}

}  // namespace ddmpc::solvers
