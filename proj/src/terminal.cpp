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

#include "ddmpc/terminal.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "ddmpc/errors.hpp"
#include "ddmpc/linalg.hpp"

namespace ddmpc {

ShiftStructure build_shift_structure(const NodeDims& d) {
  ShiftStructure s;
  s.dims = d;
  const int nx = d.xi_dim();
  s.A_bar = Eigen::MatrixXd::Zero(nx, nx);
  s.B_u = Eigen::MatrixXd::Zero(nx, d.m);
  s.B_yn = Eigen::MatrixXd::Zero(nx, d.q);
  s.B_w = Eigen::MatrixXd::Zero(nx, d.p);
  s.T_y = Eigen::MatrixXd::Zero(d.p, nx);
  const int offsets[3] = {d.u_offset(), d.yn_offset(), d.y_offset()};
  const int widths[3] = {d.m, d.q, d.p};
  for (int sec = 0; sec < 3; ++sec) {
    const int w = widths[sec];
    for (int k = 0; k + 1 < d.n; ++k) {
      s.A_bar.block(offsets[sec] + k * w, offsets[sec] + (k + 1) * w, w, w).setIdentity();
    }
  }
  const int last = d.n - 1;
  s.B_u.middleRows(d.u_offset() + last * d.m, d.m).setIdentity();
  s.B_yn.middleRows(d.yn_offset() + last * d.q, d.q).setIdentity();
  s.B_w.middleRows(d.y_offset() + last * d.p, d.p).setIdentity();
  s.T_y = s.B_w.transpose();
  return s;
}

SynthesisData build_synthesis_data(const DataSet& data, const ShiftStructure& shift) {
  data.validate();
  const NodeDims& d = shift.dims;
  const int len = data.length();
  if (len < d.n + 2) throw DimensionError("data too short for terminal synthesis");
  if (data.u.dim() != d.m || data.y.dim() != d.p || data.y_neighbors.dim() != d.q) {
    throw DimensionError("data dimensions differ from the shift structure");
  }
  const int cols = len - d.n;
  SynthesisData s;
  s.Xi.resize(d.xi_dim(), cols);
  s.Xi_plus.resize(d.xi_dim(), cols);
  s.U.resize(d.m, cols);
  s.Y_n.resize(d.q, cols);
  for (int c = 0; c < cols; ++c) {
    const int t = d.n + c;
    s.Xi.col(c) = extended_state_from_history(data.u, data.y_neighbors, data.y, t, d.n).stacked();
    s.Xi_plus.col(c) =
        extended_state_from_history(data.u, data.y_neighbors, data.y, t + 1, d.n).stacked();
    s.U.col(c) = data.u.at(t);
    s.Y_n.col(c) = data.y_neighbors.at(t);
  }
  s.Z.resize(d.xi_dim() + d.m, cols);
  s.Z << s.Xi, s.U;
  s.M_res = s.Xi_plus - shift.A_bar * s.Xi - shift.B_u * s.U - shift.B_yn * s.Y_n;
  return s;
}

Eigen::MatrixXd build_uncertainty_multiplier(const SynthesisData& s, const ShiftStructure& shift) {
  const Eigen::Index nx = shift.A_bar.rows();
  const Eigen::Index nz = s.Z.rows();
  const Eigen::Index p = shift.B_w.cols();
  const Eigen::MatrixXd wm = shift.B_w.transpose() * s.M_res;  // p x cols
  Eigen::MatrixXd core(nz + p, nz + p);
  core << -s.Z * s.Z.transpose(), s.Z * wm.transpose(), wm * s.Z.transpose(),
      -wm * wm.transpose();
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(nz + p, nx + nz);
  outer.block(0, nx, nz, nz).setIdentity();
  outer.block(nz, 0, p, nx) = shift.B_w.transpose();
  Eigen::MatrixXd out = outer.transpose() * core * outer;
  return 0.5 * (out + out.transpose());
}

SynthesisData whiten(const SynthesisData& s, double rel_tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(s.Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  int r = 0;
  while (r < sv.size() && sv(r) > rel_tol * sv(0)) ++r;
  const Eigen::MatrixXd t =
      svd.matrixV().leftCols(r) * sv.head(r).cwiseInverse().asDiagonal();
  SynthesisData w = s;
  w.Z = s.Z * t;
  w.M_res = s.M_res * t;
  return w;
}

namespace {

struct LmiParts {
  Eigen::MatrixXd X, G, M;
  double tau;
};

Eigen::MatrixXd decrease_lmi(const LmiParts& v, const Eigen::MatrixXd& pbar,
                             const ShiftStructure& sh, const Eigen::MatrixXd& qr,
                             const Eigen::MatrixXd& rr, double decay = 0.0) {
  const Eigen::Index nx = sh.A_bar.rows();
  const Eigen::Index m = sh.B_u.cols();
  const Eigen::Index nz = nx + m;
  const Eigen::Index nr = qr.rows() + rr.rows();
  const Eigen::Index dim = nx + nz + nx + nr;
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(dim, dim);
  f.topLeftCorner(nx + nz, nx + nz) = v.tau * pbar;
  f.topLeftCorner(nx, nx) -= v.X;
  Eigen::MatrixXd col(nx + nz, nx);
  col << sh.A_bar * v.X + sh.B_u * v.M, v.X, v.M;
  f.block(0, nx + nz, nx + nz, nx) = col;
  f.block(nx + nz, 0, nx, nx + nz) = col.transpose();
  f.block(nx + nz, nx + nz, nx, nx) = -(1.0 - decay) * v.X;
  Eigen::MatrixXd row(nr, nx);
  row << qr * v.X, rr * v.M;
  f.block(nx + nz + nx, nx + nz, nr, nx) = row;
  f.block(nx + nz, nx + nz + nx, nx, nr) = row.transpose();
  f.bottomRightCorner(nr, nr) = -Eigen::MatrixXd::Identity(nr, nr);
  return f;
}

}  // namespace

SynthesisResult synthesize(const SynthesisData& data, const ShiftStructure& shift,
                           const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                           const solvers::LmiBackend& backend, const SynthesisSettings& st) {
  const int nx = static_cast<int>(shift.A_bar.rows());
  const int m = static_cast<int>(shift.B_u.cols());
  if (min_eigenvalue(Q) <= 0.0 || min_eigenvalue(R) <= 0.0) {
    throw DimensionError("Q and R must be positive definite");
  }
  const SynthesisData s = st.whiten_data ? whiten(data) : data;
  const Eigen::MatrixXd pbar = build_uncertainty_multiplier(s, shift);
  const Eigen::MatrixXd qr = psd_factor(Q) * shift.T_y;
  const Eigen::MatrixXd rr = psd_factor(R);

  solvers::LmiBuilder b;
  const auto xv = b.add_symmetric(nx);
  const auto gv = b.add_symmetric(nx);
  const auto mv = b.add_matrix(m, nx);
  const auto tv = b.add_scalar();
  auto parts = [&](const Eigen::VectorXd& y) {
    return LmiParts{xv.value(y), gv.value(y), mv.value(y), tv.value(y)(0, 0)};
  };
  b.add_block("decrease", [&](const Eigen::VectorXd& y) {
    const Eigen::MatrixXd f = decrease_lmi(parts(y), pbar, shift, qr, rr, st.decay);
    return Eigen::MatrixXd(-f - st.margin * Eigen::MatrixXd::Identity(f.rows(), f.cols()));
  });
  b.add_block("schur", [&](const Eigen::VectorXd& y) {
    const LmiParts v = parts(y);
    Eigen::MatrixXd f(2 * nx, 2 * nx);
    f << v.G, Eigen::MatrixXd::Identity(nx, nx), Eigen::MatrixXd::Identity(nx, nx), v.X;
    return Eigen::MatrixXd(f - st.margin * Eigen::MatrixXd::Identity(2 * nx, 2 * nx));
  });
  b.add_block("tau_lower", [&](const Eigen::VectorXd& y) { return tv.value(y); });
  b.add_block("tau_upper", [&](const Eigen::VectorXd& y) {
    return Eigen::MatrixXd(st.tau_max * Eigen::MatrixXd::Ones(1, 1) - tv.value(y));
  });
  if (st.p_floor > 0.0) {
    // X <= (c I + T_y' Q T_y)^-1 is equivalent to P >= c I.
    const Eigen::MatrixXd cap =
        (st.p_floor * Eigen::MatrixXd::Identity(nx, nx) + shift.T_y.transpose() * Q * shift.T_y)
            .inverse();
    b.add_block("p_floor", [&, cap](const Eigen::VectorXd& y) {
      return Eigen::MatrixXd(cap - xv.value(y));
    });
  }
  b.set_objective([&](const Eigen::VectorXd& y) { return gv.value(y).trace(); });

  const solvers::LmiProblem prob = b.build();
  const solvers::LmiResult res = backend.solve(prob);
  if (res.status == solvers::LmiStatus::kInfeasible) {
    throw SynthesisInfeasibleError("terminal ingredient LMI is infeasible");
  }
  // Any strictly feasible point certifies the ingredients, so an early stop
  // short of the objective tolerance is acceptable.
  if (res.status == solvers::LmiStatus::kNumericalError) {
    throw SolverError("LMI backend failed: " + solvers::to_string(res.status));
  }
  for (size_t k = 0; k < res.block_min_eigenvalues.size(); ++k) {
    if (!(res.block_min_eigenvalues[k] > 0.0)) {
      throw SolverError("LMI backend returned a point outside the cone of block '" +
                        prob.blocks[k].label + "' (min eigenvalue " +
                        std::to_string(res.block_min_eigenvalues[k]) + ")");
    }
  }

  const LmiParts v = parts(res.y);
  SynthesisResult out;
  out.X = v.X;
  out.M = v.M;
  out.tau = v.tau;
  out.trace_gamma = v.G.trace();
  out.newton_steps = res.newton_steps;
  const Eigen::MatrixXd xinv = v.X.llt().solve(Eigen::MatrixXd::Identity(nx, nx));
  out.P = xinv - shift.T_y.transpose() * Q * shift.T_y;
  out.P = 0.5 * (out.P + out.P.transpose()).eval();
  out.K = v.M * xinv;
  if (!(min_eigenvalue(out.P) > 0.0)) {
    throw SynthesisInfeasibleError("synthesized terminal cost is not positive definite");
  }

  // Largest lambda with LMI + lambda diag(0, X P X, 0) still negative definite.
  const Eigen::MatrixXd f = -decrease_lmi(v, pbar, shift, qr, rr);
  Eigen::LLT<Eigen::MatrixXd> llt(f);
  if (llt.info() != Eigen::Success) throw SolverError("decrease LMI not strictly satisfied");
  const Eigen::Index nz = nx + m;
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(f.rows(), f.cols());
  e.block(nx + nz, nx + nz, nx, nx) = v.X * out.P * v.X;
  const Eigen::MatrixXd lower = llt.matrixL();
  const Eigen::MatrixXd tmp = lower.triangularView<Eigen::Lower>().solve(e);
  const Eigen::MatrixXd w =
      lower.triangularView<Eigen::Lower>().solve(tmp.transpose()).transpose();
  out.eta_bar = 1.0 / max_eigenvalue(0.5 * (w + w.transpose()));
  return out;
}

void TerminalIngredients::validate() const {
  if (P.rows() != P.cols() || K.cols() != P.rows()) {
    throw DimensionError("terminal ingredient dimensions are inconsistent");
  }
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + P.cwiseAbs().maxCoeff())) {
    throw DimensionError("terminal cost is not symmetric");
  }
  if (!(min_eigenvalue(P) > 0.0)) throw TerminalDesignError("terminal cost is not positive definite");
  if (!(epsilon > 0.0)) throw TerminalDesignError("terminal level must be positive");
  if (!(theta > 0.0 && theta < 1.0)) throw TerminalDesignError("theta must lie in (0, 1)");
  if (eta < 0.0) throw TerminalDesignError("eta must be nonnegative");
}

void write_ingredients(const std::string& path, const TerminalIngredients& ing) {
  ing.validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << std::setprecision(17);
  out << "dims " << ing.P.rows() << ' ' << ing.K.rows() << '\n';
  out << "epsilon " << ing.epsilon << '\n';
  out << "eta " << ing.eta << '\n';
  out << "theta " << ing.theta << '\n';
  out << "P";
  for (Eigen::Index i = 0; i < ing.P.rows(); ++i)
    for (Eigen::Index j = 0; j < ing.P.cols(); ++j) out << ' ' << ing.P(i, j);
  out << "\nK";
  for (Eigen::Index i = 0; i < ing.K.rows(); ++i)
    for (Eigen::Index j = 0; j < ing.K.cols(); ++j) out << ' ' << ing.K(i, j);
  out << '\n';
  if (!out) throw Error("failed writing " + path);
}

TerminalIngredients read_ingredients(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ingredients file " + path);
  TerminalIngredients ing;
  int nx = -1, m = -1;
  bool have_p = false, have_k = false;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    if (key == "dims") {
      ss >> nx >> m;
    } else if (key == "epsilon") {
      ss >> ing.epsilon;
    } else if (key == "eta") {
      ss >> ing.eta;
    } else if (key == "theta") {
      ss >> ing.theta;
    } else if (key == "P" || key == "K") {
      if (nx <= 0 || m <= 0) throw Error(path + ": dims must precede matrices");
      Eigen::MatrixXd& mat = key == "P" ? ing.P : ing.K;
      mat.resize(key == "P" ? nx : m, nx);
      for (Eigen::Index i = 0; i < mat.rows(); ++i)
        for (Eigen::Index j = 0; j < mat.cols(); ++j)
          if (!(ss >> mat(i, j))) throw Error(path + ": truncated matrix " + key);
      (key == "P" ? have_p : have_k) = true;
    } else {
      throw Error(path + ": unknown key '" + key + "'");
    }
  }
  if (!have_p || !have_k) throw Error(path + ": missing P or K");
  ing.validate();
  return ing;
}

Eigen::VectorXd ellipsoid_input_support(const Eigen::MatrixXd& P, const Eigen::MatrixXd& K,
                                        double epsilon) {
  const Eigen::MatrixXd pinv_kt = P.llt().solve(K.transpose());
  Eigen::VectorXd s(K.rows());
  for (Eigen::Index j = 0; j < K.rows(); ++j) {
    s(j) = std::sqrt(epsilon * std::max(0.0, K.row(j).dot(pinv_kt.col(j))));
  }
  return s;
}

InitialWindow window_from_xi(const NodeDims& d, const Eigen::VectorXd& xi) {
  if (xi.size() != d.xi_dim()) throw DimensionError("extended state has wrong dimension");
  auto part = [&](int offset, int dim) {
    if (dim == 0) return Trajectory::zeros(0, d.n, -d.n);
    return Trajectory::from_stacked(xi.segment(offset, d.n * dim), dim, -d.n);
  };
  return InitialWindow{part(d.u_offset(), d.m), part(d.yn_offset(), d.q),
                       part(d.y_offset(), d.p)};
}

Eigen::VectorXd xi_from_window(const InitialWindow& w) {
  Eigen::VectorXd xi(w.u.samples().size() + w.y_neighbors.samples().size() +
                     w.y.samples().size());
  xi << w.u.stacked(), w.y_neighbors.stacked(), w.y.stacked();
  return xi;
}

Eigen::MatrixXd closed_loop_matrix(const ShiftStructure& shift, const Eigen::MatrixXd& delta,
                                   const Eigen::MatrixXd& K) {
  const Eigen::Index nx = shift.A_bar.rows();
  return shift.A_bar + shift.B_u * K +
         shift.B_w * (delta.leftCols(nx) + delta.rightCols(K.rows()) * K);
}

CalibrationReport calibrate(const SynthesisResult& synth, const ShiftStructure& shift,
                            const InputBox& box, const DataDrivenSimulator& sim,
                            const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                            const CalibrationSettings& st) {
  const NodeDims& d = shift.dims;
  CalibrationReport rep;
  TerminalIngredients& ing = rep.ingredients;
  ing.P = synth.P;
  ing.K = synth.K;
  ing.epsilon = st.epsilon_target;

  Eigen::VectorXd bound(box.dim());
  for (int j = 0; j < box.dim(); ++j) bound(j) = std::min(box.upper(j), -box.lower(j));
  if ((bound.array() <= 0.0).any()) {
    throw TerminalDesignError("input box does not contain the origin in its interior");
  }
  for (;;) {
    const Eigen::VectorXd sup = ellipsoid_input_support(ing.P, ing.K, ing.epsilon);
    rep.input_usage = sup.cwiseQuotient(bound).maxCoeff();
    if (rep.input_usage <= 1.0) break;
    if (rep.epsilon_shrink_steps >= st.max_shrink_steps) {
      throw TerminalDesignError("terminal controller violates the input box on every tried level");
    }
    ing.epsilon *= st.epsilon_shrink;
    ++rep.epsilon_shrink_steps;
  }

  const double lmin = min_eigenvalue(ing.P);
  const double lmax = max_eigenvalue(ing.P);
  ing.eta = synth.eta_bar * lmin;
  ing.theta = st.theta_override > 0.0 ? st.theta_override
                                      : std::max(1.0 - ing.eta / lmax, st.theta_floor);
  if (ing.theta >= 1.0) ing.theta = std::nextafter(1.0, 0.0);
  ing.validate();

  // Sample the ellipsoid and test the decrease with neighbor outputs.
  std::mt19937_64 rng(st.seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(-1.0, 1.0), frac(0.0, 1.0);
  const Eigen::MatrixXd lp = ing.P.llt().matrixL();
  const int nx = d.xi_dim();
  std::vector<Eigen::VectorXd> xis, yns;
  for (int k = 0; k < st.samples; ++k) {
    Eigen::VectorXd v(nx);
    for (int i = 0; i < nx; ++i) v(i) = gauss(rng);
    v *= std::pow(frac(rng), 1.0 / nx) / v.norm();
    xis.push_back(std::sqrt(ing.epsilon) *
                  lp.transpose().triangularView<Eigen::Upper>().solve(v));
    Eigen::VectorXd yn(d.q);
    for (int i = 0; i < d.q; ++i) yn(i) = unit(rng);
    yns.push_back(yn);
  }
  const Trajectory empty = Trajectory::zeros(d.q, 0, 0);
  auto residual = [&](const Eigen::VectorXd& xi, const Eigen::VectorXd& yn) {
    const Eigen::VectorXd u = ing.K * xi;
    const Eigen::VectorXd y =
        sim.simulate(window_from_xi(d, xi), Trajectory(Eigen::MatrixXd(u), 0), empty).at(0);
    const Eigen::VectorXd next =
        shift.A_bar * xi + shift.B_u * u + shift.B_yn * yn + shift.B_w * y;
    return next.dot(ing.P * next) - xi.dot(ing.P * xi) + ing.eta * xi.squaredNorm() +
           y.dot(Q * y) + u.dot(R * u);
  };
  for (double ratio : st.coupling_ratios) {
    bool ok = true;
    for (int k = 0; k < st.samples && (ok || ratio == 0.0); ++k) {
      const Eigen::VectorXd yn = ratio * xis[k].cwiseAbs().maxCoeff() * yns[k];
      const double r = residual(xis[k], yn);
      const double tol = 1e-14 + 1e-9 * xis[k].dot(ing.P * xis[k]);
      if (ratio == 0.0) rep.worst_uncoupled_residual = std::max(rep.worst_uncoupled_residual, r);
      ok = ok && r <= tol;
    }
    if (!ok) {
      if (ratio == 0.0) {
        throw WeakCouplingError("terminal cost decrease fails on the ellipsoid without coupling");
      }
      break;
    }
    rep.max_coupling_ratio = ratio;
  }
  return rep;
}

}  // namespace ddmpc
