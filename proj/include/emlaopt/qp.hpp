#pragma once

// Dense convex QP solver, primal-dual interior point with Mehrotra
// predictor-corrector steps:
//
//   min  0.5 d'H d + g'd
//   s.t. A_e d  = b_e
//        A_i d <= b_i
//
// The equality block may contain dependent or near-zero rows (dual
// regularization keeps the KKT factorization well posed), which is what the
// SQP layer needs when constraint residuals vanish identically.

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "emlaopt/errors.hpp"

namespace emlaopt::qp {

struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;
};

struct QpSettings {
  int max_iterations = 200;
  double tolerance = 1e-11;
  double primal_reg = 1e-10;
  double dual_reg = 1e-9;
  double boundary_fraction = 0.995;
};

struct QpResult {
  Eigen::VectorXd d;
  Eigen::VectorXd lambda_eq;
  Eigen::VectorXd mu_in;
  bool converged = false;
  int iterations = 0;
  double kkt_residual = 0.0;
};

inline QpResult solve_qp(const QpProblem& qp, const QpSettings& cfg = {}) {
  const int n = static_cast<int>(qp.H.rows());
  const int me = static_cast<int>(qp.A_eq.rows());
  const int mi = static_cast<int>(qp.A_in.rows());
  if (qp.H.cols() != n || qp.g.size() != n || (me > 0 && qp.A_eq.cols() != n) ||
      (mi > 0 && qp.A_in.cols() != n) || qp.b_eq.size() != me || qp.b_in.size() != mi)
    throw ConfigError("solve_qp: dimension mismatch");

  QpResult res;
  res.d = Eigen::VectorXd::Zero(n);
  res.lambda_eq = Eigen::VectorXd::Zero(me);
  res.mu_in = Eigen::VectorXd::Ones(mi);

  Eigen::VectorXd s(mi);
  for (int i = 0; i < mi; ++i) s(i) = std::max(1.0, qp.b_in(i));

  const double scale = 1.0 + std::max({qp.g.lpNorm<Eigen::Infinity>(),
                                       me ? qp.b_eq.lpNorm<Eigen::Infinity>() : 0.0,
                                       mi ? qp.b_in.lpNorm<Eigen::Infinity>() : 0.0});
  const double h_scale = 1.0 + qp.H.lpNorm<Eigen::Infinity>();

  Eigen::MatrixXd K(n + me, n + me);
  Eigen::VectorXd rhs(n + me), sol(n + me);

  const auto max_step = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double a = 1.0;
    for (int i = 0; i < v.size(); ++i)
      if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
    return a;
  };

  for (res.iterations = 0; res.iterations < cfg.max_iterations; ++res.iterations) {
    const Eigen::VectorXd r_d = qp.H * res.d + qp.g +
                                (me ? (qp.A_eq.transpose() * res.lambda_eq).eval()
                                    : Eigen::VectorXd::Zero(n)) +
                                (mi ? (qp.A_in.transpose() * res.mu_in).eval()
                                    : Eigen::VectorXd::Zero(n));
    const Eigen::VectorXd r_e = me ? (qp.A_eq * res.d - qp.b_eq).eval() : Eigen::VectorXd();
    const Eigen::VectorXd r_i = mi ? (qp.A_in * res.d + s - qp.b_in).eval() : Eigen::VectorXd();
    const double mu = mi ? s.dot(res.mu_in) / mi : 0.0;

    res.kkt_residual = r_d.lpNorm<Eigen::Infinity>();
    if (me) res.kkt_residual = std::max(res.kkt_residual, r_e.lpNorm<Eigen::Infinity>());
    if (mi) res.kkt_residual = std::max(res.kkt_residual, r_i.lpNorm<Eigen::Infinity>());
    if (res.kkt_residual <= cfg.tolerance * scale && mu <= cfg.tolerance * scale) {
      res.converged = true;
      return res;
    }
    // diverging complementarity signals an infeasible subproblem
    if (mi && mu > 1e8 * scale) return res;

    // condensed KKT matrix, shared by predictor and corrector
    K.setZero();
    K.topLeftCorner(n, n) = qp.H;
    if (mi) {
      const Eigen::VectorXd dzs = (res.mu_in.array() / s.array()).matrix();
      K.topLeftCorner(n, n).noalias() += qp.A_in.transpose() * dzs.asDiagonal() * qp.A_in;
    }
    K.topLeftCorner(n, n).diagonal().array() += cfg.primal_reg * h_scale;
    if (me) {
      K.topRightCorner(n, me) = qp.A_eq.transpose();
      K.bottomLeftCorner(me, n) = qp.A_eq;
      K.bottomRightCorner(me, me).diagonal().array() = -cfg.dual_reg * h_scale;
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);

    const auto solve_step = [&](const Eigen::VectorXd& comp_rhs, Eigen::VectorXd& dd,
                                Eigen::VectorXd& dy, Eigen::VectorXd& ds, Eigen::VectorXd& dz) {
      rhs.head(n) = -r_d;
      if (mi) {
        // comp_rhs holds s.*z - sigma*mu + corrections, elementwise
        const Eigen::VectorXd t = (res.mu_in.array() / s.array() * r_i.array() -
                                   comp_rhs.array() / s.array())
                                      .matrix();
        rhs.head(n).noalias() -= qp.A_in.transpose() * t;
      }
      if (me) rhs.tail(me) = -r_e;
      sol = lu.solve(rhs);
      dd = sol.head(n);
      if (me) dy = sol.tail(me);
      if (mi) {
        ds = -r_i - qp.A_in * dd;
        dz = (-(comp_rhs.array()) - res.mu_in.array() * ds.array()).array() / s.array();
      }
    };

    Eigen::VectorXd dd, dy, ds, dz;
    double sigma_mu = 0.0;
    Eigen::VectorXd corr = Eigen::VectorXd::Zero(mi);
    if (mi) {
      // predictor
      Eigen::VectorXd comp = (s.array() * res.mu_in.array()).matrix();
      solve_step(comp, dd, dy, ds, dz);
      const double a_p = max_step(s, ds), a_d = max_step(res.mu_in, dz);
      const double a = std::min(a_p, a_d);
      const double mu_aff = (s + a * ds).dot(res.mu_in + a * dz) / mi;
      const double sigma = std::pow(std::max(mu_aff, 0.0) / std::max(mu, 1e-300), 3.0);
      sigma_mu = sigma * mu;
      corr = (ds.array() * dz.array()).matrix();
      comp = (s.array() * res.mu_in.array() + corr.array() - sigma_mu).matrix();
      solve_step(comp, dd, dy, ds, dz);
    } else {
      Eigen::VectorXd comp;
      solve_step(comp, dd, dy, ds, dz);
    }

    // one common step length keeps the QP Newton system consistent
    double a = 1.0;
    if (mi) {
      a = std::min(1.0, cfg.boundary_fraction *
                            std::min(max_step(s, ds), max_step(res.mu_in, dz)));
    }
    if (!dd.allFinite() || (mi && (!ds.allFinite() || !dz.allFinite()))) {
      res.converged = false;
      return res;
    }
    res.d += a * dd;
    if (me) res.lambda_eq += a * dy;
    if (mi) {
      s += a * ds;
      res.mu_in += a * dz;
    }
  }
  return res;
}

}  // namespace emlaopt::qp
