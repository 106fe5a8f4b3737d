#pragma once

// Clamped B-spline parameterization of joint trajectories on a uniform
// collocation grid. Basis, first and second derivative matrices are built
// once; evaluation is theta(t) = B(t) c with c stacked joint-major.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "emlaopt/errors.hpp"

namespace emlaopt::spline {

struct CollocationGrid {
  double t0 = 0.0;
  double dt = 0.0;
  int M = 0;  ///< number of partitions; M + 1 collocation points

  double t_end() const { return t0 + dt * M; }
  double time(int k) const { return t0 + dt * k; }
  int points() const { return M + 1; }

  std::vector<double> times() const {
    std::vector<double> out(points());
    for (int k = 0; k <= M; ++k) out[k] = time(k);
    return out;
  }

  void validate() const {
    if (M < 2) throw ConfigError("CollocationGrid: need M >= 2");
    if (!(dt > 0.0)) throw ConfigError("CollocationGrid: need dt > 0");
    if (!std::isfinite(t0) || !std::isfinite(dt))
      throw ConfigError("CollocationGrid: non-finite grid");
  }
};

namespace detail {

inline int find_span(int n_ctrl, int degree, double t, const std::vector<double>& U) {
  if (t >= U[n_ctrl]) return n_ctrl - 1;
  if (t <= U[degree]) return degree;
  int lo = degree, hi = n_ctrl, mid = (lo + hi) / 2;
  while (t < U[mid] || t >= U[mid + 1]) {
    if (t < U[mid])
      hi = mid;
    else
      lo = mid;
    mid = (lo + hi) / 2;
  }
  return mid;
}

/// Nonzero basis functions and their derivatives at t (Cox-de Boor with the
/// standard derivative recurrence). ders(k, j) holds the k-th derivative of
/// basis function span - degree + j.
inline Eigen::MatrixXd ders_basis_funs(int span, double t, int degree, int n_ders,
                                       const std::vector<double>& U) {
  const int p = degree;
  Eigen::MatrixXd ndu(p + 1, p + 1);
  Eigen::VectorXd left(p + 1), right(p + 1);
  ndu(0, 0) = 1.0;
  for (int j = 1; j <= p; ++j) {
    left(j) = t - U[span + 1 - j];
    right(j) = U[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu(j, r) = right(r + 1) + left(j - r);
      const double temp = ndu(r, j - 1) / ndu(j, r);
      ndu(r, j) = saved + right(r + 1) * temp;
      saved = left(j - r) * temp;
    }
    ndu(j, j) = saved;
  }
  Eigen::MatrixXd ders = Eigen::MatrixXd::Zero(n_ders + 1, p + 1);
  for (int j = 0; j <= p; ++j) ders(0, j) = ndu(j, p);
  Eigen::MatrixXd a(2, p + 1);
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a(0, 0) = 1.0;
    for (int k = 1; k <= n_ders; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
        d = a(s2, 0) * ndu(rk, pk);
      }
      const int j1 = (rk >= -1) ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
        d += a(s2, j) * ndu(rk + j, pk);
      }
      if (r <= pk) {
        a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
        d += a(s2, k) * ndu(r, pk);
      }
      ders(k, r) = d;
      std::swap(s1, s2);
    }
  }
  int factor = p;
  for (int k = 1; k <= n_ders; ++k) {
    ders.row(k) *= static_cast<double>(factor);
    factor *= (p - k);
  }
  return ders;
}

}  // namespace detail

/// Basis and derivative matrices of a clamped uniform B-spline, evaluated on a
/// collocation grid. B0/B1/B2 are (M+1) x N; the same scalar basis serves
/// every joint (the stacked matrix form is block-diagonal per joint).
struct SplineBasis {
  int degree = 3;
  int N = 0;  ///< control points per joint
  std::vector<double> knots;
  CollocationGrid grid;
  Eigen::MatrixXd B0, B1, B2;

  double t_start() const { return knots[degree]; }
  double t_end() const { return knots[N]; }
};

inline SplineBasis build_basis(int degree, int N, const CollocationGrid& grid) {
  grid.validate();
  if (degree < 3) throw ConfigError("build_basis: degree must be at least 3");
  if (N <= degree) throw ConfigError("build_basis: need more control points than the degree");
  SplineBasis b;
  b.degree = degree;
  b.N = N;
  b.grid = grid;
  const int n_knots = N + degree + 1;
  b.knots.resize(n_knots);
  const double ta = grid.t0, tb = grid.t_end();
  const int interior = N - degree - 1;
  for (int i = 0; i <= degree; ++i) b.knots[i] = ta;
  for (int i = 1; i <= interior; ++i)
    b.knots[degree + i] = ta + (tb - ta) * static_cast<double>(i) / (interior + 1);
  for (int i = N; i < n_knots; ++i) b.knots[i] = tb;

  b.B0 = Eigen::MatrixXd::Zero(grid.points(), N);
  b.B1 = Eigen::MatrixXd::Zero(grid.points(), N);
  b.B2 = Eigen::MatrixXd::Zero(grid.points(), N);
  for (int k = 0; k < grid.points(); ++k) {
    const double t = grid.time(k);
    const int span = detail::find_span(N, degree, t, b.knots);
    const Eigen::MatrixXd d = detail::ders_basis_funs(span, t, degree, 2, b.knots);
    for (int j = 0; j <= degree; ++j) {
      const int col = span - degree + j;
      b.B0(k, col) = d(0, j);
      b.B1(k, col) = d(1, j);
      b.B2(k, col) = d(2, j);
    }
  }
  return b;
}

/// Scalar basis row (values, first, second derivatives) at an arbitrary time
/// inside the knot span.
inline void basis_row(const SplineBasis& b, double t, Eigen::RowVectorXd& r0,
                      Eigen::RowVectorXd& r1, Eigen::RowVectorXd& r2) {
  if (t < b.t_start() - 1e-12 || t > b.t_end() + 1e-12)
    throw RangeError("basis_row: t outside knot span");
  r0.setZero(b.N);
  r1.setZero(b.N);
  r2.setZero(b.N);
  const int span = detail::find_span(b.N, b.degree, t, b.knots);
  const Eigen::MatrixXd d = detail::ders_basis_funs(span, t, b.degree, 2, b.knots);
  for (int j = 0; j <= b.degree; ++j) {
    const int col = span - b.degree + j;
    r0(col) = d(0, j);
    r1(col) = d(1, j);
    r2(col) = d(2, j);
  }
}

struct SplineSample {
  Eigen::VectorXd value, rate, accel;
};

namespace detail {

inline int joint_count(const SplineBasis& b, const Eigen::VectorXd& c) {
  if (c.size() == 0 || c.size() % b.N != 0)
    throw ConfigError("spline evaluate: control vector length not a multiple of N");
  return static_cast<int>(c.size()) / b.N;
}

inline SplineSample sample_rows(const SplineBasis& b, const Eigen::VectorXd& c,
                                const Eigen::RowVectorXd& r0, const Eigen::RowVectorXd& r1,
                                const Eigen::RowVectorXd& r2) {
  const int n = joint_count(b, c);
  SplineSample out;
  out.value.resize(n);
  out.rate.resize(n);
  out.accel.resize(n);
  for (int j = 0; j < n; ++j) {
    const auto cj = c.segment(j * b.N, b.N);
    out.value(j) = r0 * cj;
    out.rate(j) = r1 * cj;
    out.accel(j) = r2 * cj;
  }
  return out;
}

}  // namespace detail

/// theta, theta', theta'' at an arbitrary t; one entry per joint.
inline SplineSample evaluate(const SplineBasis& b, const Eigen::VectorXd& c, double t) {
  Eigen::RowVectorXd r0, r1, r2;
  basis_row(b, t, r0, r1, r2);
  return detail::sample_rows(b, c, r0, r1, r2);
}

/// Same as evaluate() at collocation point k, using the precomputed rows.
inline SplineSample evaluate_at(const SplineBasis& b, const Eigen::VectorXd& c, int k) {
  return detail::sample_rows(b, c, b.B0.row(k), b.B1.row(k), b.B2.row(k));
}

/// Materialized stacked basis matrix (n x nN, block-diagonal per joint) for
/// the requested derivative order at collocation point k.
inline Eigen::MatrixXd block_matrix(const SplineBasis& b, int n_joints, int k, int deriv) {
  const Eigen::MatrixXd* src = deriv == 0 ? &b.B0 : deriv == 1 ? &b.B1 : &b.B2;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_joints, n_joints * b.N);
  for (int j = 0; j < n_joints; ++j) out.block(j, j * b.N, 1, b.N) = src->row(k);
  return out;
}

/// Least-squares fit of control points to joint samples at the collocation
/// times. samples is (M+1) x n, one column per joint. Returns stacked c;
/// reports the worst per-joint residual norm through *residual when given.
inline Eigen::VectorXd fit_initial_controls(const SplineBasis& b, const Eigen::MatrixXd& samples,
                                            double* residual = nullptr) {
  if (samples.rows() != b.grid.points())
    throw ConfigError("fit_initial_controls: sample rows must match collocation points");
  if (samples.rows() < b.N)
    throw ConfigError("fit_initial_controls: need at least N samples");
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(b.B0);
  if (qr.rank() < b.N) throw FitError("fit_initial_controls: rank-deficient basis matrix");
  const int n = static_cast<int>(samples.cols());
  Eigen::VectorXd c(n * b.N);
  double worst = 0.0;
  for (int j = 0; j < n; ++j) {
    const Eigen::VectorXd cj = qr.solve(samples.col(j));
    c.segment(j * b.N, b.N) = cj;
    worst = std::max(worst, (b.B0 * cj - samples.col(j)).norm());
  }
  if (residual) *residual = worst;
  return c;
}

}  // namespace emlaopt::spline
