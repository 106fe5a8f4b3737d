#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "emlaopt/qp.hpp"

using namespace emlaopt;
using namespace emlaopt::qp;

namespace {

/// Exact oracle for small QPs: enumerate active sets of the inequality rows,
/// solve each equality-constrained subproblem by KKT factorization, and keep
/// the feasible candidate with nonnegative multipliers.
Eigen::VectorXd brute_force_qp(const QpProblem& qp) {
  const int n = static_cast<int>(qp.H.rows());
  const int me = static_cast<int>(qp.A_eq.rows());
  const int mi = static_cast<int>(qp.A_in.rows());
  REQUIRE(mi <= 16);
  Eigen::VectorXd best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << mi); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < mi; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const int ma = static_cast<int>(act.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + me + ma, n + me + ma);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + me + ma);
    K.topLeftCorner(n, n) = qp.H;
    rhs.head(n) = -qp.g;
    if (me) {
      K.block(0, n, n, me) = qp.A_eq.transpose();
      K.block(n, 0, me, n) = qp.A_eq;
      rhs.segment(n, me) = qp.b_eq;
    }
    for (int a = 0; a < ma; ++a) {
      K.block(0, n + me + a, n, 1) = qp.A_in.row(act[a]).transpose();
      K.block(n + me + a, 0, 1, n) = qp.A_in.row(act[a]);
      rhs(n + me + a) = qp.b_in(act[a]);
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd d = sol.head(n);
    bool ok = true;
    for (int i = 0; i < mi && ok; ++i)
      if (qp.A_in.row(i) * d > qp.b_in(i) + 1e-9) ok = false;
    for (int a = 0; a < ma && ok; ++a)
      if (sol(n + me + a) < -1e-9) ok = false;
    if (!ok) continue;
    const double obj = 0.5 * d.dot(qp.H * d) + qp.g.dot(d);
    if (obj < best_obj - 1e-12) {
      best_obj = obj;
      best = d;
    }
  }
  REQUIRE(best.size() == n);
  return best;
}

Eigen::MatrixXd random_spd(int n, std::mt19937& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = g(rng);
  return A.transpose() * A + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace

TEST_CASE("unconstrained QP reduces to the Newton solve") {
  QpProblem qp;
  qp.H.setIdentity(3, 3);
  qp.H *= 2.0;
  qp.g.resize(3);
  qp.g << 1.0, -4.0, 0.5;
  const auto res = solve_qp(qp);
  REQUIRE(res.converged);
  CHECK((res.d + qp.g / 2.0).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("equality-constrained QP hits the analytic KKT point") {
  QpProblem qp;
  qp.H.setIdentity(2, 2);
  qp.g.resize(2);
  qp.g << 0.0, 0.0;
  qp.A_eq.resize(1, 2);
  qp.A_eq << 1.0, 1.0;
  qp.b_eq.resize(1);
  qp.b_eq << 2.0;
  const auto res = solve_qp(qp);
  REQUIRE(res.converged);
  CHECK(res.d(0) == Catch::Approx(1.0).margin(1e-8));
  CHECK(res.d(1) == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("active box bound") {
  // min (d0-2)^2 + (d1+1)^2 s.t. d0 <= 1, -d1 <= 0.25
  QpProblem qp;
  qp.H = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  qp.g.resize(2);
  qp.g << -4.0, 2.0;
  qp.A_in.resize(2, 2);
  qp.A_in << 1.0, 0.0, 0.0, -1.0;
  qp.b_in.resize(2);
  qp.b_in << 1.0, 0.25;
  const auto res = solve_qp(qp);
  REQUIRE(res.converged);
  CHECK(res.d(0) == Catch::Approx(1.0).margin(1e-7));
  CHECK(res.d(1) == Catch::Approx(-0.25).margin(1e-7));
  CHECK(res.mu_in(0) > 1e-3);
}

TEST_CASE("random QPs agree with the active-set enumeration oracle") {
  std::mt19937 rng(12345);
  std::normal_distribution<double> g(0.0, 1.0);
  int solved = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 4;
    QpProblem qp;
    qp.H = random_spd(n, rng);
    qp.g.resize(n);
    for (int i = 0; i < n; ++i) qp.g(i) = g(rng);
    const int mi = 2 + trial % 5;
    qp.A_in.resize(mi, n);
    qp.b_in.resize(mi);
    for (int i = 0; i < mi; ++i) {
      for (int j = 0; j < n; ++j) qp.A_in(i, j) = g(rng);
      qp.b_in(i) = std::abs(g(rng)) + 0.1;  // keeps d = 0 strictly feasible
    }
    if (trial % 3 == 0) {
      qp.A_eq.resize(1, n);
      for (int j = 0; j < n; ++j) qp.A_eq(0, j) = g(rng);
      qp.b_eq.resize(1);
      qp.b_eq << 0.05;
    }
    const auto res = solve_qp(qp);
    REQUIRE(res.converged);
    const Eigen::VectorXd oracle = brute_force_qp(qp);
    CHECK((res.d - oracle).lpNorm<Eigen::Infinity>() < 1e-6);
    ++solved;
  }
  CHECK(solved == 40);
}

TEST_CASE("redundant and zero equality rows are tolerated") {
  QpProblem qp;
  qp.H = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  qp.g.resize(2);
  qp.g << -2.0, -2.0;
  qp.A_eq.resize(3, 2);
  qp.A_eq << 1.0, -1.0, 1.0, -1.0, 0.0, 0.0;  // duplicated row plus a zero row
  qp.b_eq.resize(3);
  qp.b_eq << 0.0, 0.0, 0.0;
  const auto res = solve_qp(qp);
  REQUIRE(res.converged);
  CHECK(res.d(0) == Catch::Approx(1.0).margin(1e-6));
  CHECK(res.d(1) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("KKT conditions hold at the reported solution") {
  std::mt19937 rng(777);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 6;
    QpProblem qp;
    qp.H = random_spd(n, rng);
    qp.g.resize(n);
    for (int i = 0; i < n; ++i) qp.g(i) = g(rng);
    qp.A_in.resize(8, n);
    qp.b_in.resize(8);
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < n; ++j) qp.A_in(i, j) = g(rng);
      qp.b_in(i) = std::abs(g(rng)) + 0.05;
    }
    const auto res = solve_qp(qp);
    REQUIRE(res.converged);
    const Eigen::VectorXd grad_lag =
        qp.H * res.d + qp.g + qp.A_in.transpose() * res.mu_in;
    CHECK(grad_lag.lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((qp.A_in * res.d - qp.b_in).maxCoeff() < 1e-7);
    CHECK(res.mu_in.minCoeff() > -1e-9);
  }
}
