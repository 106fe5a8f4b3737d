#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "emlaopt/spline.hpp"

using namespace emlaopt;
using namespace emlaopt::spline;

namespace {
CollocationGrid grid_25() { return {0.0, 0.25, 25}; }
}  // namespace

TEST_CASE("partition of unity and derivative row sums") {
  const auto b = build_basis(3, 22, grid_25());
  for (int k = 0; k < b.grid.points(); ++k) {
    CHECK(b.B0.row(k).sum() == Catch::Approx(1.0).margin(1e-12));
    CHECK(std::abs(b.B1.row(k).sum()) < 1e-11);
    CHECK(std::abs(b.B2.row(k).sum()) < 1e-10);
  }
}

TEST_CASE("clamped endpoints interpolate the end control points") {
  const auto b = build_basis(3, 10, {1.0, 0.5, 12});
  Eigen::VectorXd c(10);
  c << 0.3, -0.1, 0.7, 0.2, 0.9, -0.5, 0.4, 0.1, -0.2, 0.8;
  const auto s0 = evaluate(b, c, b.grid.t0);
  const auto s1 = evaluate(b, c, b.grid.t_end());
  CHECK(s0.value(0) == Catch::Approx(c(0)).margin(1e-14));
  CHECK(s1.value(0) == Catch::Approx(c(9)).margin(1e-14));
}

TEST_CASE("derivative matrices agree with time finite differences") {
  const auto b = build_basis(3, 12, {0.0, 0.5, 16});
  const double h = 1e-6;
  Eigen::RowVectorXd r0p, r1p, r2p, r0m, r1m, r2m, r0, r1, r2;
  for (int k = 1; k < b.grid.points() - 1; ++k) {
    const double t = b.grid.time(k);
    basis_row(b, t, r0, r1, r2);
    basis_row(b, t + h, r0p, r1p, r2p);
    basis_row(b, t - h, r0m, r1m, r2m);
    for (int i = 0; i < b.N; ++i) {
      const double fd1 = (r0p(i) - r0m(i)) / (2.0 * h);
      const double fd2 = (r1p(i) - r1m(i)) / (2.0 * h);
      CHECK(r1(i) == Catch::Approx(fd1).epsilon(1e-6).margin(1e-7));
      CHECK(r2(i) == Catch::Approx(fd2).epsilon(1e-5).margin(1e-5));
    }
  }
}

TEST_CASE("constant control points give a flat trajectory") {
  const auto b = build_basis(3, 9, {0.0, 0.25, 12});
  const double kappa = 0.42;
  Eigen::VectorXd c = Eigen::VectorXd::Constant(9, kappa);
  for (int k = 0; k <= 12; ++k) {
    const auto s = evaluate_at(b, c, k);
    CHECK(s.value(0) == Catch::Approx(kappa).margin(1e-13));
    CHECK(std::abs(s.rate(0)) < 1e-12);
    CHECK(std::abs(s.accel(0)) < 1e-11);
  }
}

TEST_CASE("linear-in-index control points are curvature-free in the interior") {
  const auto b = build_basis(3, 14, {0.0, 0.25, 20});
  Eigen::VectorXd c(14);
  for (int i = 0; i < 14; ++i) c(i) = 0.1 + 0.05 * i;
  for (int k = 7; k <= 13; ++k) {  // middle third, away from the clamped ends
    const auto s = evaluate_at(b, c, k);
    CHECK(std::abs(s.accel(0)) < 1e-11);
  }
}

TEST_CASE("evaluation is linear in the control points") {
  const auto b = build_basis(3, 8, {0.0, 0.5, 10});
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd c1(16), c2(16);  // two joints
  for (int i = 0; i < 16; ++i) {
    c1(i) = u(rng);
    c2(i) = u(rng);
  }
  const double t = 2.345;
  const auto sa = evaluate(b, c1, t), sb = evaluate(b, c2, t),
             ssum = evaluate(b, (c1 + c2).eval(), t);
  CHECK((ssum.value - sa.value - sb.value).lpNorm<Eigen::Infinity>() < 1e-13);
  CHECK((ssum.rate - sa.rate - sb.rate).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((ssum.accel - sa.accel - sb.accel).lpNorm<Eigen::Infinity>() < 1e-11);
}

TEST_CASE("perturbing one control point only affects its knot spans") {
  const auto b = build_basis(3, 14, {0.0, 0.1, 50});
  Eigen::VectorXd c = Eigen::VectorXd::Zero(14);
  const int idx = 7;
  c(idx) = 1.0;
  // support of basis function idx is [knots[idx], knots[idx + degree + 1]]
  const double lo = b.knots[idx], hi = b.knots[idx + b.degree + 1];
  for (int k = 0; k <= 50; ++k) {
    const double t = b.grid.time(k);
    const auto s = evaluate_at(b, c, k);
    if (t < lo - 1e-12 || t > hi + 1e-12) CHECK(std::abs(s.value(0)) < 1e-15);
  }
}

TEST_CASE("block matrix form is block-diagonal per joint") {
  const auto b = build_basis(3, 6, {0.0, 0.5, 8});
  const Eigen::MatrixXd B = block_matrix(b, 3, 4, 0);
  REQUIRE(B.rows() == 3);
  REQUIRE(B.cols() == 18);
  CHECK(B.block(0, 6, 1, 12).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(B.block(1, 0, 1, 6).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((B.block(0, 0, 1, 6) - b.B0.row(4)).lpNorm<Eigen::Infinity>() == 0.0);
  // stacked evaluation agrees with the per-joint one
  Eigen::VectorXd c = Eigen::VectorXd::Random(18);
  const auto s = evaluate_at(b, c, 4);
  CHECK(((B * c) - s.value).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("fit recovers exact control points") {
  const auto b = build_basis(3, 8, {0.0, 0.5, 12});
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd c_true(16);
  for (int i = 0; i < 16; ++i) c_true(i) = u(rng);
  Eigen::MatrixXd samples(13, 2);
  for (int k = 0; k <= 12; ++k) {
    const auto s = evaluate_at(b, c_true, k);
    samples.row(k) = s.value.transpose();
  }
  double residual = 1.0;
  const Eigen::VectorXd c_fit = fit_initial_controls(b, samples, &residual);
  CHECK((c_fit - c_true).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(residual < 1e-10);
}

TEST_CASE("constant samples give constant control points") {
  const auto b = build_basis(3, 7, {0.0, 0.25, 10});
  Eigen::MatrixXd samples = Eigen::MatrixXd::Constant(11, 1, 3.14);
  const Eigen::VectorXd c = fit_initial_controls(b, samples);
  CHECK((c.array() - 3.14).abs().maxCoeff() < 1e-10);
}

TEST_CASE("noisy fit matches the normal-equations optimum") {
  const auto b = build_basis(3, 6, {0.0, 0.5, 14});
  std::mt19937 rng(21);
  std::normal_distribution<double> noise(0.0, 0.1);
  Eigen::MatrixXd samples(15, 1);
  for (int k = 0; k <= 14; ++k) samples(k, 0) = std::sin(0.4 * k) + noise(rng);
  double residual = 0.0;
  const Eigen::VectorXd c = fit_initial_controls(b, samples, &residual);
  // independent normal-equations solve
  const Eigen::MatrixXd BtB = b.B0.transpose() * b.B0;
  const Eigen::VectorXd c_ne = BtB.ldlt().solve(b.B0.transpose() * samples.col(0));
  CHECK((c - c_ne).lpNorm<Eigen::Infinity>() < 1e-9);
  CHECK(residual == Catch::Approx((b.B0 * c_ne - samples.col(0)).norm()).epsilon(1e-9));
}

TEST_CASE("configuration errors") {
  CHECK_THROWS_AS(build_basis(3, 3, grid_25()), ConfigError);
  CHECK_THROWS_AS(build_basis(3, 22, CollocationGrid{0.0, 0.25, 1}), ConfigError);
  const auto b = build_basis(3, 8, {0.0, 0.5, 12});
  Eigen::VectorXd c = Eigen::VectorXd::Zero(8);
  CHECK_THROWS_AS(evaluate(b, c, -1.0), RangeError);
  CHECK_THROWS_AS(evaluate(b, c, 6.5), RangeError);
  Eigen::MatrixXd bad(7, 1);
  CHECK_THROWS_AS(fit_initial_controls(b, bad), ConfigError);
}
