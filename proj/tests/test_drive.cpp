#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "emlaopt/drive.hpp"

using namespace emlaopt;
using namespace emlaopt::drive;

namespace {

// documented reference actuator used across the drive tests
PmsmParams ref_pmsm() {
  PmsmParams p;
  p.R_s = 0.05;
  p.L_d = 0.0006;
  p.L_q = 0.0005;
  p.p = 4;
  p.Phi_PM = 0.05;
  p.J_m = 0.01;
  p.b_m = 1e-4;
  p.tau_c = 0.05;
  return p;
}

DrivetrainParams ref_drive() {
  DrivetrainParams d;
  d.rho = 0.01;
  d.G = 5.0;
  d.M_sm = 25.0;
  d.b_f = 100.0;
  d.f_low = -150e3;
  d.f_up = 150e3;
  d.v_low = -0.4;
  d.v_up = 0.4;
  return d;
}

}  // namespace

TEST_CASE("park matrix at zero angle") {
  const Eigen::Matrix3d P = park_matrix(0.0);
  CHECK(P(0, 0) == Catch::Approx(1.0).margin(1e-15));
  CHECK(P(0, 1) == Catch::Approx(-0.5).margin(1e-15));
  CHECK(P(0, 2) == Catch::Approx(-0.5).margin(1e-15));
  CHECK(P(1, 0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(P(1, 1) == Catch::Approx(std::sqrt(3.0) / 2.0).margin(1e-15));
  CHECK(P(1, 2) == Catch::Approx(-std::sqrt(3.0) / 2.0).margin(1e-15));
  CHECK(P(2, 0) == 0.5);
  CHECK(P(2, 1) == 0.5);
  CHECK(P(2, 2) == 0.5);
}

TEST_CASE("park matrix is 2*pi periodic") {
  const Eigen::Matrix3d a = park_matrix(0.0), b = park_matrix(2.0 * kPi);
  CHECK((a - b).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("park matrix rows 1-2 orthogonal with squared norm 3/2") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> angle(-10.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Matrix3d P = park_matrix(angle(rng));
    CHECK(std::abs(P.row(0).dot(P.row(1))) < 1e-13);
    CHECK(P.row(0).squaredNorm() == Catch::Approx(1.5).margin(1e-13));
    CHECK(P.row(1).squaredNorm() == Catch::Approx(1.5).margin(1e-13));
  }
}

TEST_CASE("park matrix rejects non-finite angle") {
  CHECK_THROWS_AS(park_matrix(std::nan("")), DomainError);
}

TEST_CASE("abc_to_dq on a balanced set aligned with the frame") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> angle(-6.0, 6.0);
  for (int i = 0; i < 20; ++i) {
    const double phi = angle(rng);
    const Eigen::Vector3d v{std::cos(phi), std::cos(phi - 2.0 * kPi / 3.0),
                            std::cos(phi + 2.0 * kPi / 3.0)};
    const Eigen::Vector3d dq = abc_to_dq(v, phi);
    CHECK(dq(0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(dq(1) == Catch::Approx(0.0).margin(1e-12));
    CHECK(dq(2) == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("abc_to_dq maps zero to zero and common mode to V_0") {
  CHECK(abc_to_dq(Eigen::Vector3d::Zero(), 1.3).norm() == 0.0);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> angle(-6.0, 6.0);
  for (int i = 0; i < 10; ++i) {
    const Eigen::Vector3d dq = abc_to_dq(Eigen::Vector3d::Ones(), angle(rng));
    CHECK(std::abs(dq(0)) < 1e-13);
    CHECK(std::abs(dq(1)) < 1e-13);
    CHECK(dq(2) == Catch::Approx(1.0).margin(1e-13));
  }
}

TEST_CASE("electromagnetic torque") {
  PmsmParams p = ref_pmsm();
  p.Phi_PM = 0.1;
  SECTION("round numbers, matched inductances") {
    p.L_d = p.L_q = 0.0005;
    CHECK(electromagnetic_torque(0.0, 10.0, p) == Catch::Approx(6.0).margin(1e-12));
  }
  SECTION("zero quadrature current gives zero torque") {
    CHECK(electromagnetic_torque(123.0, 0.0, p) == 0.0);
    CHECK(electromagnetic_torque(-5.0, 0.0, p) == 0.0);
  }
  SECTION("saliency term") {
    p.L_d = 0.0005;
    p.L_q = 0.0015;  // L_d - L_q = -0.001
    CHECK(electromagnetic_torque(5.0, 10.0, p) == Catch::Approx(5.7).margin(1e-12));
  }
  SECTION("linear in i_q at fixed i_d") {
    const double t1 = electromagnetic_torque(3.0, 4.0, p);
    const double t2 = electromagnetic_torque(3.0, 8.0, p);
    CHECK(t2 == Catch::Approx(2.0 * t1).epsilon(1e-12));
  }
}

TEST_CASE("steady state operating point: velocity/torque ratios") {
  PmsmParams pmsm = ref_pmsm();
  DrivetrainParams drv = ref_drive();
  drv.G = 10.0;
  drv.rho = 0.02;
  drv.b_f = 0.0;
  const auto op = steady_state_operating_point(10000.0, 0.1, pmsm, drv);
  CHECK(op.w_m == Catch::Approx(100.0 * kPi).epsilon(1e-12));
  CHECK(op.w_e == Catch::Approx(4.0 * 100.0 * kPi).epsilon(1e-12));
  CHECK(op.f_sm == Catch::Approx(10000.0).epsilon(1e-12));
  CHECK(op.tau_sm == Catch::Approx(3.18309886183791).epsilon(1e-10));
}

TEST_CASE("steady state operating point: frozen straight-line oracle") {
  // Values computed independently (straight-line evaluation of the drivetrain
  // chain) before this module was written; frozen here.
  const auto op = steady_state_operating_point(50000.0, 0.05, ref_pmsm(), ref_drive());
  CHECK(op.w_m == Catch::Approx(157.07963267948966).epsilon(1e-12));
  CHECK(op.f_sm == Catch::Approx(50005.0).epsilon(1e-12));
  CHECK(op.tau_sm == Catch::Approx(15.917085858620453).epsilon(1e-12));
  CHECK(op.tau_m == Catch::Approx(15.982793821888404).epsilon(1e-12));
  CHECK(op.i_q == Catch::Approx(53.275979406294674).epsilon(1e-12));
  CHECK(op.i_d == 0.0);
  CHECK(op.V_d == Catch::Approx(-16.737142551561647).epsilon(1e-12));
  CHECK(op.V_q == Catch::Approx(34.07972550621267).epsilon(1e-12));
  CHECK(op.P_mech == Catch::Approx(2500.0).epsilon(1e-12));
  CHECK(op.P_elec == Catch::Approx(2723.446131361742).epsilon(1e-12));
  CHECK(op.eta == Catch::Approx(0.9179546351996257).epsilon(1e-9));
  CHECK(op.V_LL == Catch::Approx(46.5009617863453).epsilon(1e-12));
  CHECK(op.I_LL == Catch::Approx(37.67180631254582).epsilon(1e-12));
  CHECK(op.power_factor == Catch::Approx(0.8975936718027939).epsilon(1e-12));
  // the balanced-steady-state identity the efficiency definition relies on
  CHECK(std::sqrt(3.0) * op.V_LL * op.I_LL * op.power_factor ==
        Catch::Approx(op.P_elec).epsilon(1e-12));
}

TEST_CASE("zero power point reports the floor sentinel") {
  const auto op = steady_state_operating_point(0.0, 0.0, ref_pmsm(), ref_drive());
  CHECK(op.zero_power);
  CHECK(op.eta == kEtaFloor);
  CHECK(op.P_mech == 0.0);
}

TEST_CASE("operating point outside the envelope is rejected") {
  CHECK_THROWS_AS(steady_state_operating_point(200e3, 0.05, ref_pmsm(), ref_drive()), RangeError);
  CHECK_THROWS_AS(steady_state_operating_point(1e3, 0.9, ref_pmsm(), ref_drive()), RangeError);
}

TEST_CASE("efficiency symmetry under (f, v) sign flip") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> fr(1e3, 140e3), vr(0.01, 0.39);
  for (int i = 0; i < 200; ++i) {
    const double f = fr(rng), v = vr(rng);
    const auto a = steady_state_operating_point(f, v, ref_pmsm(), ref_drive());
    const auto b = steady_state_operating_point(-f, -v, ref_pmsm(), ref_drive());
    CHECK(a.eta == Catch::Approx(b.eta).epsilon(1e-12));
    CHECK(a.P_elec == Catch::Approx(b.P_elec).epsilon(1e-12));
  }
}

TEST_CASE("motoring points never beat unity and never break the power balance") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> fr(100.0, 150e3), vr(0.002, 0.4);
  for (int i = 0; i < 500; ++i) {
    const double f = fr(rng), v = vr(rng);
    const auto op = steady_state_operating_point(f, v, ref_pmsm(), ref_drive());
    REQUIRE(op.P_mech > 0.0);
    CHECK(op.P_elec >= op.P_mech);
    CHECK(op.eta <= 1.0);
    CHECK(op.eta > kEtaFloor);
  }
}

TEST_CASE("efficiency map matches direct operating-point calls") {
  const auto map = build_efficiency_map(ref_pmsm(), ref_drive(), 8, 6);
  REQUIRE(map.force_axis.size() == 8);
  REQUIRE(map.velocity_axis.size() == 6);
  map.validate();
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 6; ++j) {
      const auto op = steady_state_operating_point(map.force_axis[i], map.velocity_axis[j],
                                                   ref_pmsm(), ref_drive());
      CHECK(map.values(i, j) == op.eta);  // bit-exact recompute
    }
}

TEST_CASE("tiny map obeys the size contract") {
  const auto map = build_efficiency_map(ref_pmsm(), ref_drive(), 2, 2);
  CHECK(map.values.rows() == 2);
  CHECK(map.values.cols() == 2);
  CHECK((map.values.array() > 0.0).all());
  CHECK((map.values.array() <= 1.0).all());
  CHECK_THROWS_AS(build_efficiency_map(ref_pmsm(), ref_drive(), 1, 2), ConfigError);
}

TEST_CASE("lookup reproduces node values and interpolates bilinearly") {
  const auto map = build_efficiency_map(ref_pmsm(), ref_drive(), 10, 10);
  for (std::size_t i = 0; i < map.force_axis.size(); ++i)
    for (std::size_t j = 0; j < map.velocity_axis.size(); ++j)
      CHECK(lookup_efficiency(map, map.force_axis[i], map.velocity_axis[j]) ==
            Catch::Approx(map.values(i, j)).margin(1e-15));

  SECTION("midpoint of a synthetic cell") {
    EfficiencyMap m;
    m.force_axis = {0.0, 1.0};
    m.velocity_axis = {0.0, 1.0};
    m.values.resize(2, 2);
    m.values << 0.6, 0.8, 0.6, 0.8;
    CHECK(lookup_efficiency(m, 0.5, 0.5) == Catch::Approx(0.7).margin(1e-15));
  }
}

TEST_CASE("lookup stays within corner bounds and clamps out-of-range queries") {
  const auto map = build_efficiency_map(ref_pmsm(), ref_drive(), 12, 12);
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> fr(-150e3, 150e3), vr(-0.4, 0.4);
  for (int t = 0; t < 1000; ++t) {
    const double f = fr(rng), v = vr(rng);
    const double eta = lookup_efficiency(map, f, v);
    // brute-force: find the surrounding cell and bound by its corners
    auto cell = [](const std::vector<double>& axis, double q) {
      std::size_t i = 0;
      while (i + 2 < axis.size() && q >= axis[i + 1]) ++i;
      return i;
    };
    const std::size_t i = cell(map.force_axis, f), j = cell(map.velocity_axis, v);
    const double lo = std::min({map.values(i, j), map.values(i + 1, j), map.values(i, j + 1),
                                map.values(i + 1, j + 1)});
    const double hi = std::max({map.values(i, j), map.values(i + 1, j), map.values(i, j + 1),
                                map.values(i + 1, j + 1)});
    CHECK(eta >= lo - 1e-12);
    CHECK(eta <= hi + 1e-12);
  }
  // boundary clamping
  CHECK(lookup_efficiency(map, 1e9, 0.2) ==
        Catch::Approx(lookup_efficiency(map, map.force_axis.back(), 0.2)).margin(1e-15));
  CHECK(lookup_efficiency(map, 1e4, -5.0) ==
        Catch::Approx(lookup_efficiency(map, 1e4, map.velocity_axis.front())).margin(1e-15));
}
