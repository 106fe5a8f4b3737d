#pragma once

// Electromechanical linear actuator drivetrain: PMSM in the rotating dq frame,
// gearbox, and screw mechanism. Converts a steady (force, velocity) demand at
// the load side into motor currents, voltages, and an efficiency figure, and
// tabulates efficiency over the actuator's force/velocity envelope.
//
// Power flow at steady state (accelerations zero, i_d = 0 control policy):
//   w_m    = 2*pi*G*v_x / rho                     screw + gearbox speed
//   f_sm   = f_x + b_f*v_x                        load-side viscous drag
//   tau_sm = rho*f_sm / (2*pi*G)                  screw torque balance
//   tau_m  = tau_sm + b_m*w_m + tau_c*sign(w_m)   motor torque incl. friction
//   i_q    = tau_m / (1.5*p*Phi_PM)
//   V_d    = -p*w_m*L_q*i_q
//   V_q    = R_s*i_q + p*w_m*Phi_PM
//   P_elec = 1.5*(V_d*i_d + V_q*i_q) = sqrt(3)*V_LL*I_LL*cos(phi)

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emlaopt/errors.hpp"
#include "emlaopt/planar.hpp"

namespace emlaopt::drive {

/// Lower clamp for efficiency values; keeps power/eta cost terms bounded.
inline constexpr double kEtaFloor = 0.05;

/// Both |P_mech| and |P_elec| below this are treated as a zero-power point.
inline constexpr double kZeroPowerWatt = 1e-9;

struct PmsmParams {
  double R_s = 0.0;     ///< stator resistance [ohm]
  double L_d = 0.0;     ///< d-axis inductance [H]
  double L_q = 0.0;     ///< q-axis inductance [H]
  int p = 1;            ///< pole pairs
  double Phi_PM = 0.0;  ///< permanent magnet flux [Wb]
  double J_m = 0.0;     ///< rotor inertia [kg m^2]
  double b_m = 1e-4;    ///< viscous friction [N m s/rad]
  double tau_c = 0.05;  ///< Coulomb friction [N m]

  void validate() const {
    if (!(R_s > 0.0) || !(L_d > 0.0) || !(L_q > 0.0) || !(Phi_PM > 0.0))
      throw ConfigError("PmsmParams: R_s, L_d, L_q, Phi_PM must be positive");
    if (p < 1) throw ConfigError("PmsmParams: pole pairs must be >= 1");
    if (J_m < 0.0 || b_m < 0.0 || tau_c < 0.0)
      throw ConfigError("PmsmParams: J_m, b_m, tau_c must be nonnegative");
  }
};

struct DrivetrainParams {
  double rho = 0.0;   ///< screw lead [m/rev]
  double G = 1.0;     ///< gear ratio
  double M_sm = 0.0;  ///< translating mass [kg]
  double b_f = 0.0;   ///< load-side viscous coefficient [N s/m]
  double f_low = 0.0, f_up = 0.0;  ///< force limits [N]
  double v_low = 0.0, v_up = 0.0;  ///< velocity limits [m/s]

  void validate() const {
    if (!(rho > 0.0) || !(G > 0.0))
      throw ConfigError("DrivetrainParams: rho and G must be positive");
    if (M_sm < 0.0 || b_f < 0.0)
      throw ConfigError("DrivetrainParams: M_sm and b_f must be nonnegative");
    if (!(f_low < f_up)) throw ConfigError("DrivetrainParams: need f_low < f_up");
    if (!(v_low < v_up)) throw ConfigError("DrivetrainParams: need v_low < v_up");
  }
};

/// One steady-state solution of the drivetrain equations.
struct OperatingPoint {
  double i_d = 0.0, i_q = 0.0;           // [A]
  double V_d = 0.0, V_q = 0.0, V_0 = 0.0;  // [V]
  double tau_m = 0.0, tau_sm = 0.0;      // [N m]
  double w_m = 0.0;                      // mechanical speed [rad/s]
  double w_e = 0.0;                      // electrical frequency, p*w_m [rad/s]
  double f_sm = 0.0, f_x = 0.0;          // [N]
  double v_x = 0.0;                      // [m/s]
  double P_mech = 0.0, P_elec = 0.0;     // [W]
  double eta = kEtaFloor;                // clamped to [kEtaFloor, 1]
  double V_LL = 0.0, I_LL = 0.0;         // line-line RMS
  double power_factor = 0.0;
  bool zero_power = false;               // eta is the floor sentinel, not a ratio
};

/// Park transformation matrix evaluated at the given electrical angle.
inline Eigen::Matrix3d park_matrix(double electrical_angle) {
  if (!std::isfinite(electrical_angle)) throw DomainError("park_matrix: non-finite angle");
  const double a = electrical_angle;
  const double b = a - 2.0 * kPi / 3.0;
  const double c = a + 2.0 * kPi / 3.0;
  Eigen::Matrix3d P;
  P << std::cos(a), std::cos(b), std::cos(c),
      -std::sin(a), -std::sin(b), -std::sin(c),
      0.5, 0.5, 0.5;
  return P;
}

/// Project a three-phase quantity onto the rotating dq0 frame: (2/3) P v_abc.
inline Eigen::Vector3d abc_to_dq(const Eigen::Vector3d& v_abc, double electrical_angle) {
  if (!v_abc.allFinite()) throw DomainError("abc_to_dq: non-finite input");
  return (2.0 / 3.0) * park_matrix(electrical_angle) * v_abc;
}

/// Electromagnetic torque from dq currents.
inline double electromagnetic_torque(double i_d, double i_q, const PmsmParams& pmsm) {
  if (!std::isfinite(i_d) || !std::isfinite(i_q))
    throw DomainError("electromagnetic_torque: non-finite current");
  return 1.5 * pmsm.p * i_q * (pmsm.Phi_PM + (pmsm.L_d - pmsm.L_q) * i_d);
}

/// Solve the steady-state drivetrain chain at a load-side (force, velocity) point.
/// Throws RangeError outside the drivetrain envelope and ModelError if the
/// electrical power comes out nonpositive while mechanical power is positive.
inline OperatingPoint steady_state_operating_point(double f_x, double v_x,
                                                   const PmsmParams& pmsm,
                                                   const DrivetrainParams& drive) {
  if (!std::isfinite(f_x) || !std::isfinite(v_x))
    throw DomainError("steady_state_operating_point: non-finite input");
  const double tol_f = 1e-9 * std::max(1.0, std::abs(drive.f_up) + std::abs(drive.f_low));
  const double tol_v = 1e-9 * std::max(1.0, std::abs(drive.v_up) + std::abs(drive.v_low));
  if (f_x < drive.f_low - tol_f || f_x > drive.f_up + tol_f)
    throw RangeError("steady_state_operating_point: force " + std::to_string(f_x) +
                     " outside limits");
  if (v_x < drive.v_low - tol_v || v_x > drive.v_up + tol_v)
    throw RangeError("steady_state_operating_point: velocity " + std::to_string(v_x) +
                     " outside limits");

  OperatingPoint op;
  op.f_x = f_x;
  op.v_x = v_x;
  op.w_m = 2.0 * kPi * drive.G * v_x / drive.rho;
  op.w_e = pmsm.p * op.w_m;
  op.f_sm = f_x + drive.b_f * v_x;
  op.tau_sm = drive.rho * op.f_sm / (2.0 * kPi * drive.G);
  op.tau_m = op.tau_sm + pmsm.b_m * op.w_m + pmsm.tau_c * signum(op.w_m);
  op.i_d = 0.0;
  op.i_q = op.tau_m / (1.5 * pmsm.p * pmsm.Phi_PM);
  op.V_d = -pmsm.p * op.w_m * pmsm.L_q * op.i_q;
  op.V_q = pmsm.R_s * op.i_q + pmsm.p * op.w_m * (pmsm.L_d * op.i_d + pmsm.Phi_PM);
  op.V_0 = 0.0;
  op.P_mech = f_x * v_x;
  op.P_elec = 1.5 * (op.V_d * op.i_d + op.V_q * op.i_q);

  const double v_mag = std::hypot(op.V_d, op.V_q);
  const double i_mag = std::hypot(op.i_d, op.i_q);
  op.V_LL = std::sqrt(3.0) * v_mag / std::sqrt(2.0);
  op.I_LL = i_mag / std::sqrt(2.0);
  op.power_factor =
      (v_mag > 0.0 && i_mag > 0.0) ? (op.V_d * op.i_d + op.V_q * op.i_q) / (v_mag * i_mag) : 0.0;

  if (std::abs(op.P_mech) < kZeroPowerWatt && std::abs(op.P_elec) < kZeroPowerWatt) {
    op.zero_power = true;
    op.eta = kEtaFloor;
    return op;
  }
  double eta_raw;
  if (op.P_mech > 0.0) {
    if (op.P_elec <= 0.0)
      throw ModelError("steady_state_operating_point: nonpositive electrical power at positive "
                       "mechanical power");
    eta_raw = op.P_mech / op.P_elec;
  } else if (op.P_mech < 0.0) {
    // braking: the mechanical side supplies power; efficiency is the fraction
    // that comes back out electrically, zero if losses eat it all.
    eta_raw = (op.P_elec < 0.0) ? op.P_elec / op.P_mech : 0.0;
  } else {
    eta_raw = 0.0;  // holding force at standstill: all input is loss
  }
  op.eta = std::clamp(eta_raw, kEtaFloor, 1.0);
  return op;
}

/// Gridded efficiency surface over the drivetrain envelope.
/// values(i, j) is eta at force_axis[i], velocity_axis[j].
struct EfficiencyMap {
  std::vector<double> force_axis;
  std::vector<double> velocity_axis;
  Eigen::MatrixXd values;

  void validate() const {
    if (force_axis.size() < 2 || velocity_axis.size() < 2)
      throw ConfigError("EfficiencyMap: need at least a 2x2 grid");
    for (std::size_t i = 1; i < force_axis.size(); ++i)
      if (!(force_axis[i] > force_axis[i - 1]))
        throw ConfigError("EfficiencyMap: force axis not strictly increasing");
    for (std::size_t j = 1; j < velocity_axis.size(); ++j)
      if (!(velocity_axis[j] > velocity_axis[j - 1]))
        throw ConfigError("EfficiencyMap: velocity axis not strictly increasing");
    if (values.rows() != static_cast<Eigen::Index>(force_axis.size()) ||
        values.cols() != static_cast<Eigen::Index>(velocity_axis.size()))
      throw ConfigError("EfficiencyMap: value matrix shape mismatch");
    if ((values.array() < kEtaFloor - 1e-15).any() || (values.array() > 1.0 + 1e-15).any())
      throw ConfigError("EfficiencyMap: values outside [eta_floor, 1]");
  }
};

/// Evaluate steady-state efficiency on an n_force x n_velocity grid spanning
/// the drivetrain limit rectangle.
inline EfficiencyMap build_efficiency_map(const PmsmParams& pmsm, const DrivetrainParams& drive,
                                          int n_force, int n_velocity) {
  if (n_force < 2 || n_velocity < 2)
    throw ConfigError("build_efficiency_map: grid must be at least 2x2");
  EfficiencyMap map;
  map.force_axis.resize(n_force);
  map.velocity_axis.resize(n_velocity);
  for (int i = 0; i < n_force; ++i)
    map.force_axis[i] =
        drive.f_low + (drive.f_up - drive.f_low) * static_cast<double>(i) / (n_force - 1);
  for (int j = 0; j < n_velocity; ++j)
    map.velocity_axis[j] =
        drive.v_low + (drive.v_up - drive.v_low) * static_cast<double>(j) / (n_velocity - 1);
  map.values.resize(n_force, n_velocity);
  for (int i = 0; i < n_force; ++i) {
    for (int j = 0; j < n_velocity; ++j) {
      try {
        map.values(i, j) =
            steady_state_operating_point(map.force_axis[i], map.velocity_axis[j], pmsm, drive).eta;
      } catch (const std::exception& e) {
        throw ModelError("build_efficiency_map: node (f=" + std::to_string(map.force_axis[i]) +
                         ", v=" + std::to_string(map.velocity_axis[j]) + "): " + e.what());
      }
    }
  }
  return map;
}

/// Bilinear interpolation on the map; queries outside the grid are clamped to
/// the boundary, results to [kEtaFloor, 1].
inline double lookup_efficiency(const EfficiencyMap& map, double f_x, double v_x) {
  const auto locate = [](const std::vector<double>& axis, double value, int& idx, double& frac) {
    const int n = static_cast<int>(axis.size());
    if (value <= axis.front()) {
      idx = 0;
      frac = 0.0;
      return;
    }
    if (value >= axis.back()) {
      idx = n - 2;
      frac = 1.0;
      return;
    }
    idx = static_cast<int>(std::upper_bound(axis.begin(), axis.end(), value) - axis.begin()) - 1;
    idx = std::min(idx, n - 2);
    frac = (value - axis[idx]) / (axis[idx + 1] - axis[idx]);
  };
  int i, j;
  double u, v;
  locate(map.force_axis, f_x, i, u);
  locate(map.velocity_axis, v_x, j, v);
  const double eta = (1.0 - u) * (1.0 - v) * map.values(i, j) +
                     u * (1.0 - v) * map.values(i + 1, j) +
                     (1.0 - u) * v * map.values(i, j + 1) + u * v * map.values(i + 1, j + 1);
  return std::clamp(eta, kEtaFloor, 1.0);
}

}  // namespace emlaopt::drive
