#pragma once

// One-DoF four-link closed chain driven by a linear actuator across two of its
// vertices. The three moving frames form a triangle with sides L, L1 and
// x + x0 (x0 = Lc + Lc0); inner angles q, q1, q2 are the negative arccos
// branch and satisfy q + q1 + q2 = -pi. Passive joint angles are the inner
// angles shifted by constant mounting offsets. Velocity coefficients
// k_i = d(angle_i)/dx map actuator stroke rate to joint rates.

#include <array>
#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "emlaopt/errors.hpp"
#include "emlaopt/planar.hpp"

namespace emlaopt::chain {

/// Slack allowed when clamping arccos arguments that drift past [-1, 1].
inline constexpr double kAcosSlack = 1e-12;

/// Inner angles closer than this to 0 or -pi are treated as singular.
inline constexpr double kSingularityGuard = 1e-6;

/// Anchor directions tying the loop into the surrounding structure.
/// base_anchor_angle is the direction of the joint-to-base-anchor segment in
/// the parent link frame; tip_anchor_angle the analogous direction in the
/// moving link frame. When base_lateral is set, the base anchor keeps a fixed
/// lateral offset h off the parent axis and slides along it as L changes, so
/// the offset angle becomes a function of L.
struct ChainMounting {
  double base_anchor_angle = 0.0;
  double tip_anchor_angle = 0.0;
  std::optional<double> base_lateral;

  double base_angle(double L) const {
    if (!base_lateral) return base_anchor_angle;
    const double h = *base_lateral;
    if (std::abs(h) >= L)
      throw GeometryError("ChainMounting: lateral offset exceeds anchor distance L");
    return base_anchor_angle + std::asin(h / L);
  }
  double psi(double L) const { return wrap_pi(base_angle(L) - tip_anchor_angle); }
};

struct ClosedChainParams {
  double L = 0.0;    ///< base anchor to joint pivot [m]
  double L1 = 0.0;   ///< joint pivot to tip anchor [m]
  double Lc = 0.0;   ///< stroke length; x ranges over [0, Lc] [m]
  double Lc0 = 0.0;  ///< actuator dead length [m]
  double psi = 0.0, psi1 = 0.0, psi2 = 0.0;  ///< joint angle offsets [rad]
  std::optional<ChainMounting> mounting;

  double x0() const { return Lc + Lc0; }

  /// Re-derive psi from mounting geometry (after a length change).
  void refresh_psi() {
    if (mounting) psi = mounting->psi(L);
  }

  void validate() const {
    if (!(L > 0.0) || !(L1 > 0.0) || !(Lc > 0.0) || !(Lc0 > 0.0))
      throw ConfigError("ClosedChainParams: lengths must be positive");
    // strict triangle inequality over the whole stroke
    const double lo = x0(), hi = x0() + Lc;
    if (!(std::abs(L - L1) < lo))
      throw GeometryError("ClosedChainParams: |L - L1| must stay below x0 (retracted stroke)");
    if (!(hi < L + L1))
      throw GeometryError("ClosedChainParams: x0 + Lc must stay below L + L1 (extended stroke)");
  }
};

struct InnerAngles {
  double q = 0.0, q1 = 0.0, q2 = 0.0;
};

/// Inner angles plus how far the arccos arguments had to be clamped; zero for
/// geometrically feasible input.
struct RelaxedAngles {
  InnerAngles angles;
  double clamp_violation = 0.0;
};

namespace detail {

inline double clamped_acos(double u, double& violation) {
  if (u > 1.0) {
    violation = std::max(violation, u - 1.0);
    u = 1.0;
  } else if (u < -1.0) {
    violation = std::max(violation, -1.0 - u);
    u = -1.0;
  }
  return std::acos(u);
}

}  // namespace detail

/// Inner angles without feasibility checks; arccos arguments are clamped and
/// the worst clamp magnitude reported. Used by optimization internals that
/// must stay exception-free.
inline RelaxedAngles inner_angles_relaxed(const ClosedChainParams& p, double x) {
  RelaxedAngles out;
  double s = x + p.x0();
  if (s < 1e-12) {
    out.clamp_violation = std::max(out.clamp_violation, 1e-12 - s);
    s = 1e-12;
  }
  const double ua = (s * s - p.L * p.L - p.L1 * p.L1) / (-2.0 * p.L * p.L1);
  const double ub = (p.L1 * p.L1 - s * s - p.L * p.L) / (-2.0 * s * p.L);
  const double uc = (p.L * p.L - s * s - p.L1 * p.L1) / (-2.0 * s * p.L1);
  out.angles.q = -detail::clamped_acos(ua, out.clamp_violation);
  out.angles.q1 = -detail::clamped_acos(ub, out.clamp_violation);
  out.angles.q2 = -detail::clamped_acos(uc, out.clamp_violation);
  return out;
}

/// Inner angles from actuator position. Throws GeometryError when an arccos
/// argument exceeds [-1, 1] beyond the clamping slack.
inline InnerAngles inner_angles(const ClosedChainParams& p, double x) {
  if (!std::isfinite(x)) throw DomainError("inner_angles: non-finite x");
  if (x < -kAcosSlack || x > p.Lc + kAcosSlack)
    throw RangeError("inner_angles: x = " + std::to_string(x) + " outside stroke [0, " +
                     std::to_string(p.Lc) + "]");
  const RelaxedAngles r = inner_angles_relaxed(p, x);
  if (r.clamp_violation > kAcosSlack)
    throw GeometryError("inner_angles: triangle infeasible at x = " + std::to_string(x) +
                        " (arccos argument off by " + std::to_string(r.clamp_violation) + ")");
  return r.angles;
}

/// Actuator position from the driven joint angle theta (= q + psi).
/// Throws RangeError when the resulting x leaves [0, Lc].
inline double actuator_from_angle(const ClosedChainParams& p, double theta) {
  if (!std::isfinite(theta)) throw DomainError("actuator_from_angle: non-finite theta");
  const double q = theta - p.psi;
  if (!(q > -kPi && q < 0.0))
    throw RangeError("actuator_from_angle: q = theta - psi = " + std::to_string(q) +
                     " outside (-pi, 0)");
  const double s =
      std::sqrt(p.L * p.L + p.L1 * p.L1 - 2.0 * p.L * p.L1 * std::cos(q));
  const double x = s - p.x0();
  if (x < -1e-9 || x > p.Lc + 1e-9)
    throw RangeError("actuator_from_angle: stroke limit violated, x = " + std::to_string(x));
  return x;
}

/// Stroke from joint angle without limit checks (for constraint residuals).
inline double actuator_from_angle_relaxed(const ClosedChainParams& p, double theta) {
  const double q = theta - p.psi;
  const double s =
      std::sqrt(std::max(0.0, p.L * p.L + p.L1 * p.L1 - 2.0 * p.L * p.L1 * std::cos(q)));
  return s - p.x0();
}

namespace detail {

inline void check_singularity(const InnerAngles& a) {
  for (double v : {a.q, a.q1, a.q2}) {
    if (std::abs(v) < kSingularityGuard || std::abs(v + kPi) < kSingularityGuard)
      throw SingularityError("closed chain within " + std::to_string(kSingularityGuard) +
                             " rad of a singular triangle");
  }
}

/// sin clamped away from zero, preserving sign; keeps relaxed evaluations finite.
inline double guarded_sin(double angle) {
  double s = std::sin(angle);
  const double floor = std::sin(kSingularityGuard);
  if (std::abs(s) < floor) s = (s < 0.0) ? -floor : floor;
  return s;
}

inline std::array<double, 3> k_from_angles(const ClosedChainParams& p, double s,
                                           const InnerAngles& a) {
  const double k1 = s / (p.L * p.L1 * guarded_sin(a.q));
  const double k2 = -(s - p.L * std::cos(a.q1)) / (s * p.L * guarded_sin(a.q1));
  const double k3 = -(s - p.L1 * std::cos(a.q2)) / (s * p.L1 * guarded_sin(a.q2));
  return {k1, k2, k3};
}

inline std::array<double, 3> dk_from_angles(const ClosedChainParams& p, double s,
                                            const InnerAngles& a,
                                            const std::array<double, 3>& k) {
  const double cot_q = std::cos(a.q) / guarded_sin(a.q);
  const double cot_q1 = std::cos(a.q1) / guarded_sin(a.q1);
  const double cot_q2 = std::cos(a.q2) / guarded_sin(a.q2);
  const double dk1 = k[0] / s - k[0] * k[0] * cot_q;
  const double dk2 = -1.0 / (s * p.L * guarded_sin(a.q1)) - 2.0 * k[1] / s - k[1] * k[1] * cot_q1;
  const double dk3 = -1.0 / (s * p.L1 * guarded_sin(a.q2)) - 2.0 * k[2] / s - k[2] * k[2] * cot_q2;
  return {dk1, dk2, dk3};
}

}  // namespace detail

/// Holonomic velocity coefficients (dq/dx, dq1/dx, dq2/dx).
inline std::array<double, 3> k_coefficients(const ClosedChainParams& p, double x) {
  const InnerAngles a = inner_angles(p, x);
  detail::check_singularity(a);
  return detail::k_from_angles(p, x + p.x0(), a);
}

/// Analytic dk_i/dx, for the acceleration map.
inline std::array<double, 3> k_derivatives(const ClosedChainParams& p, double x) {
  const InnerAngles a = inner_angles(p, x);
  detail::check_singularity(a);
  const double s = x + p.x0();
  return detail::dk_from_angles(p, s, a, detail::k_from_angles(p, s, a));
}

/// Inner-angle rates q_i' = k_i * xd; passive joint rates are identical.
inline std::array<double, 3> chain_rates(const ClosedChainParams& p, double x, double xd) {
  const auto k = k_coefficients(p, x);
  return {k[0] * xd, k[1] * xd, k[2] * xd};
}

/// Inner-angle accelerations q_i'' = kdot_i * xd + k_i * xdd with
/// kdot_i = (dk_i/dx) * xd evaluated analytically.
inline std::array<double, 3> chain_accelerations(const ClosedChainParams& p, double x, double xd,
                                                 double xdd) {
  const auto k = k_coefficients(p, x);
  const auto dk = k_derivatives(p, x);
  return {dk[0] * xd * xd + k[0] * xdd, dk[1] * xd * xd + k[1] * xdd,
          dk[2] * xd * xd + k[2] * xdd};
}

/// Complete kinematic state of one loop.
struct ChainState {
  double x = 0.0, xd = 0.0, xdd = 0.0;
  double q = 0.0, q1 = 0.0, q2 = 0.0;
  double qd = 0.0, q1d = 0.0, q2d = 0.0;
  double qdd = 0.0, q1dd = 0.0, q2dd = 0.0;
  double theta = 0.0, theta1 = 0.0, theta2 = 0.0;
  double k1 = 0.0, k2 = 0.0, k3 = 0.0;
  double k1d = 0.0, k2d = 0.0, k3d = 0.0;
  double clamp_violation = 0.0;  // nonzero only for relaxed evaluations

  // passive joint rates/accelerations equal the inner-angle ones
  double thetad() const { return qd; }
  double theta1d() const { return q1d; }
  double theta2d() const { return q2d; }
  double thetadd() const { return qdd; }
  double theta1dd() const { return q1dd; }
  double theta2dd() const { return q2dd; }
};

namespace detail {

inline ChainState state_from_angles(const ClosedChainParams& p, double x, double xd, double xdd,
                                    const InnerAngles& a, double clamp_violation) {
  ChainState st;
  st.x = x;
  st.xd = xd;
  st.xdd = xdd;
  st.q = a.q;
  st.q1 = a.q1;
  st.q2 = a.q2;
  st.theta = a.q + p.psi;
  st.theta1 = a.q1 + p.psi1;
  st.theta2 = a.q2 + p.psi2;
  const double s = std::max(x + p.x0(), 1e-12);
  const auto k = k_from_angles(p, s, a);
  const auto dk = dk_from_angles(p, s, a, k);
  st.k1 = k[0];
  st.k2 = k[1];
  st.k3 = k[2];
  st.k1d = dk[0] * xd;
  st.k2d = dk[1] * xd;
  st.k3d = dk[2] * xd;
  st.qd = k[0] * xd;
  st.q1d = k[1] * xd;
  st.q2d = k[2] * xd;
  st.qdd = st.k1d * xd + k[0] * xdd;
  st.q1dd = st.k2d * xd + k[1] * xdd;
  st.q2dd = st.k3d * xd + k[2] * xdd;
  st.clamp_violation = clamp_violation;
  return st;
}

}  // namespace detail

/// Full chain state from actuator motion; strict feasibility and singularity checks.
inline ChainState chain_state(const ClosedChainParams& p, double x, double xd, double xdd) {
  const InnerAngles a = inner_angles(p, x);
  detail::check_singularity(a);
  return detail::state_from_angles(p, x, xd, xdd, a, 0.0);
}

/// Exception-free chain state; sin denominators are floored near singularities
/// and arccos arguments clamped, with the clamp magnitude recorded.
inline ChainState chain_state_relaxed(const ClosedChainParams& p, double x, double xd,
                                      double xdd) {
  const RelaxedAngles r = inner_angles_relaxed(p, x);
  return detail::state_from_angles(p, x, xd, xdd, r.angles, r.clamp_violation);
}

/// Pose of the loop's tip frame computed along the driven-joint side:
/// base -> pivot (distance L along the base x-axis) -> rotate by pi + q ->
/// tip anchor at distance L1.
inline Pose2 upper_chain_end(const ClosedChainParams& p, double q, const Pose2& base) {
  const double a = base.a + kPi + q;
  return {base.p + p.L * unit_dir(base.a) + p.L1 * unit_dir(a), a};
}

/// Pose of the loop's tip frame computed along the actuator side:
/// base -> rotate by -q1 -> translate x + x0 -> rotate by -q2.
inline Pose2 lower_chain_end(const ClosedChainParams& p, double x, double q1, double q2,
                             const Pose2& base) {
  const double travel = base.a - q1;
  return {base.p + (x + p.x0()) * unit_dir(travel), travel - q2};
}

/// Planar loop-closure residual (dx, dz, dangle) between the two serial chain
/// ends, expressed in the base frame so it is invariant under rigid relocation
/// of the base. Zero for any consistent state.
inline Eigen::Vector3d loop_closure_residual(const ClosedChainParams& p, const ChainState& st,
                                             const Pose2& base = {}) {
  const Pose2 upper = upper_chain_end(p, st.q, base);
  const Pose2 lower = lower_chain_end(p, st.x, st.q1, st.q2, base);
  const Eigen::Vector2d dp = rotate(-base.a, upper.p - lower.p);
  return {dp.x(), dp.y(), wrap_pi(upper.a - lower.a)};
}

/// Triangle-identity residual q + q1 + q2 + pi.
inline double triangle_residual(const ChainState& st) { return st.q + st.q1 + st.q2 + kPi; }

}  // namespace emlaopt::chain
