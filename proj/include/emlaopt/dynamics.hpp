#pragma once

// Planar (X-Z) rigid-body model of a parallel-serial manipulator whose
// actuated joints are either closed-chain joints (a linear actuator spanning a
// four-link loop drives the backbone revolute angle) or telescoping prismatic
// joints. Forward kinematics, analytic Jacobian and its time derivative, and
// inverse dynamics.
//
// Inverse dynamics works by projection: a full kinematic pass produces every
// body's required Newton-Euler wrench, and one velocity-only pass per actuated
// coordinate provides the partial velocities that map those wrenches to
// generalized joint forces. Actuator force/velocity then follow from the
// holonomic velocity ratio of the loop (virtual work).

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "emlaopt/chain.hpp"
#include "emlaopt/errors.hpp"
#include "emlaopt/planar.hpp"

namespace emlaopt::dyn {

struct LinkBody {
  double mass = 0.0;                     ///< [kg]
  Eigen::Vector2d com_offset{0.0, 0.0};  ///< COM in the link frame [m]
  double inertia = 0.0;                  ///< about COM, planar scalar [kg m^2]
  double length = 0.0;                   ///< joint-to-joint distance along link x [m]

  void validate() const {
    if (!(mass > 0.0)) throw ConfigError("LinkBody: mass must be positive");
    if (inertia < 0.0) throw ConfigError("LinkBody: inertia must be nonnegative");
    if (length < 0.0) throw ConfigError("LinkBody: length must be nonnegative");
  }
};

enum class JointType { ClosedChain, Telescope, Fixed };

struct JointLimits {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double v, double tol = 0.0) const { return v >= lo - tol && v <= hi + tol; }
};

struct Joint {
  JointType type = JointType::Fixed;
  int actuator = -1;  ///< index into the EMLA list; -1 for fixed joints
  LinkBody link;
  double mount_angle = 0.0;  ///< fixed rotation ahead of the joint coordinate
  chain::ClosedChainParams chain;  ///< ClosedChain only
  std::optional<LinkBody> barrel, rod;  ///< cylinder bodies of the loop
  JointLimits coord;  ///< theta for chains [rad], extension for telescopes [m]
  JointLimits rate;
};

struct RobotModel {
  std::vector<Joint> joints;
  Eigen::Vector2d gravity{0.0, -9.81};
  Pose2 base;
  Eigen::Vector3d tcp_payload{0.0, 0.0, 0.0};  ///< external wrench (fx, fz, m) at TCP

  int n() const {
    int c = 0;
    for (const auto& j : joints)
      if (j.type != JointType::Fixed) ++c;
    return c;
  }
  int chain_count() const {
    int c = 0;
    for (const auto& j : joints)
      if (j.type == JointType::ClosedChain) ++c;
    return c;
  }
  std::vector<int> actuated_indices() const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(joints.size()); ++i)
      if (joints[i].type != JointType::Fixed) out.push_back(i);
    return out;
  }
  std::vector<int> chain_joint_indices() const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(joints.size()); ++i)
      if (joints[i].type == JointType::ClosedChain) out.push_back(i);
    return out;
  }

  /// Stacked link-length decision vector, [L, Lc0, Lc] per chain in joint order.
  Eigen::VectorXd xi() const {
    Eigen::VectorXd out(3 * chain_count());
    int k = 0;
    for (const auto& j : joints)
      if (j.type == JointType::ClosedChain) {
        out(k++) = j.chain.L;
        out(k++) = j.chain.Lc0;
        out(k++) = j.chain.Lc;
      }
    return out;
  }

  /// robot(Xi): install new chain lengths, re-deriving mounting-based offsets.
  void set_xi(const Eigen::VectorXd& xi) {
    if (xi.size() != 3 * chain_count())
      throw ConfigError("RobotModel::set_xi: expected " + std::to_string(3 * chain_count()) +
                        " entries");
    int k = 0;
    for (auto& j : joints)
      if (j.type == JointType::ClosedChain) {
        j.chain.L = xi(k++);
        j.chain.Lc0 = xi(k++);
        j.chain.Lc = xi(k++);
        j.chain.refresh_psi();
      }
  }

  void validate() const {
    if (joints.empty()) throw ConfigError("RobotModel: no joints");
    std::vector<bool> seen(n(), false);
    for (const auto& j : joints) {
      j.link.validate();
      if (j.type == JointType::Fixed) continue;
      if (j.actuator < 0 || j.actuator >= n() || seen[j.actuator])
        throw ConfigError("RobotModel: actuator indices must be a permutation of 0..n-1");
      seen[j.actuator] = true;
      if (j.type == JointType::ClosedChain) {
        j.chain.validate();
        if (j.barrel) j.barrel->validate();
        if (j.rod) j.rod->validate();
      }
    }
    if (!gravity.allFinite()) throw ConfigError("RobotModel: non-finite gravity");
  }
};

struct PlanarPose {
  Eigen::Vector2d position{0.0, 0.0};
  double orientation = 0.0;
};

/// Motion of one rigid body: COM kinematics plus angular motion.
struct BodyMotion {
  double mass = 0.0, inertia = 0.0;
  Eigen::Vector2d p_c{0, 0}, v_c{0, 0}, a_c{0, 0};
  double w = 0.0, wd = 0.0;
};

/// Motion of a point-frame: origin kinematics plus frame angular motion.
struct FrameMotion {
  Eigen::Vector2d p{0, 0}, v{0, 0}, a{0, 0};
  double ang = 0.0, w = 0.0, wd = 0.0;
};

struct KinematicsResult {
  std::vector<BodyMotion> bodies;
  FrameMotion tcp;
  std::vector<FrameMotion> joint_origin;  ///< per actuated joint, indexed by actuator id
  std::vector<double> axis_angle,         ///< link/axis world angle per actuator
      axis_rate;
  std::vector<chain::ChainState> chain_states;  ///< per chain joint, in joint order
  double clamp_violation = 0.0;                 ///< total relaxed-geometry violation
};

namespace detail {

inline BodyMotion body_from_frame(const LinkBody& body, const Eigen::Vector2d& origin,
                                  const Eigen::Vector2d& v_o, const Eigen::Vector2d& a_o,
                                  double ang, double w, double wd) {
  BodyMotion m;
  m.mass = body.mass;
  m.inertia = body.inertia;
  const Eigen::Vector2d r = rotate(ang, body.com_offset);
  m.p_c = origin + r;
  m.v_c = v_o + w * perp(r);
  m.a_c = a_o + wd * perp(r) - w * w * r;
  m.w = w;
  m.wd = wd;
  return m;
}

/// Chain state from the backbone joint coordinate and its derivatives.
inline chain::ChainState chain_state_from_theta(const chain::ClosedChainParams& p, double theta,
                                                double thetad, double thetadd, bool relaxed) {
  double x;
  double clamp = 0.0;
  if (relaxed) {
    x = chain::actuator_from_angle_relaxed(p, theta);
  } else {
    x = chain::actuator_from_angle(p, theta);
  }
  // rates: qd = k1*xd and qdd = k1d*xd + k1*xdd, inverted for the actuator
  chain::ChainState probe =
      relaxed ? chain::chain_state_relaxed(p, x, 0.0, 0.0) : chain::chain_state(p, x, 0.0, 0.0);
  clamp = probe.clamp_violation;
  const double k1 = probe.k1;
  const double xd = thetad / k1;
  const auto dk = chain::detail::dk_from_angles(
      p, std::max(x + p.x0(), 1e-12), {probe.q, probe.q1, probe.q2}, {probe.k1, probe.k2, probe.k3});
  const double xdd = (thetadd - dk[0] * xd * xd) / k1;
  chain::ChainState st = relaxed ? chain::chain_state_relaxed(p, x, xd, xdd)
                                 : chain::chain_state(p, x, xd, xdd);
  st.clamp_violation = std::max(st.clamp_violation, clamp);
  return st;
}

}  // namespace detail

/// One full kinematic sweep: body motions, TCP motion, joint frames, chain states.
inline KinematicsResult kinematics(const RobotModel& robot, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& thetad, const Eigen::VectorXd& thetadd,
                                   bool relaxed = false) {
  const int n = robot.n();
  if (theta.size() != n || thetad.size() != n || thetadd.size() != n)
    throw ConfigError("kinematics: coordinate vector size mismatch");
  if (!theta.allFinite() || !thetad.allFinite() || !thetadd.allFinite())
    throw DomainError("kinematics: non-finite joint state");

  KinematicsResult out;
  out.joint_origin.resize(n);
  out.axis_angle.assign(n, 0.0);
  out.axis_rate.assign(n, 0.0);

  Eigen::Vector2d p = robot.base.p, v = Eigen::Vector2d::Zero(), a = Eigen::Vector2d::Zero();
  double ang = robot.base.a, w = 0.0, wd = 0.0;

  auto advance = [&](double dist) {
    const Eigen::Vector2d r = dist * unit_dir(ang);
    p += r;
    v += w * perp(r);
    a += wd * perp(r) - w * w * r;
  };

  for (const auto& joint : robot.joints) {
    switch (joint.type) {
      case JointType::Fixed: {
        ang += joint.mount_angle;
        out.bodies.push_back(detail::body_from_frame(joint.link, p, v, a, ang, w, wd));
        advance(joint.link.length);
        break;
      }
      case JointType::ClosedChain: {
        const int id = joint.actuator;
        const double th = theta(id), thd = thetad(id), thdd = thetadd(id);
        const double a_par = ang, w_par = w, wd_par = wd;
        out.joint_origin[id] = {p, v, a, ang, w, wd};

        chain::ChainState st =
            detail::chain_state_from_theta(joint.chain, th, thd, thdd, relaxed);
        out.chain_states.push_back(st);
        out.clamp_violation += st.clamp_violation;

        ang += th;
        w += thd;
        wd += thdd;
        out.axis_angle[id] = ang;
        out.axis_rate[id] = w;
        out.bodies.push_back(detail::body_from_frame(joint.link, p, v, a, ang, w, wd));

        if (joint.barrel || joint.rod) {
          const double alpha =
              joint.chain.mounting ? joint.chain.mounting->base_angle(joint.chain.L)
                                   : joint.chain.psi;
          const double beta =
              joint.chain.mounting ? joint.chain.mounting->tip_anchor_angle : 0.0;
          // base anchor, rigid on the parent link
          const Eigen::Vector2d r_bc = joint.chain.L * unit_dir(a_par + alpha);
          const Eigen::Vector2d bc = p + r_bc;
          const Eigen::Vector2d v_bc = v + w_par * perp(r_bc);
          const Eigen::Vector2d a_bc = a + wd_par * perp(r_bc) - w_par * w_par * r_bc;
          // tip anchor, rigid on the moving link
          const Eigen::Vector2d r_tc = joint.chain.L1 * unit_dir(ang + beta);
          const Eigen::Vector2d tc = p + r_tc;
          const Eigen::Vector2d v_tc = v + w * perp(r_tc);
          const Eigen::Vector2d a_tc = a + wd * perp(r_tc) - w * w * r_tc;
          // actuator axis direction and its angular motion
          const double phi_b = a_par + alpha + kPi - st.q1;
          const double w_b = w_par - st.q1d;
          const double wd_b = wd_par - st.q1dd;
          if (joint.barrel)
            out.bodies.push_back(
                detail::body_from_frame(*joint.barrel, bc, v_bc, a_bc, phi_b, w_b, wd_b));
          if (joint.rod)
            out.bodies.push_back(
                detail::body_from_frame(*joint.rod, tc, v_tc, a_tc, phi_b + kPi, w_b, wd_b));
        }
        advance(joint.link.length);
        break;
      }
      case JointType::Telescope: {
        const int id = joint.actuator;
        const double ext = theta(id), extd = thetad(id), extdd = thetadd(id);
        ang += joint.mount_angle;
        out.joint_origin[id] = {p, v, a, ang, w, wd};
        out.axis_angle[id] = ang;
        out.axis_rate[id] = w;
        // the moving segment slides by ext along the child axis
        const Eigen::Vector2d u = unit_dir(ang);
        const Eigen::Vector2d r = ext * u;
        const Eigen::Vector2d p_m = p + r;
        const Eigen::Vector2d v_m = v + w * perp(r) + extd * u;
        const Eigen::Vector2d a_m =
            a + wd * perp(r) - w * w * r + 2.0 * w * extd * perp(u) + extdd * u;
        out.bodies.push_back(detail::body_from_frame(joint.link, p_m, v_m, a_m, ang, w, wd));
        p = p_m;
        v = v_m;
        a = a_m;
        advance(joint.link.length);
        break;
      }
    }
  }
  out.tcp = {p, v, a, ang, w, wd};
  return out;
}

namespace detail {

inline void check_limits(const RobotModel& robot, const Eigen::VectorXd& theta) {
  for (const auto& joint : robot.joints) {
    if (joint.type == JointType::Fixed) continue;
    if (!joint.coord.contains(theta(joint.actuator), 1e-12))
      throw RangeError("joint coordinate " + std::to_string(theta(joint.actuator)) +
                       " outside limits for actuator " + std::to_string(joint.actuator));
  }
}

}  // namespace detail

/// TCP pose; joint limits are enforced.
inline PlanarPose tcp_pose(const RobotModel& robot, const Eigen::VectorXd& theta) {
  detail::check_limits(robot, theta);
  const auto kin = kinematics(robot, theta, Eigen::VectorXd::Zero(robot.n()),
                              Eigen::VectorXd::Zero(robot.n()));
  return {kin.tcp.p, wrap_pi(kin.tcp.ang)};
}

/// TCP pose without limit checks (optimization internals).
inline PlanarPose tcp_pose_unchecked(const RobotModel& robot, const Eigen::VectorXd& theta,
                                     bool relaxed = true) {
  const auto kin = kinematics(robot, theta, Eigen::VectorXd::Zero(robot.n()),
                              Eigen::VectorXd::Zero(robot.n()), relaxed);
  return {kin.tcp.p, wrap_pi(kin.tcp.ang)};
}

/// Planar geometric Jacobian, rows (x, z, angle), one column per actuator.
inline Eigen::MatrixXd tcp_jacobian(const RobotModel& robot, const Eigen::VectorXd& theta,
                                    bool relaxed = false) {
  const int n = robot.n();
  const auto kin = kinematics(robot, theta, Eigen::VectorXd::Zero(n),
                              Eigen::VectorXd::Zero(n), relaxed);
  Eigen::MatrixXd J(3, n);
  for (const auto& joint : robot.joints) {
    if (joint.type == JointType::Fixed) continue;
    const int id = joint.actuator;
    if (joint.type == JointType::ClosedChain) {
      const Eigen::Vector2d lever = kin.tcp.p - kin.joint_origin[id].p;
      J.col(id) << -lever.y(), lever.x(), 1.0;
    } else {
      const Eigen::Vector2d u = unit_dir(kin.axis_angle[id]);
      J.col(id) << u.x(), u.y(), 0.0;
    }
  }
  return J;
}

/// Time derivative of the Jacobian, analytic.
inline Eigen::MatrixXd tcp_jacobian_dot(const RobotModel& robot, const Eigen::VectorXd& theta,
                                        const Eigen::VectorXd& thetad, bool relaxed = false) {
  const int n = robot.n();
  const auto kin = kinematics(robot, theta, thetad, Eigen::VectorXd::Zero(n), relaxed);
  Eigen::MatrixXd Jd(3, n);
  for (const auto& joint : robot.joints) {
    if (joint.type == JointType::Fixed) continue;
    const int id = joint.actuator;
    if (joint.type == JointType::ClosedChain) {
      const Eigen::Vector2d lever_rate = kin.tcp.v - kin.joint_origin[id].v;
      Jd.col(id) << -lever_rate.y(), lever_rate.x(), 0.0;
    } else {
      const Eigen::Vector2d u = unit_dir(kin.axis_angle[id]);
      Jd.col(id) << kin.axis_rate[id] * perp(u), 0.0;
    }
  }
  return Jd;
}

struct ActuatorOutput {
  Eigen::VectorXd f_x;  ///< actuator forces [N], indexed by actuator id
  Eigen::VectorXd v_x;  ///< actuator velocities [m/s]
  Eigen::VectorXd tau;  ///< generalized forces on the backbone coordinates
  FrameMotion tcp;
  std::vector<chain::ChainState> chain_states;  ///< per chain joint, backbone order
  double clamp_violation = 0.0;
};

/// Inverse dynamics: generalized forces for the independent coordinates via
/// wrench projection, then actuator force/velocity through the loop's
/// holonomic velocity ratio.
inline ActuatorOutput inverse_dynamics(const RobotModel& robot, const Eigen::VectorXd& theta,
                                       const Eigen::VectorXd& thetad,
                                       const Eigen::VectorXd& thetadd, bool relaxed = false) {
  const int n = robot.n();
  const KinematicsResult full = kinematics(robot, theta, thetad, thetadd, relaxed);

  struct Wrench {
    Eigen::Vector2d force;
    double moment;
  };
  std::vector<Wrench> required(full.bodies.size());
  for (std::size_t i = 0; i < full.bodies.size(); ++i) {
    const auto& b = full.bodies[i];
    required[i] = {b.mass * (b.a_c - robot.gravity), b.inertia * b.wd};
  }

  ActuatorOutput out;
  out.f_x.resize(n);
  out.v_x.resize(n);
  out.tau.resize(n);
  out.tcp = full.tcp;
  out.chain_states = full.chain_states;
  out.clamp_violation = full.clamp_violation;

  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd probe_rate = zero;
    probe_rate(j) = 1.0;
    const KinematicsResult probe = kinematics(robot, theta, probe_rate, zero, relaxed);
    double tau = 0.0;
    for (std::size_t i = 0; i < full.bodies.size(); ++i)
      tau += required[i].force.dot(probe.bodies[i].v_c) + required[i].moment * probe.bodies[i].w;
    tau -= robot.tcp_payload.head<2>().dot(probe.tcp.v) + robot.tcp_payload(2) * probe.tcp.w;
    out.tau(j) = tau;
  }

  int chain_idx = 0;
  for (const auto& joint : robot.joints) {
    if (joint.type == JointType::Fixed) continue;
    const int id = joint.actuator;
    if (joint.type == JointType::ClosedChain) {
      const auto& st = full.chain_states[chain_idx++];
      out.v_x(id) = thetad(id) / st.k1;
      out.f_x(id) = out.tau(id) * st.k1;
    } else {
      out.v_x(id) = thetad(id);
      out.f_x(id) = out.tau(id);
    }
  }
  if (!out.f_x.allFinite() || !out.v_x.allFinite())
    throw ModelError("inverse_dynamics: non-finite actuator output");
  return out;
}

/// Total kinetic energy at a joint state.
inline double kinetic_energy(const RobotModel& robot, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& thetad) {
  const auto kin =
      kinematics(robot, theta, thetad, Eigen::VectorXd::Zero(robot.n()));
  double e = 0.0;
  for (const auto& b : kin.bodies)
    e += 0.5 * b.mass * b.v_c.squaredNorm() + 0.5 * b.inertia * b.w * b.w;
  return e;
}

/// Total gravitational potential energy (zero level at the base height).
inline double potential_energy(const RobotModel& robot, const Eigen::VectorXd& theta) {
  const int n = robot.n();
  const auto kin = kinematics(robot, theta, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n));
  double e = 0.0;
  for (const auto& b : kin.bodies) e -= b.mass * robot.gravity.dot(b.p_c - robot.base.p);
  return e;
}

}  // namespace emlaopt::dyn
