#pragma once

// Transcription of the link-length design problem into a constrained NLP over
// (Xi, c) and a dense SQP solver for it.
//
// Decision vector layout: z = [Xi (3 per chain) ; c (N control points per
// joint, joint-major)]. The squared-total-input-power objective is evaluated
// at every collocation point through inverse dynamics and the actuator
// efficiency maps. TCP position tracking, the chain triangle identity and
// loop closure enter as equalities; velocity/acceleration tracking bands,
// actuator envelopes, joint boxes, stroke and chain-ordering limits as
// inequalities. Derivatives are central finite differences; the SQP pairs a
// damped-BFGS Hessian with an interior-point QP and an l1 merit line search.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emlaopt/chain.hpp"
#include "emlaopt/drive.hpp"
#include "emlaopt/dynamics.hpp"
#include "emlaopt/errors.hpp"
#include "emlaopt/qp.hpp"
#include "emlaopt/spiral.hpp"
#include "emlaopt/spline.hpp"

namespace emlaopt::nlp {

inline constexpr double kPenaltySentinel = 1e12;
inline constexpr double kGeometryTol = 1e-9;

struct TrackingBands {
  double position = 0.02;      ///< endpoint position band [m]
  double velocity = 0.05;      ///< |J thd - vel_ref| band per component [m/s]
  double acceleration = 0.5;   ///< acceleration band [m/s^2]
};

struct NlpBounds {
  Eigen::VectorXd xi_low, xi_up;  ///< length box, 3 per chain
  TrackingBands bands;
};

/// Number of collocation points whose position rows can be equality-tracked:
/// every point when the spline affords it, otherwise an evenly spaced subset
/// that leaves at least four decision dimensions free.
inline int tracked_point_count(int n_joints, int N, int M) {
  return std::min(M + 1, (n_joints * N - 4) / 2);
}

/// Evenly spaced tracked-point indices over 0..M, endpoints always included.
inline std::vector<int> tracked_point_indices(int n_joints, int N, int M) {
  const int P = tracked_point_count(n_joints, N, M);
  std::vector<int> idx;
  idx.reserve(P);
  for (int j = 0; j < P; ++j) {
    const int k = static_cast<int>(std::lround(static_cast<double>(j) * M / (P - 1)));
    if (idx.empty() || idx.back() != k) idx.push_back(k);
  }
  return idx;
}

/// Labeled constraint residuals at one decision vector. Equalities are zero
/// when satisfied; inequality entries are feasible when <= 0. P is the
/// tracked-point count above; the remaining points carry position bands.
struct ConstraintSet {
  Eigen::VectorXd position_tracking;      // 2 P
  Eigen::VectorXd triangle_identity;      // m (M+1)
  Eigen::VectorXd loop_closure;           // 3 m (M+1)
  Eigen::VectorXd position_band;          // 4 (M+1-P)
  Eigen::VectorXd velocity_tracking;      // 4 (M-1)
  Eigen::VectorXd acceleration_tracking;  // 4 (M-1)
  Eigen::VectorXd actuator_velocity;      // 2 n (M+1)
  Eigen::VectorXd actuator_force;         // 2 n (M+1)
  Eigen::VectorXd joint_position;         // 2 n (M+1)
  Eigen::VectorXd joint_rate;             // 2 n (M+1)
  Eigen::VectorXd stroke;                 // 2 m (M+1)
  Eigen::VectorXd chain_ordering;         // m (M+1)

  Eigen::VectorXd stack_equalities() const {
    Eigen::VectorXd out(position_tracking.size() + triangle_identity.size() +
                        loop_closure.size());
    out << position_tracking, triangle_identity, loop_closure;
    return out;
  }
  Eigen::VectorXd stack_inequalities() const {
    Eigen::VectorXd out(position_band.size() + velocity_tracking.size() +
                        acceleration_tracking.size() + actuator_velocity.size() +
                        actuator_force.size() + joint_position.size() + joint_rate.size() +
                        stroke.size() + chain_ordering.size());
    out << position_band, velocity_tracking, acceleration_tracking, actuator_velocity,
        actuator_force, joint_position, joint_rate, stroke, chain_ordering;
    return out;
  }
  double max_equality_violation() const {
    return stack_equalities().lpNorm<Eigen::Infinity>();
  }
  double max_inequality_violation() const {
    return std::max(0.0, stack_inequalities().maxCoeff());
  }
};

/// Discrete energy cost: 0.5 * dt * sum of squared total input power.
inline double energy_cost(const std::vector<double>& total_power, double dt) {
  double acc = 0.0;
  for (double p : total_power) acc += p * p;
  return 0.5 * dt * acc;
}

struct SeriesPoint {
  double t = 0.0;
  Eigen::VectorXd f_x, v_x, eta, p_in;
  Eigen::Vector2d tcp_pos{0, 0};
};

struct Evaluation {
  double objective = 0.0;
  bool geometry_infeasible = false;
  Eigen::VectorXd eq, in;
  double eq_violation = 0.0, in_violation = 0.0;
  double violation() const { return std::max(eq_violation, in_violation); }
};

/// Smooth NLP with equality and inequality blocks and box bounds:
///   min f(z)  s.t.  eq(z) = 0,  in(z) <= 0,  lb <= z <= ub.
class NlpProblem {
public:
  virtual ~NlpProblem() = default;
  virtual int dim() const = 0;
  virtual int n_eq() const = 0;
  virtual int n_in() const = 0;
  virtual Evaluation evaluate(const Eigen::VectorXd& z) const = 0;
  virtual void variable_bounds(Eigen::VectorXd& lb, Eigen::VectorXd& ub) const {
    const double inf = std::numeric_limits<double>::infinity();
    lb = Eigen::VectorXd::Constant(dim(), -inf);
    ub = Eigen::VectorXd::Constant(dim(), inf);
  }
  /// Residual scales for solver conditioning; tolerances apply to raw values.
  virtual Eigen::VectorXd eq_scale() const { return Eigen::VectorXd::Ones(n_eq()); }
  virtual Eigen::VectorXd in_scale() const { return Eigen::VectorXd::Ones(n_in()); }

  /// Central finite differences of objective and constraint stacks.
  void fd_derivatives(const Eigen::VectorXd& z, Eigen::VectorXd& grad, Eigen::MatrixXd& Jeq,
                      Eigen::MatrixXd& Jin, double rel_step = 1e-6) const {
    const int n = dim();
    grad.resize(n);
    Jeq.resize(n_eq(), n);
    Jin.resize(n_in(), n);
    Eigen::VectorXd zp = z;
    for (int i = 0; i < n; ++i) {
      const double h = rel_step * (1.0 + std::abs(z(i)));
      zp(i) = z(i) + h;
      const Evaluation ep = evaluate(zp);
      zp(i) = z(i) - h;
      const Evaluation em = evaluate(zp);
      zp(i) = z(i);
      grad(i) = (ep.objective - em.objective) / (2.0 * h);
      Jeq.col(i) = (ep.eq - em.eq) / (2.0 * h);
      Jin.col(i) = (ep.in - em.in) / (2.0 * h);
    }
  }
};

class Transcription : public NlpProblem {
public:
  Transcription(dyn::RobotModel robot, std::vector<drive::EfficiencyMap> maps,
                std::vector<drive::DrivetrainParams> drives, spline::SplineBasis basis,
                io::ReferenceTrajectory reference, NlpBounds bounds)
      : robot_(std::move(robot)),
        maps_(std::move(maps)),
        drives_(std::move(drives)),
        basis_(std::move(basis)),
        reference_(std::move(reference)),
        bounds_(std::move(bounds)) {
    n_ = robot_.n();
    m_ = robot_.chain_count();
    M_ = basis_.grid.M;
    if (static_cast<int>(maps_.size()) != n_ || static_cast<int>(drives_.size()) != n_)
      throw ConfigError("Transcription: need one efficiency map and drive per actuator");
    if (static_cast<int>(reference_.pos.size()) != M_ + 1)
      throw ConfigError("Transcription: reference sample count does not match the grid");
    if (bounds_.xi_low.size() != 3 * m_ || bounds_.xi_up.size() != 3 * m_)
      throw ConfigError("Transcription: xi bounds must have 3 entries per chain");
    robot_.validate();
    tracked_ = tracked_point_indices(n_, basis_.N, M_);
    if (static_cast<int>(tracked_.size()) < 2)
      throw ConfigError("Transcription: spline too small to track the reference");
    is_tracked_.assign(M_ + 1, -1);
    for (std::size_t j = 0; j < tracked_.size(); ++j) is_tracked_[tracked_[j]] = static_cast<int>(j);
    build_scales();
  }

  int dim() const override { return 3 * m_ + n_ * basis_.N; }
  int tracked_points() const { return static_cast<int>(tracked_.size()); }
  int n_eq() const override {
    return 2 * tracked_points() + m_ * (M_ + 1) + 3 * m_ * (M_ + 1);
  }
  int n_in() const override {
    return 4 * (M_ + 1 - tracked_points()) + 8 * (M_ - 1) + 4 * 2 * n_ * (M_ + 1) +
           2 * m_ * (M_ + 1) + m_ * (M_ + 1);
  }
  int n_joints() const { return n_; }
  int n_chains() const { return m_; }
  const spline::SplineBasis& basis() const { return basis_; }
  const io::ReferenceTrajectory& reference() const { return reference_; }
  const dyn::RobotModel& robot_prototype() const { return robot_; }
  const NlpBounds& bounds() const { return bounds_; }

  Eigen::VectorXd xi_of(const Eigen::VectorXd& z) const { return z.head(3 * m_); }
  Eigen::VectorXd c_of(const Eigen::VectorXd& z) const { return z.tail(n_ * basis_.N); }

  Eigen::VectorXd pack(const Eigen::VectorXd& xi, const Eigen::VectorXd& c) const {
    Eigen::VectorXd z(dim());
    z << xi, c;
    return z;
  }

  /// Box bounds on the decision vector; control points are unbounded.
  void variable_bounds(Eigen::VectorXd& lb, Eigen::VectorXd& ub) const override {
    const double inf = std::numeric_limits<double>::infinity();
    lb = Eigen::VectorXd::Constant(dim(), -inf);
    ub = Eigen::VectorXd::Constant(dim(), inf);
    lb.head(3 * m_) = bounds_.xi_low;
    ub.head(3 * m_) = bounds_.xi_up;
  }

  /// Full objective + constraint sweep at one decision vector.
  Evaluation evaluate(const Eigen::VectorXd& z) const override {
    ConstraintSet cs;
    Evaluation ev;
    ev.objective = objective_and_constraints(z, &cs);
    ev.geometry_infeasible = ev.objective >= kPenaltySentinel;
    ev.eq = cs.stack_equalities();
    ev.in = cs.stack_inequalities();
    ev.eq_violation = cs.max_equality_violation();
    ev.in_violation = cs.max_inequality_violation();
    return ev;
  }

  double objective(const Eigen::VectorXd& z) const {
    return objective_and_constraints(z, nullptr);
  }

  ConstraintSet constraints(const Eigen::VectorXd& z) const {
    ConstraintSet cs;
    objective_and_constraints(z, &cs);
    return cs;
  }

  /// Central finite-difference gradient of the objective.
  Eigen::VectorXd gradient(const Eigen::VectorXd& z, double rel_step = 1e-6) const {
    Eigen::VectorXd g(dim());
    Eigen::VectorXd zp = z;
    for (int i = 0; i < dim(); ++i) {
      const double h = rel_step * (1.0 + std::abs(z(i)));
      zp(i) = z(i) + h;
      const double fp = objective(zp);
      zp(i) = z(i) - h;
      const double fm = objective(zp);
      zp(i) = z(i);
      g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
  }

  /// Per-actuator time series at a decision vector (for reports and export).
  std::vector<SeriesPoint> series(const Eigen::VectorXd& z) const {
    std::vector<SeriesPoint> out(M_ + 1);
    dyn::RobotModel robot = robot_;
    robot.set_xi(xi_of(z));
    const Eigen::VectorXd c = c_of(z);
    for (int k = 0; k <= M_; ++k) {
      const auto s = spline::evaluate_at(basis_, c, k);
      const auto act = dyn::inverse_dynamics(robot, s.value, s.rate, s.accel, true);
      SeriesPoint pt;
      pt.t = basis_.grid.time(k);
      pt.f_x = act.f_x;
      pt.v_x = act.v_x;
      pt.eta.resize(n_);
      pt.p_in.resize(n_);
      for (int i = 0; i < n_; ++i) {
        pt.eta(i) = drive::lookup_efficiency(maps_[i], act.f_x(i), act.v_x(i));
        pt.p_in(i) = act.f_x(i) * act.v_x(i) / pt.eta(i);
      }
      pt.tcp_pos = act.tcp.p;
      out[k] = pt;
    }
    return out;
  }

  /// Plain energy: trapezoidal integral of the summed absolute input power.
  double plain_energy(const std::vector<SeriesPoint>& s) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double p = s[k].p_in.cwiseAbs().sum();
      acc += (k == 0 || k + 1 == s.size()) ? 0.5 * p : p;
    }
    return acc * basis_.grid.dt;
  }

  Eigen::VectorXd eq_scale() const override { return eq_scale_; }
  Eigen::VectorXd in_scale() const override { return in_scale_; }

private:
  void build_scales() {
    eq_scale_ = Eigen::VectorXd::Ones(n_eq());
    in_scale_ = Eigen::VectorXd::Ones(n_in());
    // actuator velocity/force rows get their envelope magnitude
    int off = 4 * (M_ + 1 - tracked_points()) + 8 * (M_ - 1);
    for (int k = 0; k <= M_; ++k)
      for (int i = 0; i < n_; ++i) {
        const double span = std::max(std::abs(drives_[i].v_up), std::abs(drives_[i].v_low));
        in_scale_(off) = in_scale_(off + 1) = std::max(1.0, span);
        off += 2;
      }
    for (int k = 0; k <= M_; ++k)
      for (int i = 0; i < n_; ++i) {
        const double span = std::max(std::abs(drives_[i].f_up), std::abs(drives_[i].f_low));
        in_scale_(off) = in_scale_(off + 1) = std::max(1.0, span);
        off += 2;
      }
  }

  /// Single sweep over the collocation grid. Returns the objective (or the
  /// penalty sentinel) and fills the constraint set when requested.
  double objective_and_constraints(const Eigen::VectorXd& z, ConstraintSet* cs) const {
    if (z.size() != dim()) throw ConfigError("Transcription: decision vector size mismatch");
    dyn::RobotModel robot = robot_;
    robot.set_xi(xi_of(z));
    const Eigen::VectorXd c = c_of(z);

    if (cs) {
      cs->position_tracking.resize(2 * tracked_points());
      cs->triangle_identity.resize(m_ * (M_ + 1));
      cs->loop_closure.resize(3 * m_ * (M_ + 1));
      cs->position_band.resize(4 * (M_ + 1 - tracked_points()));
      cs->velocity_tracking.resize(4 * (M_ - 1));
      cs->acceleration_tracking.resize(4 * (M_ - 1));
      cs->actuator_velocity.resize(2 * n_ * (M_ + 1));
      cs->actuator_force.resize(2 * n_ * (M_ + 1));
      cs->joint_position.resize(2 * n_ * (M_ + 1));
      cs->joint_rate.resize(2 * n_ * (M_ + 1));
      cs->stroke.resize(2 * m_ * (M_ + 1));
      cs->chain_ordering.resize(m_ * (M_ + 1));
    }

    double cost_acc = 0.0;
    double geometry_violation = 0.0;
    int band_idx = -1;
    const auto chain_joints = robot.chain_joint_indices();

    for (int k = 0; k <= M_; ++k) {
      const auto s = spline::evaluate_at(basis_, c, k);
      const auto act = dyn::inverse_dynamics(robot, s.value, s.rate, s.accel, true);
      geometry_violation += act.clamp_violation;

      double total_power = 0.0;
      for (int i = 0; i < n_; ++i) {
        const double eta = drive::lookup_efficiency(maps_[i], act.f_x(i), act.v_x(i));
        total_power += act.f_x(i) * act.v_x(i) / eta;
      }
      cost_acc += total_power * total_power;

      if (!cs) continue;

      const Eigen::Vector2d pos_err = act.tcp.p - reference_.pos[k];
      if (is_tracked_[k] >= 0) {
        cs->position_tracking.segment<2>(2 * is_tracked_[k]) = pos_err;
      } else {
        ++band_idx;
        const int eo = 4 * band_idx;
        cs->position_band(eo) = pos_err.x() - bounds_.bands.position;
        cs->position_band(eo + 1) = -pos_err.x() - bounds_.bands.position;
        cs->position_band(eo + 2) = pos_err.y() - bounds_.bands.position;
        cs->position_band(eo + 3) = -pos_err.y() - bounds_.bands.position;
      }
      for (int ci = 0; ci < m_; ++ci) {
        const auto& st = act.chain_states[ci];
        const auto& params = robot.joints[chain_joints[ci]].chain;
        cs->triangle_identity(ci * (M_ + 1) + k) = chain::triangle_residual(st);
        cs->loop_closure.segment<3>(3 * (ci * (M_ + 1) + k)) =
            chain::loop_closure_residual(params, st);
        const int so = 2 * (ci * (M_ + 1) + k);
        cs->stroke(so) = -st.x;                 // x >= 0
        cs->stroke(so + 1) = st.x - params.Lc;  // x <= Lc
        cs->chain_ordering(ci * (M_ + 1) + k) =
            params.Lc0 + st.x + params.Lc - (params.L + params.L1);
      }
      if (k >= 1 && k <= M_ - 1) {
        const Eigen::Vector2d vel_err = act.tcp.v - reference_.vel[k];
        const Eigen::Vector2d acc_err = act.tcp.a - reference_.acc[k];
        const int vo = 4 * (k - 1);
        cs->velocity_tracking(vo) = vel_err.x() - bounds_.bands.velocity;
        cs->velocity_tracking(vo + 1) = -vel_err.x() - bounds_.bands.velocity;
        cs->velocity_tracking(vo + 2) = vel_err.y() - bounds_.bands.velocity;
        cs->velocity_tracking(vo + 3) = -vel_err.y() - bounds_.bands.velocity;
        cs->acceleration_tracking(vo) = acc_err.x() - bounds_.bands.acceleration;
        cs->acceleration_tracking(vo + 1) = -acc_err.x() - bounds_.bands.acceleration;
        cs->acceleration_tracking(vo + 2) = acc_err.y() - bounds_.bands.acceleration;
        cs->acceleration_tracking(vo + 3) = -acc_err.y() - bounds_.bands.acceleration;
      }
      for (const auto& joint : robot.joints) {
        if (joint.type == dyn::JointType::Fixed) continue;
        const int i = joint.actuator;
        const int ao = 2 * (k * n_ + i);
        cs->actuator_velocity(ao) = act.v_x(i) - drives_[i].v_up;
        cs->actuator_velocity(ao + 1) = drives_[i].v_low - act.v_x(i);
        cs->actuator_force(ao) = act.f_x(i) - drives_[i].f_up;
        cs->actuator_force(ao + 1) = drives_[i].f_low - act.f_x(i);
        cs->joint_position(ao) = s.value(i) - joint.coord.hi;
        cs->joint_position(ao + 1) = joint.coord.lo - s.value(i);
        cs->joint_rate(ao) = s.rate(i) - joint.rate.hi;
        cs->joint_rate(ao + 1) = joint.rate.lo - s.rate(i);
      }
    }

    if (geometry_violation > kGeometryTol)
      return kPenaltySentinel + 1e6 * geometry_violation;
    return 0.5 * basis_.grid.dt * cost_acc;
  }

  dyn::RobotModel robot_;
  std::vector<drive::EfficiencyMap> maps_;
  std::vector<drive::DrivetrainParams> drives_;
  spline::SplineBasis basis_;
  io::ReferenceTrajectory reference_;
  NlpBounds bounds_;
  Eigen::VectorXd eq_scale_, in_scale_;
  std::vector<int> tracked_;     ///< equality-tracked collocation indices
  std::vector<int> is_tracked_;  ///< slot in position_tracking, or -1
  int n_ = 0, m_ = 0, M_ = 0;
};

namespace detail {

/// Damped Gauss-Newton position IK inside the joint boxes, with error-norm
/// backtracking and null-space centering. Returns the final error norm.
inline double position_ik(const dyn::RobotModel& robot, const Eigen::Vector2d& target,
                          const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                          const Eigen::VectorXd& mid, Eigen::VectorXd& theta) {
  const int n = static_cast<int>(theta.size());
  const auto error = [&](const Eigen::VectorXd& q) {
    return (target - dyn::tcp_pose_unchecked(robot, q).position).eval();
  };
  double err = error(theta).norm();
  for (int it = 0; it < 150 && err >= 1e-11; ++it) {
    const Eigen::MatrixXd J = dyn::tcp_jacobian(robot, theta, true).topRows(2);
    const Eigen::Vector2d e = error(theta);
    const Eigen::MatrixXd JJt = J * J.transpose() + 1e-10 * Eigen::MatrixXd::Identity(2, 2);
    const Eigen::MatrixXd Jpinv = J.transpose() * JJt.inverse();
    const Eigen::VectorXd gn = Jpinv * e;
    // the centering pull is only first-order tangent; fade it out near the
    // solution so it cannot floor the convergence
    const double ns_gain = std::min(0.08, 1e3 * err);
    const Eigen::VectorXd ns = (Eigen::MatrixXd::Identity(n, n) - Jpinv * J) * (mid - theta);
    bool improved = false;
    for (double alpha = 1.0; alpha > 1e-4; alpha *= 0.5) {
      const Eigen::VectorXd trial =
          (theta + alpha * (gn + ns_gain * ns)).cwiseMax(lo).cwiseMin(hi);
      const double trial_err = error(trial).norm();
      if (trial_err < err * (1.0 - 1e-6) || trial_err < 1e-11) {
        theta = trial;
        err = trial_err;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  return err;
}

}  // namespace detail

/// Joint-space warm start: position IK at every collocation point (warm
/// started, with deterministic restarts when a posture corner stalls the
/// iteration), followed by a least-squares spline fit. Throws
/// ReachabilityError listing the times where the reference cannot be reached.
inline Eigen::VectorXd fit_reference_controls(const dyn::RobotModel& robot,
                                              const spline::SplineBasis& basis,
                                              const io::ReferenceTrajectory& reference,
                                              const Eigen::VectorXd& theta_guess) {
  const int n = robot.n();
  if (theta_guess.size() != n)
    throw ConfigError("fit_reference_controls: guess size mismatch");
  Eigen::VectorXd mid(n), lo(n), hi(n);
  for (const auto& j : robot.joints) {
    if (j.type == dyn::JointType::Fixed) continue;
    lo(j.actuator) = j.coord.lo;
    hi(j.actuator) = j.coord.hi;
    mid(j.actuator) = 0.5 * (j.coord.lo + j.coord.hi);
  }

  Eigen::MatrixXd samples(basis.grid.points(), n);
  Eigen::VectorXd theta = theta_guess;
  std::vector<double> unreachable;
  for (int k = 0; k < basis.grid.points(); ++k) {
    double err = detail::position_ik(robot, reference.pos[k], lo, hi, mid, theta);
    if (err > 1e-9) {
      // restart from deterministic seeds spread over the joint boxes
      const Eigen::VectorXd span = hi - lo;
      for (double f : {0.5, 0.3, 0.7, 0.15, 0.85}) {
        Eigen::VectorXd seed = lo + f * span;
        const double e2 = detail::position_ik(robot, reference.pos[k], lo, hi, mid, seed);
        if (e2 < err) {
          err = e2;
          theta = seed;
        }
        if (err <= 1e-9) break;
      }
    }
    if (err > 1e-8) unreachable.push_back(basis.grid.time(k));
    samples.row(k) = theta.transpose();
  }
  if (!unreachable.empty())
    throw ReachabilityError("reference trajectory unreachable at " +
                                std::to_string(unreachable.size()) + " sample times",
                            unreachable);
  return spline::fit_initial_controls(basis, samples);
}

struct SolverConfig {
  int max_iterations = 500;
  double feasibility_tolerance = 1e-6;
  double optimality_tolerance = 1e-6;
  double fd_step = 1e-6;
  double merit_penalty_init = 1.0;
  double merit_penalty_max = 1e10;
  int line_search_max = 25;
  unsigned long long seed = 0;  ///< reserved for multistart; unused by default
  bool verbose = false;
};

struct IterationRecord {
  double objective = 0.0;
  double violation = 0.0;
  double merit = 0.0;
  double penalty = 0.0;
  double step = 0.0;
};

struct OptimizationResult {
  Eigen::VectorXd z;
  double objective = 0.0;
  double violation = 0.0;
  bool converged = false;
  std::string status;
  int iterations = 0;
  double wall_seconds = 0.0;
  std::vector<IterationRecord> trace;
  Eigen::VectorXd xi_initial, xi_final;
  double initial_objective = 0.0;
  double initial_plain_energy = 0.0, final_plain_energy = 0.0;
};

/// SQP with damped BFGS, l1 merit line search, and an interior-point QP.
inline OptimizationResult solve(const NlpProblem& nlp, const Eigen::VectorXd& z0,
                                const SolverConfig& cfg = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  const int dim = nlp.dim();
  if (z0.size() != dim) throw ConfigError("solve: initial point size mismatch");

  Eigen::VectorXd lb, ub;
  nlp.variable_bounds(lb, ub);
  Eigen::VectorXd z = z0.cwiseMax(lb).cwiseMin(ub);

  Evaluation ev = nlp.evaluate(z);
  if (!std::isfinite(ev.objective))
    throw SolverError("solve: objective not finite at the initial point");
  const double f_scale = std::max(1.0, std::abs(ev.objective));
  const Eigen::VectorXd eq_s = nlp.eq_scale(), in_s = nlp.in_scale();

  const auto scaled_violation = [&](const Evaluation& e) {
    double v = 0.0;
    for (int i = 0; i < e.eq.size(); ++i) v += std::abs(e.eq(i)) / eq_s(i);
    for (int i = 0; i < e.in.size(); ++i) v += std::max(0.0, e.in(i)) / in_s(i);
    return v;
  };
  const auto merit = [&](const Evaluation& e, double mu) {
    return e.objective / f_scale + mu * scaled_violation(e);
  };

  OptimizationResult res;
  res.initial_objective = ev.objective;

  Eigen::MatrixXd B = Eigen::MatrixXd::Identity(dim, dim);
  double mu = cfg.merit_penalty_init;

  Eigen::VectorXd grad;
  Eigen::MatrixXd Jeq, Jin;
  nlp.fd_derivatives(z, grad, Jeq, Jin, cfg.fd_step);

  // box rows appended to the inequality block of each QP
  std::vector<int> box_idx;
  for (int i = 0; i < dim; ++i)
    if (std::isfinite(lb(i)) || std::isfinite(ub(i))) box_idx.push_back(i);

  int iter = 0;
  std::string status = "max_iterations";
  bool converged = false;

  for (; iter < cfg.max_iterations; ++iter) {
    res.trace.push_back({ev.objective, ev.violation(), merit(ev, mu), mu, 0.0});

    // assemble the scaled QP
    qp::QpProblem sub;
    sub.H = B;
    sub.g = grad / f_scale;
    sub.A_eq = Jeq;
    sub.b_eq = -ev.eq;
    for (int r = 0; r < sub.A_eq.rows(); ++r) {
      sub.A_eq.row(r) /= eq_s(r);
      sub.b_eq(r) /= eq_s(r);
    }
    const int n_box = static_cast<int>(box_idx.size());
    sub.A_in.resize(Jin.rows() + 2 * n_box, dim);
    sub.b_in.resize(Jin.rows() + 2 * n_box);
    sub.A_in.topRows(Jin.rows()) = Jin;
    sub.b_in.head(Jin.rows()) = -ev.in;
    for (int r = 0; r < Jin.rows(); ++r) {
      sub.A_in.row(r) /= in_s(r);
      sub.b_in(r) /= in_s(r);
    }
    sub.A_in.bottomRows(2 * n_box).setZero();
    for (int b = 0; b < n_box; ++b) {
      const int i = box_idx[b];
      sub.A_in(Jin.rows() + 2 * b, i) = 1.0;
      sub.b_in(Jin.rows() + 2 * b) = std::isfinite(ub(i)) ? ub(i) - z(i) : 1e20;
      sub.A_in(Jin.rows() + 2 * b + 1, i) = -1.0;
      sub.b_in(Jin.rows() + 2 * b + 1) = std::isfinite(lb(i)) ? z(i) - lb(i) : 1e20;
    }

    // the full-repair QP can be infeasible when the linearization cannot undo
    // all constraint violation in one step; retry asking for a fraction only
    qp::QpResult step;
    bool qp_ok = false;
    double repair_used = 1.0;
    const Eigen::VectorXd b_eq_full = sub.b_eq, b_in_full = sub.b_in;
    for (double repair : {1.0, 0.3, 0.1, 0.03, 0.01}) {
      sub.b_eq = repair * b_eq_full;
      sub.b_in = b_in_full;
      for (int r = 0; r < sub.b_in.size(); ++r)
        if (sub.b_in(r) < 0.0) sub.b_in(r) *= repair;
      step = qp::solve_qp(sub);
      if (step.converged || step.kkt_residual < 1e-5) {
        qp_ok = true;
        repair_used = repair;
        break;
      }
    }
    if (!qp_ok)
      throw SolverError("solve: QP subproblem failed at iteration " + std::to_string(iter),
                        std::vector<double>(z.data(), z.data() + z.size()));

    const Eigen::VectorXd d = step.d;
    const double step_norm = d.lpNorm<Eigen::Infinity>();
    if (ev.violation() <= cfg.feasibility_tolerance &&
        step_norm <= cfg.optimality_tolerance * (1.0 + z.lpNorm<Eigen::Infinity>())) {
      converged = true;
      status = "optimal";
      break;
    }

    // exact-penalty weight never below the active multipliers
    const double lam = std::max(
        step.lambda_eq.size() ? step.lambda_eq.lpNorm<Eigen::Infinity>() : 0.0,
        step.mu_in.size() ? step.mu_in.lpNorm<Eigen::Infinity>() : 0.0);
    mu = std::min(cfg.merit_penalty_max, std::max(mu, 1.1 * lam + 0.1));

    // l1 merit backtracking line search
    double alpha = 1.0;
    const double phi0 = merit(ev, mu);
    const double viol0 = scaled_violation(ev);
    const double dir_deriv = grad.dot(d) / f_scale - mu * repair_used * viol0;
    Evaluation trial;
    bool accepted = false;
    for (int ls = 0; ls < cfg.line_search_max; ++ls) {
      trial = nlp.evaluate(z + alpha * d);
      if (merit(trial, mu) <= phi0 + 1e-4 * alpha * std::min(dir_deriv, 0.0)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      status = "line_search_stalled";
      break;
    }

    const Eigen::VectorXd z_new = z + alpha * d;
    Eigen::VectorXd grad_new;
    Eigen::MatrixXd Jeq_new, Jin_new;
    nlp.fd_derivatives(z_new, grad_new, Jeq_new, Jin_new, cfg.fd_step);

    // damped BFGS on the scaled Lagrangian
    Eigen::VectorXd gl_old = grad / f_scale, gl_new = grad_new / f_scale;
    if (step.lambda_eq.size()) {
      Eigen::MatrixXd Aeq_old = Jeq, Aeq_new = Jeq_new;
      for (int r = 0; r < Aeq_old.rows(); ++r) {
        Aeq_old.row(r) /= eq_s(r);
        Aeq_new.row(r) /= eq_s(r);
      }
      gl_old += Aeq_old.transpose() * step.lambda_eq;
      gl_new += Aeq_new.transpose() * step.lambda_eq;
    }
    if (step.mu_in.size()) {
      const Eigen::VectorXd mu_rows = step.mu_in.head(Jin.rows());
      Eigen::MatrixXd Ain_old = Jin, Ain_new = Jin_new;
      for (int r = 0; r < Ain_old.rows(); ++r) {
        Ain_old.row(r) /= in_s(r);
        Ain_new.row(r) /= in_s(r);
      }
      gl_old += Ain_old.transpose() * mu_rows;
      gl_new += Ain_new.transpose() * mu_rows;
      for (int b = 0; b < n_box; ++b) {
        const int i = box_idx[b];
        gl_old(i) += step.mu_in(Jin.rows() + 2 * b) - step.mu_in(Jin.rows() + 2 * b + 1);
        gl_new(i) += step.mu_in(Jin.rows() + 2 * b) - step.mu_in(Jin.rows() + 2 * b + 1);
      }
    }
    const Eigen::VectorXd s_vec = alpha * d;
    Eigen::VectorXd y_vec = gl_new - gl_old;
    const double sBs = s_vec.dot(B * s_vec);
    double sy = s_vec.dot(y_vec);
    if (sy < 0.2 * sBs && sBs > 0.0) {  // Powell damping
      const double theta = 0.8 * sBs / (sBs - sy);
      y_vec = theta * y_vec + (1.0 - theta) * (B * s_vec);
      sy = s_vec.dot(y_vec);
    }
    if (sy > 1e-12 && sBs > 1e-14) {
      const Eigen::VectorXd Bs = B * s_vec;
      B += (y_vec * y_vec.transpose()) / sy - (Bs * Bs.transpose()) / sBs;
    }

    z = z_new;
    ev = trial;
    grad.swap(grad_new);
    Jeq.swap(Jeq_new);
    Jin.swap(Jin_new);
    res.trace.back().step = alpha;
    if (cfg.verbose) {
      std::printf("iter %4d  f %.6e  viol %.3e  step %.2e  mu %.1e\n", iter, ev.objective,
                  ev.violation(), alpha, mu);
    }
  }

  res.z = z;
  res.objective = ev.objective;
  res.violation = ev.violation();
  res.converged = converged;
  res.status = status;
  res.iterations = iter;
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

/// Transcription-aware entry point: also records link lengths and the
/// plain-energy figures of the initial and final trajectories.
inline OptimizationResult solve(const Transcription& nlp, const Eigen::VectorXd& z0,
                                const SolverConfig& cfg = {}) {
  OptimizationResult res = solve(static_cast<const NlpProblem&>(nlp), z0, cfg);
  res.xi_initial = nlp.xi_of(z0);
  res.xi_final = nlp.xi_of(res.z);
  res.initial_plain_energy = nlp.plain_energy(nlp.series(z0));
  res.final_plain_energy = nlp.plain_energy(nlp.series(res.z));
  return res;
}

/// Backbone joint origins plus TCP, and the loop anchor triangles, at one
/// collocation point. Plot-ready coordinates.
struct StructureSnapshot {
  std::vector<Eigen::Vector2d> backbone;
  std::vector<std::array<Eigen::Vector2d, 3>> triangles;  ///< pivot, base anchor, tip anchor
};

inline StructureSnapshot structure_at(const Transcription& nlp, const Eigen::VectorXd& z,
                                      int k = 0) {
  dyn::RobotModel robot = nlp.robot_prototype();
  robot.set_xi(nlp.xi_of(z));
  const auto s = spline::evaluate_at(nlp.basis(), nlp.c_of(z), k);
  StructureSnapshot out;
  Eigen::Vector2d p = robot.base.p;
  double ang = robot.base.a;
  out.backbone.push_back(p);
  for (const auto& joint : robot.joints) {
    double rot = joint.mount_angle, trans = joint.link.length;
    if (joint.type == dyn::JointType::ClosedChain) {
      const double theta = s.value(joint.actuator);
      const double alpha = joint.chain.mounting
                               ? joint.chain.mounting->base_angle(joint.chain.L)
                               : joint.chain.psi;
      const double beta = joint.chain.mounting ? joint.chain.mounting->tip_anchor_angle : 0.0;
      out.triangles.push_back({p, p + joint.chain.L * unit_dir(ang + alpha),
                               p + joint.chain.L1 * unit_dir(ang + theta + beta)});
      rot = theta;
    }
    if (joint.type == dyn::JointType::Telescope) trans += s.value(joint.actuator);
    ang += rot;
    p += trans * unit_dir(ang);
    out.backbone.push_back(p);
  }
  return out;
}

struct EnergyReport {
  double cost_initial = 0.0, cost_final = 0.0;
  double plain_energy_initial = 0.0, plain_energy_final = 0.0;
  Eigen::VectorXd peak_force, peak_velocity;
  Eigen::VectorXd xi_initial, xi_final;
  StructureSnapshot structure_initial, structure_final;
};

inline EnergyReport energy_report(const Transcription& nlp, const Eigen::VectorXd& z_initial,
                                  const OptimizationResult& result) {
  EnergyReport rep;
  rep.cost_initial = result.initial_objective;
  rep.cost_final = result.objective;
  const auto s0 = nlp.series(z_initial);
  const auto s1 = nlp.series(result.z);
  rep.plain_energy_initial = nlp.plain_energy(s0);
  rep.plain_energy_final = nlp.plain_energy(s1);
  const int n = nlp.n_joints();
  rep.peak_force = Eigen::VectorXd::Zero(n);
  rep.peak_velocity = Eigen::VectorXd::Zero(n);
  for (const auto& pt : s1) {
    rep.peak_force = rep.peak_force.cwiseMax(pt.f_x.cwiseAbs());
    rep.peak_velocity = rep.peak_velocity.cwiseMax(pt.v_x.cwiseAbs());
  }
  rep.xi_initial = result.xi_initial;
  rep.xi_final = result.xi_final;
  rep.structure_initial = structure_at(nlp, z_initial);
  rep.structure_final = structure_at(nlp, result.z);
  return rep;
}

}  // namespace emlaopt::nlp
