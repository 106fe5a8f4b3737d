#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

namespace emlaopt {

inline constexpr double kPi = std::numbers::pi;

/// Wrap an angle to (-pi, pi].
inline double wrap_pi(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

/// Unit vector at angle a.
inline Eigen::Vector2d unit_dir(double a) { return {std::cos(a), std::sin(a)}; }

/// Rotate v by angle a.
inline Eigen::Vector2d rotate(double a, const Eigen::Vector2d& v) {
  const double c = std::cos(a), s = std::sin(a);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

/// z-hat cross v in the plane: d/dt of a rotating vector per unit angular rate.
inline Eigen::Vector2d perp(const Eigen::Vector2d& v) { return {-v.y(), v.x()}; }

/// Planar rigid transform: position of the frame origin and frame angle.
struct Pose2 {
  Eigen::Vector2d p{0.0, 0.0};
  double a = 0.0;

  Eigen::Vector2d apply(const Eigen::Vector2d& local) const { return p + rotate(a, local); }
  Pose2 compose(const Pose2& rhs) const { return {apply(rhs.p), a + rhs.a}; }
};

inline int signum(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace emlaopt
