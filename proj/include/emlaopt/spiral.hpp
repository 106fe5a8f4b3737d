#pragma once

// Archimedean spiral reference in the X-Z plane with quintic time scaling, so
// the swept angle starts and ends at rest. Analytic derivatives throughout.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "emlaopt/errors.hpp"
#include "emlaopt/planar.hpp"
#include "emlaopt/spline.hpp"

namespace emlaopt::io {

struct SpiralSpec {
  Eigen::Vector2d center{0.0, 0.0};
  double start_radius = 0.0;    ///< r at sweep angle 0 [m]
  double growth_per_rev = 0.0;  ///< radial growth per full turn [m]
  double angular_span = 0.0;    ///< total swept angle [rad]
  double duration = 0.0;        ///< [s]
  double start_angle = 0.0;     ///< initial polar angle [rad]

  void validate() const {
    if (!(start_radius > 0.0)) throw ConfigError("SpiralSpec: start_radius must be positive");
    if (!(duration > 0.0)) throw ConfigError("SpiralSpec: duration must be positive");
    if (!(angular_span > 0.0)) throw ConfigError("SpiralSpec: angular_span must be positive");
  }
};

/// Quintic smooth-step: s(0)=0, s(1)=1, zero first and second derivatives at
/// both ends.
inline void quintic_step(double u, double& s, double& sd, double& sdd) {
  s = ((6.0 * u - 15.0) * u + 10.0) * u * u * u;
  sd = ((30.0 * u - 60.0) * u + 30.0) * u * u;
  sdd = ((120.0 * u - 180.0) * u + 60.0) * u;
}

/// Position, velocity, acceleration on the spiral at time t since the start.
inline void spiral_point(const SpiralSpec& spec, double t, Eigen::Vector2d& pos,
                         Eigen::Vector2d& vel, Eigen::Vector2d& acc) {
  const double u = std::clamp(t / spec.duration, 0.0, 1.0);
  double s, sd, sdd;
  quintic_step(u, s, sd, sdd);
  const double sweep = spec.angular_span * s;
  const double sweep_d = spec.angular_span * sd / spec.duration;
  const double sweep_dd = spec.angular_span * sdd / (spec.duration * spec.duration);

  const double dr = spec.growth_per_rev / (2.0 * kPi);  // dr/dsweep
  const double r = spec.start_radius + dr * sweep;
  const double phi = spec.start_angle + sweep;
  const Eigen::Vector2d u_r = unit_dir(phi);
  const Eigen::Vector2d u_t = perp(u_r);

  pos = spec.center + r * u_r;
  const Eigen::Vector2d dp_ds = dr * u_r + r * u_t;         // d pos / d sweep
  const Eigen::Vector2d d2p_ds2 = 2.0 * dr * u_t - r * u_r;
  vel = dp_ds * sweep_d;
  acc = d2p_ds2 * sweep_d * sweep_d + dp_ds * sweep_dd;
}

/// Reference TCP trajectory sampled on a collocation grid.
struct ReferenceTrajectory {
  spline::CollocationGrid grid;
  std::vector<Eigen::Vector2d> pos, vel, acc;
};

inline ReferenceTrajectory sample_spiral(const SpiralSpec& spec,
                                         const spline::CollocationGrid& grid) {
  spec.validate();
  grid.validate();
  if (grid.t_end() - grid.t0 > spec.duration + 1e-9)
    throw ConfigError("sample_spiral: grid extends past the spiral duration");
  ReferenceTrajectory ref;
  ref.grid = grid;
  ref.pos.resize(grid.points());
  ref.vel.resize(grid.points());
  ref.acc.resize(grid.points());
  for (int k = 0; k < grid.points(); ++k)
    spiral_point(spec, grid.time(k) - grid.t0, ref.pos[k], ref.vel[k], ref.acc[k]);
  return ref;
}

}  // namespace emlaopt::io
