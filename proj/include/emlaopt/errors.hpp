#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace emlaopt {

/// Non-finite or otherwise out-of-domain input.
class DomainError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Value violates configured limits (stroke, force, velocity, joint boxes).
class RangeError : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

/// Requested configuration is geometrically infeasible (triangle inequality broken).
class GeometryError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Configuration too close to a kinematic singularity.
class SingularityError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Model produced inconsistent outputs (NaN, nonpositive electrical power while motoring).
class ModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad dimensions, settings, or file contents.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Least-squares fit failed (rank-deficient basis).
class FitError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Reference trajectory leaves the reachable workspace; carries offending sample times.
class ReachabilityError : public std::runtime_error {
public:
  ReachabilityError(const std::string& what, std::vector<double> times)
      : std::runtime_error(what), offending_times(std::move(times)) {}
  std::vector<double> offending_times;
};

/// Solver breakdown; carries the last iterate for diagnostics.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, std::vector<double> iterate = {})
      : std::runtime_error(what), last_iterate(std::move(iterate)) {}
  std::vector<double> last_iterate;
};

/// File or parse problem.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace emlaopt
