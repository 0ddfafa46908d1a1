// Common numeric types, constants and error types shared by every module.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pdc {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;
/// Boolean Gθ x Gτ grid mask.
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kPi = 3.14159265358979323846;
/// Propagation speed used by the geometry model [m/s].
inline constexpr double kSpeedOfLight = 3.0e8;

/// Argument outside the domain of a physical model (angle beyond the array span, negative delay, ...).
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Inconsistent placement of users, scatterers or sectors.
class geometry_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch or otherwise malformed input.
class shape_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Iterative method produced a non-finite value.
class numerical_failure : public std::runtime_error {
 public:
  numerical_failure(const std::string& what, long iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

/// Malformed configuration or input file.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

}  // namespace pdc
