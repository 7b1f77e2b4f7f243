#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace levi {

/// Largest spatial dimension supported by the small dense types.
inline constexpr int kMaxDim = 3;

template <class Scalar>
using MatrixD = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

template <class Scalar>
using VectorD = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxDim, 1>;

/// Symmetric d×d coefficient matrix, stack allocated.
using SymMat = MatrixD<double>;
/// Spatial point in R^d, stack allocated.
using Point = VectorD<double>;

/// A point (t, x) of space-time.
struct SpaceTimePoint {
  double t = 0.0;
  Point x;

  int dim() const { return static_cast<int>(x.size()); }
};

inline Point point(std::initializer_list<double> xs) {
  Point p(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double v : xs) p(i++) = v;
  return p;
}

inline Point point1(double x) {
  Point p(1);
  p(0) = x;
  return p;
}

/// Entrywise maximum norm, used for all coefficient differences.
template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.cwiseAbs().maxCoeff();
}

// Error hierarchy. Each category maps onto a distinct CLI exit code.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: dimensions, parameter ranges, malformed config.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical guard rail tripped: horizon exceeded, contraction lost,
/// non-Dini modulus, mass leakage.
class GuardRailError : public Error {
 public:
  using Error::Error;
};

/// A verification check failed its tolerance.
class VerificationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace levi
