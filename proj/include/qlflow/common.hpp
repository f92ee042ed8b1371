#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace qlflow {

/// Largest spatial dimension handled by the library.
inline constexpr int kMaxDim = 3;

using Index = Eigen::Index;

/// Dimension-dynamic small vector/matrix with inline storage (no heap).
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

using Vec = VecX<double>;
using Mat = MatX<double>;
/// Simplex vertex coordinates as columns (d x (d + 1)).
using SimplexMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim + 1>;

/// Vector-valued function of a (physical) position and time.
using SpaceTimeField = std::function<Vec(const Vec& x, double t)>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularMappingError : public Error {
 public:
  SingularMappingError(const Vec& x, double t, double jacobian);
  const Vec& point() const { return point_; }
  double time() const { return time_; }

 private:
  Vec point_;
  double time_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at position " + std::to_string(position) + ")"), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class MeshError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

std::string format_point(const Vec& x);

}  // namespace qlflow
