#pragma once

#include <qlflow/common.hpp>

#include <Eigen/Core>

namespace qlflow {

/// Quadrature on the reference simplex {x_i >= 0, sum x_i <= 1}.
struct QuadratureRule {
  int dimension = 0;
  int degree = 0;
  /// Barycentric coordinates (dimension + 1 rows, one column per point);
  /// row 0 is 1 - sum(x), row i is x_i.
  Eigen::MatrixXd barycentric;
  /// Weights summing to the reference simplex measure (1, 1/2, 1/6).
  Eigen::VectorXd weights;

  Index size() const { return weights.size(); }
  /// Reference coordinates (x_1..x_d) of point q.
  Vec point(Index q) const { return barycentric.col(q).tail(dimension); }
};

/// Highest exactness degree available from quadrature().
inline constexpr int kMaxQuadratureDegree = 30;

/// Positive-weight rule on the reference simplex of the given dimension
/// (1, 2 or 3) exact for polynomials of total degree <= `degree`.
/// Built as a collapsed (conical) product of Gauss-Jacobi rules.
QuadratureRule quadrature(int dimension, int degree);

/// Gauss-Jacobi nodes/weights on [0, 1] for the weight (1 - x)^alpha.
void gauss_jacobi(int points, int alpha, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

}  // namespace qlflow
