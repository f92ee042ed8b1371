#pragma once

// Lagrange bases of degree 1 and 2 on the reference simplex, in barycentric
// form. Node order: vertices, then edge midpoints in local_edges() order.

#include <qlflow/common.hpp>
#include <qlflow/mesh.hpp>

#include <Eigen/Core>

namespace qlflow {

template <typename Scalar>
class LagrangeBasis {
 public:
  using Values = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, 10, 1>;
  using Gradients = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, 10>;

  LagrangeBasis(int degree, int dimension) : degree_(degree), dim_(dimension) {
    if (degree != 1 && degree != 2) throw Error("unsupported Lagrange degree " + std::to_string(degree));
    if (dimension != 2 && dimension != 3) throw Error("unsupported dimension " + std::to_string(dimension));
  }

  int degree() const { return degree_; }
  int dimension() const { return dim_; }
  int size() const {
    const int nv = dim_ + 1;
    return degree_ == 1 ? nv : nv + static_cast<int>(local_edges(dim_).size());
  }

  /// Reference coordinates of node i.
  VecX<Scalar> node(int i) const {
    VecX<Scalar> x = VecX<Scalar>::Zero(dim_);
    if (i <= dim_) {
      if (i > 0) x[i - 1] = Scalar(1);
      return x;
    }
    const auto& e = local_edges(dim_)[static_cast<std::size_t>(i - dim_ - 1)];
    for (int v : e) {
      if (v > 0) x[v - 1] += Scalar(0.5);
    }
    return x;
  }

  /// Basis values at barycentric point `lambda` (dimension + 1 entries).
  template <typename Derived>
  Values values(const Eigen::MatrixBase<Derived>& lambda) const {
    Values v(size());
    const int nv = dim_ + 1;
    if (degree_ == 1) {
      for (int i = 0; i < nv; ++i) v[i] = lambda[i];
      return v;
    }
    for (int i = 0; i < nv; ++i) v[i] = lambda[i] * (Scalar(2) * lambda[i] - Scalar(1));
    const auto& edges = local_edges(dim_);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      v[nv + static_cast<int>(e)] = Scalar(4) * lambda[edges[e][0]] * lambda[edges[e][1]];
    }
    return v;
  }

  /// Gradients with respect to reference coordinates; column i belongs to
  /// basis function i.
  template <typename Derived>
  Gradients gradients(const Eigen::MatrixBase<Derived>& lambda) const {
    Gradients g = Gradients::Zero(dim_, size());
    const int nv = dim_ + 1;
    // d(lambda_0)/dx = -1, d(lambda_i)/dx_j = delta_ij.
    auto dlambda = [this](int i) {
      VecX<Scalar> d = VecX<Scalar>::Zero(dim_);
      if (i == 0) {
        d.setConstant(Scalar(-1));
      } else {
        d[i - 1] = Scalar(1);
      }
      return d;
    };
    if (degree_ == 1) {
      for (int i = 0; i < nv; ++i) g.col(i) = dlambda(i);
      return g;
    }
    for (int i = 0; i < nv; ++i) g.col(i) = (Scalar(4) * lambda[i] - Scalar(1)) * dlambda(i);
    const auto& edges = local_edges(dim_);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const int a = edges[e][0];
      const int b = edges[e][1];
      g.col(nv + static_cast<int>(e)) = Scalar(4) * (lambda[b] * dlambda(a) + lambda[a] * dlambda(b));
    }
    return g;
  }

 private:
  int degree_;
  int dim_;
};

template <typename Scalar>
using BaryX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim + 1, 1>;

/// Barycentric coordinates of reference point x.
template <typename Scalar>
BaryX<Scalar> reference_to_barycentric(const VecX<Scalar>& x) {
  BaryX<Scalar> lambda(x.size() + 1);
  lambda[0] = Scalar(1) - x.sum();
  lambda.tail(x.size()) = x;
  return lambda;
}

}  // namespace qlflow
