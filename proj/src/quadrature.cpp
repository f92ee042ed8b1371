#include <qlflow/quadrature.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <mutex>

namespace qlflow {

// Golub-Welsch on the Jacobi matrix of P_n^{(alpha, 0)}, mapped from [-1, 1].
void gauss_jacobi(int points, int alpha, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  const int n = points;
  const double a = alpha;
  const double b = 0.0;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    const double s = 2.0 * k + a + b;
    jac(k, k) = (k == 0) ? (b - a) / (a + b + 2.0) : (b * b - a * a) / (s * (s + 2.0));
    if (k + 1 < n) {
      const double m = k + 1.0;
      const double s1 = 2.0 * m + a + b;
      const double off = std::sqrt(4.0 * m * (m + a) * (m + b) * (m + a + b) /
                                   (s1 * s1 * (s1 + 1.0) * (s1 - 1.0)));
      jac(k, k + 1) = off;
      jac(k + 1, k) = off;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  // mu0 = int_{-1}^{1} (1 - x)^alpha dx = 2^{alpha+1} / (alpha + 1)
  const double mu0 = std::pow(2.0, a + 1.0) / (a + 1.0);
  nodes.resize(n);
  weights.resize(n);
  for (int k = 0; k < n; ++k) {
    const double v0 = es.eigenvectors()(0, k);
    nodes[k] = 0.5 * (1.0 + es.eigenvalues()[k]);
    weights[k] = mu0 * v0 * v0 / std::pow(2.0, a + 1.0);
  }
}

namespace {

QuadratureRule build_rule(int dim, int degree) {
  const int n = degree / 2 + 1;  // 2n - 1 >= degree
  QuadratureRule rule;
  rule.dimension = dim;
  rule.degree = degree;
  std::vector<Eigen::VectorXd> x(static_cast<std::size_t>(dim)), w(static_cast<std::size_t>(dim));
  // Direction k carries the collapse weight (1 - s)^k.
  for (int k = 0; k < dim; ++k) gauss_jacobi(n, k, x[static_cast<std::size_t>(k)], w[static_cast<std::size_t>(k)]);

  const Index total = static_cast<Index>(std::pow(n, dim));
  rule.barycentric.resize(dim + 1, total);
  rule.weights.resize(total);
  for (Index q = 0; q < total; ++q) {
    Index rem = q;
    std::array<int, 3> idx{};
    for (int k = 0; k < dim; ++k) {
      idx[static_cast<std::size_t>(k)] = static_cast<int>(rem % n);
      rem /= n;
    }
    // Collapsed coordinates: peel the outermost direction first.
    Vec ref(dim);
    double scale = 1.0;
    double weight = 1.0;
    for (int k = dim - 1; k >= 0; --k) {
      const double s = x[static_cast<std::size_t>(k)][idx[static_cast<std::size_t>(k)]];
      weight *= w[static_cast<std::size_t>(k)][idx[static_cast<std::size_t>(k)]];
      ref[k] = scale * s;
      scale *= (1.0 - s);
    }
    rule.weights[q] = weight;
    rule.barycentric(0, q) = 1.0 - ref.sum();
    rule.barycentric.col(q).tail(dim) = ref;
  }
  return rule;
}

}  // namespace

QuadratureRule quadrature(int dimension, int degree) {
  if (dimension < 1 || dimension > 3) throw Error("quadrature dimension must be 1, 2 or 3");
  if (degree < 0 || degree > kMaxQuadratureDegree) {
    throw Error("unsupported quadrature degree " + std::to_string(degree));
  }
  static std::mutex mutex;
  static std::map<std::pair<int, int>, QuadratureRule> cache;
  const std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find({dimension, degree});
  if (it == cache.end()) it = cache.emplace(std::make_pair(dimension, degree), build_rule(dimension, degree)).first;
  return it->second;
}

}  // namespace qlflow
