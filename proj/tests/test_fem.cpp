#include <doctest.h>

#include <qlflow/assembly.hpp>
#include <qlflow/quadrature.hpp>
#include <qlflow/shape.hpp>
#include <qlflow/space.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace qlflow;

namespace {

std::shared_ptr<const SimplicialMesh> box(int d, int n, const BoxLabels& labels = {}) {
  const BoxLabels l = labels.empty() ? BoxLabels(static_cast<std::size_t>(2 * d), BoundaryLabel::noslip()) : labels;
  return std::make_shared<const SimplicialMesh>(
      generate_box(d, std::vector<int>(static_cast<std::size_t>(d), n),
                   std::vector<std::array<double, 2>>(static_cast<std::size_t>(d), {0.0, 1.0}), l));
}

SpacePtr space_on(std::shared_ptr<const SimplicialMesh> mesh) { return std::make_shared<const TaylorHoodSpace>(mesh); }

// Random vertex jitter keeps the mesh valid and breaks structure.
std::shared_ptr<const SimplicialMesh> jittered_box(int d, int n, unsigned seed) {
  RawMesh raw = box(d, n)->to_raw();
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-0.15 / n, 0.15 / n);
  for (Index v = 0; v < raw.vertices.cols(); ++v) {
    for (int i = 0; i < d; ++i) {
      const double x = raw.vertices(i, v);
      if (x > 1e-12 && x < 1 - 1e-12) raw.vertices(i, v) += u(rng);
    }
  }
  return std::make_shared<const SimplicialMesh>(build_connectivity(raw));
}

Eigen::VectorXd random_interior_vector(const TaylorHoodSpace& space, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(space.velocity_dof_count());
  for (Index node = 0; node < space.node_count(); ++node) {
    if (space.node_classes()[static_cast<std::size_t>(node)].kind != DofClass::interior) continue;
    for (int i = 0; i < space.dimension(); ++i) v[space.velocity_dof(node, i)] = u(rng);
  }
  return v;
}

DiscreteField random_field(const SpacePtr& space, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DiscreteField w = DiscreteField::zero(space, FieldKind::velocity);
  for (Index k = 0; k < w.coefficients.size(); ++k) w.coefficients[k] = u(rng);
  return w;
}

// Classical fixed-domain P2 blocks by direct tensor contraction.
struct NaiveBlocks {
  Eigen::MatrixXd mass, sym_stiffness, divergence;
};

NaiveBlocks naive_blocks(const TaylorHoodSpace& space) {
  const SimplicialMesh& mesh = space.mesh();
  const int d = space.dimension();
  const Index nu = space.velocity_dof_count();
  NaiveBlocks nb{Eigen::MatrixXd::Zero(nu, nu), Eigen::MatrixXd::Zero(nu, nu),
                 Eigen::MatrixXd::Zero(space.pressure_dof_count(), nu)};
  const QuadratureRule rule = quadrature(d, 6);
  const LagrangeBasis<double> basis(2, d);
  for (Index c = 0; c < mesh.cell_count(); ++c) {
    const SimplexMat X = mesh.cell_vertices(c);
    Eigen::MatrixXd G(d, d);
    for (int k = 0; k < d; ++k) G.col(k) = X.col(k + 1) - X.col(0);
    const double area = std::abs(G.determinant());
    const Eigen::MatrixXd GinvT = G.inverse().transpose();
    const LocalNodes nodes = space.cell_nodes(c);
    const int n = static_cast<int>(nodes.size());
    for (Index q = 0; q < rule.size(); ++q) {
      const Eigen::VectorXd lam = rule.barycentric.col(q);
      const Eigen::VectorXd phi = basis.values(lam);
      const Eigen::MatrixXd grad = GinvT * Eigen::MatrixXd(basis.gradients(lam));
      const double w = rule.weights[q] * area;
      for (int i = 0; i < d; ++i) {
        for (int a = 0; a < n; ++a) {
          Eigen::MatrixXd Ga = Eigen::MatrixXd::Zero(d, d);
          Ga.row(i) = grad.col(a).transpose();
          const Eigen::MatrixXd Da = 0.5 * (Ga + Ga.transpose());
          const Index r = space.velocity_dof(nodes[a], i);
          for (int k = 0; k <= d; ++k) nb.divergence(nodes[k], r) += w * lam[k] * Ga.trace();
          for (int j = 0; j < d; ++j) {
            for (int b = 0; b < n; ++b) {
              Eigen::MatrixXd Gb = Eigen::MatrixXd::Zero(d, d);
              Gb.row(j) = grad.col(b).transpose();
              const Eigen::MatrixXd Db = 0.5 * (Gb + Gb.transpose());
              const Index col = space.velocity_dof(nodes[b], j);
              if (i == j) nb.mass(r, col) += w * phi[a] * phi[b];
              nb.sym_stiffness(r, col) += w * 2.0 * (Da.cwiseProduct(Db)).sum();
            }
          }
        }
      }
    }
  }
  return nb;
}

}  // namespace

TEST_CASE("dof counts and node classification") {
  BoxLabels labels{BoundaryLabel::dirichlet(1), BoundaryLabel::neumann(0), BoundaryLabel::noslip(),
                   BoundaryLabel::noslip()};
  const auto mesh = box(2, 3, labels);
  const TaylorHoodSpace space(mesh);
  CHECK(space.velocity_dof_count() == (mesh->vertex_count() + mesh->edge_count()) * 2);
  CHECK(space.pressure_dof_count() == mesh->vertex_count());
  CHECK(space.has_neumann());
  for (Index node = 0; node < space.node_count(); ++node) {
    const Vec x = space.node_position(node);
    const NodeClass cls = space.node_classes()[static_cast<std::size_t>(node)];
    const bool on_wall = x[1] < 1e-12 || x[1] > 1 - 1e-12;
    if (on_wall) {
      CHECK(cls.kind == DofClass::noslip);  // wins at the corners too
    } else if (x[0] < 1e-12) {
      CHECK(cls == NodeClass{DofClass::dirichlet, 1});
    } else if (x[0] > 1 - 1e-12) {
      CHECK(cls.kind == DofClass::neumann);
    } else {
      CHECK(cls.kind == DofClass::interior);
    }
  }
  // 2 corners where dirichlet meets noslip
  CHECK(space.conflict_count() == 2);
}

TEST_CASE("identity map reduces to the classical blocks") {
  const auto mesh = box(2, 1);
  const auto space = space_on(mesh);
  const auto map = make_identity_map(2);
  const double dt = 0.1;
  const DiscreteField zero = DiscreteField::zero(space, FieldKind::velocity);
  StepData data;
  data.t_k = 0.1;
  data.dt = dt;
  data.w = &zero;
  data.u_prev = &zero;
  data.nu = 1.0;
  AssemblyOptions opt;
  opt.temam = false;
  const AssembledStep step = assemble_step(*space, *map, data, opt);
  const NaiveBlocks nb = naive_blocks(*space);
  const Eigen::MatrixXd expected = nb.mass / dt + nb.sym_stiffness;
  CHECK((Eigen::MatrixXd(step.A) - expected).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((Eigen::MatrixXd(step.B) - nb.divergence).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((Eigen::MatrixXd(mass_matrix(*space, *map, 0.3)) - nb.mass).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("SPD velocity block on interior dofs") {
  const auto space = space_on(box(2, 2));
  const auto map = make_identity_map(2);
  const DiscreteField zero = DiscreteField::zero(space, FieldKind::velocity);
  StepData data;
  data.t_k = 0.1;
  data.dt = 0.1;
  data.w = &zero;
  data.u_prev = &zero;
  const Eigen::MatrixXd A = assemble_step(*space, *map, data).A;
  std::vector<Index> interior;
  for (Index node = 0; node < space->node_count(); ++node) {
    if (space->node_classes()[static_cast<std::size_t>(node)].kind != DofClass::interior) continue;
    for (int i = 0; i < 2; ++i) interior.push_back(space->velocity_dof(node, i));
  }
  Eigen::MatrixXd Ai(interior.size(), interior.size());
  for (std::size_t r = 0; r < interior.size(); ++r) {
    for (std::size_t c = 0; c < interior.size(); ++c) Ai(static_cast<Index>(r), static_cast<Index>(c)) = A(interior[r], interior[c]);
  }
  CHECK((Ai - Ai.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ai);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("divergence form on the reference tet") {
  RawMesh raw;
  raw.dimension = 3;
  raw.vertices = Eigen::MatrixXd(3, 4);
  raw.vertices << 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1;
  raw.cells = Eigen::MatrixXi(4, 1);
  raw.cells << 0, 1, 2, 3;
  raw.facets = Eigen::MatrixXi(3, 4);
  raw.facets << 1, 0, 0, 0, 2, 2, 1, 1, 3, 3, 3, 2;
  raw.facet_labels.assign(4, BoundaryLabel::noslip());
  const auto space = space_on(std::make_shared<const SimplicialMesh>(build_connectivity(raw)));
  const auto map = make_identity_map(3);
  const SparseMatrix B = divergence_matrix(*space, *map, 0.0);
  const DiscreteField psi = interpolate(space, FieldKind::velocity, [](const Vec& x) {
    Vec v = Vec::Zero(3);
    v[0] = x[0] * x[0];
    return v;
  });
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(space->pressure_dof_count());
  CHECK(ones.dot(B * psi.coefficients) == doctest::Approx(1.0 / 12.0).epsilon(1e-13));
  const DiscreteField constant = interpolate(space, FieldKind::velocity, [](const Vec&) { return Vec::Ones(3); });
  CHECK((B * constant.coefficients).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("convection plus Temam is skew on boundary-vanishing fields") {
  std::mt19937 rng(2024);
  struct Case {
    int d;
    MapPtr map;
  };
  const std::vector<Case> cases{
      {2, make_identity_map(2)},
      {2, parse_map_expressions("x1 + 0.1*t*sin(x2); x2*(1 + 0.2*t*x1)", 2)},
      {3, make_tube_shrink_map()},
      {3, parse_map_expressions("x1*(1 + 0.1*t*x2); x2 + 0.05*t*x3^2; x3", 3)},
  };
  for (const auto& c : cases) {
    const auto space = space_on(jittered_box(c.d, 2, 11));
    for (int trial = 0; trial < 6; ++trial) {
      const DiscreteField w = random_field(space, rng);
      const SparseMatrix CT = convection_matrix(*space, *c.map, 0.3, w) + temam_matrix(*space, *c.map, 0.3, w);
      const Eigen::VectorXd v = random_interior_vector(*space, rng);
      const double scale = v.cwiseAbs().dot(convection_matrix(*space, *c.map, 0.3, w).cwiseAbs() * v.cwiseAbs());
      CHECK(std::abs(v.dot(CT * v)) <= 1e-10 * scale);
    }
  }
}

TEST_CASE("mass identity of the time difference") {
  std::mt19937 rng(5);
  const auto space = space_on(std::make_shared<const SimplicialMesh>(
      generate_tube(3, 2, [](double y) { return std::exp((y / 4 + 1) / 2); }, {-4.0, 4.0})));
  const auto map = make_tube_shrink_map();
  const double dt = 0.04;
  const double t = 0.12;
  const SparseMatrix Mk = mass_matrix(*space, *map, t);
  const SparseMatrix M1 = mass_matrix(*space, *map, t - dt);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd v = random_interior_vector(*space, rng);
    const Eigen::VectorXd vp = random_interior_vector(*space, rng);
    const Eigen::VectorXd dv = (v - vp) / dt;
    const double lhs = v.dot(M1 * dv);
    const double rhs = (v.dot(Mk * v) - vp.dot(M1 * vp)) / (2 * dt) - 0.5 * v.dot((Mk - M1) * v) / dt +
                       0.5 * dt * dv.dot(M1 * dv);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs));
  }
}

TEST_CASE("over-integration does not change blocks of affine-in-space maps") {
  std::mt19937 rng(9);
  for (const auto& map : {make_tube_shrink_map(), make_axis_scaling_map({"1 + t", "1", "1/(1 + t)"})}) {
    const auto space = space_on(jittered_box(3, 1, 3));
    const DiscreteField w = random_field(space, rng);
    const SparseMatrix a = convection_matrix(*space, *map, 0.2, w) + viscous_matrix(*space, *map, 0.2, 0.5, StressForm::symmetric);
    const SparseMatrix b = convection_matrix(*space, *map, 0.2, w, 7) +
                           viscous_matrix(*space, *map, 0.2, 0.5, StressForm::symmetric, 7);
    CHECK(Eigen::MatrixXd(a - b).cwiseAbs().maxCoeff() <= 1e-10 * Eigen::MatrixXd(a).cwiseAbs().maxCoeff());
  }
}

TEST_CASE("interpolation") {
  const auto space = space_on(jittered_box(2, 3, 4));
  auto quad = [](const Vec& x) {
    Vec v(2);
    v << 1 + x[0] - 2 * x[1] + x[0] * x[1] + 3 * x[0] * x[0], x[1] * x[1] - x[0];
    return v;
  };
  const DiscreteField f = interpolate(space, FieldKind::velocity, quad);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const Index c = static_cast<Index>(rng() % static_cast<unsigned>(space->mesh().cell_count()));
    Eigen::Vector3d lam(u(rng), u(rng), u(rng));
    lam /= lam.sum();
    const Vec x = space->mesh().cell_vertices(c) * lam;
    CHECK((f.value(c, lam) - quad(x)).norm() <= 1e-12);
  }
  const DiscreteField ones = interpolate(space, FieldKind::velocity, [](const Vec&) { return Vec::Ones(2); });
  CHECK((ones.coefficients.array() == 1.0).all());
  CHECK_THROWS_AS(interpolate(space, FieldKind::velocity, [](const Vec&) { return Vec::Constant(2, NAN); }), Error);

  const DiscreteField p = interpolate(space, FieldKind::pressure, [](const Vec& x) { return Vec::Constant(1, x[0] * x[1]); });
  const Eigen::Vector3d mid = Eigen::Vector3d::Constant(1.0 / 3.0);
  const Vec xm = space->mesh().cell_vertices(0) * mid;
  CHECK(std::abs(p.value(0, mid)[0] - xm[0] * xm[1]) > 1e-6);
}

TEST_CASE("boundary flux") {
  const auto space3 = space_on(box(3, 2));
  const auto id3 = make_identity_map(3);
  const DiscreteField c = interpolate(space3, FieldKind::velocity, [](const Vec&) {
    Vec v(3);
    v << 0.3, -1.2, 2.0;
    return v;
  });
  CHECK(std::abs(boundary_flux(*space3, *id3, 0.0, c)) <= 1e-12);
  CHECK(std::abs(boundary_flux_correction(*space3, *id3, 0.0, c)) <= 1e-12);
  const DiscreteField x = interpolate(space3, FieldKind::velocity, [](const Vec& p) { return p; });
  CHECK(boundary_flux(*space3, *id3, 0.0, x) == doctest::Approx(3.0).epsilon(1e-12));

  // Correction removes the flux exactly.
  const double cperp = boundary_flux_correction(*space3, *id3, 0.0, x);
  DiscreteField corrected = x;
  corrected.coefficients -= cperp * boundary_normal_field(space3).coefficients;
  CHECK(std::abs(boundary_flux(*space3, *id3, 0.0, corrected)) <= 1e-12);
}

TEST_CASE("flux defect of the interpolated wall velocity is high order") {
  // Volume-preserving motion of the unit square onto itself.
  const auto map = parse_map_expressions(
      "x1 + 0.1*t*pi*sin(pi*x1)*cos(pi*x2); x2 - 0.1*t*pi*cos(pi*x1)*sin(pi*x2)", 2);
  auto mesh = box(2, 4);
  std::vector<double> c;
  for (int level = 0; level < 3; ++level) {
    const auto space = space_on(mesh);
    const DiscreteField xi_t = interpolate_map_velocity(space, *map, 0.5);
    c.push_back(std::abs(boundary_flux_correction(*space, *map, 0.5, xi_t)));
    mesh = std::make_shared<const SimplicialMesh>(refine_uniform(*mesh));
  }
  for (std::size_t k = 1; k < c.size(); ++k) {
    if (c[k] < 1e-14) continue;
    CHECK(std::log2(c[k - 1] / c[k]) >= 2.7);
  }
}

TEST_CASE("threaded assembly is deterministic") {
  std::mt19937 rng(1);
  const auto space = space_on(jittered_box(3, 2, 8));
  const auto map = make_tube_shrink_map();
  const DiscreteField w = random_field(space, rng);
  StepData data;
  data.t_k = 0.1;
  data.dt = 0.05;
  data.w = &w;
  data.u_prev = &w;
  data.forcing = [](const Vec& x, double) { return Vec(x.array().sin()); };
  AssemblyOptions serial;
  AssemblyOptions parallel;
  parallel.threads = 4;
  const auto a = assemble_step(*space, *map, data, serial);
  const auto b = assemble_step(*space, *map, data, parallel);
  const auto b2 = assemble_step(*space, *map, data, parallel);
  CHECK(canonical_triplets(a.A) == canonical_triplets(b.A));
  CHECK(canonical_triplets(a.B) == canonical_triplets(b.B));
  CHECK(b.rhs_u == b2.rhs_u);
  CHECK((a.rhs_u - b.rhs_u).cwiseAbs().maxCoeff() <= 1e-14);
  const auto trips = canonical_triplets(a.A);
  for (std::size_t k = 1; k < trips.size(); ++k) {
    CHECK((trips[k - 1].row < trips[k].row || (trips[k - 1].row == trips[k].row && trips[k - 1].col < trips[k].col)));
  }
}

TEST_CASE("Smagorinsky viscosity") {
  Mat D = Mat::Zero(3, 3);
  CHECK(smagorinsky_viscosity(D, 1.0, 4.0, 0.2) == 4.0);
  D.diagonal() << 1, -1, 0;
  CHECK(smagorinsky_viscosity(D, 1.0, 4.0, 0.2) == doctest::Approx(4.08));
  const double added = smagorinsky_viscosity(D, 0.7, 1.0, 0.2) - 1.0;
  CHECK(smagorinsky_viscosity(Mat(3.0 * D), 0.7, 1.0, 0.2) - 1.0 == doctest::Approx(3.0 * added));
}
