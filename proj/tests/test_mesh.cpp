#include <doctest.h>

#include <qlflow/mesh.hpp>

#include <cmath>

using namespace qlflow;

namespace {

BoxLabels all_noslip(int d) { return BoxLabels(static_cast<std::size_t>(2 * d), BoundaryLabel::noslip()); }

SimplicialMesh unit_box(int d, int n) {
  return generate_box(d, std::vector<int>(static_cast<std::size_t>(d), n),
                      std::vector<std::array<double, 2>>(static_cast<std::size_t>(d), {0.0, 1.0}), all_noslip(d));
}

double tube_radius(double y) { return std::exp((y / 4.0 + 1.0) / 2.0); }

}  // namespace

TEST_CASE("labels round-trip through text") {
  for (const auto& l : {BoundaryLabel::noslip(), BoundaryLabel::dirichlet(3), BoundaryLabel::neumann(0)}) {
    CHECK(parse_boundary_label(to_string(l)) == l);
  }
  CHECK_THROWS_AS(parse_boundary_label("wall"), Error);
}

TEST_CASE("single reference tet") {
  RawMesh raw;
  raw.dimension = 3;
  raw.vertices = Eigen::MatrixXd(3, 4);
  raw.vertices << 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1;
  raw.cells = Eigen::MatrixXi(4, 1);
  raw.cells << 0, 1, 2, 3;
  raw.facets = Eigen::MatrixXi(3, 4);
  raw.facets << 1, 0, 0, 0, 2, 2, 1, 1, 3, 3, 3, 2;
  raw.facet_labels.assign(4, BoundaryLabel::noslip());
  const auto mesh = build_connectivity(raw);
  CHECK(mesh.edge_count() == 6);
  CHECK(mesh.cell_volume(0) == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("two-triangle square and index errors") {
  const auto mesh = unit_box(2, 1);
  CHECK(mesh.cell_count() == 2);
  CHECK(mesh.vertex_count() == 4);
  CHECK(mesh.edge_count() == 5);
  CHECK(mesh.boundary_facet_count() == 4);

  RawMesh raw = mesh.to_raw();
  raw.cells(0, 0) = 17;
  CHECK_THROWS_AS(build_connectivity(raw), MeshError);
}

TEST_CASE("orientation is fixed and degenerate cells rejected") {
  RawMesh raw = unit_box(2, 1).to_raw();
  std::swap(raw.cells(0, 0), raw.cells(1, 0));
  const auto mesh = build_connectivity(raw);
  for (Index c = 0; c < mesh.cell_count(); ++c) CHECK(mesh.cell_volume(c) > 0.0);

  RawMesh flat = raw;
  flat.vertices.col(2) = flat.vertices.col(0);
  CHECK_THROWS_AS(build_connectivity(flat), MeshError);
}

TEST_CASE("dangling boundary facet is rejected") {
  RawMesh raw = unit_box(2, 2).to_raw();
  raw.facets(0, 0) = 4;  // center vertex: not on any boundary face
  raw.facets(1, 0) = 0;
  CHECK_THROWS_AS(build_connectivity(raw), MeshError);
}

TEST_CASE("box sizes") {
  const auto cube = unit_box(3, 2);
  CHECK(cube.cell_count() == 48);
  CHECK(cube.vertex_count() == 27);
  CHECK(std::abs(cube.total_volume() - 1.0) < 1e-10);
  const auto q = mesh_quality(unit_box(2, 4));
  CHECK(q.h_max == doctest::Approx(std::sqrt(2.0) / 4.0));
  CHECK(q.h_min <= q.h_max);
  CHECK(q.shape_regularity >= std::sqrt(3.0) - 1e-12);
}

TEST_CASE("box faces carry their labels") {
  BoxLabels labels{BoundaryLabel::dirichlet(0), BoundaryLabel::neumann(1), BoundaryLabel::noslip(),
                   BoundaryLabel::noslip()};
  const auto mesh = generate_box(2, {3, 2}, {{{0.0, 3.0}}, {{0.0, 1.0}}}, labels);
  for (Index f = 0; f < mesh.boundary_facet_count(); ++f) {
    const Vec a = mesh.vertex(mesh.boundary_facets()(0, f));
    const Vec b = mesh.vertex(mesh.boundary_facets()(1, f));
    const auto& l = mesh.facet_labels()[static_cast<std::size_t>(f)];
    if (a[0] == 0.0 && b[0] == 0.0) CHECK(l == BoundaryLabel::dirichlet(0));
    if (a[0] == 3.0 && b[0] == 3.0) CHECK(l == BoundaryLabel::neumann(1));
  }
}

TEST_CASE("tube lateral nodes lie on the radius") {
  SUBCASE("unit radius") {
    const auto mesh = generate_tube(3, 4, [](double) { return 1.0; }, {0.0, 1.0});
    for (Index f = 0; f < mesh.boundary_facet_count(); ++f) {
      if (mesh.facet_labels()[static_cast<std::size_t>(f)] != BoundaryLabel::noslip()) continue;
      for (int k = 0; k < 3; ++k) {
        const Vec x = mesh.vertex(mesh.boundary_facets()(k, f));
        if (x[1] == 0.0) continue;  // inlet disk
        CHECK(std::abs(std::hypot(x[0], x[2]) - 1.0) < 1e-12);
      }
    }
  }
  SUBCASE("varying radius") {
    const auto mesh = generate_tube(8, 3, tube_radius, {-4.0, 4.0});
    const auto& labels = mesh.facet_labels();
    for (Index f = 0; f < mesh.boundary_facet_count(); ++f) {
      if (labels[static_cast<std::size_t>(f)].kind == BoundaryKind::neumann) continue;
      const Vec a = mesh.vertex(mesh.boundary_facets()(0, f));
      const Vec b = mesh.vertex(mesh.boundary_facets()(1, f));
      const Vec c = mesh.vertex(mesh.boundary_facets()(2, f));
      if (a[1] == -4.0 && b[1] == -4.0 && c[1] == -4.0) continue;
      for (const Vec& x : {a, b, c}) CHECK(std::abs(std::hypot(x[0], x[2]) - tube_radius(x[1])) < 1e-12);
    }
    CHECK(mesh.has_label(BoundaryKind::neumann));
  }
  CHECK_THROWS_AS(generate_tube(3, 0, tube_radius, {-4.0, 4.0}), MeshError);
}

TEST_CASE("tube volume converges under refinement") {
  // exact volume: pi * int r^2 dy = pi * int e^{y/4+1} dy over [-4, 4]
  const double exact = M_PI * 4.0 * (std::exp(2.0) - 1.0);
  auto mesh = generate_tube(4, 2, tube_radius, {-4.0, 4.0});
  double previous = std::abs(mesh.total_volume() - exact);
  for (int level = 0; level < 2; ++level) {
    mesh = generate_tube(4 << (level + 1), 2 << (level + 1), tube_radius, {-4.0, 4.0});
    const double err = std::abs(mesh.total_volume() - exact);
    CHECK(err < previous);
    previous = err;
  }
}

TEST_CASE("uniform refinement counts") {
  const auto square = unit_box(2, 1);
  const auto r1 = refine_uniform(square);
  CHECK(r1.cell_count() == 8);
  CHECK(r1.vertex_count() == 9);
  CHECK(refine_uniform(r1).cell_count() == 32);

  RawMesh raw;
  raw.dimension = 3;
  raw.vertices = Eigen::MatrixXd(3, 4);
  raw.vertices << 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1;
  raw.cells = Eigen::MatrixXi(4, 1);
  raw.cells << 0, 1, 2, 3;
  raw.facets = Eigen::MatrixXi(3, 4);
  raw.facets << 1, 0, 0, 0, 2, 2, 1, 1, 3, 3, 3, 2;
  raw.facet_labels.assign(4, BoundaryLabel::noslip());
  const auto tet = refine_uniform(build_connectivity(raw));
  CHECK(tet.cell_count() == 8);
  CHECK(tet.vertex_count() == 10);
  CHECK(std::abs(tet.total_volume() - 1.0 / 6.0) < 1e-14);
}

TEST_CASE("refinement halves h and inherits labels") {
  BoxLabels labels{BoundaryLabel::dirichlet(0), BoundaryLabel::neumann(1), BoundaryLabel::noslip(),
                   BoundaryLabel::noslip(), BoundaryLabel::dirichlet(2), BoundaryLabel::dirichlet(2)};
  const auto mesh = generate_box(3, {2, 2, 2}, {{{0, 1}}, {{0, 1}}, {{0, 1}}}, labels);
  const auto fine = refine_uniform(mesh);
  CHECK(mesh_quality(fine).h_max == doctest::Approx(mesh_quality(mesh).h_max / 2));
  CHECK(std::abs(fine.total_volume() - 1.0) < 1e-10);
  for (Index f = 0; f < fine.boundary_facet_count(); ++f) {
    Vec centroid = Vec::Zero(3);
    for (int k = 0; k < 3; ++k) centroid += fine.vertex(fine.boundary_facets()(k, f)) / 3.0;
    const auto& l = fine.facet_labels()[static_cast<std::size_t>(f)];
    if (centroid[0] < 1e-12) CHECK(l == BoundaryLabel::dirichlet(0));
    if (centroid[0] > 1 - 1e-12) CHECK(l == BoundaryLabel::neumann(1));
  }
}

TEST_CASE("rebuilding from own output is idempotent") {
  const auto mesh = refine_uniform(generate_tube(2, 2, tube_radius, {-4.0, 4.0}));
  const auto again = build_connectivity(mesh.to_raw());
  CHECK(again.cells() == mesh.cells());
  CHECK(again.edges() == mesh.edges());
  CHECK(again.boundary_facets() == mesh.boundary_facets());
  CHECK(again.facet_labels() == mesh.facet_labels());
}
