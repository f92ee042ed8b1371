#include <qlflow/space.hpp>
#include <qlflow/shape.hpp>

#include <Eigen/Geometry>

#include <cmath>

namespace qlflow {

namespace {

int rank(DofClass k) {
  switch (k) {
    case DofClass::noslip:
      return 3;
    case DofClass::dirichlet:
      return 2;
    case DofClass::neumann:
      return 1;
    case DofClass::interior:
      break;
  }
  return 0;
}

NodeClass to_class(const BoundaryLabel& l) {
  switch (l.kind) {
    case BoundaryKind::noslip:
      return {DofClass::noslip, 0};
    case BoundaryKind::dirichlet:
      return {DofClass::dirichlet, l.patch};
    case BoundaryKind::neumann:
      return {DofClass::neumann, l.patch};
  }
  return {};
}

// Local indices (within the adjacent cell) of the vertices of boundary facet f.
std::array<int, 3> facet_local_vertices(const SimplicialMesh& mesh, Index f) {
  std::array<int, 3> local{-1, -1, -1};
  const int opp = mesh.facet_opposite()[f];
  int n = 0;
  for (int k = 0; k <= mesh.dimension(); ++k) {
    if (k != opp) local[static_cast<std::size_t>(n++)] = k;
  }
  return local;
}

}  // namespace

FacetGeometry facet_geometry(const SimplicialMesh& mesh, Index f) {
  const int d = mesh.dimension();
  const Index c = mesh.facet_cells()[f];
  const SimplexMat x = mesh.cell_vertices(c);
  const auto local = facet_local_vertices(mesh, f);
  const Vec p0 = x.col(local[0]);
  const Vec p1 = x.col(local[1]);
  FacetGeometry g;
  if (d == 2) {
    const Vec e = p1 - p0;
    g.measure = e.norm();
    g.normal = Vec(2);
    g.normal << e[1], -e[0];
  } else {
    const Eigen::Vector3d a = p1 - p0;
    const Eigen::Vector3d b = Vec(x.col(local[2])) - p0;
    const Eigen::Vector3d n = a.cross(b);
    g.measure = 0.5 * n.norm();
    g.normal = n;
  }
  g.normal.normalize();
  if (g.normal.dot(Vec(x.col(mesh.facet_opposite()[f])) - p0) > 0.0) g.normal = -g.normal;
  return g;
}

// Cell barycentric coordinates of a point given in facet barycentric coordinates.
Eigen::Vector4d facet_to_cell(const SimplicialMesh& mesh, Index f, const Eigen::Ref<const Eigen::VectorXd>& mu) {
  Eigen::Vector4d lam = Eigen::Vector4d::Zero();
  const int opp = mesh.facet_opposite()[f];
  int j = 0;
  for (int k = 0; k <= mesh.dimension(); ++k) {
    if (k != opp) lam[k] = mu[j++];
  }
  return lam;
}

// Facet rule weights are scaled to the facet measure.
double facet_weight_scale(const SimplicialMesh& mesh, Index f) {
  const double measure = facet_geometry(mesh, f).measure;
  return mesh.dimension() == 2 ? measure : 2.0 * measure;
}

TaylorHoodSpace::TaylorHoodSpace(std::shared_ptr<const SimplicialMesh> mesh, int m) : mesh_(std::move(mesh)), m_(m) {
  if (!mesh_) throw Error("Taylor-Hood space needs a mesh");
  if (m != 1) throw Error("only m = 1 (P2/P1) is implemented");
  const SimplicialMesh& msh = *mesh_;
  const Index nv = msh.vertex_count();
  const Index nn = node_count();
  const int d = msh.dimension();

  node_cells_.resize(nn);
  node_cells_.head(nv) = msh.vertex_cells();
  for (Index c = 0; c < msh.cell_count(); ++c) {
    for (Index e = 0; e < msh.cell_edges().rows(); ++e) node_cells_[nv + msh.cell_edges()(e, c)] = static_cast<int>(c);
  }

  node_classes_.assign(static_cast<std::size_t>(nn), NodeClass{});
  normals_ = Eigen::MatrixXd::Zero(d, nn);
  for (Index f = 0; f < msh.boundary_facet_count(); ++f) {
    const NodeClass cls = to_class(msh.facet_labels()[static_cast<std::size_t>(f)]);
    if (cls.kind == DofClass::neumann) has_neumann_ = true;
    const FacetGeometry geo = facet_geometry(msh, f);
    const LocalNodes nodes = facet_nodes(f);
    for (Index k = 0; k < nodes.size(); ++k) {
      NodeClass& slot = node_classes_[static_cast<std::size_t>(nodes[k])];
      normals_.col(nodes[k]) += geo.measure * geo.normal;
      if (slot.kind == DofClass::interior) {
        slot = cls;
        continue;
      }
      if (slot == cls) continue;
      if (slot.constrained() && cls.constrained()) ++conflicts_;
      const int r_new = rank(cls.kind);
      const int r_old = rank(slot.kind);
      // Same kind, different patch: the smaller patch id wins.
      if (r_new > r_old || (r_new == r_old && cls.patch < slot.patch)) slot = cls;
    }
  }
  for (Index n = 0; n < nn; ++n) {
    const double len = normals_.col(n).norm();
    if (len > 0.0) normals_.col(n) /= len;
  }
}

Vec TaylorHoodSpace::node_position(Index node) const {
  const Index nv = mesh_->vertex_count();
  if (node < nv) return mesh_->vertex(node);
  const Index e = node - nv;
  return 0.5 * (mesh_->vertex(mesh_->edges()(0, e)) + mesh_->vertex(mesh_->edges()(1, e)));
}

LocalNodes TaylorHoodSpace::cell_nodes(Index c) const {
  const int d = dimension();
  const Index ne = mesh_->cell_edges().rows();
  LocalNodes n(d + 1 + ne);
  for (int k = 0; k <= d; ++k) n[k] = mesh_->cells()(k, c);
  for (Index e = 0; e < ne; ++e) n[d + 1 + e] = static_cast<int>(mesh_->vertex_count()) + mesh_->cell_edges()(e, c);
  return n;
}

LocalNodes TaylorHoodSpace::facet_nodes(Index f) const {
  const int d = dimension();
  const Index c = mesh_->facet_cells()[f];
  const int opp = mesh_->facet_opposite()[f];
  const auto& le = local_edges(d);
  LocalNodes n(d == 2 ? 3 : 6);
  Index k = 0;
  for (int v = 0; v <= d; ++v) {
    if (v != opp) n[k++] = mesh_->cells()(v, c);
  }
  for (std::size_t e = 0; e < le.size(); ++e) {
    if (le[e][0] != opp && le[e][1] != opp) {
      n[k++] = static_cast<int>(mesh_->vertex_count()) + mesh_->cell_edges()(static_cast<Index>(e), c);
    }
  }
  return n;
}

DiscreteField DiscreteField::zero(SpacePtr space, FieldKind kind) {
  const Index n = kind == FieldKind::velocity ? space->velocity_dof_count() : space->pressure_dof_count();
  return {std::move(space), kind, Eigen::VectorXd::Zero(n)};
}

Vec DiscreteField::node_value(Index node) const {
  if (kind == FieldKind::pressure) return Vec::Constant(1, coefficients[node]);
  const int d = space->dimension();
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = at(node, i);
  return v;
}

Vec DiscreteField::value(Index c, const Eigen::Ref<const Eigen::VectorXd>& lambda) const {
  const int d = space->dimension();
  if (kind == FieldKind::pressure) {
    double p = 0.0;
    for (int k = 0; k <= d; ++k) p += lambda[k] * coefficients[space->mesh().cells()(k, c)];
    return Vec::Constant(1, p);
  }
  const LagrangeBasis<double> basis(2, d);
  const auto phi = basis.values(lambda);
  const LocalNodes nodes = space->cell_nodes(c);
  Vec v = Vec::Zero(d);
  for (Index a = 0; a < nodes.size(); ++a) {
    for (int i = 0; i < d; ++i) v[i] += phi[a] * at(nodes[a], i);
  }
  return v;
}

namespace {

DiscreteField interpolate_nodes(SpacePtr space, FieldKind kind, const std::function<Vec(Index)>& at_node) {
  DiscreteField field = DiscreteField::zero(space, kind);
  const Index n = kind == FieldKind::velocity ? space->node_count() : space->pressure_dof_count();
  const int d = space->dimension();
  for (Index node = 0; node < n; ++node) {
    const Vec v = at_node(node);
    if (!v.allFinite()) {
      throw Error("non-finite value at node " + std::to_string(node) + " " +
                  format_point(space->node_position(node)));
    }
    if (kind == FieldKind::pressure) {
      field.coefficients[node] = v[0];
    } else {
      for (int i = 0; i < d; ++i) field.at(node, i) = v[i];
    }
  }
  return field;
}

}  // namespace

DiscreteField interpolate(SpacePtr space, FieldKind kind, const std::function<Vec(const Vec&)>& fn) {
  const TaylorHoodSpace& s = *space;
  return interpolate_nodes(std::move(space), kind, [&](Index node) { return fn(s.node_position(node)); });
}

DiscreteField interpolate_map_velocity(SpacePtr space, const SpaceTimeMap& map, double t) {
  const TaylorHoodSpace& s = *space;
  return interpolate_nodes(std::move(space), FieldKind::velocity, [&](Index node) {
    return map.jet(s.node_position(node), t, s.cell_of_node(node)).xi_t;
  });
}

DiscreteField interpolate_physical(SpacePtr space, const SpaceTimeMap& map, double t, const SpaceTimeField& v) {
  const TaylorHoodSpace& s = *space;
  return interpolate_nodes(std::move(space), FieldKind::velocity, [&](Index node) {
    return v(map.jet(s.node_position(node), t, s.cell_of_node(node)).position, t);
  });
}

}  // namespace qlflow
