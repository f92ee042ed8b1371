#pragma once

// P2/P1 Taylor-Hood dof layout on a SimplicialMesh.
//
// Velocity nodes are the mesh vertices followed by the edge midpoints; the
// velocity dof of (node, component) is component * node_count + node.
// Pressure dofs are the mesh vertices.

#include <qlflow/ale_map.hpp>
#include <qlflow/common.hpp>
#include <qlflow/mesh.hpp>

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <vector>

namespace qlflow {

enum class DofClass { interior, noslip, dirichlet, neumann };

struct NodeClass {
  DofClass kind = DofClass::interior;
  int patch = 0;

  bool constrained() const { return kind == DofClass::noslip || kind == DofClass::dirichlet; }
  bool operator==(const NodeClass&) const = default;
};

using LocalNodes = Eigen::Matrix<int, Eigen::Dynamic, 1, Eigen::ColMajor, 10, 1>;

class TaylorHoodSpace {
 public:
  explicit TaylorHoodSpace(std::shared_ptr<const SimplicialMesh> mesh, int m = 1);

  const SimplicialMesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const SimplicialMesh>& mesh_ptr() const { return mesh_; }
  int dimension() const { return mesh_->dimension(); }
  int degree() const { return m_; }

  Index node_count() const { return mesh_->vertex_count() + mesh_->edge_count(); }
  Index velocity_dof_count() const { return dimension() * node_count(); }
  Index pressure_dof_count() const { return mesh_->vertex_count(); }
  Index velocity_dof(Index node, int component) const { return component * node_count() + node; }

  /// Reference coordinates of a velocity node.
  Vec node_position(Index node) const;
  /// Velocity nodes of cell c in local basis order (vertices, then edges).
  LocalNodes cell_nodes(Index c) const;
  /// Velocity nodes on boundary facet f: its vertices, then its edges.
  LocalNodes facet_nodes(Index f) const;
  /// Some cell containing the node.
  Index cell_of_node(Index node) const { return node_cells_[node]; }

  /// Boundary class of each velocity node; precedence noslip > dirichlet > neumann.
  const std::vector<NodeClass>& node_classes() const { return node_classes_; }
  bool has_neumann() const { return has_neumann_; }
  /// Number of constrained-label disagreements resolved by precedence.
  Index conflict_count() const { return conflicts_; }
  /// Area-weighted averaged outward unit normals at boundary nodes (zero elsewhere).
  const Eigen::MatrixXd& boundary_normals() const { return normals_; }

 private:
  std::shared_ptr<const SimplicialMesh> mesh_;
  int m_;
  Eigen::VectorXi node_cells_;
  std::vector<NodeClass> node_classes_;
  Eigen::MatrixXd normals_;
  bool has_neumann_ = false;
  Index conflicts_ = 0;
};

using SpacePtr = std::shared_ptr<const TaylorHoodSpace>;

/// Outward unit normal and measure of boundary facet f in reference coordinates.
struct FacetGeometry {
  Vec normal;
  double measure = 0.0;
};
FacetGeometry facet_geometry(const SimplicialMesh& mesh, Index f);

/// Barycentric coordinates in the adjacent cell of a point given in the
/// barycentric coordinates `mu` of boundary facet f (unused entries zero).
Eigen::Vector4d facet_to_cell(const SimplicialMesh& mesh, Index f, const Eigen::Ref<const Eigen::VectorXd>& mu);
/// Factor turning reference-facet quadrature weights into weights on facet f.
double facet_weight_scale(const SimplicialMesh& mesh, Index f);

enum class FieldKind { velocity, pressure };

/// Coefficient vector attached to one of the two spaces.
struct DiscreteField {
  SpacePtr space;
  FieldKind kind = FieldKind::velocity;
  Eigen::VectorXd coefficients;

  static DiscreteField zero(SpacePtr space, FieldKind kind);

  /// Velocity coefficient of (node, component).
  double& at(Index node, int component) { return coefficients[space->velocity_dof(node, component)]; }
  double at(Index node, int component) const { return coefficients[space->velocity_dof(node, component)]; }
  Vec node_value(Index node) const;

  /// Value at barycentric point `lambda` of cell c.
  Vec value(Index c, const Eigen::Ref<const Eigen::VectorXd>& lambda) const;
};

/// Nodal interpolant; pressure fields use component 0 of `fn`.
DiscreteField interpolate(SpacePtr space, FieldKind kind, const std::function<Vec(const Vec&)>& fn);

/// I_h(xi_t(., t)) with cell hints so that cellwise maps evaluate inside the right cell.
DiscreteField interpolate_map_velocity(SpacePtr space, const SpaceTimeMap& map, double t);

/// I_h(v o xi(., t)) for a physical field v.
DiscreteField interpolate_physical(SpacePtr space, const SpaceTimeMap& map, double t, const SpaceTimeField& v);

}  // namespace qlflow
