#pragma once

#include <qlflow/common.hpp>

#include <Eigen/Core>

#include <array>
#include <compare>
#include <functional>
#include <string>
#include <vector>

namespace qlflow {

enum class BoundaryKind { noslip, dirichlet, neumann };

/// Label carried by a boundary facet. Patch ids distinguish dirichlet and
/// neumann patches; noslip ignores the patch.
struct BoundaryLabel {
  BoundaryKind kind = BoundaryKind::noslip;
  int patch = 0;

  static BoundaryLabel noslip() { return {BoundaryKind::noslip, 0}; }
  static BoundaryLabel dirichlet(int patch) { return {BoundaryKind::dirichlet, patch}; }
  static BoundaryLabel neumann(int patch) { return {BoundaryKind::neumann, patch}; }

  auto operator<=>(const BoundaryLabel&) const = default;
};

/// "noslip", "dirichlet:<patch>", "neumann:<patch>".
std::string to_string(const BoundaryLabel& label);
BoundaryLabel parse_boundary_label(const std::string& text);

/// Unvalidated mesh arrays (vertices are columns; cells and facets are columns
/// of vertex indices).
struct RawMesh {
  int dimension = 0;
  Eigen::MatrixXd vertices;
  Eigen::MatrixXi cells;
  Eigen::MatrixXi facets;
  std::vector<BoundaryLabel> facet_labels;
};

/// Reference-domain simplicial mesh (triangles or tetrahedra).
class SimplicialMesh {
 public:
  int dimension() const { return dim_; }
  Index vertex_count() const { return vertices_.cols(); }
  Index cell_count() const { return cells_.cols(); }
  Index edge_count() const { return edges_.cols(); }
  Index boundary_facet_count() const { return facets_.cols(); }

  const Eigen::MatrixXd& vertices() const { return vertices_; }
  Vec vertex(Index i) const { return vertices_.col(i); }
  const Eigen::MatrixXi& cells() const { return cells_; }
  /// Columns hold the two endpoints (smaller index first).
  const Eigen::MatrixXi& edges() const { return edges_; }
  /// Global edge index for each local edge of each cell (see local_edges()).
  const Eigen::MatrixXi& cell_edges() const { return cell_edges_; }
  const Eigen::MatrixXi& boundary_facets() const { return facets_; }
  const std::vector<BoundaryLabel>& facet_labels() const { return facet_labels_; }
  /// Cell adjacent to each boundary facet.
  const Eigen::VectorXi& facet_cells() const { return facet_cells_; }
  /// Local index (within its cell) of the vertex opposite each boundary facet.
  const Eigen::VectorXi& facet_opposite() const { return facet_opposite_; }
  /// Some cell containing each vertex.
  const Eigen::VectorXi& vertex_cells() const { return vertex_cells_; }

  /// Cell vertex coordinates as columns.
  SimplexMat cell_vertices(Index c) const;
  double cell_volume(Index c) const;
  double cell_diameter(Index c) const;
  double total_volume() const;
  bool has_label(BoundaryKind kind) const;
  /// Distinct labels in first-appearance order.
  std::vector<BoundaryLabel> labels() const;

  RawMesh to_raw() const;

 private:
  friend SimplicialMesh build_connectivity(const RawMesh& raw);

  int dim_ = 0;
  Eigen::MatrixXd vertices_;
  Eigen::MatrixXi cells_;
  Eigen::MatrixXi edges_;
  Eigen::MatrixXi cell_edges_;
  Eigen::MatrixXi facets_;
  std::vector<BoundaryLabel> facet_labels_;
  Eigen::VectorXi facet_cells_;
  Eigen::VectorXi facet_opposite_;
  Eigen::VectorXi vertex_cells_;
};

/// Local edge table of the reference simplex: triangles (0,1) (1,2) (0,2);
/// tetrahedra additionally (0,3) (1,3) (2,3).
const std::vector<std::array<int, 2>>& local_edges(int dimension);

/// Signed volume of a simplex whose vertices are the columns of `x`.
double signed_volume(const SimplexMat& x);

struct MeshQuality {
  double h_max = 0.0;
  double h_min = 0.0;
  double shape_regularity = 0.0;
  Index cell_count = 0;
  Index vertex_count = 0;
  Index edge_count = 0;
};

MeshQuality mesh_quality(const SimplicialMesh& mesh);

/// Validate raw arrays, orient cells positively, extract edges, and attach
/// boundary facets to their cells.
SimplicialMesh build_connectivity(const RawMesh& raw);

/// Boundary labels for the faces of an axis-aligned box, ordered
/// x-min, x-max, y-min, y-max[, z-min, z-max].
using BoxLabels = std::vector<BoundaryLabel>;

/// Structured box split into simplices (2 triangles per square, 6 tets per
/// cube sharing the main diagonal).
SimplicialMesh generate_box(int dimension, const std::vector<int>& divisions,
                            const std::vector<std::array<double, 2>>& extents,
                            const BoxLabels& labels);

struct TubeLabels {
  BoundaryLabel lateral = BoundaryLabel::noslip();
  BoundaryLabel inlet = BoundaryLabel::noslip();
  BoundaryLabel outlet = BoundaryLabel::neumann(0);
};

/// Tube around the x2 axis: a square cross-section grid with
/// `radial_divisions` cells per side mapped onto the disk, scaled to radius
/// r(x2), extruded over `y_range` in `axial_divisions` layers.
SimplicialMesh generate_tube(int axial_divisions, int radial_divisions,
                             const std::function<double(double)>& radius,
                             std::array<double, 2> y_range, const TubeLabels& labels = {});

/// Red refinement: 4 children per triangle, 8 per tetrahedron.
SimplicialMesh refine_uniform(const SimplicialMesh& mesh);

}  // namespace qlflow
