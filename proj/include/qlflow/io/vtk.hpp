#pragma once

// Legacy ASCII VTK output on the deformed mesh, plus a reader for the subset
// that write_vtk produces.

#include <qlflow/ale_map.hpp>
#include <qlflow/space.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace qlflow::io {

/// Q = 1/2 (|Omega|^2 - |S|^2) of the physical gradient grad(u) F^{-1},
/// evaluated per cell at each vertex and averaged over the cells at a vertex.
Eigen::VectorXd q_criterion(const DiscreteField& u, const SpaceTimeMap& map, double t);

/// Unstructured grid with points at xi(x, t) (mesh vertices only; edge dofs are
/// not written), VECTORS u and SCALARS p, optionally SCALARS q_criterion.
void write_vtk(const std::filesystem::path& path, const DiscreteField& u, const DiscreteField& p,
               const SpaceTimeMap& map, double t, bool with_q_criterion = true);

struct VtkData {
  /// 3 x n
  Eigen::MatrixXd points;
  std::vector<std::vector<int>> cells;
  std::vector<int> cell_types;
  /// Name -> components x n (VECTORS give 3 rows, SCALARS 1).
  std::map<std::string, Eigen::MatrixXd> point_data;
};

VtkData read_vtk(const std::filesystem::path& path);

}  // namespace qlflow::io
