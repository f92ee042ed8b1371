#pragma once

// Gmsh MSH 2.2 ASCII meshes.

#include <qlflow/mesh.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>

namespace qlflow::io {

/// Reads triangles (type 2) or tetrahedra (type 4) as cells and the facet-type
/// elements as labeled boundary facets. Facet labels come from `tags` (by
/// physical tag) and otherwise from default_gmsh_label. Points and lines that
/// are not facets are skipped with a warning. The result still has to go
/// through build_connectivity.
RawMesh read_gmsh(std::istream& in, const std::map<int, BoundaryLabel>& tags = {});
RawMesh read_gmsh(const std::filesystem::path& path, const std::map<int, BoundaryLabel>& tags = {});

/// Writes boundary facets (physical tag by default_gmsh_tag) followed by the
/// cells (physical tag 0).
void write_gmsh(std::ostream& out, const SimplicialMesh& mesh);
void write_gmsh(const std::filesystem::path& path, const SimplicialMesh& mesh);

}  // namespace qlflow::io
