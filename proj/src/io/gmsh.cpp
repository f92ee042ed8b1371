#include <qlflow/io/gmsh.hpp>

#include <qlflow/io/config.hpp>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <array>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace qlflow::io {

namespace {

constexpr int kPoint = 15;
constexpr int kLine = 1;
constexpr int kTriangle = 2;
constexpr int kTetrahedron = 4;

int node_count(int type) {
  switch (type) {
    case kPoint:
      return 1;
    case kLine:
      return 2;
    case kTriangle:
      return 3;
    case kTetrahedron:
      return 4;
    default:
      return -1;
  }
}

struct Element {
  long id = 0;
  int type = 0;
  int physical = 0;
  bool tagged = false;
  std::vector<long> nodes;
};

void expect_line(std::istream& in, const std::string& want) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line != want) throw MeshError("gmsh: expected '" + want + "', found '" + line + "'");
    return;
  }
  throw MeshError("gmsh: unexpected end of file, expected '" + want + "'");
}

}  // namespace

RawMesh read_gmsh(std::istream& in, const std::map<int, BoundaryLabel>& tags) {
  bool have_format = false;
  std::vector<long> node_ids;
  std::vector<std::array<double, 3>> coords;
  std::vector<Element> elements;

  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "$MeshFormat") {
      std::string version;
      int binary = 0;
      int size = 0;
      if (!(in >> version >> binary >> size)) throw MeshError("gmsh: malformed $MeshFormat");
      if (version != "2.2" && version != "2.2.0") throw MeshError("gmsh: unsupported version " + version + " (need 2.2)");
      if (binary != 0) throw MeshError("gmsh: binary files are not supported");
      std::getline(in, line);
      expect_line(in, "$EndMeshFormat");
      have_format = true;
    } else if (line == "$Nodes") {
      if (!have_format) throw MeshError("gmsh: $Nodes before $MeshFormat");
      long n = 0;
      if (!(in >> n) || n < 0) throw MeshError("gmsh: malformed node count");
      node_ids.resize(static_cast<std::size_t>(n));
      coords.resize(static_cast<std::size_t>(n));
      for (long i = 0; i < n; ++i) {
        auto& x = coords[static_cast<std::size_t>(i)];
        if (!(in >> node_ids[static_cast<std::size_t>(i)] >> x[0] >> x[1] >> x[2])) {
          throw MeshError("gmsh: malformed node " + std::to_string(i));
        }
      }
      std::getline(in, line);
      expect_line(in, "$EndNodes");
    } else if (line == "$Elements") {
      if (!have_format) throw MeshError("gmsh: $Elements before $MeshFormat");
      long n = 0;
      if (!(in >> n) || n < 0) throw MeshError("gmsh: malformed element count");
      elements.reserve(static_cast<std::size_t>(n));
      for (long i = 0; i < n; ++i) {
        Element e;
        int ntags = 0;
        if (!(in >> e.id >> e.type >> ntags) || ntags < 0) throw MeshError("gmsh: malformed element " + std::to_string(i));
        for (int k = 0; k < ntags; ++k) {
          int tag = 0;
          if (!(in >> tag)) throw MeshError("gmsh: malformed tags of element " + std::to_string(e.id));
          if (k == 0) {
            e.physical = tag;
            e.tagged = true;
          }
        }
        const int nn = node_count(e.type);
        if (nn < 0) throw MeshError("gmsh: element " + std::to_string(e.id) + " has unsupported type " + std::to_string(e.type));
        e.nodes.resize(static_cast<std::size_t>(nn));
        for (auto& v : e.nodes) {
          if (!(in >> v)) throw MeshError("gmsh: malformed nodes of element " + std::to_string(e.id));
        }
        elements.push_back(std::move(e));
      }
      std::getline(in, line);
      expect_line(in, "$EndElements");
    } else if (line.size() > 1 && line[0] == '$') {
      // Unknown section ($PhysicalNames, ...): skip to its end marker.
      const std::string section = line;
      const std::string end = "$End" + line.substr(1);
      bool closed = false;
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == end) {
          closed = true;
          break;
        }
      }
      if (!closed) throw MeshError("gmsh: section " + section + " is not closed");
    } else {
      throw MeshError("gmsh: unexpected line '" + line + "'");
    }
  }
  if (!have_format) throw MeshError("gmsh: missing $MeshFormat");

  int dim = 0;
  for (const auto& e : elements) {
    if (e.type == kTetrahedron) dim = 3;
    if (e.type == kTriangle && dim < 2) dim = 2;
  }
  if (dim == 0) throw MeshError("gmsh: no triangle or tetrahedron elements");
  const int cell_type = dim == 3 ? kTetrahedron : kTriangle;
  const int facet_type = dim == 3 ? kTriangle : kLine;

  std::unordered_map<long, int> index;
  index.reserve(node_ids.size());
  for (std::size_t i = 0; i < node_ids.size(); ++i) {
    if (!index.emplace(node_ids[i], static_cast<int>(i)).second) {
      throw MeshError("gmsh: duplicate node id " + std::to_string(node_ids[i]));
    }
  }
  auto lookup = [&index](const Element& e, long id) {
    auto it = index.find(id);
    if (it == index.end()) {
      throw MeshError("gmsh: element " + std::to_string(e.id) + " references unknown node " + std::to_string(id));
    }
    return it->second;
  };
  auto label_of = [&tags](int physical) -> std::optional<BoundaryLabel> {
    auto it = tags.find(physical);
    if (it != tags.end()) return it->second;
    return default_gmsh_label(physical);
  };

  RawMesh raw;
  raw.dimension = dim;
  raw.vertices.resize(dim, static_cast<Index>(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (int k = 0; k < dim; ++k) raw.vertices(k, static_cast<Index>(i)) = coords[i][static_cast<std::size_t>(k)];
  }

  std::vector<const Element*> cells;
  std::vector<const Element*> facets;
  Index skipped = 0;
  for (const auto& e : elements) {
    if (e.type == cell_type) {
      cells.push_back(&e);
    } else if (e.type == facet_type) {
      if (!e.tagged) throw MeshError("gmsh: boundary element " + std::to_string(e.id) + " has no physical tag");
      if (!label_of(e.physical)) {
        throw MeshError("gmsh: physical tag " + std::to_string(e.physical) + " of boundary element " +
                        std::to_string(e.id) + " has no label");
      }
      facets.push_back(&e);
    } else {
      if (e.tagged && tags.count(e.physical)) {
        throw MeshError("gmsh: element " + std::to_string(e.id) + " carries boundary tag " +
                        std::to_string(e.physical) + " but is not a boundary facet");
      }
      ++skipped;
    }
  }
  if (skipped) spdlog::warn("gmsh: skipped {} point/line elements that are not boundary facets", skipped);

  raw.cells.resize(dim + 1, static_cast<Index>(cells.size()));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (int k = 0; k <= dim; ++k) raw.cells(k, static_cast<Index>(c)) = lookup(*cells[c], cells[c]->nodes[static_cast<std::size_t>(k)]);
  }
  raw.facets.resize(dim, static_cast<Index>(facets.size()));
  for (std::size_t f = 0; f < facets.size(); ++f) {
    for (int k = 0; k < dim; ++k) raw.facets(k, static_cast<Index>(f)) = lookup(*facets[f], facets[f]->nodes[static_cast<std::size_t>(k)]);
    raw.facet_labels.push_back(*label_of(facets[f]->physical));
  }
  return raw;
}

RawMesh read_gmsh(const std::filesystem::path& path, const std::map<int, BoundaryLabel>& tags) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open " + path.string());
  return read_gmsh(in, tags);
}

void write_gmsh(std::ostream& out, const SimplicialMesh& mesh) {
  const int d = mesh.dimension();
  out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n" << mesh.vertex_count() << "\n";
  for (Index v = 0; v < mesh.vertex_count(); ++v) {
    out << v + 1;
    for (int k = 0; k < 3; ++k) out << fmt::format(" {:.17g}", k < d ? mesh.vertices()(k, v) : 0.0);
    out << "\n";
  }
  out << "$EndNodes\n$Elements\n" << mesh.boundary_facet_count() + mesh.cell_count() << "\n";
  Index id = 1;
  const int facet_type = d == 3 ? kTriangle : kLine;
  for (Index f = 0; f < mesh.boundary_facet_count(); ++f) {
    const int tag = default_gmsh_tag(mesh.facet_labels()[static_cast<std::size_t>(f)]);
    out << id++ << " " << facet_type << " 2 " << tag << " " << tag;
    for (int k = 0; k < d; ++k) out << " " << mesh.boundary_facets()(k, f) + 1;
    out << "\n";
  }
  const int cell_type = d == 3 ? kTetrahedron : kTriangle;
  for (Index c = 0; c < mesh.cell_count(); ++c) {
    out << id++ << " " << cell_type << " 2 0 0";
    for (int k = 0; k <= d; ++k) out << " " << mesh.cells()(k, c) + 1;
    out << "\n";
  }
  out << "$EndElements\n";
}

void write_gmsh(const std::filesystem::path& path, const SimplicialMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_gmsh(out, mesh);
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace qlflow::io
