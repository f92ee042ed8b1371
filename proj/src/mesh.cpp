#include <qlflow/mesh.hpp>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

namespace qlflow {

namespace {

using FaceKey = std::array<int, 3>;

struct FaceKeyHash {
  std::size_t operator()(const FaceKey& k) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (int v : k) h = (h ^ static_cast<std::size_t>(v)) * 1099511628211ull;
    return h;
  }
};

FaceKey face_key(std::array<int, 3> v, int n) {
  std::sort(v.begin(), v.begin() + n);
  if (n == 2) v[2] = -1;
  return v;
}

std::int64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::int64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

struct FaceRecord {
  int count = 0;
  int cell = -1;
  int opposite = -1;
};

// Faces of all cells, keyed by sorted vertex tuple.
std::unordered_map<FaceKey, FaceRecord, FaceKeyHash> enumerate_faces(int dim,
                                                                     const Eigen::MatrixXi& cells) {
  std::unordered_map<FaceKey, FaceRecord, FaceKeyHash> faces;
  faces.reserve(static_cast<std::size_t>(cells.cols()) * static_cast<std::size_t>(dim + 1));
  for (Index c = 0; c < cells.cols(); ++c) {
    for (int skip = 0; skip <= dim; ++skip) {
      std::array<int, 3> v{-1, -1, -1};
      int n = 0;
      for (int k = 0; k <= dim; ++k) {
        if (k != skip) v[static_cast<std::size_t>(n++)] = cells(k, c);
      }
      FaceRecord& r = faces[face_key(v, dim)];
      ++r.count;
      r.cell = static_cast<int>(c);
      r.opposite = skip;
    }
  }
  return faces;
}

// Faces appearing in exactly one cell, in cell-traversal order.
Eigen::MatrixXi exterior_faces(int dim, const Eigen::MatrixXi& cells) {
  const auto faces = enumerate_faces(dim, cells);
  std::vector<std::array<int, 3>> out;
  for (Index c = 0; c < cells.cols(); ++c) {
    for (int skip = 0; skip <= dim; ++skip) {
      std::array<int, 3> v{-1, -1, -1};
      int n = 0;
      for (int k = 0; k <= dim; ++k) {
        if (k != skip) v[static_cast<std::size_t>(n++)] = cells(k, c);
      }
      if (faces.at(face_key(v, dim)).count == 1) out.push_back(v);
    }
  }
  Eigen::MatrixXi m(dim, static_cast<Index>(out.size()));
  for (std::size_t f = 0; f < out.size(); ++f) {
    for (int k = 0; k < dim; ++k) m(k, static_cast<Index>(f)) = out[f][static_cast<std::size_t>(k)];
  }
  return m;
}

}  // namespace

std::string to_string(const BoundaryLabel& label) {
  switch (label.kind) {
    case BoundaryKind::noslip:
      return "noslip";
    case BoundaryKind::dirichlet:
      return "dirichlet:" + std::to_string(label.patch);
    case BoundaryKind::neumann:
      return "neumann:" + std::to_string(label.patch);
  }
  return "noslip";
}

BoundaryLabel parse_boundary_label(const std::string& text) {
  if (text == "noslip") return BoundaryLabel::noslip();
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  int patch = 0;
  if (colon != std::string::npos) {
    try {
      std::size_t used = 0;
      patch = std::stoi(text.substr(colon + 1), &used);
      if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error("invalid boundary label '" + text + "'");
    }
  }
  if (kind == "dirichlet") return BoundaryLabel::dirichlet(patch);
  if (kind == "neumann") return BoundaryLabel::neumann(patch);
  throw Error("invalid boundary label '" + text + "'");
}

const std::vector<std::array<int, 2>>& local_edges(int dimension) {
  static const std::vector<std::array<int, 2>> tri{{0, 1}, {1, 2}, {0, 2}};
  static const std::vector<std::array<int, 2>> tet{{0, 1}, {1, 2}, {0, 2}, {0, 3}, {1, 3}, {2, 3}};
  return dimension == 2 ? tri : tet;
}

double signed_volume(const SimplexMat& x) {
  const Index d = x.rows();
  Mat e(d, d);
  for (Index k = 0; k < d; ++k) e.col(k) = x.col(k + 1) - x.col(0);
  return e.determinant() / (d == 2 ? 2.0 : 6.0);
}

SimplexMat SimplicialMesh::cell_vertices(Index c) const {
  SimplexMat x(dim_, dim_ + 1);
  for (int k = 0; k <= dim_; ++k) x.col(k) = vertices_.col(cells_(k, c));
  return x;
}

double SimplicialMesh::cell_volume(Index c) const { return signed_volume(cell_vertices(c)); }

double SimplicialMesh::cell_diameter(Index c) const {
  const SimplexMat x = cell_vertices(c);
  double h = 0.0;
  for (int a = 0; a <= dim_; ++a) {
    for (int b = a + 1; b <= dim_; ++b) h = std::max(h, (x.col(a) - x.col(b)).norm());
  }
  return h;
}

double SimplicialMesh::total_volume() const {
  double v = 0.0;
  for (Index c = 0; c < cell_count(); ++c) v += cell_volume(c);
  return v;
}

bool SimplicialMesh::has_label(BoundaryKind kind) const {
  return std::any_of(facet_labels_.begin(), facet_labels_.end(),
                     [kind](const BoundaryLabel& l) { return l.kind == kind; });
}

std::vector<BoundaryLabel> SimplicialMesh::labels() const {
  std::vector<BoundaryLabel> out;
  for (const auto& l : facet_labels_) {
    if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
  }
  return out;
}

RawMesh SimplicialMesh::to_raw() const {
  return RawMesh{dim_, vertices_, cells_, facets_, facet_labels_};
}

SimplicialMesh build_connectivity(const RawMesh& raw) {
  const int d = raw.dimension;
  if (d != 2 && d != 3) throw MeshError("mesh dimension must be 2 or 3");
  if (raw.vertices.rows() != d) throw MeshError("vertex coordinates do not match the dimension");
  if (raw.cells.rows() != d + 1) throw MeshError("cells must have dimension + 1 vertices");
  if (raw.cells.cols() == 0) throw MeshError("mesh has no cells");
  if (raw.facets.cols() > 0 && raw.facets.rows() != d) {
    throw MeshError("boundary facets must have dimension vertices");
  }
  if (static_cast<Index>(raw.facet_labels.size()) != raw.facets.cols()) {
    throw MeshError("one label is required per boundary facet");
  }
  const Index nv = raw.vertices.cols();
  auto check_index = [nv](int v, const char* what, Index item) {
    if (v < 0 || v >= nv) {
      throw MeshError(std::string(what) + " " + std::to_string(item) + " references vertex " +
                      std::to_string(v) + " out of range [0, " + std::to_string(nv) + ")");
    }
  };

  SimplicialMesh mesh;
  mesh.dim_ = d;
  mesh.vertices_ = raw.vertices;
  mesh.cells_ = raw.cells;

  for (Index c = 0; c < mesh.cells_.cols(); ++c) {
    for (int k = 0; k <= d; ++k) check_index(mesh.cells_(k, c), "cell", c);
    const SimplexMat x = mesh.cell_vertices(c);
    double h = 0.0;
    for (int a = 1; a <= d; ++a) h = std::max(h, (x.col(a) - x.col(0)).norm());
    const double vol = signed_volume(x);
    if (!(std::abs(vol) > 1e-12 * std::pow(h, d))) {
      throw MeshError("cell " + std::to_string(c) + " has zero volume");
    }
    if (vol < 0.0) std::swap(mesh.cells_(0, c), mesh.cells_(1, c));
  }

  auto faces = enumerate_faces(d, mesh.cells_);
  for (const auto& [key, rec] : faces) {
    if (rec.count > 2) throw MeshError("non-manifold facet shared by " + std::to_string(rec.count) + " cells");
  }

  mesh.facets_ = raw.facets;
  mesh.facet_labels_ = raw.facet_labels;
  const Index nf = raw.facets.cols();
  mesh.facet_cells_.resize(nf);
  mesh.facet_opposite_.resize(nf);
  for (Index f = 0; f < nf; ++f) {
    std::array<int, 3> v{-1, -1, -1};
    for (int k = 0; k < d; ++k) {
      check_index(raw.facets(k, f), "boundary facet", f);
      v[static_cast<std::size_t>(k)] = raw.facets(k, f);
    }
    auto it = faces.find(face_key(v, d));
    if (it == faces.end()) {
      throw MeshError("boundary facet " + std::to_string(f) + " is not a face of any cell");
    }
    if (it->second.count != 1) {
      throw MeshError("boundary facet " + std::to_string(f) + " is an interior facet");
    }
    if (it->second.cell < 0) throw MeshError("boundary facet " + std::to_string(f) + " is listed twice");
    mesh.facet_cells_[f] = it->second.cell;
    // Locate the opposite vertex in the (possibly reoriented) cell.
    const int cell = it->second.cell;
    for (int k = 0; k <= d; ++k) {
      const int vk = mesh.cells_(k, cell);
      if (std::find(v.begin(), v.begin() + d, vk) == v.begin() + d) mesh.facet_opposite_[f] = k;
    }
    it->second.cell = -1;  // consumed
  }
  for (const auto& [key, rec] : faces) {
    if (rec.count == 1 && rec.cell >= 0) throw MeshError("unlabeled boundary facet");
  }

  const auto& le = local_edges(d);
  mesh.cell_edges_.resize(static_cast<Index>(le.size()), mesh.cells_.cols());
  std::unordered_map<std::int64_t, int> edge_index;
  edge_index.reserve(static_cast<std::size_t>(mesh.cells_.cols()) * le.size());
  std::vector<std::array<int, 2>> edges;
  for (Index c = 0; c < mesh.cells_.cols(); ++c) {
    for (std::size_t e = 0; e < le.size(); ++e) {
      const int a = mesh.cells_(le[e][0], c);
      const int b = mesh.cells_(le[e][1], c);
      auto [it, inserted] = edge_index.try_emplace(edge_key(a, b), static_cast<int>(edges.size()));
      if (inserted) edges.push_back({std::min(a, b), std::max(a, b)});
      mesh.cell_edges_(static_cast<Index>(e), c) = it->second;
    }
  }
  mesh.edges_.resize(2, static_cast<Index>(edges.size()));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    mesh.edges_(0, static_cast<Index>(e)) = edges[e][0];
    mesh.edges_(1, static_cast<Index>(e)) = edges[e][1];
  }

  mesh.vertex_cells_ = Eigen::VectorXi::Constant(nv, -1);
  for (Index c = 0; c < mesh.cells_.cols(); ++c) {
    for (int k = 0; k <= d; ++k) {
      int& slot = mesh.vertex_cells_[mesh.cells_(k, c)];
      if (slot < 0) slot = static_cast<int>(c);
    }
  }
  for (Index v = 0; v < nv; ++v) {
    if (mesh.vertex_cells_[v] < 0) throw MeshError("vertex " + std::to_string(v) + " is not used by any cell");
  }
  return mesh;
}

MeshQuality mesh_quality(const SimplicialMesh& mesh) {
  MeshQuality q;
  q.cell_count = mesh.cell_count();
  q.vertex_count = mesh.vertex_count();
  q.edge_count = mesh.edge_count();
  q.h_min = std::numeric_limits<double>::infinity();
  const int d = mesh.dimension();
  for (Index c = 0; c < mesh.cell_count(); ++c) {
    const SimplexMat x = mesh.cell_vertices(c);
    const double h = mesh.cell_diameter(c);
    q.h_max = std::max(q.h_max, h);
    q.h_min = std::min(q.h_min, h);
    const double vol = std::abs(signed_volume(x));
    double boundary = 0.0;
    for (int skip = 0; skip <= d; ++skip) {
      std::vector<Vec> p;
      for (int k = 0; k <= d; ++k) {
        if (k != skip) p.push_back(x.col(k));
      }
      if (d == 2) {
        boundary += (p[1] - p[0]).norm();
      } else {
        const Eigen::Vector3d a = p[1] - p[0];
        const Eigen::Vector3d b = p[2] - p[0];
        boundary += 0.5 * a.cross(b).norm();
      }
    }
    const double inradius = d * vol / boundary;
    q.shape_regularity = std::max(q.shape_regularity, h / (2.0 * inradius));
  }
  return q;
}

SimplicialMesh generate_box(int dimension, const std::vector<int>& divisions,
                            const std::vector<std::array<double, 2>>& extents, const BoxLabels& labels) {
  const int d = dimension;
  if (d != 2 && d != 3) throw MeshError("box dimension must be 2 or 3");
  if (static_cast<int>(divisions.size()) != d || static_cast<int>(extents.size()) != d) {
    throw MeshError("box needs one division count and one extent per axis");
  }
  if (static_cast<int>(labels.size()) != 2 * d) throw MeshError("box needs one label per face");
  for (int n : divisions) {
    if (n < 1) throw MeshError("box divisions must be at least 1");
  }
  const int nx = divisions[0];
  const int ny = divisions[1];
  const int nz = d == 3 ? divisions[2] : 0;
  auto vid = [&](int i, int j, int k) { return i + (nx + 1) * (j + (ny + 1) * k); };

  RawMesh raw;
  raw.dimension = d;
  const Index nv = static_cast<Index>(nx + 1) * (ny + 1) * (d == 3 ? nz + 1 : 1);
  raw.vertices.resize(d, nv);
  for (int k = 0; k <= nz; ++k) {
    for (int j = 0; j <= ny; ++j) {
      for (int i = 0; i <= nx; ++i) {
        const std::array<int, 3> idx{i, j, k};
        for (int a = 0; a < d; ++a) {
          const auto& ext = extents[static_cast<std::size_t>(a)];
          const double s = static_cast<double>(idx[static_cast<std::size_t>(a)]) /
                           divisions[static_cast<std::size_t>(a)];
          raw.vertices(a, vid(i, j, k)) = ext[0] + s * (ext[1] - ext[0]);
        }
      }
    }
  }

  // Kuhn split: one simplex per axis permutation, all sharing the main diagonal.
  std::vector<std::array<int, 3>> perms;
  if (d == 2) {
    perms = {{0, 1, 0}, {1, 0, 0}};
  } else {
    perms = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  }
  const Index ncubes = static_cast<Index>(nx) * ny * (d == 3 ? nz : 1);
  raw.cells.resize(d + 1, ncubes * static_cast<Index>(perms.size()));
  Index c = 0;
  for (int k = 0; k < std::max(nz, 1); ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        for (const auto& p : perms) {
          std::array<int, 3> idx{i, j, d == 3 ? k : 0};
          raw.cells(0, c) = vid(idx[0], idx[1], idx[2]);
          for (int s = 0; s < d; ++s) {
            ++idx[static_cast<std::size_t>(p[static_cast<std::size_t>(s)])];
            raw.cells(s + 1, c) = vid(idx[0], idx[1], idx[2]);
          }
          ++c;
        }
      }
    }
  }

  raw.facets = exterior_faces(d, raw.cells);
  raw.facet_labels.resize(static_cast<std::size_t>(raw.facets.cols()));
  const std::array<int, 3> n{nx, ny, nz};
  for (Index f = 0; f < raw.facets.cols(); ++f) {
    int face = -1;
    for (int a = 0; a < d && face < 0; ++a) {
      for (int side = 0; side < 2 && face < 0; ++side) {
        bool all = true;
        for (int k = 0; k < d; ++k) {
          const int v = raw.facets(k, f);
          const std::array<int, 3> idx{v % (nx + 1), (v / (nx + 1)) % (ny + 1), v / ((nx + 1) * (ny + 1))};
          if (idx[static_cast<std::size_t>(a)] != (side ? n[static_cast<std::size_t>(a)] : 0)) all = false;
        }
        if (all) face = 2 * a + side;
      }
    }
    raw.facet_labels[static_cast<std::size_t>(f)] = labels[static_cast<std::size_t>(face)];
  }
  return build_connectivity(raw);
}

SimplicialMesh generate_tube(int axial_divisions, int radial_divisions,
                             const std::function<double(double)>& radius, std::array<double, 2> y_range,
                             const TubeLabels& labels) {
  if (axial_divisions < 1 || radial_divisions < 1) {
    throw MeshError("tube divisions must be at least 1");
  }
  if (!(y_range[1] > y_range[0])) throw MeshError("tube y range must be increasing");
  const int n = radial_divisions;
  const int na = axial_divisions;
  auto vid = [&](int i, int k, int j) { return i + (n + 1) * (j + (n + 1) * k); };

  RawMesh raw;
  raw.dimension = 3;
  raw.vertices.resize(3, static_cast<Index>(n + 1) * (n + 1) * (na + 1));
  for (int k = 0; k <= na; ++k) {
    const double y = y_range[0] + (y_range[1] - y_range[0]) * k / na;
    const double r = radius(y);
    if (!(r > 0.0)) throw MeshError("tube radius must be positive (y = " + std::to_string(y) + ")");
    for (int j = 0; j <= n; ++j) {
      for (int i = 0; i <= n; ++i) {
        // Elliptical square-to-disk map; the square boundary lands on the unit circle.
        const double a = -1.0 + 2.0 * i / n;
        const double b = -1.0 + 2.0 * j / n;
        double u = a * std::sqrt(1.0 - 0.5 * b * b);
        double v = b * std::sqrt(1.0 - 0.5 * a * a);
        if (i == 0 || i == n || j == 0 || j == n) {
          const double len = std::hypot(u, v);
          u /= len;
          v /= len;
        }
        const int id = vid(i, k, j);
        raw.vertices(0, id) = r * u;
        raw.vertices(1, id) = y;
        raw.vertices(2, id) = r * v;
      }
    }
  }

  const std::array<std::array<int, 3>, 6> perms{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  raw.cells.resize(4, static_cast<Index>(n) * n * na * 6);
  Index c = 0;
  for (int k = 0; k < na; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        for (const auto& p : perms) {
          std::array<int, 3> idx{i, k, j};
          raw.cells(0, c) = vid(idx[0], idx[1], idx[2]);
          for (int s = 0; s < 3; ++s) {
            ++idx[static_cast<std::size_t>(p[static_cast<std::size_t>(s)])];
            raw.cells(s + 1, c) = vid(idx[0], idx[1], idx[2]);
          }
          ++c;
        }
      }
    }
  }

  raw.facets = exterior_faces(3, raw.cells);
  raw.facet_labels.resize(static_cast<std::size_t>(raw.facets.cols()));
  const int layer = (n + 1) * (n + 1);
  for (Index f = 0; f < raw.facets.cols(); ++f) {
    bool inlet = true;
    bool outlet = true;
    for (int k = 0; k < 3; ++k) {
      const int axial = raw.facets(k, f) / layer;
      inlet = inlet && axial == 0;
      outlet = outlet && axial == na;
    }
    raw.facet_labels[static_cast<std::size_t>(f)] =
        inlet ? labels.inlet : (outlet ? labels.outlet : labels.lateral);
  }
  return build_connectivity(raw);
}

SimplicialMesh refine_uniform(const SimplicialMesh& mesh) {
  const int d = mesh.dimension();
  const Index nv = mesh.vertex_count();
  const Index ne = mesh.edge_count();

  RawMesh raw;
  raw.dimension = d;
  raw.vertices.resize(d, nv + ne);
  raw.vertices.leftCols(nv) = mesh.vertices();
  for (Index e = 0; e < ne; ++e) {
    raw.vertices.col(nv + e) =
        0.5 * (mesh.vertices().col(mesh.edges()(0, e)) + mesh.vertices().col(mesh.edges()(1, e)));
  }

  std::unordered_map<std::int64_t, int> edge_index;
  edge_index.reserve(static_cast<std::size_t>(ne));
  for (Index e = 0; e < ne; ++e) {
    edge_index.emplace(edge_key(mesh.edges()(0, e), mesh.edges()(1, e)), static_cast<int>(nv + e));
  }
  auto mid = [&](int a, int b) { return edge_index.at(edge_key(a, b)); };

  const Index children = d == 2 ? 4 : 8;
  raw.cells.resize(d + 1, mesh.cell_count() * children);
  Index out = 0;
  auto emit = [&](std::initializer_list<int> v) {
    int k = 0;
    for (int x : v) raw.cells(k++, out) = x;
    ++out;
  };
  for (Index c = 0; c < mesh.cell_count(); ++c) {
    const auto cell = mesh.cells().col(c);
    if (d == 2) {
      const int v0 = cell[0], v1 = cell[1], v2 = cell[2];
      const int m01 = mid(v0, v1), m12 = mid(v1, v2), m02 = mid(v0, v2);
      emit({v0, m01, m02});
      emit({m01, v1, m12});
      emit({m02, m12, v2});
      emit({m01, m12, m02});
    } else {
      const int v0 = cell[0], v1 = cell[1], v2 = cell[2], v3 = cell[3];
      const int m01 = mid(v0, v1), m02 = mid(v0, v2), m03 = mid(v0, v3);
      const int m12 = mid(v1, v2), m13 = mid(v1, v3), m23 = mid(v2, v3);
      emit({v0, m01, m02, m03});
      emit({m01, v1, m12, m13});
      emit({m02, m12, v2, m23});
      emit({m03, m13, m23, v3});
      // Octahedron: split along its shortest diagonal.
      const std::array<std::array<int, 2>, 3> diagonals{{{m01, m23}, {m02, m13}, {m03, m12}}};
      int best = 0;
      double best_len = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 3; ++k) {
        const double len = (raw.vertices.col(diagonals[k][0]) - raw.vertices.col(diagonals[k][1])).norm();
        if (len < best_len - 1e-14 * len) {
          best_len = len;
          best = k;
        }
      }
      const auto& dg = diagonals[static_cast<std::size_t>(best)];
      const auto& o1 = diagonals[static_cast<std::size_t>((best + 1) % 3)];
      const auto& o2 = diagonals[static_cast<std::size_t>((best + 2) % 3)];
      // Ring around the diagonal: consecutive entries are octahedron neighbours.
      const std::array<int, 4> ring{o1[0], o2[0], o1[1], o2[1]};
      for (int k = 0; k < 4; ++k) emit({dg[0], dg[1], ring[static_cast<std::size_t>(k)], ring[static_cast<std::size_t>((k + 1) % 4)]});
    }
  }

  const Index nf = mesh.boundary_facet_count();
  const Index facet_children = d == 2 ? 2 : 4;
  raw.facets.resize(d, nf * facet_children);
  raw.facet_labels.reserve(static_cast<std::size_t>(nf * facet_children));
  Index fo = 0;
  for (Index f = 0; f < nf; ++f) {
    const auto facet = mesh.boundary_facets().col(f);
    const BoundaryLabel label = mesh.facet_labels()[static_cast<std::size_t>(f)];
    auto put = [&](std::initializer_list<int> v) {
      int k = 0;
      for (int x : v) raw.facets(k++, fo) = x;
      ++fo;
      raw.facet_labels.push_back(label);
    };
    if (d == 2) {
      const int m = mid(facet[0], facet[1]);
      put({facet[0], m});
      put({m, facet[1]});
    } else {
      const int a = facet[0], b = facet[1], cc = facet[2];
      const int mab = mid(a, b), mbc = mid(b, cc), mac = mid(a, cc);
      put({a, mab, mac});
      put({mab, b, mbc});
      put({mac, mbc, cc});
      put({mab, mbc, mac});
    }
  }
  return build_connectivity(raw);
}

}  // namespace qlflow
