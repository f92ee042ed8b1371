#include <qlflow/io/vtk.hpp>

#include <qlflow/shape.hpp>

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace qlflow::io {

Eigen::VectorXd q_criterion(const DiscreteField& u, const SpaceTimeMap& map, double t) {
  if (u.kind != FieldKind::velocity) throw Error("q_criterion needs a velocity field");
  const TaylorHoodSpace& space = *u.space;
  const SimplicialMesh& mesh = space.mesh();
  const int d = mesh.dimension();
  const LagrangeBasis<double> basis(2, d);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(mesh.vertex_count());
  Eigen::VectorXi count = Eigen::VectorXi::Zero(mesh.vertex_count());
  for (Index c = 0; c < mesh.cell_count(); ++c) {
    const SimplexMat X = mesh.cell_vertices(c);
    Mat G(d, d);
    for (int k = 0; k < d; ++k) G.col(k) = X.col(k + 1) - X.col(0);
    const Mat GinvT = G.inverse().transpose();
    const LocalNodes nodes = space.cell_nodes(c);
    for (int i = 0; i <= d; ++i) {
      Eigen::VectorXd lambda = Eigen::VectorXd::Zero(d + 1);
      lambda[i] = 1.0;
      const auto dphi = basis.gradients(lambda);
      Mat grad = Mat::Zero(d, d);  // d u_i / d x_j on the reference domain
      for (int a = 0; a < basis.size(); ++a) {
        const Vec g = GinvT * dphi.col(a);
        for (int comp = 0; comp < d; ++comp) grad.row(comp) += u.at(nodes[a], comp) * g.transpose();
      }
      const Index v = mesh.cells()(i, c);
      const MappingSample s = evaluate_map(map, mesh.vertex(v), t, c);
      const Mat L = grad * s.F_inv;
      const Mat S = 0.5 * (L + L.transpose());
      const Mat W = 0.5 * (L - L.transpose());
      q[v] += 0.5 * (W.squaredNorm() - S.squaredNorm());
      ++count[v];
    }
  }
  for (Index v = 0; v < q.size(); ++v) {
    if (count[v]) q[v] /= count[v];
  }
  return q;
}

void write_vtk(const std::filesystem::path& path, const DiscreteField& u, const DiscreteField& p,
               const SpaceTimeMap& map, double t, bool with_q_criterion) {
  const SimplicialMesh& mesh = u.space->mesh();
  const int d = mesh.dimension();
  const Index nv = mesh.vertex_count();
  std::string out;
  out.reserve(static_cast<std::size_t>(nv) * 120);
  fmt::format_to(std::back_inserter(out), "# vtk DataFile Version 3.0\nqlflow t={:.17g}\nASCII\nDATASET UNSTRUCTURED_GRID\n", t);
  fmt::format_to(std::back_inserter(out), "POINTS {} double\n", nv);
  for (Index v = 0; v < nv; ++v) {
    const Vec x = evaluate_map(map, mesh.vertex(v), t, mesh.vertex_cells()[v]).position;
    fmt::format_to(std::back_inserter(out), "{:.15g} {:.15g} {:.15g}\n", x[0], x[1], d == 3 ? x[2] : 0.0);
  }
  const Index nc = mesh.cell_count();
  fmt::format_to(std::back_inserter(out), "CELLS {} {}\n", nc, nc * (d + 2));
  for (Index c = 0; c < nc; ++c) {
    out += std::to_string(d + 1);
    for (int k = 0; k <= d; ++k) fmt::format_to(std::back_inserter(out), " {}", mesh.cells()(k, c));
    out += '\n';
  }
  fmt::format_to(std::back_inserter(out), "CELL_TYPES {}\n", nc);
  const char* type = d == 3 ? "10\n" : "5\n";
  for (Index c = 0; c < nc; ++c) out += type;

  fmt::format_to(std::back_inserter(out), "POINT_DATA {}\nVECTORS u double\n", nv);
  for (Index v = 0; v < nv; ++v) {
    fmt::format_to(std::back_inserter(out), "{:.15g} {:.15g} {:.15g}\n", u.at(v, 0), u.at(v, 1), d == 3 ? u.at(v, 2) : 0.0);
  }
  out += "SCALARS p double 1\nLOOKUP_TABLE default\n";
  for (Index v = 0; v < nv; ++v) fmt::format_to(std::back_inserter(out), "{:.15g}\n", p.coefficients[v]);
  if (with_q_criterion) {
    const Eigen::VectorXd q = q_criterion(u, map, t);
    out += "SCALARS q_criterion double 1\nLOOKUP_TABLE default\n";
    for (Index v = 0; v < nv; ++v) fmt::format_to(std::back_inserter(out), "{:.15g}\n", q[v]);
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error("cannot write " + path.string());
  file << out;
  if (!file) throw Error("write failed: " + path.string());
}

VtkData read_vtk(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  auto fail = [&path](const std::string& what) { return Error("vtk " + path.string() + ": " + what); };
  std::string line;
  for (int i = 0; i < 4; ++i) {
    if (!std::getline(in, line)) throw fail("truncated header");
    if (i == 2 && line != "ASCII") throw fail("only ASCII files are supported");
    if (i == 3 && line != "DATASET UNSTRUCTURED_GRID") throw fail("expected an unstructured grid");
  }
  VtkData data;
  Index n_points = -1;
  std::string word;
  while (in >> word) {
    if (word == "POINTS") {
      std::string type;
      in >> n_points >> type;
      data.points.resize(3, n_points);
      for (Index i = 0; i < n_points; ++i) in >> data.points(0, i) >> data.points(1, i) >> data.points(2, i);
    } else if (word == "CELLS") {
      Index n = 0;
      Index size = 0;
      in >> n >> size;
      data.cells.resize(static_cast<std::size_t>(n));
      for (auto& cell : data.cells) {
        int k = 0;
        in >> k;
        cell.resize(static_cast<std::size_t>(k));
        for (int& v : cell) in >> v;
      }
    } else if (word == "CELL_TYPES") {
      Index n = 0;
      in >> n;
      data.cell_types.resize(static_cast<std::size_t>(n));
      for (int& type : data.cell_types) in >> type;
    } else if (word == "POINT_DATA") {
      Index n = 0;
      in >> n;
      if (n != n_points) throw fail("POINT_DATA size differs from POINTS");
    } else if (word == "VECTORS" || word == "SCALARS") {
      std::string name;
      std::string type;
      in >> name >> type;
      int rows = 3;
      if (word == "SCALARS") {
        std::getline(in, line);  // optional component count
        std::istringstream rest(line);
        rows = 1;
        rest >> rows;
        in >> word;
        if (word != "LOOKUP_TABLE") throw fail("expected LOOKUP_TABLE after SCALARS " + name);
        in >> word;
      }
      Eigen::MatrixXd values(rows, n_points);
      for (Index i = 0; i < n_points; ++i) {
        for (int r = 0; r < rows; ++r) in >> values(r, i);
      }
      data.point_data[name] = std::move(values);
    } else {
      throw fail("unsupported keyword " + word);
    }
    if (!in && !in.eof()) throw fail("malformed data after " + word);
  }
  return data;
}

}  // namespace qlflow::io
