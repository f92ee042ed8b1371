#include <qlflow/ale_map.hpp>

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace qlflow {

std::string to_string(MapKind kind) {
  switch (kind) {
    case MapKind::identity:
      return "identity";
    case MapKind::axis_scaling:
      return "axis-scaling";
    case MapKind::tube_shrink:
      return "tube-shrink";
    case MapKind::expression:
      return "expression";
    case MapKind::mesh_sequence:
      return "mesh-sequence";
  }
  return "identity";
}

namespace {

class IdentityMap final : public SpaceTimeMap {
 public:
  explicit IdentityMap(int d) : dim_(d) {}
  MapKind kind() const override { return MapKind::identity; }
  int dimension() const override { return dim_; }
  MapJet jet(const Vec& x, double, Index) const override {
    return {x, Mat::Identity(dim_, dim_), Vec::Zero(dim_)};
  }

 private:
  int dim_;
};

class AxisScalingMap final : public SpaceTimeMap {
 public:
  AxisScalingMap(std::vector<Expression> scales, MapKind kind) : scales_(std::move(scales)), kind_(kind) {}
  MapKind kind() const override { return kind_; }
  int dimension() const override { return static_cast<int>(scales_.size()); }
  MapJet jet(const Vec& x, double t, Index) const override {
    using D = Dual<double, 1>;
    const int d = dimension();
    MapJet j{Vec(d), Mat::Zero(d, d), Vec(d)};
    const D tv = D::variable(t, 0);
    for (int i = 0; i < d; ++i) {
      const D s = scales_[static_cast<std::size_t>(i)].evaluate<D>(std::span<const D>(&tv, 1));
      j.position[i] = s.value * x[i];
      j.F(i, i) = s.value;
      j.xi_t[i] = s.grad[0] * x[i];
    }
    return j;
  }

 private:
  std::vector<Expression> scales_;
  MapKind kind_;
};

class TubeShrinkMap final : public SpaceTimeMap {
 public:
  MapKind kind() const override { return MapKind::tube_shrink; }
  int dimension() const override { return 3; }
  MapJet jet(const Vec& x, double t, Index) const override {
    const double s = std::sqrt(1.0 - t / 4.0);
    const double ds = -1.0 / (8.0 * s);
    MapJet j{Vec(3), Mat::Zero(3, 3), Vec(3)};
    j.position << x[0] * s, x[1], x[2] * s;
    j.F.diagonal() << s, 1.0, s;
    j.xi_t << x[0] * ds, 0.0, x[2] * ds;
    return j;
  }
};

class ExpressionMap final : public SpaceTimeMap {
 public:
  ExpressionMap(std::vector<Expression> components) : components_(std::move(components)) {}
  MapKind kind() const override { return MapKind::expression; }
  int dimension() const override { return static_cast<int>(components_.size()); }
  MapJet jet(const Vec& x, double t, Index) const override {
    using D = Dual<double, kMaxDim + 1>;
    const int d = dimension();
    std::array<D, kMaxDim + 1> vars{};
    for (int i = 0; i < d; ++i) vars[static_cast<std::size_t>(i)] = D::variable(x[i], i);
    vars[static_cast<std::size_t>(d)] = D::variable(t, d);
    const std::span<const D> v(vars.data(), static_cast<std::size_t>(d + 1));
    MapJet j{Vec(d), Mat(d, d), Vec(d)};
    for (int i = 0; i < d; ++i) {
      const D xi = components_[static_cast<std::size_t>(i)].evaluate<D>(v);
      j.position[i] = xi.value;
      for (int k = 0; k < d; ++k) j.F(i, k) = xi.grad[static_cast<std::size_t>(k)];
      j.xi_t[i] = xi.grad[static_cast<std::size_t>(d)];
    }
    return j;
  }

 private:
  std::vector<Expression> components_;
};

}  // namespace

MapPtr make_identity_map(int dimension) {
  if (dimension < 1 || dimension > kMaxDim) throw Error("map dimension must be 1..3");
  return std::make_shared<IdentityMap>(dimension);
}

MapPtr make_axis_scaling_map(const std::vector<std::string>& scale_functions) {
  if (scale_functions.empty() || scale_functions.size() > static_cast<std::size_t>(kMaxDim)) {
    throw Error("axis-scaling map needs 1..3 scale functions");
  }
  std::vector<Expression> scales;
  for (const auto& s : scale_functions) scales.push_back(Expression::parse(s, {"t"}));
  return std::make_shared<AxisScalingMap>(std::move(scales), MapKind::axis_scaling);
}

MapPtr make_tube_shrink_map() { return std::make_shared<TubeShrinkMap>(); }

MapPtr parse_map_expressions(std::string_view source, int dimension) {
  if (dimension < 1 || dimension > kMaxDim) throw Error("map dimension must be 1..3");
  const auto pieces = split_expressions(source);
  if (static_cast<int>(pieces.size()) != dimension) {
    throw ParseError("map needs " + std::to_string(dimension) + " expressions, got " +
                         std::to_string(pieces.size()),
                     0);
  }
  const auto vars = space_time_variables(dimension);
  std::vector<Expression> components;
  for (const auto& p : pieces) components.push_back(Expression::parse(p, vars));
  return std::make_shared<ExpressionMap>(std::move(components));
}

// ---------------------------------------------------------------------------

MeshSequenceMap::MeshSequenceMap(std::shared_ptr<const SimplicialMesh> mesh, std::vector<Frame> frames)
    : mesh_(std::move(mesh)), frames_(std::move(frames)) {
  if (!mesh_) throw Error("mesh-sequence map needs a mesh");
  if (frames_.empty()) throw Error("mesh-sequence map needs at least one frame");
  for (std::size_t k = 0; k < frames_.size(); ++k) {
    const auto& f = frames_[k];
    if (f.positions.rows() != mesh_->dimension() || f.positions.cols() != mesh_->vertex_count()) {
      throw Error("frame " + std::to_string(k) + " has " + std::to_string(f.positions.cols()) +
                  " nodes, mesh has " + std::to_string(mesh_->vertex_count()));
    }
    if (k > 0 && !(f.time > frames_[k - 1].time)) throw Error("frame times must increase");
  }
}

std::shared_ptr<const MeshSequenceMap> MeshSequenceMap::load(const std::filesystem::path& directory,
                                                             std::shared_ptr<const SimplicialMesh> mesh) {
  if (!std::filesystem::is_directory(directory)) {
    throw Error("mesh-sequence directory not found: " + directory.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  const int d = mesh->dimension();
  std::vector<Frame> frames;
  for (const auto& path : files) {
    std::ifstream in(path);
    Frame frame;
    std::string line;
    if (!std::getline(in, line) || !(std::istringstream(line) >> frame.time)) {
      throw Error("frame file " + path.string() + ": missing time on line 1");
    }
    std::vector<double> coords;
    Index nodes = 0;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::vector<double> row;
      double v = 0.0;
      while (ls >> v) row.push_back(v);
      if (row.empty()) continue;
      if (static_cast<int>(row.size()) < d) {
        throw Error("frame file " + path.string() + ": node " + std::to_string(nodes) + " has too few coordinates");
      }
      for (int k = 0; k < d; ++k) coords.push_back(row[static_cast<std::size_t>(k)]);
      ++nodes;
    }
    frame.positions = Eigen::Map<Eigen::MatrixXd>(coords.data(), d, nodes);
    frames.push_back(std::move(frame));
  }
  return std::make_shared<MeshSequenceMap>(std::move(mesh), std::move(frames));
}

MeshSequenceMap::Interval MeshSequenceMap::interval(double t) const {
  Interval iv;
  if (frames_.size() == 1) return iv;
  const double t0 = frames_.front().time;
  const double t1 = frames_.back().time;
  const double tol = 1e-12 * std::max(1.0, std::abs(t1 - t0));
  if (t < t0 - tol || t > t1 + tol) {
    throw Error("time " + std::to_string(t) + " outside the mesh-sequence range");
  }
  std::size_t k = 1;
  while (k + 1 < frames_.size() && t > frames_[k].time + tol) ++k;
  iv.lower = k - 1;
  iv.upper = k;
  iv.span = frames_[k].time - frames_[k - 1].time;
  if (std::abs(t - frames_[k].time) <= tol) {
    iv.theta = 1.0;
  } else if (std::abs(t - frames_[k - 1].time) <= tol) {
    iv.theta = 0.0;
  } else {
    iv.theta = (t - frames_[k - 1].time) / iv.span;
  }
  return iv;
}

Vec MeshSequenceMap::node_position(Index vertex, double t) const {
  const Interval iv = interval(t);
  if (iv.theta == 0.0) return frames_[iv.lower].positions.col(vertex);
  if (iv.theta == 1.0) return frames_[iv.upper].positions.col(vertex);
  return (1.0 - iv.theta) * frames_[iv.lower].positions.col(vertex) +
         iv.theta * frames_[iv.upper].positions.col(vertex);
}

Vec MeshSequenceMap::node_velocity(Index vertex, double t) const {
  const Interval iv = interval(t);
  if (frames_.size() == 1) return Vec::Zero(dimension());
  return (frames_[iv.upper].positions.col(vertex) - frames_[iv.lower].positions.col(vertex)) / iv.span;
}

Index MeshSequenceMap::locate(const Vec& x) const {
  const int d = mesh_->dimension();
  for (Index c = 0; c < mesh_->cell_count(); ++c) {
    const SimplexMat X = mesh_->cell_vertices(c);
    Mat E(d, d);
    for (int k = 0; k < d; ++k) E.col(k) = X.col(k + 1) - X.col(0);
    const Vec lam = E.partialPivLu().solve(x - Vec(X.col(0)));
    if (lam.minCoeff() >= -1e-10 && lam.sum() <= 1.0 + 1e-10) return c;
  }
  throw Error("point " + format_point(x) + " is outside the mesh-sequence reference mesh");
}

MapJet MeshSequenceMap::jet(const Vec& x, double t, Index cell) const {
  const int d = mesh_->dimension();
  if (cell < 0) cell = locate(x);
  const SimplexMat X = mesh_->cell_vertices(cell);
  SimplexMat P(d, d + 1);
  SimplexMat V(d, d + 1);
  for (int k = 0; k <= d; ++k) {
    const Index v = mesh_->cells()(k, cell);
    P.col(k) = node_position(v, t);
    V.col(k) = node_velocity(v, t);
  }
  Mat EX(d, d);
  Mat EP(d, d);
  Mat EV(d, d);
  for (int k = 0; k < d; ++k) {
    EX.col(k) = X.col(k + 1) - X.col(0);
    EP.col(k) = P.col(k + 1) - P.col(0);
    EV.col(k) = V.col(k + 1) - V.col(0);
  }
  const Mat EX_inv = EX.inverse();
  const Vec local = EX_inv * (x - Vec(X.col(0)));
  MapJet j;
  j.F = EP * EX_inv;
  j.position = P.col(0) + EP * local;
  j.xi_t = V.col(0) + EV * local;
  return j;
}

// ---------------------------------------------------------------------------

MappingSample evaluate_map(const SpaceTimeMap& map, const Vec& x, double t, Index cell) {
  MapJet j = map.jet(x, t, cell);
  MappingSample s;
  s.point = x;
  s.time = t;
  s.position = std::move(j.position);
  s.F = std::move(j.F);
  s.xi_t = std::move(j.xi_t);
  s.J = s.F.determinant();
  if (!(s.J > 0.0)) throw SingularMappingError(x, t, s.J);
  s.F_inv = s.F.inverse();
  return s;
}

double piola_residual(const SpaceTimeMap& map, const Vec& x, double t, double delta) {
  const int d = map.dimension();
  Vec div = Vec::Zero(d);
  for (int i = 0; i < d; ++i) {
    Vec xp = x;
    Vec xm = x;
    xp[i] += delta;
    xm[i] -= delta;
    const MappingSample sp = evaluate_map(map, xp, t);
    const MappingSample sm = evaluate_map(map, xm, t);
    const Mat gp = sp.J * sp.F_inv;
    const Mat gm = sm.J * sm.F_inv;
    // (div G)_j = sum_i d_i G_ij
    div += (gp.row(i) - gm.row(i)).transpose() / (2.0 * delta);
  }
  return div.norm();
}

MapValidationReport validate_assumptions(const SpaceTimeMap& map, const SimplicialMesh& mesh,
                                         std::span<const double> times, const MapThresholds& thresholds) {
  if (times.empty()) throw Error("validate_assumptions needs at least one sample time");
  if (map.dimension() != mesh.dimension()) throw Error("map and mesh dimensions differ");
  MapValidationReport r;
  r.thresholds = thresholds;
  r.min_J = std::numeric_limits<double>::infinity();
  const int d = mesh.dimension();
  const Mat I = Mat::Identity(d, d);
  auto sample = [&](const Vec& x, double t, Index cell) {
    const MappingSample s = evaluate_map(map, x, t, cell);
    r.min_J = std::min(r.min_J, s.J);
    r.max_F_norm = std::max(r.max_F_norm, s.F.norm());
    r.max_Finv_norm = std::max(r.max_Finv_norm, s.F_inv.norm());
    r.max_I_minus_F = std::max(r.max_I_minus_F, (I - s.F).norm());
    ++r.sample_count;
  };
  for (const double t : times) {
    for (Index v = 0; v < mesh.vertex_count(); ++v) sample(mesh.vertex(v), t, mesh.vertex_cells()[v]);
    for (Index c = 0; c < mesh.cell_count(); ++c) {
      sample(mesh.cell_vertices(c).rowwise().mean(), t, c);
    }
  }
  r.passed = r.min_J >= thresholds.c_J && std::max(r.max_F_norm, r.max_Finv_norm) <= thresholds.C_F &&
             r.max_I_minus_F <= thresholds.epsilon;
  return r;
}

}  // namespace qlflow
