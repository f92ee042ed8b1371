#include <qlflow/analysis.hpp>
#include <qlflow/dual.hpp>
#include <qlflow/quadrature.hpp>
#include <qlflow/shape.hpp>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace qlflow {

namespace {

// Per-quadrature-point view of a velocity field on one cell.
struct PointData {
  MappingSample map;
  double weight = 0.0;  // reference quadrature weight times |det G|
  Vec u;
  Mat grad_u;  // reference gradient
};

template <typename Visitor>
void for_each_point(const DiscreteField& u, const SpaceTimeMap& map, double t, int degree, Visitor&& visit) {
  const TaylorHoodSpace& space = *u.space;
  const SimplicialMesh& mesh = space.mesh();
  const int d = space.dimension();
  const int n = d == 2 ? 6 : 10;
  if (degree <= 0) degree = default_quadrature_degree(d);
  const QuadratureRule rule = quadrature(d, degree);
  const LagrangeBasis<double> basis(2, d);
  Eigen::MatrixXd U(d, n);
  for (Index c = 0; c < mesh.cell_count(); ++c) {
    const SimplexMat X = mesh.cell_vertices(c);
    Mat G(d, d);
    for (int k = 0; k < d; ++k) G.col(k) = X.col(k + 1) - X.col(0);
    const double detG = std::abs(G.determinant());
    const Mat GinvT = G.inverse().transpose();
    const LocalNodes nodes = space.cell_nodes(c);
    for (int a = 0; a < n; ++a) {
      for (int i = 0; i < d; ++i) U(i, a) = u.at(nodes[a], i);
    }
    for (Index q = 0; q < rule.size(); ++q) {
      const Eigen::VectorXd lam = rule.barycentric.col(q);
      PointData p;
      p.map = evaluate_map(map, X * lam, t, c);
      p.weight = rule.weights[q] * detG;
      const auto phi = basis.values(lam);
      const Eigen::MatrixXd gx = GinvT * basis.gradients(lam).leftCols(n);
      p.u = U * phi.head(n);
      p.grad_u = U * gx.transpose();
      visit(c, p);
    }
  }
}

Mat sym(const Mat& A) { return 0.5 * (A + A.transpose()); }

}  // namespace

double k_norm(const DiscreteField& v, const SpaceTimeMap& map, double t, int degree) {
  if (v.kind != FieldKind::velocity) throw Error("k_norm expects a velocity field");
  double sum = 0.0;
  for_each_point(v, map, t, degree, [&](Index, const PointData& p) { sum += p.weight * p.map.J * p.u.squaredNorm(); });
  return std::sqrt(sum);
}

double k_norm(const TaylorHoodSpace& space, const std::function<Vec(const Vec&)>& v, const SpaceTimeMap& map,
              double t, int degree) {
  const SimplicialMesh& mesh = space.mesh();
  const int d = space.dimension();
  if (degree <= 0) degree = default_quadrature_degree(d);
  const QuadratureRule rule = quadrature(d, degree);
  double sum = 0.0;
  for (Index c = 0; c < mesh.cell_count(); ++c) {
    const SimplexMat X = mesh.cell_vertices(c);
    const double vol = mesh.cell_volume(c);
    for (Index q = 0; q < rule.size(); ++q) {
      const Vec x = X * rule.barycentric.col(q);
      const MappingSample s = evaluate_map(map, x, t, c);
      // Reference rule weights sum to the reference simplex volume 1/d!.
      const double w = rule.weights[q] * vol * (d == 2 ? 2.0 : 6.0);
      sum += w * s.J * v(x).squaredNorm();
    }
  }
  return std::sqrt(sum);
}

StepError step_error(const DiscreteField& u_h, const SpaceTimeMap& map, double t, const SpaceTimeField& exact,
                     const SpaceTimeGradient& exact_gradient, int degree) {
  double l2 = 0.0;
  double def = 0.0;
  for_each_point(u_h, map, t, degree, [&](Index, const PointData& p) {
    const Vec e = exact(p.map.position, t) - p.u;
    const Mat De = sym(exact_gradient(p.map.position, t) - p.grad_u * p.map.F_inv);
    l2 += p.weight * p.map.J * e.squaredNorm();
    def += p.weight * p.map.J * De.squaredNorm();
  });
  return {t, std::sqrt(l2), std::sqrt(def)};
}

EnergyErrorReport combine_errors(std::vector<StepError> steps, double dt, double nu) {
  EnergyErrorReport r;
  r.steps = std::move(steps);
  r.dt = dt;
  double max_l2 = 0.0;
  double sum = 0.0;
  for (const StepError& s : r.steps) {
    max_l2 = std::max(max_l2, s.l2);
    sum += dt * s.deformation * s.deformation;
  }
  r.combined = max_l2 + std::sqrt(sum);
  r.energy_norm = std::sqrt(max_l2 * max_l2 + 2.0 * nu * sum);
  return r;
}

EnergyErrorReport energy_error(const std::vector<FlowState>& trajectory, const BenchmarkCase& benchmark,
                               const SpaceTimeMap& map, double dt, int degree) {
  std::vector<StepError> steps;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const FlowState& s = trajectory[i];
    if (i > 0 && (s.k != trajectory[i - 1].k + 1 || std::abs(s.t - trajectory[i - 1].t - dt) > 1e-9 * (1.0 + dt))) {
      throw Error("trajectory is missing steps after step " + std::to_string(trajectory[i - 1].k));
    }
    steps.push_back(step_error(s.u, map, s.t, benchmark.velocity, benchmark.velocity_gradient, degree));
  }
  return combine_errors(std::move(steps), dt, benchmark.nu);
}

EnergyBalance energy_balance_terms(const FlowState& prev, const FlowState& cur, const SpaceTimeMap& map, double nu,
                                   const SpaceTimeField& forcing, StressForm stress, int degree) {
  const double dt = cur.t - prev.t;
  if (!(dt > 0.0)) throw Error("energy balance needs consecutive states");
  EnergyBalance b;
  const double e0 = k_norm(prev.u, map, prev.t, degree);
  const double e1 = k_norm(cur.u, map, cur.t, degree);
  b.kinetic_rate = (e1 * e1 - e0 * e0) / (2.0 * dt);
  for_each_point(cur.u, map, cur.t, degree, [&](Index, const PointData& p) {
    const Mat Gx = p.grad_u * p.map.F_inv;
    const double density = stress == StressForm::symmetric ? 2.0 * nu * sym(Gx).squaredNorm() : nu * Gx.squaredNorm();
    b.dissipation += p.weight * p.map.J * density;
    if (forcing) b.forcing_power += p.weight * p.map.J * forcing(p.map.position, cur.t).dot(p.u);
  });

  const TaylorHoodSpace& space = *cur.u.space;
  const SimplicialMesh& mesh = space.mesh();
  const int d = space.dimension();
  const int n = d == 2 ? 6 : 10;
  if (degree <= 0) degree = default_quadrature_degree(d);
  const QuadratureRule rule = quadrature(d - 1, degree);
  const LagrangeBasis<double> basis(2, d);
  for (Index f = 0; f < mesh.boundary_facet_count(); ++f) {
    const Index c = mesh.facet_cells()[f];
    const SimplexMat X = mesh.cell_vertices(c);
    Mat G(d, d);
    for (int k = 0; k < d; ++k) G.col(k) = X.col(k + 1) - X.col(0);
    const Mat GinvT = G.inverse().transpose();
    const LocalNodes nodes = space.cell_nodes(c);
    const FacetGeometry geo = facet_geometry(mesh, f);
    const double scale = facet_weight_scale(mesh, f);
    for (Index q = 0; q < rule.size(); ++q) {
      const Eigen::VectorXd lam = facet_to_cell(mesh, f, rule.barycentric.col(q)).head(d + 1);
      const MappingSample s = evaluate_map(map, X * lam, cur.t, c);
      const auto phi = basis.values(lam);
      const Eigen::MatrixXd gx = GinvT * basis.gradients(lam).leftCols(n);
      Vec u = Vec::Zero(d);
      Mat Gu = Mat::Zero(d, d);
      double pr = 0.0;
      for (int a = 0; a < n; ++a) {
        for (int i = 0; i < d; ++i) {
          u[i] += phi[a] * cur.u.at(nodes[a], i);
          Gu.row(i) += cur.u.at(nodes[a], i) * gx.col(a).transpose();
        }
      }
      for (int k = 0; k <= d; ++k) pr += lam[k] * cur.p.coefficients[mesh.cells()(k, c)];
      const Mat Gx = Gu * s.F_inv;
      Mat sigma = stress == StressForm::symmetric ? Mat(nu * (Gx + Gx.transpose())) : Mat(nu * Gx);
      sigma.diagonal().array() -= pr;
      const Vec traction = s.J * (sigma * (s.F_inv.transpose() * geo.normal));
      b.boundary_work += rule.weights[q] * scale * traction.dot(u);
    }
  }
  return b;
}

std::string to_string(Pairing p) { return p == Pairing::dt_h2 ? "dt-h2" : "dt-h"; }

Pairing parse_pairing(const std::string& text) {
  if (text == "dt-h2" || text == "dt_h2" || text == "h2") return Pairing::dt_h2;
  if (text == "dt-h" || text == "dt_h" || text == "h") return Pairing::dt_h;
  throw ConfigError("benchmark.pairing", "expected dt-h2 or dt-h, got '" + text + "'");
}

StudyBase uniform_refinement_base(SimplicialMesh coarse, double dt) {
  auto mesh = std::make_shared<const SimplicialMesh>(std::move(coarse));
  StudyBase b;
  b.dt = dt;
  b.refinement_factor = 2.0;
  b.mesh = [mesh](int level) {
    SimplicialMesh m = *mesh;
    for (int l = 0; l < level; ++l) m = refine_uniform(m);
    return m;
  };
  return b;
}

FlowProblem BenchmarkCase::problem(SpacePtr space) const {
  FlowProblem p;
  p.space = std::move(space);
  p.map = map;
  p.nu = nu;
  p.forcing = forcing;
  p.bcs = bcs;
  return p;
}

FlowState BenchmarkCase::initial_state(const SpacePtr& space) const {
  FlowState s = FlowState::zero(space, 0.0);
  s.u = interpolate_physical(space, *map, 0.0, velocity);
  if (pressure) {
    s.p = interpolate(space, FieldKind::pressure, [&](const Vec& x) {
      return Vec::Constant(1, pressure(map->jet(x, 0.0).position, 0.0));
    });
  }
  return s;
}

// Exact fields, templated so that nested dual numbers give their derivatives.
namespace {

constexpr double kTubeNu = 0.04;
constexpr double kStretch = 0.1;

template <typename S>
std::array<S, 3> tube_velocity(const std::array<S, 3>& x, const S& t) {
  using std::exp;
  const S r2 = x[0] * x[0] + x[2] * x[2];
  const S E = exp(-(x[1] + 4.0) / 4.0);
  const S a = 4.0 - t;
  const S ur_over_r = -2.0 * E * r2 / (a * a);
  return {ur_over_r * x[0], 8.0 / a - 32.0 * E * r2 / (a * a), ur_over_r * x[2]};
}

// The additive function of time makes p vanish on the outlet plane y = 4.
template <typename S>
S tube_pressure(const std::array<S, 3>& x, const S& t) {
  using std::exp;
  const S E = exp(-(x[1] + 4.0) / 4.0);
  const S a = 4.0 - t;
  const S a2 = a * a;
  const S offset = (32.0 - 512.0 * kTubeNu * std::exp(-2.0)) / a2;
  return 512.0 * kTubeNu * E / a2 - 8.0 * x[1] / a2 + offset;
}

Vec tube_forcing(const Vec& x, double t) {
  const double r2 = x[0] * x[0] + x[2] * x[2];
  const double E = std::exp(-(x[1] + 4.0) / 4.0);
  const double E2 = std::exp(-(x[1] + 4.0) / 2.0);
  const double a2 = (4.0 - t) * (4.0 - t);
  const double a4 = a2 * a2;
  const double fr_over_r = kTubeNu * E / a2 * (16.0 + r2 / 8.0) - 4.0 * E2 * r2 * r2 / a4;
  Vec f(3);
  f << fr_over_r * x[0], 2.0 * kTubeNu * E * r2 / a2 - 128.0 * E2 * r2 * r2 / a4, fr_over_r * x[2];
  return f;
}

template <typename S>
std::array<S, 2> mms_velocity(const std::array<S, 2>& x, const S& t) {
  using std::cos;
  using std::sin;
  const S c = cos(t);
  return {M_PI * sin(M_PI * x[0]) * cos(M_PI * x[1]) * c, -M_PI * cos(M_PI * x[0]) * sin(M_PI * x[1]) * c};
}

// Mean over the physical domain [0, a] x [0, 1/a] removed.
template <typename S>
S mms_pressure(const std::array<S, 2>& x, const S& t) {
  using std::cos;
  using std::sin;
  const S a = 1.0 + kStretch * t;
  const S mean = sin(M_PI * a) * sin(M_PI / a) / (M_PI * M_PI);
  return cos(t) * (cos(M_PI * x[0]) * cos(M_PI * x[1]) - mean);
}

Vec mms_forcing(const Vec& x, double t) {
  constexpr double nu = 1.0;
  const double pi = M_PI;
  const double c = std::cos(t);
  const double s = std::sin(t);
  const double sx = std::sin(pi * x[0]);
  const double cx = std::cos(pi * x[0]);
  const double sy = std::sin(pi * x[1]);
  const double cy = std::cos(pi * x[1]);
  const double pi3 = pi * pi * pi;
  Vec f(2);
  f << -pi * sx * cy * s + 0.5 * pi3 * c * c * std::sin(2 * pi * x[0]) + 2 * nu * pi3 * sx * cy * c - pi * c * sx * cy,
      pi * cx * sy * s + 0.5 * pi3 * c * c * std::sin(2 * pi * x[1]) - 2 * nu * pi3 * cx * sy * c - pi * c * cx * sy;
  return f;
}

template <int D, typename Fn>
Vec eval_plain(Fn fn, const Vec& x, double t) {
  std::array<double, D> xs;
  for (int i = 0; i < D; ++i) xs[static_cast<std::size_t>(i)] = x[i];
  const auto u = fn(xs, t);
  Vec v(D);
  for (int i = 0; i < D; ++i) v[i] = u[static_cast<std::size_t>(i)];
  return v;
}

template <int D, typename Fn>
Mat eval_gradient(Fn fn, const Vec& x, double t) {
  using Dd = Dual<double, D>;
  std::array<Dd, D> xs;
  for (int i = 0; i < D; ++i) xs[static_cast<std::size_t>(i)] = Dd::variable(x[i], i);
  const auto u = fn(xs, Dd(t));
  Mat g(D, D);
  for (int i = 0; i < D; ++i) {
    for (int j = 0; j < D; ++j) g(i, j) = u[static_cast<std::size_t>(i)].grad[static_cast<std::size_t>(j)];
  }
  return g;
}

// Second-order jets over (x_1..x_D, t).
template <int D, typename VelocityFn, typename PressureFn>
Vec strong_residual(VelocityFn vel, PressureFn pre, const SpaceTimeField& forcing, double nu, const Vec& x,
                    double t) {
  constexpr int N = D + 1;
  using D1 = Dual<double, N>;
  using D2 = Dual<D1, N>;
  std::array<D2, D> xs;
  for (int i = 0; i < D; ++i) xs[static_cast<std::size_t>(i)] = D2::variable(D1::variable(x[i], i), i);
  const D2 ts = D2::variable(D1::variable(t, D), D);
  const auto u = vel(xs, ts);
  const D2 p = pre(xs, ts);
  const Vec f = forcing(x, t);
  Vec r(D);
  for (int i = 0; i < D; ++i) {
    const D2& ui = u[static_cast<std::size_t>(i)];
    double v = ui.grad[D].value;  // u_t
    for (int j = 0; j < D; ++j) {
      v += u[static_cast<std::size_t>(j)].value.value * ui.grad[static_cast<std::size_t>(j)].value;
      v -= nu * ui.grad[static_cast<std::size_t>(j)].grad[static_cast<std::size_t>(j)];
    }
    v += p.grad[static_cast<std::size_t>(i)].value;
    r[i] = v - f[i];
  }
  return r;
}

template <int D, typename VelocityFn>
double divergence(VelocityFn vel, const Vec& x, double t) {
  return eval_gradient<D>(vel, x, t).trace();
}

const auto kTubeVelocity = [](const auto& x, const auto& t) { return tube_velocity(x, t); };
const auto kTubePressure = [](const auto& x, const auto& t) { return tube_pressure(x, t); };
const auto kMmsVelocity = [](const auto& x, const auto& t) { return mms_velocity(x, t); };
const auto kMmsPressure = [](const auto& x, const auto& t) { return mms_pressure(x, t); };

}  // namespace

SimplicialMesh tube_mesh(int level) {
  if (level < 0) throw Error("tube level must be non-negative");
  const double s = std::pow(2.0, 0.5 * level);
  // The error is governed by how well the polygonal cross-section follows the
  // curved wall; axial resolution matters much less for this solution.
  const int radial = static_cast<int>(std::lround(5.0 * s));
  const int axial = static_cast<int>(std::lround(3.0 * s));
  TubeLabels labels;
  labels.lateral = BoundaryLabel::noslip();
  labels.inlet = BoundaryLabel::dirichlet(1);
  labels.outlet = BoundaryLabel::neumann(0);
  return generate_tube(axial, radial, [](double y) { return std::exp((y + 4.0) / 8.0); }, {-4.0, 4.0}, labels);
}

BenchmarkCase tube_benchmark() {
  BenchmarkCase c;
  c.name = "tube";
  c.map = make_tube_shrink_map();
  c.velocity = [](const Vec& x, double t) { return eval_plain<3>(kTubeVelocity, x, t); };
  c.velocity_gradient = [](const Vec& x, double t) { return eval_gradient<3>(kTubeVelocity, x, t); };
  c.pressure = [](const Vec& x, double t) { return tube_pressure<double>({x[0], x[1], x[2]}, t); };
  c.forcing = tube_forcing;
  c.nu = kTubeNu;
  c.T = 0.2;
  c.stress = StressForm::full_gradient;
  c.bcs.dirichlet[1] = c.velocity;
  // Outlet normal is e_y in both configurations; sigma n = nu grad(u) e_y - p e_y.
  c.bcs.neumann[0] = [](const Vec& x, double t) {
    Vec g = kTubeNu * eval_gradient<3>(kTubeVelocity, x, t).col(1);
    g[1] -= tube_pressure<double>({x[0], x[1], x[2]}, t);
    return g;
  };
  c.base.mesh = tube_mesh;
  c.base.dt = 0.04;
  c.base.refinement_factor = std::sqrt(2.0);
  return c;
}

BenchmarkCase manufactured_2d() {
  BenchmarkCase c;
  c.name = "manufactured_2d";
  c.map = make_axis_scaling_map({"1 + 0.1*t", "1 / (1 + 0.1*t)"});
  c.velocity = [](const Vec& x, double t) { return eval_plain<2>(kMmsVelocity, x, t); };
  c.velocity_gradient = [](const Vec& x, double t) { return eval_gradient<2>(kMmsVelocity, x, t); };
  c.pressure = [](const Vec& x, double t) { return mms_pressure<double>({x[0], x[1]}, t); };
  c.forcing = mms_forcing;
  c.nu = 1.0;
  c.T = 0.5;
  c.stress = StressForm::symmetric;
  c.bcs.dirichlet[1] = c.velocity;
  c.base = uniform_refinement_base(
      generate_box(2, {8, 8}, {{{0.0, 1.0}, {0.0, 1.0}}}, BoxLabels(4, BoundaryLabel::dirichlet(1))), 0.05);
  return c;
}

Vec momentum_residual(const std::string& case_name, const Vec& x, double t) {
  if (case_name == "tube") return strong_residual<3>(kTubeVelocity, kTubePressure, tube_forcing, kTubeNu, x, t);
  if (case_name == "manufactured_2d") return strong_residual<2>(kMmsVelocity, kMmsPressure, mms_forcing, 1.0, x, t);
  throw Error("unknown benchmark case '" + case_name + "'");
}

double velocity_divergence(const std::string& case_name, const Vec& x, double t) {
  if (case_name == "tube") return divergence<3>(kTubeVelocity, x, t);
  if (case_name == "manufactured_2d") return divergence<2>(kMmsVelocity, x, t);
  throw Error("unknown benchmark case '" + case_name + "'");
}

BenchmarkCase benchmark_by_name(const std::string& name) {
  if (name == "tube") return tube_benchmark();
  if (name == "manufactured_2d") return manufactured_2d();
  throw ConfigError("benchmark.case", "unknown case '" + name + "' (expected tube or manufactured_2d)");
}

void ConvergenceTable::add(ConvergenceRow row) {
  if (!std::isfinite(row.error) || row.error <= 0.0) {
    throw Error("level " + std::to_string(row.level) + ": invalid error value " + std::to_string(row.error));
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (rows.empty()) {
    row.ratio = nan;
    row.order = nan;
  } else {
    const ConvergenceRow& prev = rows.back();
    row.ratio = prev.error / row.error;
    row.order = std::log(row.ratio) / std::log(prev.h / row.h);
  }
  rows.push_back(row);
}

void ConvergenceTable::write_csv(std::ostream& os) const {
  os << "mesh_step_size,element_count,time_step,num_steps,error,ratio,observed_order\n";
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::setprecision(10);
  for (const ConvergenceRow& r : rows) {
    os << r.h << ',' << r.cells << ',' << r.dt << ',' << r.steps << ',' << r.error << ',';
    if (std::isfinite(r.ratio)) os << r.ratio;
    os << ',';
    if (std::isfinite(r.order)) os << r.order;
    os << '\n';
  }
  os.flags(flags);
  os.precision(precision);
}

ConvergenceTable convergence_study(const BenchmarkCase& benchmark, int levels, const StudyBase& base,
                                   const ConvergenceOptions& options) {
  if (levels < 2) throw ConfigError("benchmark.levels", "a convergence study needs at least 2 levels");
  if (!base.mesh || !(base.dt > 0.0) || !(base.refinement_factor > 1.0)) {
    throw ConfigError("benchmark", "study base needs a mesh generator, dt > 0 and refinement factor > 1");
  }
  ConvergenceTable table;
  table.case_name = benchmark.name;
  table.pairing = options.pairing;
  SolverConfig config = options.solver;
  config.stress = benchmark.stress;
  for (int level = 0; level < levels; ++level) {
    const auto start = std::chrono::steady_clock::now();
    ConvergenceRow row;
    row.level = level;
    try {
      auto mesh = std::make_shared<const SimplicialMesh>(base.mesh(level));
      auto space = std::make_shared<const TaylorHoodSpace>(mesh);
      const double exponent = options.pairing == Pairing::dt_h2 ? 2.0 * level : 1.0 * level;
      row.dt = base.dt / std::pow(base.refinement_factor, exponent);
      row.h = mesh_quality(*mesh).h_max;
      row.cells = mesh->cell_count();
      row.steps = static_cast<Index>(std::lround(benchmark.T / row.dt));
      spdlog::info("{} level {}: {} cells, h = {:.4f}, dt = {:.6g}, {} steps", benchmark.name, level, row.cells, row.h,
                   row.dt, row.steps);
      std::vector<StepError> errors;
      const StepCallback collect = [&](const FlowState& s, const StepDiagnostics& d) {
        errors.push_back(step_error(s.u, *benchmark.map, s.t, benchmark.velocity, benchmark.velocity_gradient,
                                    config.quadrature_degree));
        if (d.u_norm > 0.0) row.max_divergence_ratio = std::max(row.max_divergence_ratio, d.divergence_residual / d.u_norm);
      };
      run(benchmark.initial_state(space), benchmark.problem(space), config, row.dt, benchmark.T, {collect});
      const EnergyErrorReport report = combine_errors(std::move(errors), row.dt, benchmark.nu);
      row.error = report.combined;
      row.energy_norm = report.energy_norm;
    } catch (const std::exception& e) {
      throw Error("convergence level " + std::to_string(level) + ": " + e.what());
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    table.add(row);
    if (options.on_level) options.on_level(table.rows.back());
  }
  return table;
}

}  // namespace qlflow
