// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. Pass criterion numbers as arguments to run a subset.

#include <qlflow/analysis.hpp>
#include <qlflow/assembly.hpp>
#include <qlflow/solver.hpp>

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace qlflow;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> check;
};

std::shared_ptr<const SimplicialMesh> box(int d, int n, const BoxLabels& labels = {}) {
  const BoxLabels l = labels.empty() ? BoxLabels(static_cast<std::size_t>(2 * d), BoundaryLabel::noslip()) : labels;
  return std::make_shared<const SimplicialMesh>(
      generate_box(d, std::vector<int>(static_cast<std::size_t>(d), n),
                   std::vector<std::array<double, 2>>(static_cast<std::size_t>(d), {0.0, 1.0}), l));
}

std::shared_ptr<const SimplicialMesh> jittered_box(int d, int n, std::mt19937& rng) {
  RawMesh raw = box(d, n)->to_raw();
  std::uniform_real_distribution<double> u(-0.2 / n, 0.2 / n);
  for (Index v = 0; v < raw.vertices.cols(); ++v) {
    for (int i = 0; i < d; ++i) {
      const double x = raw.vertices(i, v);
      if (x > 1e-12 && x < 1 - 1e-12) raw.vertices(i, v) += u(rng);
    }
  }
  return std::make_shared<const SimplicialMesh>(build_connectivity(raw));
}

SpacePtr space_on(std::shared_ptr<const SimplicialMesh> mesh) { return std::make_shared<const TaylorHoodSpace>(mesh); }

Eigen::VectorXd random_interior(const TaylorHoodSpace& space, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(space.velocity_dof_count());
  for (Index node = 0; node < space.node_count(); ++node) {
    if (space.node_classes()[static_cast<std::size_t>(node)].kind != DofClass::interior) continue;
    for (int i = 0; i < space.dimension(); ++i) v[space.velocity_dof(node, i)] = u(rng);
  }
  return v;
}

DiscreteField field_of(const SpacePtr& space, const Eigen::VectorXd& c) {
  DiscreteField f = DiscreteField::zero(space, FieldKind::velocity);
  f.coefficients = c;
  return f;
}

// Largest divergence ratio of a study must stay under 10 tol; filled by 1 and 2.
struct DivergenceLog {
  double worst = 0.0;
  int studies = 0;
};

Outcome run_study(const BenchmarkCase& bench, int levels, DivergenceLog& log,
                  const std::function<Outcome(const ConvergenceTable&)>& judge) {
  ConvergenceOptions options;
  options.pairing = Pairing::dt_h2;
  options.on_level = [](const ConvergenceRow& r) {
    fmt::print("  level {}: {} cells, h = {:.4g}, dt = {:.4g}, N = {}, error = {:.6g} ({:.1f} s)\n", r.level,
               r.cells, r.h, r.dt, r.steps, r.error, r.seconds);
    std::fflush(stdout);
  };
  const ConvergenceTable table = convergence_study(bench, levels, bench.base, options);
  for (const auto& r : table.rows) log.worst = std::max(log.worst, r.max_divergence_ratio);
  ++log.studies;
  return judge(table);
}

Outcome manufactured_order(DivergenceLog& log) {
  return run_study(manufactured_2d(), 3, log, [](const ConvergenceTable& t) {
    bool ok = true;
    std::string orders;
    for (std::size_t i = 1; i < t.rows.size(); ++i) {
      const double p = t.rows[i].order;
      ok = ok && p >= 1.8 && p <= 2.5;
      orders += fmt::format("{}{:.3f}", orders.empty() ? "" : ", ", p);
    }
    return Outcome{ok, fmt::format("errors {:.4g} / {:.4g} / {:.4g}, orders [{}] in [1.8, 2.5]", t.rows[0].error,
                                   t.rows[1].error, t.rows[2].error, orders)};
  });
}

Outcome tube_rates(DivergenceLog& log) {
  return run_study(tube_benchmark(), 3, log, [](const ConvergenceTable& t) {
    constexpr double reference = 0.2652;
    bool ok = t.rows[0].error <= 3.0 * reference && t.rows[0].error >= reference / 3.0;
    const double expected_dt[] = {0.04, 0.02, 0.01};
    std::string ratios;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      ok = ok && std::abs(t.rows[i].dt - expected_dt[i]) <= 1e-12;
      if (i == 0) continue;
      const double r = t.rows[i].ratio;
      ok = ok && r >= 1.4 && r <= 2.7;
      ratios += fmt::format("{}{:.3f}", ratios.empty() ? "" : ", ", r);
    }
    return Outcome{ok, fmt::format("coarsest error {:.4f} (within 3x of {}), ratios [{}] in [1.4, 2.7]",
                                   t.rows[0].error, reference, ratios)};
  });
}

Outcome skew_symmetry() {
  std::mt19937 rng(20240611);
  double worst = 0.0;
  int fields = 0;
  for (int d : {2, 3}) {
    const std::vector<MapPtr> maps =
        d == 2 ? std::vector<MapPtr>{make_identity_map(2), make_axis_scaling_map({"1 + 0.1*t", "1/(1 + 0.1*t)"}),
                                     parse_map_expressions("x1 + 0.1*t*sin(x2); x2*(1 + 0.2*t*x1)", 2)}
               : std::vector<MapPtr>{make_tube_shrink_map(),
                                     parse_map_expressions("x1*(1 + 0.1*t*x2); x2 + 0.05*t*x3^2; x3", 3)};
    for (const auto& map : maps) {
      const auto space = space_on(jittered_box(d, d == 2 ? 4 : 2, rng));
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (int trial = 0; trial < 12; ++trial) {
        DiscreteField w = DiscreteField::zero(space, FieldKind::velocity);
        for (Index k = 0; k < w.coefficients.size(); ++k) w.coefficients[k] = u(rng);
        const SparseMatrix C = convection_matrix(*space, *map, 0.3, w);
        const SparseMatrix CT = C + temam_matrix(*space, *map, 0.3, w);
        const Eigen::VectorXd v = random_interior(*space, rng);
        const double scale = v.cwiseAbs().dot(C.cwiseAbs() * v.cwiseAbs());
        worst = std::max(worst, std::abs(v.dot(CT * v)) / scale);
        ++fields;
      }
    }
  }
  return {worst <= 1e-10 && fields >= 20,
          fmt::format("{} advection fields in 2D and 3D, max |v'(C+T)v| / |v|'|C||v| = {:.2e} <= 1e-10", fields,
                      worst)};
}

Outcome mass_identity() {
  std::mt19937 rng(77);
  const auto space = space_on(std::make_shared<const SimplicialMesh>(tube_mesh(0)));
  const auto map = make_tube_shrink_map();
  const double dt = 0.04;
  double worst = 0.0;
  for (double t : {0.04, 0.12, 0.2}) {
    const SparseMatrix Mk = mass_matrix(*space, *map, t);
    const SparseMatrix M1 = mass_matrix(*space, *map, t - dt);
    for (int trial = 0; trial < 8; ++trial) {
      const Eigen::VectorXd v = random_interior(*space, rng);
      const Eigen::VectorXd vp = random_interior(*space, rng);
      const Eigen::VectorXd dv = (v - vp) / dt;
      const double nk = k_norm(field_of(space, v), *map, t);
      const double np = k_norm(field_of(space, vp), *map, t - dt);
      const double nd = k_norm(field_of(space, dv), *map, t - dt);
      const double lhs = v.dot(M1 * dv);
      const double rhs = (nk * nk - np * np) / (2 * dt) - 0.5 * v.dot((Mk - M1) * v) / dt + 0.5 * dt * nd * nd;
      const double scale = std::max({std::abs(lhs), nk * nk / dt, np * np / dt});
      worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
  }
  return {worst <= 1e-10, fmt::format("24 random state pairs on the shrinking tube, max relative defect {:.2e} <= 1e-10",
                                      worst)};
}

Outcome energy_monotone() {
  std::mt19937 rng(31);
  bool ok = true;
  std::string detail;
  for (int d : {2, 3}) {
    const auto space = space_on(box(d, d == 2 ? 8 : 3));
    FlowProblem problem;
    problem.space = space;
    problem.map = make_identity_map(d);
    problem.nu = 0.01;
    FlowState s0 = FlowState::zero(space);
    s0.u.coefficients = random_interior(*space, rng);
    const RunSummary r = run(s0, problem, {}, 0.02, 1.0);
    int increases = 0;
    for (std::size_t k = 1; k < r.diagnostics.size(); ++k) {
      increases += r.diagnostics[k].kinetic_energy > r.diagnostics[k - 1].kinetic_energy;
    }
    const bool steps_ok = r.diagnostics.size() == 51;
    ok = ok && steps_ok && increases == 0 && r.diagnostics.front().kinetic_energy > 0.0;
    detail += fmt::format("{}{}D: {} steps, E {:.4g} -> {:.4g}, {} increases", detail.empty() ? "" : "; ", d,
                          r.diagnostics.size() - 1, r.diagnostics.front().kinetic_energy,
                          r.diagnostics.back().kinetic_energy, increases);
  }
  return {ok, detail};
}

struct PiolaCase {
  std::string name;
  MapPtr map;
  std::function<Vec(std::mt19937&)> sample;
};

Outcome piola_identity() {
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  auto in_box = [&unit](int d) {
    return [d, unit](std::mt19937& rng) mutable {
      Vec x(d);
      for (int i = 0; i < d; ++i) x[i] = unit(rng);
      return x;
    };
  };
  auto in_tube = [](std::mt19937& rng) {
    std::uniform_real_distribution<double> y(-3.9, 3.9);
    std::uniform_real_distribution<double> r(0.0, 0.95);
    std::uniform_real_distribution<double> phi(0.0, 2 * M_PI);
    const double yy = y(rng);
    const double rr = r(rng) * std::exp((yy + 4.0) / 8.0);
    const double a = phi(rng);
    Vec x(3);
    x << rr * std::cos(a), yy, rr * std::sin(a);
    return x;
  };

  // Frames of a spatially affine motion: F is the same in every cell, so
  // difference stencils that cross cell faces stay exact.
  auto seq_mesh = box(2, 4);
  const auto affine = make_axis_scaling_map({"1 + 0.5*t", "1 - 0.25*t"});
  std::vector<MeshSequenceMap::Frame> frames;
  for (double t : {0.0, 0.1, 0.2}) {
    MeshSequenceMap::Frame f;
    f.time = t;
    f.positions.resize(2, seq_mesh->vertex_count());
    for (Index v = 0; v < seq_mesh->vertex_count(); ++v) {
      f.positions.col(v) = affine->jet(seq_mesh->vertex(v), t).position;
    }
    frames.push_back(f);
  }

  const std::vector<PiolaCase> cases{
      {"identity-2d", make_identity_map(2), in_box(2)},
      {"identity-3d", make_identity_map(3), in_box(3)},
      {"axis-scaling", make_axis_scaling_map({"1 + 0.1*t", "1/(1 + 0.1*t)"}), in_box(2)},
      {"tube-shrink", make_tube_shrink_map(), in_tube},
      {"expression", parse_map_expressions("x1*(1+t); x2/(1+t)", 2), in_box(2)},
      {"expression-curved-2d", parse_map_expressions("x1 + 0.1*t*exp(x1)*x2^2; x2 + 0.1*t*x1^3*x2", 2), in_box(2)},
      {"expression-curved-3d", parse_map_expressions("x1 + 0.1*t*exp(x2)*x3^2; x2 + 0.1*t*x1^2*x3; x3 + 0.1*t*sin(x1*x2)", 3),
       in_box(3)},
      {"mesh-sequence", std::make_shared<const MeshSequenceMap>(seq_mesh, frames), in_box(2)},
  };

  std::mt19937 rng(4242);
  std::uniform_real_distribution<double> time(0.0, 0.2);
  constexpr double delta = 1e-3;
  // Below this the residual is rounding noise, which grows as delta shrinks.
  constexpr double zero_floor = 1e-9;
  bool ok = true;
  double worst = 0.0;
  double min_slope = std::numeric_limits<double>::infinity();
  int slope_points = 0;
  for (const auto& c : cases) {
    for (int k = 0; k < 100; ++k) {
      const Vec x = c.sample(rng);
      const double t = time(rng);
      const double r = piola_residual(*c.map, x, t, delta);
      worst = std::max(worst, r);
      ok = ok && r <= 1e-6;
      const double coarse = piola_residual(*c.map, x, t, 1e-2);
      if (coarse <= zero_floor) continue;
      std::vector<double> logs{std::log2(coarse)};
      for (double h = 5e-3; h > 1e-3; h /= 2) logs.push_back(std::log2(piola_residual(*c.map, x, t, h)));
      // Least-squares slope of log2 r against the halving count.
      const double n = static_cast<double>(logs.size());
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      for (std::size_t i = 0; i < logs.size(); ++i) {
        const double xi = static_cast<double>(i);
        sx += xi;
        sy += logs[i];
        sxx += xi * xi;
        sxy += xi * logs[i];
      }
      const double slope = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
      min_slope = std::min(min_slope, slope);
      ++slope_points;
    }
  }
  ok = ok && slope_points > 0 && min_slope >= 1.9;
  return {ok, fmt::format("{} maps x 100 points, max residual {:.2e} <= 1e-6 at delta = 1e-3, "
                          "min decay order {:.3f} >= 1.9 over {} nonzero points",
                          cases.size(), worst, min_slope, slope_points)};
}

Outcome fixed_points() {
  const SolverConfig config;
  const double tol = config.effective_tolerance();

  // Rest state: static noslip box, no forcing.
  double rest = 0.0;
  for (int d : {2, 3}) {
    const auto space = space_on(box(d, d == 2 ? 6 : 2));
    FlowProblem problem;
    problem.space = space;
    problem.map = make_identity_map(d);
    const RunSummary r = run(FlowState::zero(space), problem, config, 0.1, 0.5);
    rest = std::max({rest, r.final_state.u.coefficients.lpNorm<Eigen::Infinity>(),
                     r.final_state.p.coefficients.lpNorm<Eigen::Infinity>()});
  }

  // Poiseuille channel [0,2]x[0,1]: parabolic inflow, do-nothing outflow.
  const BoxLabels labels{BoundaryLabel::dirichlet(1), BoundaryLabel::neumann(0), BoundaryLabel::noslip(),
                         BoundaryLabel::noslip()};
  auto mesh = std::make_shared<const SimplicialMesh>(generate_box(2, {8, 4}, {{{0.0, 2.0}, {0.0, 1.0}}}, labels));
  const auto space = space_on(mesh);
  const double nu = 0.1;
  const auto profile = [](const Vec& x, double) {
    Vec v(2);
    v << 4.0 * x[1] * (1.0 - x[1]), 0.0;
    return v;
  };
  FlowProblem problem;
  problem.space = space;
  problem.map = make_identity_map(2);
  problem.nu = nu;
  problem.bcs.dirichlet[1] = profile;
  problem.bcs.neumann[0] = {};
  SolverConfig channel = config;
  channel.stress = StressForm::full_gradient;
  FlowState s0 = FlowState::zero(space);
  s0.u = interpolate(space, FieldKind::velocity, [&](const Vec& x) { return profile(x, 0.0); });
  s0.p = interpolate(space, FieldKind::pressure, [&](const Vec& x) { return Vec::Constant(1, 8.0 * nu * (2.0 - x[0])); });
  const RunSummary r = run(s0, problem, channel, 0.05, 0.25);
  const double du = (r.final_state.u.coefficients - s0.u.coefficients).lpNorm<Eigen::Infinity>() /
                    s0.u.coefficients.lpNorm<Eigen::Infinity>();
  const double dp = (r.final_state.p.coefficients - s0.p.coefficients).lpNorm<Eigen::Infinity>() /
                    s0.p.coefficients.lpNorm<Eigen::Infinity>();
  const bool ok = rest <= 10 * tol && du <= 10 * tol && dp <= 10 * tol;
  return {ok, fmt::format("rest state max |x| = {:.1e}; Poiseuille after 5 steps: rel du = {:.1e}, rel dp = {:.1e}; "
                          "bound 10 tol = {:.0e}",
                          rest, du, dp, 10 * tol)};
}

Outcome transcription() {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> Y(-4.0, 4.0);
  std::uniform_real_distribution<double> R(0.0, 1.0);
  std::uniform_real_distribution<double> P(0.0, 2 * M_PI);
  std::uniform_real_distribution<double> T(0.0, 0.2);
  double worst = 0.0;
  double worst_div = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double t = T(rng);
    const double y = Y(rng);
    // Uniform in the physical cross-section of radius r(y) s(t).
    const double r = std::sqrt(R(rng)) * std::exp((y + 4.0) / 8.0) * std::sqrt(1.0 - t / 4.0);
    const double a = P(rng);
    Vec x(3);
    x << r * std::cos(a), y, r * std::sin(a);
    worst = std::max(worst, momentum_residual("tube", x, t).norm());
    worst_div = std::max(worst_div, std::abs(velocity_divergence("tube", x, t)));
  }
  return {worst <= 1e-8 && worst_div <= 1e-8,
          fmt::format("100 samples: max |momentum residual| = {:.2e}, max |div u| = {:.2e}, bound 1e-8", worst,
                      worst_div)};
}

Outcome divergence(const DivergenceLog& log) {
  const double tol = SolverConfig{}.effective_tolerance();
  return {log.studies == 2 && log.worst <= 10 * tol,
          fmt::format("max ||B u|| / ||u|| over {} studies = {:.2e} <= {:.0e}", log.studies, log.worst, 10 * tol)};
}

Outcome mesh_sequence() {
  const auto mesh = box(2, 6);
  const auto space = space_on(mesh);
  const auto analytic = make_axis_scaling_map({"1 + 0.5*t", "1 - 0.25*t"});
  std::vector<MeshSequenceMap::Frame> frames;
  for (double t : {0.0, 0.1, 0.2}) {
    MeshSequenceMap::Frame f;
    f.time = t;
    f.positions.resize(2, mesh->vertex_count());
    for (Index v = 0; v < mesh->vertex_count(); ++v) f.positions.col(v) = analytic->jet(mesh->vertex(v), t).position;
    frames.push_back(f);
  }
  const auto sequence = std::make_shared<const MeshSequenceMap>(mesh, frames);

  FlowState s0 = FlowState::zero(space);
  s0.u = interpolate(space, FieldKind::velocity, [](const Vec& x) {
    Vec v(2);
    v << std::sin(M_PI * x[0]) * std::sin(2 * M_PI * x[1]), -2.0 * std::cos(M_PI * x[0]) * std::sin(M_PI * x[1]);
    return v;
  });
  auto trajectory = [&](MapPtr map) {
    FlowProblem problem;
    problem.space = space;
    problem.map = std::move(map);
    problem.nu = 0.1;
    std::vector<FlowState> states;
    run(s0, problem, {}, 0.05, 0.2, {[&states](const FlowState& s, const StepDiagnostics&) { states.push_back(s); }});
    return states;
  };
  const auto a = trajectory(analytic);
  const auto b = trajectory(sequence);
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    worst = std::max({worst, (a[k].u.coefficients - b[k].u.coefficients).lpNorm<Eigen::Infinity>(),
                      (a[k].p.coefficients - b[k].p.coefficients).lpNorm<Eigen::Infinity>()});
  }
  return {a.size() == 4 && b.size() == 4 && worst <= 1e-8,
          fmt::format("3 frames, {} steps, max dof difference {:.2e} <= 1e-8", a.size(), worst)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  DivergenceLog log;
  const std::vector<Criterion> criteria{
      {1, "manufactured 2D convergence order", [&log] { return manufactured_order(log); }},
      {2, "tube benchmark error ratios", [&log] { return tube_rates(log); }},
      {3, "convection plus Temam skew-symmetry", skew_symmetry},
      {4, "mass-term identity on the shrinking tube", mass_identity},
      {5, "kinetic energy monotone without data", energy_monotone},
      {6, "Piola identity of the map catalog", piola_identity},
      {7, "rest-state and Poiseuille fixed points", fixed_points},
      {8, "tube exact-solution transcription", transcription},
      {9, "divergence residual during the benchmark runs", [&log] { return divergence(log); }},
      {10, "mesh-sequence map matches the analytic map", mesh_sequence},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    if (c.id == 9 && log.studies < 2) {
      fmt::print("SKIP [9] {}: needs criteria 1 and 2 in the same invocation\n", c.name);
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fmt::print("{} [{}] {}: {} ({:.1f} s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail, seconds);
    std::fflush(stdout);
    failed += !o.pass;
  }
  fmt::print("{} criteria failed\n", failed);
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
