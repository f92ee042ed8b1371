#include <doctest.h>

#include <qlflow/solver.hpp>

#include <cmath>

using namespace qlflow;

namespace {

SpacePtr box_space(int n, const BoxLabels& labels = {}) {
  BoxLabels l = labels.empty() ? BoxLabels(4, BoundaryLabel::noslip()) : labels;
  auto mesh = std::make_shared<SimplicialMesh>(generate_box(2, {n, n}, {{{0.0, 1.0}, {0.0, 1.0}}}, l));
  return std::make_shared<TaylorHoodSpace>(mesh);
}

FlowProblem static_problem(const SpacePtr& space, double nu = 1.0) {
  FlowProblem p;
  p.space = space;
  p.map = make_identity_map(space->dimension());
  p.nu = nu;
  return p;
}

double max_abs(const SparseMatrix& m) {
  double v = 0.0;
  for (Index k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) v = std::max(v, std::abs(it.value()));
  }
  return v;
}

// Discretely divergence-free velocity: one step from a rotational start.
FlowState swirl_state(const SpacePtr& space) {
  FlowState s = FlowState::zero(space);
  s.u = interpolate(space, FieldKind::velocity, [](const Vec& x) {
    Vec v(2);
    v << std::sin(M_PI * x[0]) * std::sin(2 * M_PI * x[1]), -2.0 * std::cos(M_PI * x[0]) * std::sin(M_PI * x[1]);
    return v;
  });
  return s;
}

}  // namespace

TEST_CASE("rest state is a fixed point") {
  auto space = box_space(4);
  const FlowProblem problem = static_problem(space);
  FlowSolver solver(problem, {});
  FlowState s = FlowState::zero(space);
  for (int k = 0; k < 3; ++k) {
    StepReport rep;
    s = solver.advance(s, 0.1, nullptr, &rep);
    CHECK(s.u.coefficients.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(s.p.coefficients.lpNorm<Eigen::Infinity>() == 0.0);
  }
  CHECK(s.k == 3);
  CHECK(s.t == doctest::Approx(0.3));
}

TEST_CASE("steady Poiseuille flow is reproduced") {
  // Channel [0,2]x[0,1]: noslip walls, parabolic inflow, do-nothing outflow.
  const BoxLabels labels{BoundaryLabel::dirichlet(1), BoundaryLabel::neumann(0), BoundaryLabel::noslip(),
                         BoundaryLabel::noslip()};
  auto mesh = std::make_shared<SimplicialMesh>(generate_box(2, {8, 4}, {{{0.0, 2.0}, {0.0, 1.0}}}, labels));
  auto space = std::make_shared<TaylorHoodSpace>(mesh);
  const double nu = 0.1;
  const auto profile = [](const Vec& x, double) {
    Vec v(2);
    v << 4.0 * x[1] * (1.0 - x[1]), 0.0;
    return v;
  };
  FlowProblem problem = static_problem(space, nu);
  problem.bcs.dirichlet[1] = profile;
  problem.bcs.neumann[0] = {};
  SolverConfig config;
  config.stress = StressForm::full_gradient;

  FlowState s0 = FlowState::zero(space);
  s0.u = interpolate(space, FieldKind::velocity, [&](const Vec& x) { return profile(x, 0.0); });
  s0.p = interpolate(space, FieldKind::pressure, [&](const Vec& x) { return Vec::Constant(1, 8.0 * nu * (2.0 - x[0])); });

  const double dt = 0.05;
  // Residual of the exact state in the step system, before solving.
  const DiscreteField w = s0.u;
  StepData data;
  data.t_k = dt;
  data.dt = dt;
  data.w = &w;
  data.u_prev = &s0.u;
  data.nu = nu;
  AssemblyOptions opts;
  opts.stress = StressForm::full_gradient;
  const AssembledStep step = assemble_step(*space, *problem.map, data, opts);
  const BoundaryData bc = boundary_values(problem, dt);
  const ConstrainedSystem sys = apply_boundary_conditions(step, bc, nullptr);
  Eigen::VectorXd x(sys.K.rows());
  x << s0.u.coefficients, s0.p.coefficients;
  CHECK((sys.K * x - sys.rhs).norm() <= 1e-12 * sys.rhs.norm());

  FlowSolver solver(problem, config);
  StepReport rep;
  const FlowState s1 = solver.advance(s0, dt, nullptr, &rep);
  const double tol = config.effective_tolerance();
  CHECK((s1.u.coefficients - s0.u.coefficients).lpNorm<Eigen::Infinity>() <= 10 * tol);
  CHECK((s1.p.coefficients - s0.p.coefficients).lpNorm<Eigen::Infinity>() <= 1e-8);
  CHECK(rep.divergence_residual <= 10 * tol * s1.u.coefficients.norm());
}

TEST_CASE("noslip boundary values follow the tube motion") {
  auto mesh = std::make_shared<SimplicialMesh>(generate_tube(3, 2, [](double) { return 1.0; }, {-1.0, 1.0}));
  auto space = std::make_shared<TaylorHoodSpace>(mesh);
  FlowProblem problem;
  problem.space = space;
  problem.map = make_tube_shrink_map();
  problem.bcs.neumann[0] = {};
  const double t = 0.4;
  const double s = std::sqrt(1.0 - t / 4.0);
  const BoundaryData bc = boundary_values(problem, t);
  CHECK(bc.c_perp == 0.0);
  int lateral = 0;
  for (Index node = 0; node < space->node_count(); ++node) {
    const Vec x = space->node_position(node);
    if (std::abs(std::hypot(x[0], x[2]) - 1.0) > 1e-12 || std::abs(x[1]) > 1.0 - 1e-12) continue;
    ++lateral;
    CHECK(bc.values.at(node, 0) == doctest::Approx(-x[0] / (8.0 * s)).epsilon(1e-12));
    CHECK(bc.values.at(node, 1) == 0.0);
    CHECK(bc.values.at(node, 2) == doctest::Approx(-x[2] / (8.0 * s)).epsilon(1e-12));
  }
  CHECK(lateral > 0);
}

TEST_CASE("static all-noslip domain constrains every boundary dof to zero") {
  auto space = box_space(3);
  const BoundaryData bc = boundary_values(static_problem(space), 0.2);
  CHECK(bc.values.coefficients.lpNorm<Eigen::Infinity>() == 0.0);
  Index n = 0;
  for (char c : bc.constrained) n += c;
  // 3x3 box: 12 boundary vertices and 12 boundary edges, two components.
  CHECK(n == 2 * 24);
}

TEST_CASE("symmetric elimination keeps the symmetric-stress block symmetric") {
  auto space = box_space(4);
  const FlowProblem problem = static_problem(space);
  const DiscreteField zero = DiscreteField::zero(space, FieldKind::velocity);
  StepData data;
  data.t_k = 0.1;
  data.dt = 0.1;
  data.w = &zero;
  data.u_prev = &zero;
  const AssembledStep step = assemble_step(*space, *problem.map, data);
  const Eigen::VectorXd m = pressure_weights(*space, *problem.map, 0.1);
  const ConstrainedSystem sys = apply_boundary_conditions(step, boundary_values(problem, 0.1), &m);
  const SparseMatrix Kt = sys.K.transpose();
  CHECK(max_abs(sys.K - Kt) <= 1e-12);
  CHECK(sys.bordered);
  CHECK(sys.K.rows() == space->velocity_dof_count() + space->pressure_dof_count() + 1);
}

TEST_CASE("kinetic energy does not grow without data") {
  auto space = box_space(6);
  const FlowProblem problem = static_problem(space, 0.05);
  const RunSummary r = run(swirl_state(space), problem, {}, 0.05, 1.0);
  REQUIRE(r.diagnostics.size() == 21);
  for (std::size_t k = 1; k < r.diagnostics.size(); ++k) {
    CHECK(r.diagnostics[k].kinetic_energy <= r.diagnostics[k - 1].kinetic_energy * (1.0 + 1e-12));
    CHECK(r.diagnostics[k].divergence_residual <= 10 * 1e-10 * r.diagnostics[k].u_norm);
  }
  CHECK(r.diagnostics.back().kinetic_energy < 0.9 * r.diagnostics.front().kinetic_energy);
  CHECK(r.final_state.k == 20);
  CHECK(r.final_state.t == 1.0);
}

TEST_CASE("pressure has zero mean without neumann facets") {
  auto space = box_space(4);
  FlowProblem problem = static_problem(space);
  problem.forcing = [](const Vec& x, double) {
    Vec f(2);
    f << x[1], 2.0 * x[0] * x[0];
    return f;
  };
  const FlowState s = advance(FlowState::zero(space), problem, {}, 0.1);
  const Eigen::VectorXd m = pressure_weights(*space, *problem.map, 0.1);
  CHECK(std::abs(m.dot(s.p.coefficients)) <= 1e-12);
  CHECK(s.p.coefficients.norm() > 1e-3);
}

TEST_CASE("constrained dofs hold the boundary values exactly") {
  auto space = box_space(4);
  FlowProblem problem;
  problem.space = space;
  problem.map = make_axis_scaling_map({"1 + 0.3*t", "1 - 0.2*t*t"});
  FlowSolver solver(problem, {});
  const FlowState s = solver.advance(FlowState::zero(space), 0.1);
  const BoundaryData bc = boundary_values(problem, 0.1);
  CHECK(bc.c_perp != 0.0);
  for (std::size_t i = 0; i < bc.constrained.size(); ++i) {
    if (bc.constrained[i]) CHECK(s.u.coefficients[static_cast<Index>(i)] == bc.values.coefficients[static_cast<Index>(i)]);
  }
}

TEST_CASE("Temam terms vanish for a pointwise divergence-free advection field") {
  auto space = box_space(4);
  const FlowProblem problem = static_problem(space);
  // w = (x^2, -2xy) is divergence free and lies in P2.
  const DiscreteField w = interpolate(space, FieldKind::velocity, [](const Vec& x) {
    Vec v(2);
    v << x[0] * x[0], -2.0 * x[0] * x[1];
    return v;
  });
  StepData data;
  data.t_k = 0.1;
  data.dt = 0.1;
  data.w = &w;
  data.u_prev = &w;
  AssemblyOptions on;
  AssemblyOptions off;
  off.temam = false;
  const BoundaryData bc = boundary_values(problem, 0.1);
  const ConstrainedSystem a = apply_boundary_conditions(assemble_step(*space, *problem.map, data, on), bc, nullptr);
  const ConstrainedSystem b = apply_boundary_conditions(assemble_step(*space, *problem.map, data, off), bc, nullptr);
  CHECK(max_abs(a.K - b.K) <= 1e-12 * max_abs(a.K));
  CHECK((a.rhs - b.rhs).norm() == 0.0);
}

TEST_CASE("bdf2 is exact on data linear in time") {
  // u = (1 + t)(x, -y), p = 0, forcing absorbs convection.
  const auto exact = [](const Vec& x, double t) {
    Vec v(2);
    v << (1.0 + t) * x[0], -(1.0 + t) * x[1];
    return v;
  };
  auto space = box_space(4, BoxLabels(4, BoundaryLabel::dirichlet(1)));
  FlowProblem problem = static_problem(space, 0.3);
  problem.bcs.dirichlet[1] = exact;
  problem.forcing = [](const Vec& x, double t) {
    Vec f(2);
    const double a = (1.0 + t) * (1.0 + t);
    f << x[0] + a * x[0], -x[1] + a * x[1];
    return f;
  };
  SolverConfig config;
  config.scheme = TimeScheme::bdf2;
  const double dt = 0.1;
  const auto state_at = [&](Index k) {
    FlowState s = FlowState::zero(space, k * dt);
    s.k = k;
    s.u = interpolate(space, FieldKind::velocity, [&](const Vec& x) { return exact(x, k * dt); });
    return s;
  };
  FlowSolver solver(problem, config);
  FlowState older = state_at(0);
  FlowState prev = state_at(1);
  for (Index k = 2; k <= 4; ++k) {
    FlowState next = solver.advance(prev, dt, &older);
    const FlowState ref = state_at(k);
    CHECK((next.u.coefficients - ref.u.coefficients).lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK(next.p.coefficients.lpNorm<Eigen::Infinity>() <= 1e-8);
    older = std::move(prev);
    prev = std::move(next);
  }
}

TEST_CASE("iterative and direct solves agree") {
  auto space = box_space(5);
  FlowProblem problem = static_problem(space, 0.1);
  problem.map = make_axis_scaling_map({"1 + 0.3*t", "1"});
  SolverConfig direct;
  SolverConfig krylov;
  krylov.linear_solver = LinearSolverKind::iterative;
  krylov.tolerance = 1e-10;
  const FlowState s0 = swirl_state(space);
  StepReport rep;
  const FlowState a = advance(s0, problem, direct, 0.1);
  const FlowState b = advance(s0, problem, krylov, 0.1, nullptr, &rep);
  CHECK(rep.linear.iterations > 0);
  CHECK(rep.linear.relative_residual <= 1e-10);
  CHECK((a.u.coefficients - b.u.coefficients).lpNorm<Eigen::Infinity>() <= 1e-7);
}

TEST_CASE("run with zero steps returns the initial state") {
  auto space = box_space(3);
  const FlowState s0 = swirl_state(space);
  int calls = 0;
  const RunSummary r = run(s0, static_problem(space), {}, 0.1, 0.0, {[&](const FlowState&, const StepDiagnostics&) { ++calls; }});
  CHECK(calls == 0);
  CHECK(r.final_state.k == 0);
  CHECK(r.final_state.u.coefficients == s0.u.coefficients);
  CHECK(r.diagnostics.size() == 1);
}

TEST_CASE("run validation and callback failures") {
  auto space = box_space(3);
  const FlowProblem problem = static_problem(space);
  CHECK_THROWS_AS(run(FlowState::zero(space), problem, {}, 0.3, 1.0), ConfigError);
  CHECK_THROWS_AS(run(FlowState::zero(space), problem, {}, -0.1, 1.0), ConfigError);
  try {
    run(FlowState::zero(space), problem, {}, 0.1, 0.3, {[](const FlowState& s, const StepDiagnostics&) {
          if (s.k == 2) throw std::runtime_error("disk full");
        }});
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("step 2") != std::string::npos);
  }
  SolverConfig bad;
  bad.tolerance = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.smagorinsky = SmagorinskyConfig{-1.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("boundary condition sets must cover the mesh labels") {
  const BoxLabels labels{BoundaryLabel::dirichlet(1), BoundaryLabel::neumann(0), BoundaryLabel::noslip(),
                         BoundaryLabel::noslip()};
  const SimplicialMesh mesh = generate_box(2, {2, 2}, {{{0.0, 1.0}, {0.0, 1.0}}}, labels);
  BoundaryConditionSet bcs;
  CHECK_THROWS_AS(bcs.validate(mesh), ConfigError);
  bcs.dirichlet[1] = [](const Vec&, double) { return Vec::Zero(2).eval(); };
  CHECK_THROWS_AS(bcs.validate(mesh), ConfigError);
  bcs.neumann[0] = {};
  CHECK_NOTHROW(bcs.validate(mesh));
  CHECK_FALSE(bcs.flux_correction());
  bcs.neumann[7] = {};
  CHECK_THROWS_AS(bcs.validate(mesh), ConfigError);
}

TEST_CASE("Smagorinsky runs stay finite") {
  auto space = box_space(4);
  FlowProblem problem = static_problem(space, 0.01);
  SolverConfig config;
  config.smagorinsky = SmagorinskyConfig{0.2};
  const RunSummary r = run(swirl_state(space), problem, config, 0.1, 0.3);
  CHECK(r.final_state.u.coefficients.allFinite());
  CHECK(r.diagnostics.back().kinetic_energy < r.diagnostics.front().kinetic_energy);
}
