#include <qlflow/solver.hpp>

#include <Eigen/SparseLU>
#include <unsupported/Eigen/IterativeSolvers>
#include <spdlog/spdlog.h>

#include <cmath>
#include <set>
#include <sstream>

namespace qlflow {

FlowState FlowState::zero(const SpacePtr& space, double t0) {
  return {0, t0, DiscreteField::zero(space, FieldKind::velocity), DiscreteField::zero(space, FieldKind::pressure)};
}

void BoundaryConditionSet::validate(const SimplicialMesh& mesh) const {
  std::set<int> dirichlet_patches;
  std::set<int> neumann_patches;
  for (const BoundaryLabel& l : mesh.facet_labels()) {
    if (l.kind == BoundaryKind::dirichlet) dirichlet_patches.insert(l.patch);
    if (l.kind == BoundaryKind::neumann) neumann_patches.insert(l.patch);
  }
  for (int p : dirichlet_patches) {
    auto it = dirichlet.find(p);
    if (it == dirichlet.end() || !it->second) {
      throw ConfigError("bcs.dirichlet:" + std::to_string(p), "mesh patch has no boundary data");
    }
  }
  for (int p : neumann_patches) {
    if (!neumann.count(p)) throw ConfigError("bcs.neumann:" + std::to_string(p), "mesh patch has no entry");
  }
  for (const auto& [p, fn] : dirichlet) {
    if (!dirichlet_patches.count(p)) throw ConfigError("bcs.dirichlet:" + std::to_string(p), "no such mesh patch");
  }
  for (const auto& [p, fn] : neumann) {
    if (!neumann_patches.count(p)) throw ConfigError("bcs.neumann:" + std::to_string(p), "no such mesh patch");
  }
}

double SolverConfig::effective_tolerance() const {
  if (tolerance) return *tolerance;
  return linear_solver == LinearSolverKind::direct ? 1e-10 : 1e-8;
}

AssemblyOptions SolverConfig::assembly_options() const {
  AssemblyOptions o;
  o.stress = stress;
  o.temam = temam;
  o.quadrature_degree = quadrature_degree;
  o.threads = threads;
  return o;
}

void SolverConfig::validate() const {
  if (tolerance && !(*tolerance > 0.0)) throw ConfigError("solver.tolerance", "must be positive");
  if (smagorinsky && !(smagorinsky->C_s > 0.0)) throw ConfigError("physics.smagorinsky.C_s", "must be positive");
  if (max_iterations < 1) throw ConfigError("solver.max_iterations", "must be at least 1");
  if (threads < 1) throw ConfigError("solver.threads", "must be at least 1");
  if (quadrature_degree < 0) throw ConfigError("solver.quadrature_degree", "must be non-negative");
}

BoundaryData boundary_values(const FlowProblem& problem, double t, int quadrature_degree) {
  const TaylorHoodSpace& space = *problem.space;
  const SpaceTimeMap& map = *problem.map;
  const int d = space.dimension();
  BoundaryData bc{DiscreteField::zero(problem.space, FieldKind::velocity),
                  std::vector<char>(static_cast<std::size_t>(space.velocity_dof_count()), 0), 0.0};
  const auto& classes = space.node_classes();
  for (Index node = 0; node < space.node_count(); ++node) {
    const NodeClass& cls = classes[static_cast<std::size_t>(node)];
    if (!cls.constrained()) continue;
    const MapJet jet = map.jet(space.node_position(node), t, space.cell_of_node(node));
    Vec v;
    if (cls.kind == DofClass::noslip) {
      v = jet.xi_t;
    } else {
      auto it = problem.bcs.dirichlet.find(cls.patch);
      if (it == problem.bcs.dirichlet.end() || !it->second) {
        throw ConfigError("bcs.dirichlet:" + std::to_string(cls.patch), "mesh patch has no boundary data");
      }
      v = it->second(jet.position, t);
    }
    if (v.size() != d || !v.allFinite()) {
      throw Error("invalid boundary value at " + format_point(space.node_position(node)));
    }
    for (int i = 0; i < d; ++i) {
      bc.values.at(node, i) = v[i];
      bc.constrained[static_cast<std::size_t>(space.velocity_dof(node, i))] = 1;
    }
  }
  if (problem.bcs.flux_correction()) {
    bc.c_perp = boundary_flux_correction(space, map, t, bc.values, quadrature_degree);
    const Eigen::MatrixXd& N = space.boundary_normals();
    for (Index node = 0; node < space.node_count(); ++node) {
      if (!classes[static_cast<std::size_t>(node)].constrained()) continue;
      for (int i = 0; i < d; ++i) bc.values.at(node, i) -= bc.c_perp * N(i, node);
    }
  }
  return bc;
}

ConstrainedSystem apply_boundary_conditions(const AssembledStep& system, const BoundaryData& bc,
                                            const Eigen::VectorXd* pressure_weights) {
  ConstrainedSystem out;
  const Index nu = system.A.rows();
  const Index np = system.B.rows();
  if (system.A.cols() != nu || system.B.cols() != nu || static_cast<Index>(bc.constrained.size()) != nu ||
      bc.values.coefficients.size() != nu) {
    throw Error("assembled system does not match the boundary data");
  }
  if (pressure_weights && pressure_weights->size() != np) throw Error("pressure weights have the wrong size");
  out.velocity_dofs = nu;
  out.pressure_dofs = np;
  out.bordered = pressure_weights != nullptr;
  const Index n = nu + np + (out.bordered ? 1 : 0);
  const Eigen::VectorXd& g = bc.values.coefficients;
  const auto fixed = [&](Index i) { return bc.constrained[static_cast<std::size_t>(i)] != 0; };

  out.rhs = Eigen::VectorXd::Zero(n);
  out.rhs.head(nu) = system.rhs_u;
  out.rhs.segment(nu, np) = system.constraint_rhs;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(system.A.nonZeros() + 2 * system.B.nonZeros() + nu + 2 * np));
  for (Index col = 0; col < system.A.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(system.A, col); it; ++it) {
      const Index r = it.row();
      if (fixed(col)) {
        if (!fixed(r)) out.rhs[r] -= it.value() * g[col];
      } else if (!fixed(r)) {
        trips.emplace_back(r, col, it.value());
      }
    }
  }
  for (Index col = 0; col < system.B.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(system.B, col); it; ++it) {
      const Index q = nu + it.row();
      if (fixed(col)) {
        out.rhs[q] += it.value() * g[col];
      } else {
        trips.emplace_back(q, col, -it.value());
        trips.emplace_back(col, q, -it.value());
      }
    }
  }
  for (Index i = 0; i < nu; ++i) {
    if (fixed(i)) {
      trips.emplace_back(i, i, 1.0);
      out.rhs[i] = g[i];
    }
  }
  if (out.bordered) {
    for (Index q = 0; q < np; ++q) {
      trips.emplace_back(nu + q, n - 1, (*pressure_weights)[q]);
      trips.emplace_back(n - 1, nu + q, (*pressure_weights)[q]);
    }
  }
  out.K.resize(n, n);
  out.K.setFromTriplets(trips.begin(), trips.end());
  out.K.makeCompressed();
  return out;
}

namespace {

// Block upper-triangular preconditioner [A -B^T; 0 S] with
// S^{-1} = -(B D^{-1} B^T + eps Mp)^{-1} - nu Mp^{-1}, D = diag(A).
class BlockPreconditioner {
 public:
  BlockPreconditioner() = default;

  void setup(const ConstrainedSystem& sys, const SparseMatrix& Mp, double nu) {
    nu_ = nu;
    nu_dofs_ = sys.velocity_dofs;
    np_ = sys.pressure_dofs;
    const SparseMatrix A = sys.K.topLeftCorner(nu_dofs_, nu_dofs_);
    Bt_ = -sys.K.block(0, nu_dofs_, nu_dofs_, np_);  // B^T
    velocity_.compute(A);
    if (velocity_.info() != Eigen::Success) throw SolverError("velocity block factorization failed");
    const Eigen::VectorXd dinv = A.diagonal().cwiseInverse();
    SparseMatrix L = SparseMatrix(Bt_.transpose()) * dinv.asDiagonal() * Bt_;
    const double scale = L.diagonal().mean() / Mp.diagonal().mean();
    L += (1e-8 * scale) * Mp;
    laplace_.compute(L);
    mass_.compute(Mp);
    if (laplace_.info() != Eigen::Success || mass_.info() != Eigen::Success) {
      throw SolverError("pressure preconditioner factorization failed");
    }
    ready_ = true;
  }

  template <typename MatType>
  BlockPreconditioner& analyzePattern(const MatType&) { return *this; }
  template <typename MatType>
  BlockPreconditioner& factorize(const MatType&) { return *this; }
  template <typename MatType>
  BlockPreconditioner& compute(const MatType&) { return *this; }

  template <typename Rhs>
  Eigen::VectorXd solve(const Rhs& b) const {
    Eigen::VectorXd r = b;
    Eigen::VectorXd y = r;
    const Eigen::VectorXd rp = r.segment(nu_dofs_, np_);
    const Eigen::VectorXd yp = -(laplace_.solve(rp) + nu_ * mass_.solve(rp));
    y.segment(nu_dofs_, np_) = yp;
    y.head(nu_dofs_) = velocity_.solve(Eigen::VectorXd(r.head(nu_dofs_) + Bt_ * yp));
    return y;
  }

  Eigen::ComputationInfo info() const { return ready_ ? Eigen::Success : Eigen::InvalidInput; }

 private:
  double nu_ = 1.0;
  Index nu_dofs_ = 0;
  Index np_ = 0;
  SparseMatrix Bt_;
  Eigen::SparseLU<SparseMatrix> velocity_;
  Eigen::SparseLU<SparseMatrix> laplace_;
  Eigen::SparseLU<SparseMatrix> mass_;
  bool ready_ = false;
};

std::string format_history(const std::vector<double>& h) {
  std::ostringstream os;
  os << "residual history:";
  for (double r : h) os << ' ' << r;
  return os.str();
}

}  // namespace

struct LinearSolver::Impl {
  SolverConfig config;
  Eigen::SparseLU<SparseMatrix> lu;
  std::vector<int> outer;
  std::vector<int> inner;
  Index size = -1;

  bool same_pattern(const SparseMatrix& K) const {
    if (K.rows() != size) return false;
    const auto n_outer = static_cast<std::size_t>(K.outerSize() + 1);
    const auto nnz = static_cast<std::size_t>(K.nonZeros());
    return outer.size() == n_outer && inner.size() == nnz &&
           std::equal(outer.begin(), outer.end(), K.outerIndexPtr()) &&
           std::equal(inner.begin(), inner.end(), K.innerIndexPtr());
  }

  Eigen::VectorXd direct(const ConstrainedSystem& sys, double bnorm, LinearSolveReport& report) {
    const SparseMatrix& K = sys.K;
    if (!same_pattern(K)) {
      lu.analyzePattern(K);
      outer.assign(K.outerIndexPtr(), K.outerIndexPtr() + K.outerSize() + 1);
      inner.assign(K.innerIndexPtr(), K.innerIndexPtr() + K.nonZeros());
      size = K.rows();
    }
    lu.factorize(K);
    if (lu.info() != Eigen::Success) throw SolverError("saddle-point factorization failed: " + lu.lastErrorMessage());
    const double tol = config.effective_tolerance();
    Eigen::VectorXd x = lu.solve(sys.rhs);
    Eigen::VectorXd r = sys.rhs - K * x;
    report.history.push_back(r.norm() / bnorm);
    // One refinement step always; up to three more while above tolerance.
    for (int k = 0; k < 4 && (k == 0 || report.history.back() > tol); ++k) {
      x += lu.solve(r);
      r = sys.rhs - K * x;
      report.history.push_back(r.norm() / bnorm);
    }
    report.iterations = static_cast<int>(report.history.size()) - 1;
    report.relative_residual = report.history.back();
    if (!std::isfinite(report.relative_residual) || report.relative_residual > tol) {
      throw SolverError("direct solve missed tolerance " + std::to_string(tol) + "; " + format_history(report.history));
    }
    return x;
  }

  Eigen::VectorXd iterative(const ConstrainedSystem& sys, const SparseMatrix& Mp, double nu, double bnorm,
                            LinearSolveReport& report) {
    const double tol = config.effective_tolerance();
    Eigen::GMRES<SparseMatrix, BlockPreconditioner> gmres;
    gmres.set_restart(60);
    gmres.setMaxIterations(config.max_iterations);
    gmres.setTolerance(tol);
    gmres.preconditioner().setup(sys, Mp, nu);
    gmres.compute(sys.K);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.rhs.size());
    // The Krylov stopping test uses an estimate; restart on the true residual.
    for (int cycle = 0; cycle < 5; ++cycle) {
      const Eigen::VectorXd r = sys.rhs - sys.K * x;
      const double rel = r.norm() / bnorm;
      if (cycle > 0) report.history.push_back(rel);
      if (rel <= tol) break;
      gmres.setTolerance(std::min(1.0, 0.5 * tol * bnorm / r.norm()));
      x += gmres.solve(r);
      report.iterations += static_cast<int>(gmres.iterations());
      if (report.iterations >= config.max_iterations) {
        report.history.push_back((sys.rhs - sys.K * x).norm() / bnorm);
        break;
      }
    }
    report.relative_residual = (sys.rhs - sys.K * x).norm() / bnorm;
    if (!std::isfinite(report.relative_residual) || report.relative_residual > tol) {
      throw SolverError("GMRES missed tolerance " + std::to_string(tol) + " after " +
                        std::to_string(report.iterations) + " iterations; " + format_history(report.history));
    }
    return x;
  }
};

LinearSolver::LinearSolver(const SolverConfig& config) : impl_(std::make_unique<Impl>()) {
  config.validate();
  impl_->config = config;
}
LinearSolver::~LinearSolver() = default;
LinearSolver::LinearSolver(LinearSolver&&) noexcept = default;
LinearSolver& LinearSolver::operator=(LinearSolver&&) noexcept = default;

Eigen::VectorXd LinearSolver::solve(const ConstrainedSystem& system, const SparseMatrix& pressure_mass,
                                    double nu_estimate, LinearSolveReport& report) {
  report = {};
  const double bnorm = system.rhs.norm();
  if (bnorm == 0.0) return Eigen::VectorXd::Zero(system.rhs.size());
  if (impl_->config.linear_solver == LinearSolverKind::direct) return impl_->direct(system, bnorm, report);
  return impl_->iterative(system, pressure_mass, nu_estimate, bnorm, report);
}

FlowSolver::FlowSolver(FlowProblem problem, SolverConfig config)
    : problem_(std::move(problem)), config_(std::move(config)), linear_(config_) {
  if (!problem_.space || !problem_.map) throw Error("flow problem needs a space and a map");
  if (problem_.map->dimension() != problem_.space->dimension()) throw Error("map and mesh dimensions differ");
  if (!(problem_.nu > 0.0)) throw ConfigError("physics.nu", "must be positive");
  problem_.bcs.validate(problem_.space->mesh());
  if (problem_.space->conflict_count() > 0) {
    spdlog::info("{} boundary nodes carry conflicting constrained labels; noslip wins, then the smaller patch",
                 problem_.space->conflict_count());
  }
}

FlowState FlowSolver::advance(const FlowState& prev, double dt, const FlowState* prev2, StepReport* report) {
  const SpacePtr& space = problem_.space;
  const SpaceTimeMap& map = *problem_.map;
  if (!(dt > 0.0)) throw Error("time step must be positive");
  const auto check = [&](const FlowState& s) {
    if (s.u.coefficients.size() != space->velocity_dof_count() ||
        s.p.coefficients.size() != space->pressure_dof_count()) {
      throw Error("flow state does not belong to the problem space");
    }
  };
  check(prev);
  const bool bdf2 = config_.scheme == TimeScheme::bdf2 && prev2 != nullptr;
  if (bdf2) check(*prev2);

  const double t = prev.t + dt;
  const DiscreteField xi_t = interpolate_map_velocity(space, map, t);
  DiscreteField w = prev.u;
  if (bdf2) w.coefficients = 2.0 * prev.u.coefficients - prev2->u.coefficients;
  w.coefficients -= xi_t.coefficients;

  StepData data;
  data.t_k = t;
  data.dt = dt;
  data.scheme = bdf2 ? TimeScheme::bdf2 : TimeScheme::backward_euler;
  data.w = &w;
  data.u_prev = &prev.u;
  data.u_prev2 = bdf2 ? &prev2->u : nullptr;
  data.nu = problem_.nu;
  data.smagorinsky = config_.smagorinsky;
  data.forcing = problem_.forcing;
  for (const auto& [patch, g] : problem_.bcs.neumann) {
    if (g) data.traction[patch] = g;
  }
  const AssembledStep step = assemble_step(*space, map, data, config_.assembly_options());

  const int degree = config_.quadrature_degree;
  const BoundaryData bc = boundary_values(problem_, t, degree);
  Eigen::VectorXd weights;
  if (problem_.bcs.flux_correction()) weights = pressure_weights(*space, map, t, degree);
  const ConstrainedSystem sys = apply_boundary_conditions(step, bc, problem_.bcs.flux_correction() ? &weights : nullptr);

  SparseMatrix Mp;
  if (config_.linear_solver == LinearSolverKind::iterative) Mp = pressure_mass_matrix(*space, map, t, degree);
  StepReport local;
  StepReport& rep = report ? *report : local;
  rep = {};
  const Eigen::VectorXd x = linear_.solve(sys, Mp, problem_.nu, rep.linear);

  const Index nu = space->velocity_dof_count();
  FlowState next{prev.k + 1, t, DiscreteField::zero(space, FieldKind::velocity),
                 DiscreteField::zero(space, FieldKind::pressure)};
  next.u.coefficients = x.head(nu);
  for (Index i = 0; i < nu; ++i) {
    if (bc.constrained[static_cast<std::size_t>(i)]) next.u.coefficients[i] = bc.values.coefficients[i];
  }
  next.p.coefficients = x.segment(nu, space->pressure_dof_count());
  rep.divergence_residual = (step.B * next.u.coefficients + step.constraint_rhs).norm();
  rep.c_perp = bc.c_perp;
  spdlog::debug("step {} t={} solve residual {:.3e} ({} it) divergence {:.3e}", next.k, t,
                rep.linear.relative_residual, rep.linear.iterations, rep.divergence_residual);
  return next;
}

FlowState advance(const FlowState& prev, const FlowProblem& problem, const SolverConfig& config, double dt,
                  const FlowState* prev2, StepReport* report) {
  FlowSolver solver(problem, config);
  return solver.advance(prev, dt, prev2, report);
}

namespace {

StepDiagnostics diagnose(const FlowProblem& problem, const SolverConfig& config, const FlowState& s, double dt,
                         const StepReport* rep) {
  const TaylorHoodSpace& space = *problem.space;
  const SpaceTimeMap& map = *problem.map;
  const int degree = config.quadrature_degree;
  const Eigen::VectorXd& u = s.u.coefficients;
  StepDiagnostics d;
  d.step = s.k;
  d.t = s.t;
  d.kinetic_energy = 0.5 * u.dot(mass_matrix(space, map, s.t, degree) * u);
  d.u_norm = u.norm();
  if (rep) {
    d.dissipation = dt * u.dot(viscous_matrix(space, map, s.t, problem.nu, config.stress, degree) * u);
    if (problem.forcing) d.forcing_work = dt * u.dot(forcing_vector(space, map, s.t, problem.forcing, degree));
    d.divergence_residual = rep->divergence_residual;
    d.linear_iterations = rep->linear.iterations;
    d.linear_residual = rep->linear.relative_residual;
  } else {
    d.divergence_residual = (divergence_matrix(space, map, s.t, degree) * u).norm();
  }
  return d;
}

}  // namespace

RunSummary run(const FlowState& initial, const FlowProblem& problem, const SolverConfig& config, double dt,
               double t_end, const std::vector<StepCallback>& callbacks) {
  if (!(dt > 0.0)) throw ConfigError("time.dt", "must be positive");
  const double span = t_end - initial.t;
  if (span < -1e-12) throw ConfigError("time.T", "end time precedes the initial time");
  const double steps = std::round(span / dt);
  if (std::abs(steps * dt - span) > 1e-9 * std::max(1.0, std::abs(t_end))) {
    throw ConfigError("time.dt", "does not divide the time interval");
  }
  const auto n = static_cast<Index>(steps);

  FlowSolver solver(problem, config);
  RunSummary summary;
  summary.final_state = initial;
  summary.diagnostics.push_back(diagnose(problem, config, initial, dt, nullptr));
  const auto notify = [&](const FlowState& s) {
    for (const StepCallback& cb : callbacks) {
      try {
        cb(s, summary.diagnostics.back());
      } catch (const std::exception& e) {
        throw Error("callback failed at step " + std::to_string(s.k) + ": " + e.what());
      }
    }
  };

  std::optional<FlowState> older;
  for (Index k = 0; k < n; ++k) {
    StepReport rep;
    // Step times are t0 + k dt, not accumulated sums.
    const double t_next = k + 1 == n ? t_end : initial.t + static_cast<double>(k + 1) * dt;
    const double step_dt = t_next - summary.final_state.t;
    FlowState next = solver.advance(summary.final_state, step_dt, older ? &*older : nullptr, &rep);
    older = std::move(summary.final_state);
    summary.final_state = std::move(next);
    summary.diagnostics.push_back(diagnose(problem, config, summary.final_state, dt, &rep));
    notify(summary.final_state);
  }
  return summary;
}

}  // namespace qlflow
