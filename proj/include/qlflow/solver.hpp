#pragma once

// Time stepping on the reference domain.
//
// One step assembles the linearized system with the advection velocity
// w = u^{k-1} - I_h(xi_t^k), imposes the boundary data by symmetric
// elimination and solves the full saddle-point system.

#include <qlflow/ale_map.hpp>
#include <qlflow/assembly.hpp>
#include <qlflow/space.hpp>

#include <Eigen/SparseCore>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace qlflow {

struct FlowState {
  Index k = 0;
  double t = 0.0;
  DiscreteField u;
  DiscreteField p;

  static FlowState zero(const SpacePtr& space, double t0 = 0.0);
};

/// Boundary data per facet label. Noslip facets carry no data: they move with
/// the domain. A neumann patch mapped to an empty function is do-nothing.
struct BoundaryConditionSet {
  std::map<int, SpaceTimeField> dirichlet;
  std::map<int, SpaceTimeField> neumann;

  /// Flux correction of the boundary data; on iff no neumann patch exists.
  bool flux_correction() const { return neumann.empty(); }

  /// Throws ConfigError when a mesh label has no entry or an entry names a
  /// patch that the mesh does not carry.
  void validate(const SimplicialMesh& mesh) const;
};

enum class LinearSolverKind { direct, iterative };

struct SolverConfig {
  LinearSolverKind linear_solver = LinearSolverKind::direct;
  /// Relative residual; unset selects 1e-10 (direct) or 1e-8 (iterative).
  std::optional<double> tolerance;
  int max_iterations = 500;
  TimeScheme scheme = TimeScheme::backward_euler;
  std::optional<SmagorinskyConfig> smagorinsky;
  StressForm stress = StressForm::symmetric;
  bool temam = true;
  int threads = 1;
  int quadrature_degree = 0;

  double effective_tolerance() const;
  AssemblyOptions assembly_options() const;
  void validate() const;
};

struct FlowProblem {
  SpacePtr space;
  MapPtr map;
  double nu = 1.0;
  /// Physical body force; empty means zero.
  SpaceTimeField forcing;
  BoundaryConditionSet bcs;
};

/// Boundary values at t_k on the constrained velocity dofs.
struct BoundaryData {
  DiscreteField values;
  /// Per velocity dof: 1 when constrained.
  std::vector<char> constrained;
  double c_perp = 0.0;
};

BoundaryData boundary_values(const FlowProblem& problem, double t, int quadrature_degree = 0);

/// Saddle-point matrix [A -B^T; -B 0] after elimination, optionally bordered by
/// the pressure weights (last row and column) to fix a mean-zero pressure.
struct ConstrainedSystem {
  SparseMatrix K;
  Eigen::VectorXd rhs;
  Index velocity_dofs = 0;
  Index pressure_dofs = 0;
  bool bordered = false;
};

ConstrainedSystem apply_boundary_conditions(const AssembledStep& system, const BoundaryData& bc,
                                            const Eigen::VectorXd* pressure_weights);

struct LinearSolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
  /// Relative residual after each iteration (refinement step or Krylov cycle).
  std::vector<double> history;
};

/// Solves a ConstrainedSystem; keeps the symbolic factorization between calls
/// as long as the sparsity pattern is unchanged.
class LinearSolver {
 public:
  explicit LinearSolver(const SolverConfig& config);
  ~LinearSolver();
  LinearSolver(LinearSolver&&) noexcept;
  LinearSolver& operator=(LinearSolver&&) noexcept;

  /// `nu_estimate` scales the pressure-mass Schur approximation of the
  /// iterative path. Throws SolverError with the residual history on failure.
  Eigen::VectorXd solve(const ConstrainedSystem& system, const SparseMatrix& pressure_mass, double nu_estimate,
                        LinearSolveReport& report);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct StepReport {
  LinearSolveReport linear;
  /// ||B u^k|| with the unconstrained divergence block.
  double divergence_residual = 0.0;
  double c_perp = 0.0;
};

/// Stateful stepper. Keeps u^{k-2} for bdf2 (the first step is backward Euler)
/// and the factorization cache.
class FlowSolver {
 public:
  FlowSolver(FlowProblem problem, SolverConfig config);

  const FlowProblem& problem() const { return problem_; }
  const SolverConfig& config() const { return config_; }

  /// Advances `prev` by dt. `prev2` must be the state one step earlier when
  /// the scheme is bdf2 and is ignored otherwise; null selects the startup step.
  FlowState advance(const FlowState& prev, double dt, const FlowState* prev2 = nullptr,
                    StepReport* report = nullptr);

 private:
  FlowProblem problem_;
  SolverConfig config_;
  LinearSolver linear_;
};

/// Single step without a cached factorization.
FlowState advance(const FlowState& prev, const FlowProblem& problem, const SolverConfig& config, double dt,
                  const FlowState* prev2 = nullptr, StepReport* report = nullptr);

struct StepDiagnostics {
  Index step = 0;
  double t = 0.0;
  /// 1/2 int J |u|^2.
  double kinetic_energy = 0.0;
  /// dt * a(u, u) with the step viscosity.
  double dissipation = 0.0;
  /// dt * int J f(xi).u.
  double forcing_work = 0.0;
  double divergence_residual = 0.0;
  double u_norm = 0.0;
  int linear_iterations = 0;
  double linear_residual = 0.0;
};

/// Called after every accepted step; an exception aborts the run.
using StepCallback = std::function<void(const FlowState&, const StepDiagnostics&)>;

struct RunSummary {
  FlowState final_state;
  /// Entry 0 describes the initial state.
  std::vector<StepDiagnostics> diagnostics;
};

/// N = round(T_end - t0) / dt steps; throws when dt does not divide the
/// interval within 1e-9 relative.
RunSummary run(const FlowState& initial, const FlowProblem& problem, const SolverConfig& config, double dt,
               double t_end, const std::vector<StepCallback>& callbacks = {});

}  // namespace qlflow
