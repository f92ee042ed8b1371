#pragma once

// Error norms, energy diagnostics, built-in benchmark cases and the
// convergence-study harness.

#include <qlflow/ale_map.hpp>
#include <qlflow/mesh.hpp>
#include <qlflow/solver.hpp>
#include <qlflow/space.hpp>

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace qlflow {

/// (int J(t) |v|^2)^{1/2} for a discrete field.
double k_norm(const DiscreteField& v, const SpaceTimeMap& map, double t, int degree = 0);
/// Same for a function of reference coordinates.
double k_norm(const TaylorHoodSpace& space, const std::function<Vec(const Vec&)>& v, const SpaceTimeMap& map,
              double t, int degree = 0);

/// Physical velocity gradient (rows: components, columns: derivatives).
using SpaceTimeGradient = std::function<Mat(const Vec& x, double t)>;

/// Errors of one step against an exact physical velocity composed with the map.
struct StepError {
  double t = 0.0;
  /// ||e||_k
  double l2 = 0.0;
  /// ||D_k(e)||_k with D_k(e) = sym(grad(e) F^{-1}).
  double deformation = 0.0;
};

StepError step_error(const DiscreteField& u_h, const SpaceTimeMap& map, double t, const SpaceTimeField& exact,
                     const SpaceTimeGradient& exact_gradient, int degree = 0);

struct EnergyErrorReport {
  std::vector<StepError> steps;
  double dt = 0.0;
  /// max_k ||e^k||_k + sqrt(sum_k dt ||D_k(e^k)||_k^2)
  double combined = 0.0;
  /// sqrt(max_k ||e^k||_k^2 + 2 nu sum_k dt ||D_k(e^k)||_k^2)
  double energy_norm = 0.0;
};

/// Combines per-step errors (steps 1..N) into both norms.
EnergyErrorReport combine_errors(std::vector<StepError> steps, double dt, double nu);

struct BenchmarkCase;

/// Errors of a trajectory u^1..u^N; states must be consecutive steps of size dt.
EnergyErrorReport energy_error(const std::vector<FlowState>& trajectory, const BenchmarkCase& benchmark,
                               const SpaceTimeMap& map, double dt, int degree = 0);

/// Discrete terms of the energy balance for the step (k-1 -> k). A diagnostic:
/// the scheme satisfies an inequality, not this balance.
struct EnergyBalance {
  /// (||u^k||_k^2 - ||u^{k-1}||_{k-1}^2) / (2 dt)
  double kinetic_rate = 0.0;
  /// 2 nu ||J^{1/2} D_k(u^k)||^2 (symmetric), nu ||J^{1/2} grad(u^k) F^{-1}||^2 (full gradient)
  double dissipation = 0.0;
  /// int_{boundary} (J sigma F^{-T} n).u^k with the discrete stress; u^k = xi_t on noslip facets.
  double boundary_work = 0.0;
  /// (J_k f, u^k)
  double forcing_power = 0.0;
};

EnergyBalance energy_balance_terms(const FlowState& prev, const FlowState& cur, const SpaceTimeMap& map, double nu,
                                   const SpaceTimeField& forcing, StressForm stress = StressForm::symmetric,
                                   int degree = 0);

/// Relation between time step and mesh size across refinement levels.
enum class Pairing { dt_h2, dt_h };
std::string to_string(Pairing p);
Pairing parse_pairing(const std::string& text);

struct StudyBase {
  /// Mesh of a refinement level. Level l has mesh size h_0 / factor^l.
  std::function<SimplicialMesh(int level)> mesh;
  double dt = 0.0;
  double refinement_factor = 2.0;
};

/// StudyBase refining `coarse` uniformly (factor 2).
StudyBase uniform_refinement_base(SimplicialMesh coarse, double dt);

struct BenchmarkCase {
  std::string name;
  MapPtr map;
  SpaceTimeField velocity;
  SpaceTimeGradient velocity_gradient;
  std::function<double(const Vec& x, double t)> pressure;
  SpaceTimeField forcing;
  BoundaryConditionSet bcs;
  double nu = 1.0;
  double T = 1.0;
  StressForm stress = StressForm::symmetric;
  /// Default levels: meshes and the coarsest time step.
  StudyBase base;

  FlowProblem problem(SpacePtr space) const;
  /// u_h^0 = I_h(u(0) o xi(0)).
  FlowState initial_state(const SpacePtr& space) const;
};

/// Shrinking tube around the x2 axis, y in [-4, 4], reference radius
/// exp((y + 4) / 8): exact solution with an exponential axial profile, noslip
/// lateral wall, exact Dirichlet inflow, traction outflow, nu = 0.04, T = 0.2.
BenchmarkCase tube_benchmark();

/// Mesh of tube level l: round(5 * 2^{l/2}) cells per cross-section side and
/// round(3 * 2^{l/2}) axial layers.
SimplicialMesh tube_mesh(int level);

/// Unit square under the area-preserving stretch (x1 (1 + t/10), x2 / (1 + t/10)),
/// stream-function velocity sin(pi x) sin(pi y) cos(t), Dirichlet data
/// everywhere, nu = 1, T = 0.5.
BenchmarkCase manufactured_2d();

/// Physical momentum residual u_t + (u.grad)u - nu lap(u) + grad(p) - f of a
/// case at one point, by automatic differentiation of the exact fields.
/// Needs the templated exact fields, so it is only available for built-ins.
Vec momentum_residual(const std::string& case_name, const Vec& x, double t);
/// Physical divergence of the exact velocity of a built-in case.
double velocity_divergence(const std::string& case_name, const Vec& x, double t);

BenchmarkCase benchmark_by_name(const std::string& name);

struct ConvergenceRow {
  int level = 0;
  double h = 0.0;
  Index cells = 0;
  double dt = 0.0;
  Index steps = 0;
  double error = 0.0;
  double energy_norm = 0.0;
  /// error[i-1] / error[i]; NaN on the first row.
  double ratio = 0.0;
  /// log(ratio) / log(h[i-1] / h[i]); NaN on the first row.
  double order = 0.0;
  /// max over steps of ||B u^k|| / ||u^k||.
  double max_divergence_ratio = 0.0;
  double seconds = 0.0;
};

struct ConvergenceTable {
  std::string case_name;
  Pairing pairing = Pairing::dt_h2;
  std::vector<ConvergenceRow> rows;

  /// Appends a row and fills its ratio and order; rejects NaN, infinite and
  /// zero errors.
  void add(ConvergenceRow row);
  /// mesh_step_size,element_count,time_step,num_steps,error,ratio,observed_order
  void write_csv(std::ostream& os) const;
};

struct ConvergenceOptions {
  Pairing pairing = Pairing::dt_h2;
  SolverConfig solver;
  /// Called after every level.
  std::function<void(const ConvergenceRow&)> on_level;
};

/// Runs levels 0..levels-1 of `base`; solver failures are rethrown with the level.
ConvergenceTable convergence_study(const BenchmarkCase& benchmark, int levels, const StudyBase& base,
                                   const ConvergenceOptions& options = {});

}  // namespace qlflow
