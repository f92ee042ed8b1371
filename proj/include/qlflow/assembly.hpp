#pragma once

// Assembly of the per-step forms on the reference domain.
//
// Velocity test/trial pairs use the component-blocked dof layout of
// TaylorHoodSpace. The saddle-point system of one step reads
//
//   [ A  -B^T ] [u]   [rhs_u         ]
//   [-B   0   ] [p] = [constraint_rhs]
//
// with B_(q, v) = int chi_q J F^{-T} : grad(psi_v).

#include <qlflow/ale_map.hpp>
#include <qlflow/space.hpp>

#include <Eigen/SparseCore>

#include <map>
#include <optional>
#include <vector>

namespace qlflow {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class StressForm { symmetric, full_gradient };
enum class TimeScheme { backward_euler, bdf2 };

struct SmagorinskyConfig {
  double C_s = 0.2;
};

/// nu + (C_s h)^2 sqrt(2 D:D).
double smagorinsky_viscosity(const Mat& D, double h, double nu, double C_s);

struct AssemblyOptions {
  StressForm stress = StressForm::symmetric;
  bool temam = true;
  /// Quadrature exactness; 0 selects 6 in 2D and 5 in 3D.
  int quadrature_degree = 0;
  /// Cell chunks assembled concurrently; results are concatenated in chunk
  /// order, so a fixed thread count gives bitwise-reproducible output.
  int threads = 1;
};

int default_quadrature_degree(int dimension);

/// Inputs of one time step. Forcing and traction are physical fields and are
/// evaluated at xi(x, t_k).
struct StepData {
  double t_k = 0.0;
  double dt = 0.0;
  TimeScheme scheme = TimeScheme::backward_euler;
  /// Advection velocity w = u^{k-1} - I_h(xi_t^k) (extrapolated for bdf2).
  const DiscreteField* w = nullptr;
  const DiscreteField* u_prev = nullptr;
  /// u^{k-2}; bdf2 only.
  const DiscreteField* u_prev2 = nullptr;
  double nu = 1.0;
  std::optional<SmagorinskyConfig> smagorinsky;
  SpaceTimeField forcing;
  /// Neumann patch -> traction g; patches without an entry get g = 0.
  std::map<int, SpaceTimeField> traction;
};

struct AssembledStep {
  SparseMatrix A;
  SparseMatrix B;
  Eigen::VectorXd rhs_u;
  Eigen::VectorXd constraint_rhs;
};

AssembledStep assemble_step(const TaylorHoodSpace& space, const SpaceTimeMap& map, const StepData& data,
                            const AssemblyOptions& options = {});

// Individual blocks, mainly for verification.

/// int J(t) u.psi for vector fields.
SparseMatrix mass_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, int degree = 0);
/// int (J grad u F^{-1} w).psi
SparseMatrix convection_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t,
                               const DiscreteField& w, int degree = 0);
/// 1/2 int div(J F^{-1} w) u.psi, integrated by parts (boundary part kept on neumann facets).
SparseMatrix temam_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, const DiscreteField& w,
                          int degree = 0);
SparseMatrix viscous_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, double nu,
                            StressForm stress, int degree = 0);
SparseMatrix divergence_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, int degree = 0);
/// int J(t) f(xi(x, t), t).psi for a physical body force.
Eigen::VectorXd forcing_vector(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t,
                               const SpaceTimeField& f, int degree = 0);
/// int J(t) chi_q chi_r for the pressure space.
SparseMatrix pressure_mass_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, int degree = 0);
/// m_q = int J(t) chi_q.
Eigen::VectorXd pressure_weights(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, int degree = 0);

/// int_{boundary} (J F^{-1} u).n ds over all boundary facets.
double boundary_flux(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, const DiscreteField& u,
                     int degree = 0);

/// c_perp = boundary_flux(u) / boundary_flux(N) with N the nodal boundary
/// normal field; u - c_perp N then carries zero flux.
double boundary_flux_correction(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t,
                                const DiscreteField& boundary_values, int degree = 0);

/// Nodal boundary normal field of the space as a velocity field.
DiscreteField boundary_normal_field(const SpacePtr& space);

struct Triplet {
  Index row = 0;
  Index col = 0;
  double value = 0.0;
  bool operator==(const Triplet&) const = default;
};

/// Canonical (row, col, value) form: duplicates summed, sorted row-major.
std::vector<Triplet> canonical_triplets(const SparseMatrix& m);

}  // namespace qlflow
