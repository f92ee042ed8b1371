#include <qlflow/assembly.hpp>
#include <qlflow/quadrature.hpp>
#include <qlflow/shape.hpp>

#include <Eigen/LU>

#include <cmath>
#include <exception>
#include <thread>

namespace qlflow {

double smagorinsky_viscosity(const Mat& D, double h, double nu, double C_s) {
  const double ch = C_s * h;
  return nu + ch * ch * std::sqrt(2.0 * D.cwiseProduct(D).sum());
}

int default_quadrature_degree(int dimension) { return dimension == 2 ? 6 : 5; }

namespace {

enum Term : unsigned {
  kTime = 1u << 0,
  kMass = 1u << 1,
  kConvection = 1u << 2,
  kTemam = 1u << 3,
  kViscous = 1u << 4,
  kDivergence = 1u << 5,
  kForcing = 1u << 6,
  kTraction = 1u << 7,
  kPressureMass = 1u << 8,
  kPressureWeights = 1u << 9,
};

using Trip = Eigen::Triplet<double>;
using LocalMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 30, 30>;
using LocalVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 30, 1>;
using PhysGrad = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, 10>;

struct KernelInput {
  unsigned terms = 0;
  double t = 0.0;
  double dt = 1.0;
  TimeScheme scheme = TimeScheme::backward_euler;
  bool temam_time = true;  // the 1/2 [J]_t term
  const DiscreteField* w = nullptr;
  const DiscreteField* u_prev = nullptr;
  const DiscreteField* u_prev2 = nullptr;
  double nu = 1.0;
  std::optional<SmagorinskyConfig> smagorinsky;
  StressForm stress = StressForm::symmetric;
  const SpaceTimeField* forcing = nullptr;
  const std::map<int, SpaceTimeField>* traction = nullptr;
  int degree = 0;
  int threads = 1;
};

struct KernelOutput {
  std::vector<Trip> A;
  std::vector<Trip> B;
  std::vector<Trip> Mp;
  Eigen::VectorXd rhs;
  Eigen::VectorXd weights;
};

struct RuleTables {
  QuadratureRule rule;
  std::vector<LagrangeBasis<double>::Values> phi;
  std::vector<LagrangeBasis<double>::Gradients> dphi;
};

RuleTables tabulate(int dim, int degree) {
  RuleTables t;
  t.rule = quadrature(dim, degree);
  const LagrangeBasis<double> basis(2, dim);
  for (Index q = 0; q < t.rule.size(); ++q) {
    const Eigen::VectorXd lam = t.rule.barycentric.col(q);
    t.phi.push_back(basis.values(lam));
    t.dphi.push_back(basis.gradients(lam));
  }
  return t;
}

double jacobian_at(const SpaceTimeMap& map, const Vec& x, double t, Index cell) {
  const double J = map.jet(x, t, cell).F.determinant();
  if (!(J > 0.0)) throw SingularMappingError(x, t, J);
  return J;
}

void assemble_cells(const TaylorHoodSpace& space, const SpaceTimeMap& map, const KernelInput& in,
                    const RuleTables& tab, Index c_begin, Index c_end, KernelOutput& out) {
  const SimplicialMesh& mesh = space.mesh();
  const int d = space.dimension();
  const int n = d == 2 ? 6 : 10;
  const int nd = n * d;
  const int np = d + 1;
  const bool velocity_block = (in.terms & (kTime | kMass | kConvection | kTemam | kViscous)) != 0;
  const bool need_w = (in.terms & (kConvection | kTemam)) != 0 || (in.smagorinsky && (in.terms & kViscous));

  LocalMat Ae(nd, nd);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 4, 30> Be(np, nd);
  Eigen::Matrix4d Me;
  LocalVec be(nd);
  Eigen::Vector4d me;

  for (Index c = c_begin; c < c_end; ++c) {
    const SimplexMat X = mesh.cell_vertices(c);
    Mat G(d, d);
    for (int k = 0; k < d; ++k) G.col(k) = X.col(k + 1) - X.col(0);
    const double detG = std::abs(G.determinant());
    const Mat GinvT = G.inverse().transpose();
    const LocalNodes nodes = space.cell_nodes(c);
    const double h = mesh.cell_diameter(c);

    // Local coefficients of the fields involved.
    Eigen::Matrix<double, kMaxDim, 10> wloc = Eigen::Matrix<double, kMaxDim, 10>::Zero();
    Eigen::Matrix<double, kMaxDim, 10> u1 = Eigen::Matrix<double, kMaxDim, 10>::Zero();
    Eigen::Matrix<double, kMaxDim, 10> u2 = Eigen::Matrix<double, kMaxDim, 10>::Zero();
    for (int a = 0; a < n; ++a) {
      for (int i = 0; i < d; ++i) {
        if (need_w) wloc(i, a) = in.w->at(nodes[a], i);
        if (in.terms & kTime) {
          u1(i, a) = in.u_prev->at(nodes[a], i);
          if (in.scheme == TimeScheme::bdf2) u2(i, a) = in.u_prev2->at(nodes[a], i);
        }
      }
    }

    Ae.setZero();
    Be.setZero();
    Me.setZero();
    be.setZero();
    me.setZero();
    for (Index q = 0; q < tab.rule.size(); ++q) {
      const auto lam = tab.rule.barycentric.col(q);
      const Vec xq = X * lam;
      const MappingSample s = evaluate_map(map, xq, in.t, c);
      const double wq = tab.rule.weights[q] * detG;
      const auto& phi = tab.phi[static_cast<std::size_t>(q)];
      const PhysGrad gx = GinvT * tab.dphi[static_cast<std::size_t>(q)];  // reference-domain gradients
      const PhysGrad g = s.F_inv.transpose() * gx;                        // physical gradients
      const double J = s.J;

      if (in.terms & (kTime | kMass)) {
        double cm = 0.0;
        Vec rhs_u = Vec::Zero(d);
        if (in.terms & kMass) cm += J;
        if (in.terms & kTime) {
          const double J1 = jacobian_at(map, xq, in.t - in.dt, c);
          const Vec up = u1.topRows(d).leftCols(n) * phi;
          if (in.scheme == TimeScheme::backward_euler) {
            cm += J1 / in.dt;
            if (in.temam_time) cm += 0.5 * (J - J1) / in.dt;
            rhs_u = J1 / in.dt * up;
          } else {
            const double J2 = jacobian_at(map, xq, in.t - 2.0 * in.dt, c);
            const Vec upp = u2.topRows(d).leftCols(n) * phi;
            cm += 1.5 * J / in.dt;
            if (in.temam_time) cm += 0.5 * (3.0 * J - 4.0 * J1 + J2) / (2.0 * in.dt);
            rhs_u = J * (2.0 * up - 0.5 * upp) / in.dt;
          }
          for (int i = 0; i < d; ++i) be.segment(i * n, n) += wq * rhs_u[i] * phi;
        }
        const LocalMat mloc = (wq * cm) * phi * phi.transpose();
        for (int i = 0; i < d; ++i) Ae.block(i * n, i * n, n, n) += mloc;
      }

      if (in.terms & (kConvection | kTemam)) {
        const Vec wv = wloc.topRows(d).leftCols(n) * phi;
        const Vec W = J * (s.F_inv * wv);
        const auto Wg = (W.transpose() * gx).transpose().eval();  // W . grad phi_b
        LocalMat blk = LocalMat::Zero(n, n);
        if (in.terms & kConvection) blk += wq * phi * Wg.transpose();
        if (in.terms & kTemam) {
          blk -= 0.5 * wq * phi * Wg.transpose();
          blk -= 0.5 * wq * Wg * phi.transpose();
        }
        for (int i = 0; i < d; ++i) Ae.block(i * n, i * n, n, n) += blk;
      }

      if (in.terms & kViscous) {
        double nu = in.nu;
        if (in.smagorinsky) {
          const Mat gw = wloc.topRows(d).leftCols(n) * g.transpose();
          const Mat D = 0.5 * (gw + gw.transpose());
          nu = smagorinsky_viscosity(D, h, in.nu, in.smagorinsky->C_s);
        }
        const double cv = wq * nu * J;
        const LocalMat lap = cv * g.transpose() * g;
        for (int i = 0; i < d; ++i) Ae.block(i * n, i * n, n, n) += lap;
        if (in.stress == StressForm::symmetric) {
          for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
              // (test i, a) x (trial j, b): g_{a,j} g_{b,i}
              Ae.block(i * n, j * n, n, n) += cv * g.row(j).transpose() * g.row(i);
            }
          }
        }
      }

      if (in.terms & kDivergence) {
        const auto chi = lam.head(np);
        for (int i = 0; i < d; ++i) Be.block(0, i * n, np, n) += (wq * J) * chi * g.row(i);
      }
      if (in.terms & (kPressureMass | kPressureWeights)) {
        Eigen::Vector4d chi = Eigen::Vector4d::Zero();
        chi.head(np) = lam.head(np);
        me += (wq * J) * chi;
        Me += (wq * J) * chi * chi.transpose();
      }
      if (in.terms & kForcing) {
        const Vec f = (*in.forcing)(s.position, in.t);
        for (int i = 0; i < d; ++i) be.segment(i * n, n) += (wq * J * f[i]) * phi;
      }
    }

    if (velocity_block) {
      for (int i = 0; i < d; ++i) {
        for (int a = 0; a < n; ++a) {
          const Index row = space.velocity_dof(nodes[a], i);
          for (int j = 0; j < d; ++j) {
            for (int b = 0; b < n; ++b) out.A.emplace_back(row, space.velocity_dof(nodes[b], j), Ae(i * n + a, j * n + b));
          }
        }
      }
    }
    if (in.terms & kDivergence) {
      for (int r = 0; r < np; ++r) {
        for (int j = 0; j < d; ++j) {
          for (int b = 0; b < n; ++b) out.B.emplace_back(nodes[r], space.velocity_dof(nodes[b], j), Be(r, j * n + b));
        }
      }
    }
    if (in.terms & kPressureMass) {
      for (int r = 0; r < np; ++r) {
        for (int k = 0; k < np; ++k) out.Mp.emplace_back(nodes[r], nodes[k], Me(r, k));
      }
    }
    if (in.terms & kPressureWeights) {
      for (int r = 0; r < np; ++r) out.weights[nodes[r]] += me[r];
    }
    if (in.terms & (kTime | kForcing)) {
      for (int i = 0; i < d; ++i) {
        for (int a = 0; a < n; ++a) out.rhs[space.velocity_dof(nodes[a], i)] += be[i * n + a];
      }
    }
  }
}

// Neumann facet contributions: traction and the boundary part of the Temam term.
void assemble_neumann_facets(const TaylorHoodSpace& space, const SpaceTimeMap& map, const KernelInput& in,
                             KernelOutput& out) {
  const bool temam = (in.terms & kTemam) != 0;
  const bool traction = (in.terms & kTraction) != 0;
  if (!temam && !traction) return;
  const SimplicialMesh& mesh = space.mesh();
  const int d = space.dimension();
  const int n = d == 2 ? 6 : 10;
  const QuadratureRule rule = quadrature(d - 1, in.degree);
  const LagrangeBasis<double> basis(2, d);
  for (Index f = 0; f < mesh.boundary_facet_count(); ++f) {
    const BoundaryLabel& label = mesh.facet_labels()[static_cast<std::size_t>(f)];
    if (label.kind != BoundaryKind::neumann) continue;
    const Index c = mesh.facet_cells()[f];
    const SimplexMat X = mesh.cell_vertices(c);
    const LocalNodes nodes = space.cell_nodes(c);
    const FacetGeometry geo = facet_geometry(mesh, f);
    const double scale = facet_weight_scale(mesh, f);
    const SpaceTimeField* g = nullptr;
    if (traction && in.traction) {
      auto it = in.traction->find(label.patch);
      if (it != in.traction->end() && it->second) g = &it->second;
    }
    LocalMat Ae = LocalMat::Zero(n, n);
    LocalVec be = LocalVec::Zero(n * d);
    for (Index q = 0; q < rule.size(); ++q) {
      const Eigen::Vector4d lam4 = facet_to_cell(mesh, f, rule.barycentric.col(q));
      const Eigen::VectorXd lam = lam4.head(d + 1);
      const Vec xq = X * lam;
      const MappingSample s = evaluate_map(map, xq, in.t, c);
      const double wq = rule.weights[q] * scale;
      const auto phi = basis.values(lam);
      if (temam) {
        Vec wv = Vec::Zero(d);
        for (int a = 0; a < n; ++a) {
          for (int i = 0; i < d; ++i) wv[i] += phi[a] * in.w->at(nodes[a], i);
        }
        const double Wn = (s.J * (s.F_inv * wv)).dot(geo.normal);
        Ae += (0.5 * wq * Wn) * phi * phi.transpose();
      }
      if (g) {
        const Vec gv = (*g)(s.position, in.t);
        // Physical surface element: J |F^{-T} n| times the reference one.
        const double area = s.J * (s.F_inv.transpose() * geo.normal).norm();
        for (int i = 0; i < d; ++i) be.segment(i * n, n) += (wq * area * gv[i]) * phi;
      }
    }
    if (temam) {
      for (int i = 0; i < d; ++i) {
        for (int a = 0; a < n; ++a) {
          for (int b = 0; b < n; ++b) {
            out.A.emplace_back(space.velocity_dof(nodes[a], i), space.velocity_dof(nodes[b], i), Ae(a, b));
          }
        }
      }
    }
    if (g) {
      for (int i = 0; i < d; ++i) {
        for (int a = 0; a < n; ++a) out.rhs[space.velocity_dof(nodes[a], i)] += be[i * n + a];
      }
    }
  }
}

KernelOutput run_kernel(const TaylorHoodSpace& space, const SpaceTimeMap& map, KernelInput in) {
  if (map.dimension() != space.dimension()) {
    throw Error("map dimension " + std::to_string(map.dimension()) + " does not match space dimension " +
                std::to_string(space.dimension()));
  }
  if (in.degree <= 0) in.degree = default_quadrature_degree(space.dimension());
  const auto check_field = [&](const DiscreteField* f, const char* what) {
    if (!f) throw Error(std::string("assembly needs the ") + what + " field");
    if (f->kind != FieldKind::velocity || f->coefficients.size() != space.velocity_dof_count()) {
      throw Error(std::string("the ") + what + " field does not belong to the velocity space");
    }
  };
  if ((in.terms & (kConvection | kTemam)) || (in.smagorinsky && (in.terms & kViscous))) check_field(in.w, "advection");
  if (in.terms & kTime) {
    if (!(in.dt > 0.0)) throw Error("time step must be positive");
    check_field(in.u_prev, "previous velocity");
    if (in.scheme == TimeScheme::bdf2) check_field(in.u_prev2, "second previous velocity");
  }
  if ((in.terms & kForcing) && !(in.forcing && *in.forcing)) in.terms &= ~static_cast<unsigned>(kForcing);

  const RuleTables tab = tabulate(space.dimension(), in.degree);
  const Index nc = space.mesh().cell_count();
  const int chunks = static_cast<int>(std::clamp<Index>(in.threads, 1, std::max<Index>(nc, 1)));
  std::vector<KernelOutput> parts(static_cast<std::size_t>(chunks));
  for (auto& p : parts) {
    p.rhs = Eigen::VectorXd::Zero(space.velocity_dof_count());
    p.weights = Eigen::VectorXd::Zero(space.pressure_dof_count());
  }
  auto work = [&](int k) {
    const Index begin = nc * k / chunks;
    const Index end = nc * (k + 1) / chunks;
    assemble_cells(space, map, in, tab, begin, end, parts[static_cast<std::size_t>(k)]);
  };
  if (chunks == 1) {
    work(0);
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
    std::vector<std::thread> pool;
    for (int k = 0; k < chunks; ++k) {
      pool.emplace_back([&, k] {
        try {
          work(k);
        } catch (...) {
          errors[static_cast<std::size_t>(k)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  KernelOutput out = std::move(parts[0]);
  for (std::size_t k = 1; k < parts.size(); ++k) {
    out.A.insert(out.A.end(), parts[k].A.begin(), parts[k].A.end());
    out.B.insert(out.B.end(), parts[k].B.begin(), parts[k].B.end());
    out.Mp.insert(out.Mp.end(), parts[k].Mp.begin(), parts[k].Mp.end());
    out.rhs += parts[k].rhs;
    out.weights += parts[k].weights;
  }
  assemble_neumann_facets(space, map, in, out);
  return out;
}

SparseMatrix velocity_matrix(const TaylorHoodSpace& space, const std::vector<Trip>& trips) {
  SparseMatrix m(space.velocity_dof_count(), space.velocity_dof_count());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

}  // namespace

AssembledStep assemble_step(const TaylorHoodSpace& space, const SpaceTimeMap& map, const StepData& data,
                            const AssemblyOptions& options) {
  KernelInput in;
  in.terms = kTime | kConvection | kViscous | kDivergence | kForcing | kTraction;
  if (options.temam) in.terms |= kTemam;
  in.temam_time = options.temam;
  in.t = data.t_k;
  in.dt = data.dt;
  in.scheme = data.scheme;
  in.w = data.w;
  in.u_prev = data.u_prev;
  in.u_prev2 = data.u_prev2;
  in.nu = data.nu;
  in.smagorinsky = data.smagorinsky;
  in.stress = options.stress;
  in.forcing = &data.forcing;
  in.traction = &data.traction;
  in.degree = options.quadrature_degree;
  in.threads = options.threads;
  if (data.smagorinsky && !(data.smagorinsky->C_s > 0.0)) throw Error("Smagorinsky constant must be positive");
  KernelOutput k = run_kernel(space, map, in);

  AssembledStep step;
  step.A = velocity_matrix(space, k.A);
  step.B.resize(space.pressure_dof_count(), space.velocity_dof_count());
  step.B.setFromTriplets(k.B.begin(), k.B.end());
  step.rhs_u = std::move(k.rhs);
  step.constraint_rhs = Eigen::VectorXd::Zero(space.pressure_dof_count());
  return step;
}

SparseMatrix mass_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, int degree) {
  KernelInput in;
  in.terms = kMass;
  in.t = t;
  in.degree = degree;
  return velocity_matrix(space, run_kernel(space, map, in).A);
}

SparseMatrix convection_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t,
                               const DiscreteField& w, int degree) {
  KernelInput in;
  in.terms = kConvection;
  in.t = t;
  in.w = &w;
  in.degree = degree;
  return velocity_matrix(space, run_kernel(space, map, in).A);
}

SparseMatrix temam_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, const DiscreteField& w,
                          int degree) {
  KernelInput in;
  in.terms = kTemam;
  in.t = t;
  in.w = &w;
  in.degree = degree;
  return velocity_matrix(space, run_kernel(space, map, in).A);
}

SparseMatrix viscous_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, double nu,
                            StressForm stress, int degree) {
  KernelInput in;
  in.terms = kViscous;
  in.t = t;
  in.nu = nu;
  in.stress = stress;
  in.degree = degree;
  return velocity_matrix(space, run_kernel(space, map, in).A);
}

SparseMatrix divergence_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, int degree) {
  KernelInput in;
  in.terms = kDivergence;
  in.t = t;
  in.degree = degree;
  const KernelOutput k = run_kernel(space, map, in);
  SparseMatrix B(space.pressure_dof_count(), space.velocity_dof_count());
  B.setFromTriplets(k.B.begin(), k.B.end());
  return B;
}

Eigen::VectorXd forcing_vector(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t,
                               const SpaceTimeField& f, int degree) {
  KernelInput in;
  in.terms = kForcing;
  in.t = t;
  in.forcing = &f;
  in.degree = degree;
  return run_kernel(space, map, in).rhs;
}

SparseMatrix pressure_mass_matrix(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, int degree) {
  KernelInput in;
  in.terms = kPressureMass;
  in.t = t;
  in.degree = degree;
  const KernelOutput k = run_kernel(space, map, in);
  SparseMatrix M(space.pressure_dof_count(), space.pressure_dof_count());
  M.setFromTriplets(k.Mp.begin(), k.Mp.end());
  return M;
}

Eigen::VectorXd pressure_weights(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, int degree) {
  KernelInput in;
  in.terms = kPressureWeights;
  in.t = t;
  in.degree = degree;
  return run_kernel(space, map, in).weights;
}

double boundary_flux(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t, const DiscreteField& u,
                     int degree) {
  const SimplicialMesh& mesh = space.mesh();
  const int d = space.dimension();
  const int n = d == 2 ? 6 : 10;
  if (degree <= 0) degree = default_quadrature_degree(d);
  const QuadratureRule rule = quadrature(d - 1, degree);
  const LagrangeBasis<double> basis(2, d);
  double flux = 0.0;
  for (Index f = 0; f < mesh.boundary_facet_count(); ++f) {
    const Index c = mesh.facet_cells()[f];
    const SimplexMat X = mesh.cell_vertices(c);
    const LocalNodes nodes = space.cell_nodes(c);
    const FacetGeometry geo = facet_geometry(mesh, f);
    const double scale = facet_weight_scale(mesh, f);
    for (Index q = 0; q < rule.size(); ++q) {
      const Eigen::VectorXd lam = facet_to_cell(mesh, f, rule.barycentric.col(q)).head(d + 1);
      const MappingSample s = evaluate_map(map, X * lam, t, c);
      const auto phi = basis.values(lam);
      Vec uv = Vec::Zero(d);
      for (int a = 0; a < n; ++a) {
        for (int i = 0; i < d; ++i) uv[i] += phi[a] * u.at(nodes[a], i);
      }
      flux += rule.weights[q] * scale * (s.J * (s.F_inv * uv)).dot(geo.normal);
    }
  }
  return flux;
}

DiscreteField boundary_normal_field(const SpacePtr& space) {
  DiscreteField N = DiscreteField::zero(space, FieldKind::velocity);
  const Eigen::MatrixXd& normals = space->boundary_normals();
  for (Index node = 0; node < space->node_count(); ++node) {
    for (int i = 0; i < space->dimension(); ++i) N.at(node, i) = normals(i, node);
  }
  return N;
}

double boundary_flux_correction(const TaylorHoodSpace& space, const SpaceTimeMap& map, double t,
                                const DiscreteField& boundary_values, int degree) {
  const double raw = boundary_flux(space, map, t, boundary_values, degree);
  if (raw == 0.0) return 0.0;
  const double normal_flux = boundary_flux(space, map, t, boundary_normal_field(boundary_values.space), degree);
  return raw / normal_flux;
}

std::vector<Triplet> canonical_triplets(const SparseMatrix& m) {
  const Eigen::SparseMatrix<double, Eigen::RowMajor> r = m;
  std::vector<Triplet> out;
  out.reserve(static_cast<std::size_t>(r.nonZeros()));
  for (Index row = 0; row < r.outerSize(); ++row) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(r, row); it; ++it) {
      out.push_back({it.row(), it.col(), it.value()});
    }
  }
  return out;
}

}  // namespace qlflow
