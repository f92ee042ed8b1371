#pragma once

// JSON run configuration. Loading validates every field and reports the
// dotted path of the first offending one through ConfigError::field().

#include <qlflow/ale_map.hpp>
#include <qlflow/analysis.hpp>
#include <qlflow/mesh.hpp>
#include <qlflow/solver.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qlflow::io {

enum class MeshSource { box, tube, gmsh };

struct MeshSpec {
  MeshSource source = MeshSource::box;

  // box
  int dimension = 2;
  std::vector<int> divisions;
  std::vector<std::array<double, 2>> extents;
  /// One per face: x-min, x-max, y-min, y-max[, z-min, z-max].
  std::vector<BoundaryLabel> box_labels;

  // tube (around the x2 axis)
  int axial_divisions = 0;
  int radial_divisions = 0;
  /// Radius as an expression in y.
  std::string radius;
  std::array<double, 2> y_range{0.0, 1.0};
  TubeLabels tube_labels;

  // gmsh
  std::filesystem::path file;
  /// Physical tag -> label; tags not listed fall back to default_gmsh_label.
  std::map<int, BoundaryLabel> tags;

  /// Uniform refinements applied after generation or loading.
  int refinements = 0;
};

struct MapSpec {
  MapKind kind = MapKind::identity;
  /// axis_scaling: one scale function of t per axis; expression: one
  /// component per axis in x1..xd, t.
  std::vector<std::string> expressions;
  /// mesh_sequence: frame directory.
  std::filesystem::path directory;
};

struct PhysicsSpec {
  double nu = 1.0;
  std::optional<SmagorinskyConfig> smagorinsky;
  StressForm stress = StressForm::symmetric;
  /// Physical body force components; empty means zero.
  std::vector<std::string> forcing;
  /// Physical initial velocity components; empty means zero.
  std::vector<std::string> initial_velocity;
};

struct TimeSpec {
  double dt = 0.0;
  double T = 0.0;
  TimeScheme scheme = TimeScheme::backward_euler;

  Index steps() const;
};

struct BoundarySpec {
  BoundaryLabel label;
  /// dirichlet: velocity components; neumann: traction components (empty is
  /// do-nothing); noslip: unused.
  std::vector<std::string> data;
};

struct OutputSpec {
  std::filesystem::path directory = "output";
  /// Write VTK every n steps; 0 disables.
  int vtk_every = 0;
  bool csv = true;
  bool q_criterion = true;
  bool checkpoint = false;
};

struct BenchmarkSpec {
  std::string case_name;
  int levels = 3;
  Pairing pairing = Pairing::dt_h2;
};

struct RunConfig {
  MeshSpec mesh;
  MapSpec map;
  PhysicsSpec physics;
  TimeSpec time;
  std::vector<BoundarySpec> bcs;
  OutputSpec output;
  /// Linear solver settings; scheme, stress and smagorinsky are taken from
  /// the time and physics sections.
  SolverConfig solver;
  /// Present selects convergence-study mode; the run sections are then optional.
  std::optional<BenchmarkSpec> benchmark;

  /// Spatial dimension implied by the mesh section.
  int dimension() const;
};

/// Parses and validates a config. Relative paths resolve against `base_dir`.
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
/// Pretty-printed JSON that parse_config reads back into an equal config.
std::string serialize_config(const RunConfig& config);

/// Gmsh physical tag convention: 1 noslip, 100 + p dirichlet:p, 200 + p neumann:p.
std::optional<BoundaryLabel> default_gmsh_label(int tag);
int default_gmsh_tag(const BoundaryLabel& label);

SimplicialMesh build_mesh(const MeshSpec& spec);
MapPtr build_map(const RunConfig& config, std::shared_ptr<const SimplicialMesh> mesh);
SolverConfig build_solver_config(const RunConfig& config);
FlowProblem build_problem(const RunConfig& config, SpacePtr space, MapPtr map);
/// I_h(u_0 o xi(., 0)).
FlowState build_initial_state(const RunConfig& config, const SpacePtr& space, const SpaceTimeMap& map);

std::string to_string(StressForm stress);
std::string to_string(TimeScheme scheme);
std::string to_string(LinearSolverKind kind);

}  // namespace qlflow::io
