#include <qlflow/io/cli.hpp>

#include <qlflow/analysis.hpp>
#include <qlflow/io/config.hpp>
#include <qlflow/io/gmsh.hpp>
#include <qlflow/io/output.hpp>
#include <qlflow/io/vtk.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

namespace qlflow::io {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::string output;
  std::string case_name;
  std::string pairing;
  int levels = 0;
  bool deterministic = false;
};

RunConfig require_config(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config", "a configuration file is required");
  return load_config(o.config);
}

void require_run_sections(const RunConfig& c) {
  if (c.benchmark && c.bcs.empty()) {
    throw ConfigError("benchmark", "this is a convergence-study config; use the converge subcommand");
  }
}

struct Setup {
  std::shared_ptr<const SimplicialMesh> mesh;
  SpacePtr space;
  MapPtr map;
};

Setup build(const RunConfig& c) {
  Setup s;
  s.mesh = std::make_shared<const SimplicialMesh>(build_mesh(c.mesh));
  s.space = std::make_shared<const TaylorHoodSpace>(s.mesh);
  s.map = build_map(c, s.mesh);
  return s;
}

int cmd_run(const Options& o, std::ostream& out) {
  RunConfig c = require_config(o);
  require_run_sections(c);
  if (!o.output.empty()) c.output.directory = o.output;
  if (o.deterministic) c.solver.threads = 1;
  const Setup s = build(c);
  const FlowProblem problem = build_problem(c, s.space, s.map);
  const SolverConfig config = build_solver_config(c);
  const FlowState initial = build_initial_state(c, s.space, *s.map);

  fs::create_directories(c.output.directory);
  std::optional<DiagnosticsCsv> csv;
  if (c.output.csv) {
    csv.emplace(c.output.directory / "diagnostics.csv");
    StepDiagnostics d0;
    d0.t = initial.t;
    const double norm = k_norm(initial.u, *s.map, initial.t, config.quadrature_degree);
    d0.kinetic_energy = 0.5 * norm * norm;
    d0.u_norm = initial.u.coefficients.norm();
    csv->write_initial(d0);
  }
  auto write_frame = [&](const FlowState& st) {
    if (c.output.vtk_every > 0 && st.k % c.output.vtk_every == 0) {
      write_vtk(c.output.directory / fmt::format("solution_{:05d}.vtk", st.k), st.u, st.p, *s.map, st.t,
                c.output.q_criterion);
    }
  };
  write_frame(initial);

  FlowState prev = initial;
  double max_div_ratio = 0.0;
  StepCallback on_step = [&](const FlowState& st, const StepDiagnostics& d) {
    if (csv) {
      const EnergyBalance b = energy_balance_terms(prev, st, *s.map, problem.nu, problem.forcing, config.stress,
                                                   config.quadrature_degree);
      csv->write(d, b);
    }
    if (d.u_norm > 0.0) max_div_ratio = std::max(max_div_ratio, d.divergence_residual / d.u_norm);
    write_frame(st);
    prev = st;
  };
  const RunSummary summary = run(initial, problem, config, c.time.dt, c.time.T, {on_step});
  if (c.output.checkpoint) write_checkpoint(c.output.directory / "checkpoint_final.bin", summary.final_state);

  const StepDiagnostics& last = summary.diagnostics.back();
  out << fmt::format("steps: {}\nfinal time: {:.6g}\nfinal kinetic energy: {:.10g}\n", last.step, last.t,
                     last.kinetic_energy)
      << fmt::format("max divergence residual / |u|: {:.3e}\noutput: {}\n", max_div_ratio,
                     c.output.directory.string());
  return kExitOk;
}

int cmd_converge(const Options& o, std::ostream& out, std::ostream& err) {
  std::optional<RunConfig> c;
  if (!o.config.empty()) c = load_config(o.config);
  BenchmarkSpec spec;
  if (c && c->benchmark) spec = *c->benchmark;
  if (!o.case_name.empty()) spec.case_name = o.case_name;
  if (o.levels > 0) spec.levels = o.levels;
  if (!o.pairing.empty()) spec.pairing = parse_pairing(o.pairing);
  if (spec.case_name.empty()) throw ConfigError("--case", "no benchmark case given (tube or manufactured_2d)");
  if (spec.levels < 2) throw ConfigError("--levels", "a convergence study needs at least 2 levels");

  const BenchmarkCase benchmark = benchmark_by_name(spec.case_name);
  ConvergenceOptions options;
  options.pairing = spec.pairing;
  if (c) options.solver = c->solver;
  if (o.deterministic) options.solver.threads = 1;
  options.on_level = [&err](const ConvergenceRow& r) {
    err << fmt::format("level {}: {} cells, dt = {:.6g}, error = {:.6g} ({:.1f} s)\n", r.level, r.cells, r.dt,
                       r.error, r.seconds);
  };
  const ConvergenceTable table = convergence_study(benchmark, spec.levels, benchmark.base, options);

  const fs::path dir = !o.output.empty() ? fs::path(o.output) : c ? c->output.directory : fs::path("output");
  fs::create_directories(dir);
  const fs::path csv_path = dir / ("convergence_" + spec.case_name + ".csv");
  std::ofstream file(csv_path);
  if (!file) throw Error("cannot write " + csv_path.string());
  table.write_csv(file);
  table.write_csv(out);
  return kExitOk;
}

int cmd_validate_map(const Options& o, std::ostream& out) {
  const RunConfig c = require_config(o);
  require_run_sections(c);
  const Setup s = build(c);
  std::vector<double> times;
  for (Index k = 0; k <= c.time.steps(); ++k) times.push_back(k == c.time.steps() ? c.time.T : k * c.time.dt);
  const MapValidationReport r = validate_assumptions(*s.map, *s.mesh, times);
  out << fmt::format("map: {}\nsamples: {}\nmin_J: {:.10g}\nmax_F_norm: {:.10g}\nmax_Finv_norm: {:.10g}\n",
                     to_string(s.map->kind()), r.sample_count, r.min_J, r.max_F_norm, r.max_Finv_norm)
      << fmt::format("max_I_minus_F: {:.10g}\nthresholds: c_J = {}, C_F = {}, epsilon = {}\npassed: {}\n",
                     r.max_I_minus_F, r.thresholds.c_J, r.thresholds.C_F, r.thresholds.epsilon,
                     r.passed ? "yes" : "no");
  return r.passed ? kExitOk : kExitFailure;
}

int cmd_mesh_gen(const Options& o, std::ostream& out) {
  const RunConfig c = require_config(o);
  if (o.output.empty()) throw ConfigError("--output", "an output .msh path is required");
  const SimplicialMesh mesh = build_mesh(c.mesh);
  fs::path path = o.output;
  if (fs::is_directory(path)) path /= "mesh.msh";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_gmsh(path, mesh);
  const MeshQuality q = mesh_quality(mesh);
  out << fmt::format("wrote {}\ncells: {}\nvertices: {}\nboundary facets: {}\nh_max: {:.6g}\nh_min: {:.6g}\n",
                     path.string(), q.cell_count, q.vertex_count, mesh.boundary_facet_count(), q.h_max, q.h_min);
  return kExitOk;
}

int cmd_info(const Options& o, std::ostream& out) {
  const RunConfig c = require_config(o);
  if (c.benchmark && c.bcs.empty()) {
    out << fmt::format("benchmark: {}\nlevels: {}\npairing: {}\n", c.benchmark->case_name, c.benchmark->levels,
                       to_string(c.benchmark->pairing));
    return kExitOk;
  }
  const Setup s = build(c);
  const MeshQuality q = mesh_quality(*s.mesh);
  out << fmt::format("dimension: {}\ncells: {}\nvertices: {}\nh_max: {:.6g}\n", s.mesh->dimension(), q.cell_count,
                     q.vertex_count, q.h_max)
      << fmt::format("velocity dofs: {}\npressure dofs: {}\n", s.space->velocity_dof_count(),
                     s.space->pressure_dof_count())
      << fmt::format("map: {}\nnu: {}\nstress: {}\n", to_string(c.map.kind), c.physics.nu,
                     to_string(c.physics.stress));
  if (c.physics.smagorinsky) out << fmt::format("smagorinsky C_s: {}\n", c.physics.smagorinsky->C_s);
  out << fmt::format("dt: {}\nT: {}\nsteps: {}\nscheme: {}\n", c.time.dt, c.time.T, c.time.steps(),
                     to_string(c.time.scheme));
  for (const auto& b : c.bcs) {
    std::string data;
    for (const auto& e : b.data) data += (data.empty() ? "" : "; ") + e;
    out << "bc " << to_string(b.label) << (data.empty() ? "" : ": " + data) << "\n";
  }
  out << fmt::format("solver: {} (tolerance {:.1e})\n", to_string(c.solver.linear_solver),
                     c.solver.effective_tolerance());
  if (c.benchmark) out << "benchmark: " << c.benchmark->case_name << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Incompressible flow in moving domains on a fixed reference mesh", "qlflow"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&o](CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--config", o.config, "JSON configuration file");
    if (required) opt->required();
  };
  CLI::App* run_cmd = app.add_subcommand("run", "Time-step a configured problem");
  add_config(run_cmd, true);
  run_cmd->add_option("--output", o.output, "Output directory (overrides output.directory)");
  run_cmd->add_flag("--deterministic", o.deterministic, "Single-threaded assembly");

  CLI::App* conv_cmd = app.add_subcommand("converge", "Convergence study of a built-in benchmark");
  add_config(conv_cmd, false);
  conv_cmd->add_option("--case", o.case_name, "Benchmark case: tube or manufactured_2d");
  conv_cmd->add_option("--levels", o.levels, "Number of refinement levels")->check(CLI::Range(2, 12));
  conv_cmd->add_option("--pairing", o.pairing, "Time step pairing: dt-h2 or dt-h");
  conv_cmd->add_option("--output", o.output, "Directory for the CSV table");
  conv_cmd->add_flag("--deterministic", o.deterministic, "Single-threaded assembly");

  CLI::App* map_cmd = app.add_subcommand("validate-map", "Check the map assumptions over the time interval");
  add_config(map_cmd, true);

  CLI::App* mesh_cmd = app.add_subcommand("mesh-gen", "Write the configured mesh as Gmsh 2.2");
  add_config(mesh_cmd, true);
  mesh_cmd->add_option("--output", o.output, "Output .msh file or directory")->required();

  CLI::App* info_cmd = app.add_subcommand("info", "Summarize a configuration");
  add_config(info_cmd, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(o, out);
    if (conv_cmd->parsed()) return cmd_converge(o, out, err);
    if (map_cmd->parsed()) return cmd_validate_map(o, out);
    if (mesh_cmd->parsed()) return cmd_mesh_gen(o, out);
    if (info_cmd->parsed()) return cmd_info(o, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace qlflow::io
