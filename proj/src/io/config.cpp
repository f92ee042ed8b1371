#include <qlflow/io/config.hpp>

#include <qlflow/expression.hpp>
#include <qlflow/io/gmsh.hpp>

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace qlflow::io {

namespace {

using Json = nlohmann::ordered_json;

// Typed access with the dotted field path in every error.
class Reader {
 public:
  Reader(const Json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return node_.contains(key) && !node_[key].is_null(); }

  const Json& raw(const std::string& key) const {
    if (!has(key)) throw ConfigError(at(key), "missing required field");
    used_.insert(key);
    return node_[key];
  }

  Reader object(const std::string& key) const { return Reader(raw(key), at(key)); }

  double number(const std::string& key) const {
    const Json& v = raw(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(at(key), "must be finite");
    return x;
  }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  int integer(const std::string& key) const {
    const Json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    return v.get<int>();
  }
  int integer(const std::string& key, int fallback) const { return has(key) ? integer(key) : fallback; }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) const {
    const Json& v = raw(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? string(key) : fallback;
  }

  std::vector<std::string> strings(const std::string& key) const {
    const Json& v = raw(key);
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "expected a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

  /// Rejects keys that no accessor asked for, so typos do not pass silently.
  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!used_.count(it.key()) && !it.value().is_null()) throw ConfigError(at(it.key()), "unknown field");
    }
  }

 private:
  const Json& node_;
  std::string path_;
  mutable std::set<std::string> used_;
};

BoundaryLabel label_at(const std::string& text, const std::string& path) {
  try {
    return parse_boundary_label(text);
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

template <typename Enum, std::size_t N>
Enum choose(const std::string& text, const std::array<std::pair<const char*, Enum>, N>& options,
            const std::string& path) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (text == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(path, "unknown value '" + text + "' (expected one of " + names + ")");
}

constexpr std::array<std::pair<const char*, MapKind>, 5> kMapKinds{{{"identity", MapKind::identity},
                                                                    {"axis-scaling", MapKind::axis_scaling},
                                                                    {"tube-shrink", MapKind::tube_shrink},
                                                                    {"expression", MapKind::expression},
                                                                    {"mesh-sequence", MapKind::mesh_sequence}}};
constexpr std::array<std::pair<const char*, StressForm>, 2> kStress{
    {{"symmetric", StressForm::symmetric}, {"full-gradient", StressForm::full_gradient}}};
constexpr std::array<std::pair<const char*, TimeScheme>, 2> kSchemes{
    {{"backward-euler", TimeScheme::backward_euler}, {"bdf2", TimeScheme::bdf2}}};
constexpr std::array<std::pair<const char*, LinearSolverKind>, 2> kSolvers{
    {{"direct", LinearSolverKind::direct}, {"iterative", LinearSolverKind::iterative}}};

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.is_absolute() || base.empty()) return p;
  return base / p;
}

// Parses every expression now so that errors carry the field path.
void check_expressions(const std::vector<std::string>& sources, const std::vector<std::string>& variables,
                       std::size_t expected, const std::string& path) {
  if (expected && sources.size() != expected) {
    throw ConfigError(path, "expected " + std::to_string(expected) + " components, got " +
                                std::to_string(sources.size()));
  }
  for (std::size_t i = 0; i < sources.size(); ++i) {
    try {
      (void)Expression::parse(sources[i], variables);
    } catch (const ParseError& e) {
      throw ConfigError(path + "[" + std::to_string(i) + "]", e.what());
    }
  }
}

MeshSpec read_mesh(const Reader& r, const std::filesystem::path& base) {
  MeshSpec m;
  const std::string source = r.string("source");
  m.refinements = r.integer("refinements", 0);
  if (m.refinements < 0) throw ConfigError(r.at("refinements"), "must be non-negative");
  if (source == "box") {
    m.source = MeshSource::box;
    m.dimension = r.integer("dimension");
    if (m.dimension != 2 && m.dimension != 3) throw ConfigError(r.at("dimension"), "must be 2 or 3");
    const Json& div = r.raw("divisions");
    if (!div.is_array() || static_cast<int>(div.size()) != m.dimension) {
      throw ConfigError(r.at("divisions"), "expected one integer per axis");
    }
    for (const Json& v : div) {
      if (!v.is_number_integer() || v.get<int>() < 1) throw ConfigError(r.at("divisions"), "divisions must be >= 1");
      m.divisions.push_back(v.get<int>());
    }
    if (r.has("extents")) {
      const Json& ext = r.raw("extents");
      if (!ext.is_array() || static_cast<int>(ext.size()) != m.dimension) {
        throw ConfigError(r.at("extents"), "expected one [lo, hi] pair per axis");
      }
      for (const Json& e : ext) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number() ||
            !(e[1].get<double>() > e[0].get<double>())) {
          throw ConfigError(r.at("extents"), "expected increasing [lo, hi] pairs");
        }
        m.extents.push_back({e[0].get<double>(), e[1].get<double>()});
      }
    } else {
      m.extents.assign(static_cast<std::size_t>(m.dimension), {0.0, 1.0});
    }
    const std::size_t faces = 2 * static_cast<std::size_t>(m.dimension);
    if (r.has("labels")) {
      const auto labels = r.strings("labels");
      if (labels.size() != faces) throw ConfigError(r.at("labels"), "expected " + std::to_string(faces) + " labels");
      for (std::size_t i = 0; i < faces; ++i) {
        m.box_labels.push_back(label_at(labels[i], r.at("labels") + "[" + std::to_string(i) + "]"));
      }
    } else {
      m.box_labels.assign(faces, BoundaryLabel::noslip());
    }
  } else if (source == "tube") {
    m.source = MeshSource::tube;
    m.dimension = 3;
    m.axial_divisions = r.integer("axial_divisions");
    m.radial_divisions = r.integer("radial_divisions");
    if (m.axial_divisions < 1) throw ConfigError(r.at("axial_divisions"), "must be >= 1");
    if (m.radial_divisions < 1) throw ConfigError(r.at("radial_divisions"), "must be >= 1");
    m.radius = r.string("radius");
    check_expressions({m.radius}, {"y"}, 1, r.at("radius"));
    const Json& yr = r.raw("y_range");
    if (!yr.is_array() || yr.size() != 2 || !yr[0].is_number() || !yr[1].is_number() ||
        !(yr[1].get<double>() > yr[0].get<double>())) {
      throw ConfigError(r.at("y_range"), "expected an increasing [lo, hi] pair");
    }
    m.y_range = {yr[0].get<double>(), yr[1].get<double>()};
    if (r.has("labels")) {
      const Reader l = r.object("labels");
      m.tube_labels.lateral = label_at(l.string("lateral", "noslip"), l.at("lateral"));
      m.tube_labels.inlet = label_at(l.string("inlet", "noslip"), l.at("inlet"));
      m.tube_labels.outlet = label_at(l.string("outlet", "neumann:0"), l.at("outlet"));
      l.finish();
    }
  } else if (source == "gmsh") {
    m.source = MeshSource::gmsh;
    m.file = resolve(r.string("file"), base);
    if (!std::filesystem::exists(m.file)) throw ConfigError(r.at("file"), "file not found: " + m.file.string());
    if (r.has("tags")) {
      const Json& tags = r.raw("tags");
      if (!tags.is_object()) throw ConfigError(r.at("tags"), "expected an object of tag -> label");
      for (auto it = tags.begin(); it != tags.end(); ++it) {
        const std::string path = r.at("tags") + "." + it.key();
        int tag = 0;
        try {
          std::size_t used = 0;
          tag = std::stoi(it.key(), &used);
          if (used != it.key().size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw ConfigError(path, "tag keys must be integers");
        }
        if (!it.value().is_string()) throw ConfigError(path, "expected a label string");
        m.tags[tag] = label_at(it.value().get<std::string>(), path);
      }
    }
    try {
      m.dimension = read_gmsh(m.file, m.tags).dimension;
    } catch (const Error& e) {
      throw ConfigError(r.at("file"), e.what());
    }
  } else {
    throw ConfigError(r.at("source"), "unknown mesh source '" + source + "' (expected box, tube or gmsh)");
  }
  r.finish();
  return m;
}

MapSpec read_map(const Reader& r, int dim, const std::filesystem::path& base) {
  MapSpec m;
  m.kind = choose(r.string("kind"), kMapKinds, r.at("kind"));
  switch (m.kind) {
    case MapKind::identity:
    case MapKind::tube_shrink:
      break;
    case MapKind::axis_scaling:
      m.expressions = r.strings("scales");
      check_expressions(m.expressions, {"t"}, static_cast<std::size_t>(dim), r.at("scales"));
      break;
    case MapKind::expression:
      m.expressions = r.strings("components");
      check_expressions(m.expressions, space_time_variables(dim), static_cast<std::size_t>(dim),
                        r.at("components"));
      break;
    case MapKind::mesh_sequence:
      m.directory = resolve(r.string("directory"), base);
      if (!std::filesystem::is_directory(m.directory)) {
        throw ConfigError(r.at("directory"), "directory not found: " + m.directory.string());
      }
      break;
  }
  if (m.kind == MapKind::tube_shrink && dim != 3) throw ConfigError(r.at("kind"), "tube-shrink needs a 3D mesh");
  r.finish();
  return m;
}

PhysicsSpec read_physics(const Reader& r, int dim) {
  PhysicsSpec p;
  p.nu = r.number("nu");
  if (!(p.nu > 0.0)) throw ConfigError(r.at("nu"), "must be positive");
  if (r.has("smagorinsky")) {
    const Reader s = r.object("smagorinsky");
    SmagorinskyConfig c;
    c.C_s = s.number("C_s");
    if (!(c.C_s >= 0.0)) throw ConfigError(s.at("C_s"), "must be non-negative");
    s.finish();
    p.smagorinsky = c;
  }
  p.stress = choose(r.string("stress", "symmetric"), kStress, r.at("stress"));
  const auto vars = space_time_variables(dim);
  if (r.has("forcing")) {
    p.forcing = r.strings("forcing");
    check_expressions(p.forcing, vars, static_cast<std::size_t>(dim), r.at("forcing"));
  }
  if (r.has("initial_velocity")) {
    p.initial_velocity = r.strings("initial_velocity");
    check_expressions(p.initial_velocity, vars, static_cast<std::size_t>(dim), r.at("initial_velocity"));
  }
  r.finish();
  return p;
}

TimeSpec read_time(const Reader& r) {
  TimeSpec t;
  t.dt = r.number("dt");
  if (!(t.dt > 0.0)) throw ConfigError(r.at("dt"), "must be positive");
  t.T = r.number("T");
  if (!(t.T >= t.dt)) throw ConfigError(r.at("T"), "must be at least dt");
  const double n = t.T / t.dt;
  if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) {
    throw ConfigError(r.at("dt"), "must divide T into a whole number of steps");
  }
  t.scheme = choose(r.string("scheme", "backward-euler"), kSchemes, r.at("scheme"));
  r.finish();
  return t;
}

std::vector<BoundarySpec> read_bcs(const Json& node, int dim) {
  if (!node.is_array()) throw ConfigError("bcs", "expected an array of boundary conditions");
  std::vector<BoundarySpec> out;
  std::set<BoundaryLabel> seen;
  const auto vars = space_time_variables(dim);
  for (std::size_t i = 0; i < node.size(); ++i) {
    const Reader r(node[i], "bcs[" + std::to_string(i) + "]");
    BoundarySpec b;
    b.label = label_at(r.string("label"), r.at("label"));
    if (!seen.insert(b.label).second) throw ConfigError(r.at("label"), "label listed twice");
    switch (b.label.kind) {
      case BoundaryKind::noslip:
        break;
      case BoundaryKind::dirichlet:
        b.data = r.strings("velocity");
        check_expressions(b.data, vars, static_cast<std::size_t>(dim), r.at("velocity"));
        break;
      case BoundaryKind::neumann:
        if (r.has("traction")) {
          b.data = r.strings("traction");
          check_expressions(b.data, vars, static_cast<std::size_t>(dim), r.at("traction"));
        }
        break;
    }
    r.finish();
    out.push_back(std::move(b));
  }
  return out;
}

std::set<BoundaryLabel> mesh_labels(const MeshSpec& m) {
  switch (m.source) {
    case MeshSource::box:
      return {m.box_labels.begin(), m.box_labels.end()};
    case MeshSource::tube:
      return {m.tube_labels.lateral, m.tube_labels.inlet, m.tube_labels.outlet};
    case MeshSource::gmsh: {
      const RawMesh raw = read_gmsh(m.file, m.tags);
      return {raw.facet_labels.begin(), raw.facet_labels.end()};
    }
  }
  return {};
}

OutputSpec read_output(const Reader& r, const std::filesystem::path& base) {
  OutputSpec o;
  o.directory = resolve(r.string("directory", "output"), base);
  o.vtk_every = r.integer("vtk_every", 0);
  if (o.vtk_every < 0) throw ConfigError(r.at("vtk_every"), "must be non-negative");
  o.csv = r.boolean("csv", true);
  o.q_criterion = r.boolean("q_criterion", true);
  o.checkpoint = r.boolean("checkpoint", false);
  r.finish();
  return o;
}

SolverConfig read_solver(const Reader& r) {
  SolverConfig s;
  s.linear_solver = choose(r.string("type", "direct"), kSolvers, r.at("type"));
  if (r.has("tolerance")) {
    s.tolerance = r.number("tolerance");
    if (!(*s.tolerance > 0.0 && *s.tolerance < 1.0)) throw ConfigError(r.at("tolerance"), "must lie in (0, 1)");
  }
  s.max_iterations = r.integer("max_iterations", s.max_iterations);
  if (s.max_iterations < 1) throw ConfigError(r.at("max_iterations"), "must be >= 1");
  s.temam = r.boolean("temam", true);
  s.threads = r.integer("threads", 1);
  if (s.threads < 1) throw ConfigError(r.at("threads"), "must be >= 1");
  s.quadrature_degree = r.integer("quadrature_degree", 0);
  if (s.quadrature_degree < 0) throw ConfigError(r.at("quadrature_degree"), "must be non-negative");
  r.finish();
  return s;
}

BenchmarkSpec read_benchmark(const Reader& r) {
  BenchmarkSpec b;
  b.case_name = r.string("case");
  if (b.case_name != "tube" && b.case_name != "manufactured_2d") {
    throw ConfigError(r.at("case"), "unknown case '" + b.case_name + "' (expected tube or manufactured_2d)");
  }
  b.levels = r.integer("levels", 3);
  if (b.levels < 2) throw ConfigError(r.at("levels"), "a convergence study needs at least 2 levels");
  const std::string pairing = r.string("pairing", "dt-h2");
  try {
    b.pairing = parse_pairing(pairing);
  } catch (const ConfigError& e) {
    throw ConfigError(r.at("pairing"), e.what());
  }
  r.finish();
  return b;
}

Json labels_json(const std::vector<BoundaryLabel>& labels) {
  Json a = Json::array();
  for (const auto& l : labels) a.push_back(to_string(l));
  return a;
}

}  // namespace

Index TimeSpec::steps() const { return static_cast<Index>(std::llround(T / dt)); }

int RunConfig::dimension() const { return mesh.dimension; }

RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  Json root;
  try {
    root = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  const Reader r(root, "");
  RunConfig c;
  if (r.has("benchmark")) c.benchmark = read_benchmark(r.object("benchmark"));
  const bool run_mode = !c.benchmark;

  if (run_mode || r.has("mesh")) c.mesh = read_mesh(r.object("mesh"), base_dir);
  const int dim = c.mesh.dimension;
  if (run_mode || r.has("map")) c.map = read_map(r.object("map"), dim, base_dir);
  if (run_mode || r.has("physics")) c.physics = read_physics(r.object("physics"), dim);
  if (run_mode || r.has("time")) c.time = read_time(r.object("time"));
  if (run_mode || r.has("bcs")) c.bcs = read_bcs(r.raw("bcs"), dim);
  if (r.has("output")) c.output = read_output(r.object("output"), base_dir);
  if (r.has("solver")) c.solver = read_solver(r.object("solver"));
  r.finish();

  if (run_mode || r.has("bcs")) {
    const std::set<BoundaryLabel> on_mesh = mesh_labels(c.mesh);
    std::set<BoundaryLabel> listed;
    for (std::size_t i = 0; i < c.bcs.size(); ++i) {
      listed.insert(c.bcs[i].label);
      if (!on_mesh.count(c.bcs[i].label)) {
        throw ConfigError("bcs[" + std::to_string(i) + "].label",
                          "label '" + to_string(c.bcs[i].label) + "' does not occur on the mesh");
      }
    }
    for (const auto& l : on_mesh) {
      if (!listed.count(l)) throw ConfigError("bcs", "mesh label '" + to_string(l) + "' has no boundary condition");
    }
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path());
}

std::string serialize_config(const RunConfig& c) {
  Json root;
  const bool benchmark_only = c.benchmark && c.bcs.empty();
  Json mesh;
  switch (c.mesh.source) {
    case MeshSource::box: {
      mesh["source"] = "box";
      mesh["dimension"] = c.mesh.dimension;
      mesh["divisions"] = c.mesh.divisions;
      Json ext = Json::array();
      for (const auto& e : c.mesh.extents) ext.push_back({e[0], e[1]});
      mesh["extents"] = ext;
      mesh["labels"] = labels_json(c.mesh.box_labels);
      break;
    }
    case MeshSource::tube:
      mesh["source"] = "tube";
      mesh["axial_divisions"] = c.mesh.axial_divisions;
      mesh["radial_divisions"] = c.mesh.radial_divisions;
      mesh["radius"] = c.mesh.radius;
      mesh["y_range"] = {c.mesh.y_range[0], c.mesh.y_range[1]};
      mesh["labels"] = {{"lateral", to_string(c.mesh.tube_labels.lateral)},
                        {"inlet", to_string(c.mesh.tube_labels.inlet)},
                        {"outlet", to_string(c.mesh.tube_labels.outlet)}};
      break;
    case MeshSource::gmsh: {
      mesh["source"] = "gmsh";
      mesh["file"] = c.mesh.file.string();
      Json tags = Json::object();
      for (const auto& [tag, label] : c.mesh.tags) tags[std::to_string(tag)] = to_string(label);
      mesh["tags"] = tags;
      break;
    }
  }
  mesh["refinements"] = c.mesh.refinements;
  if (!benchmark_only) root["mesh"] = mesh;

  Json map;
  map["kind"] = to_string(c.map.kind);
  if (c.map.kind == MapKind::axis_scaling) map["scales"] = c.map.expressions;
  if (c.map.kind == MapKind::expression) map["components"] = c.map.expressions;
  if (c.map.kind == MapKind::mesh_sequence) map["directory"] = c.map.directory.string();
  if (!benchmark_only) root["map"] = map;

  Json physics;
  physics["nu"] = c.physics.nu;
  if (c.physics.smagorinsky) physics["smagorinsky"] = {{"C_s", c.physics.smagorinsky->C_s}};
  physics["stress"] = to_string(c.physics.stress);
  if (!c.physics.forcing.empty()) physics["forcing"] = c.physics.forcing;
  if (!c.physics.initial_velocity.empty()) physics["initial_velocity"] = c.physics.initial_velocity;
  if (!benchmark_only) {
    root["physics"] = physics;
    root["time"] = {{"dt", c.time.dt}, {"T", c.time.T}, {"scheme", to_string(c.time.scheme)}};
  }

  Json bcs = Json::array();
  for (const auto& b : c.bcs) {
    Json e;
    e["label"] = to_string(b.label);
    if (b.label.kind == BoundaryKind::dirichlet) e["velocity"] = b.data;
    if (b.label.kind == BoundaryKind::neumann && !b.data.empty()) e["traction"] = b.data;
    bcs.push_back(e);
  }
  if (!benchmark_only) root["bcs"] = bcs;

  root["output"] = {{"directory", c.output.directory.string()},
                    {"vtk_every", c.output.vtk_every},
                    {"csv", c.output.csv},
                    {"q_criterion", c.output.q_criterion},
                    {"checkpoint", c.output.checkpoint}};

  Json solver;
  solver["type"] = to_string(c.solver.linear_solver);
  if (c.solver.tolerance) solver["tolerance"] = *c.solver.tolerance;
  solver["max_iterations"] = c.solver.max_iterations;
  solver["temam"] = c.solver.temam;
  solver["threads"] = c.solver.threads;
  solver["quadrature_degree"] = c.solver.quadrature_degree;
  root["solver"] = solver;

  if (c.benchmark) {
    root["benchmark"] = {{"case", c.benchmark->case_name},
                         {"levels", c.benchmark->levels},
                         {"pairing", to_string(c.benchmark->pairing)}};
  }
  return root.dump(2) + "\n";
}

std::optional<BoundaryLabel> default_gmsh_label(int tag) {
  if (tag == 1) return BoundaryLabel::noslip();
  if (tag >= 100 && tag < 200) return BoundaryLabel::dirichlet(tag - 100);
  if (tag >= 200 && tag < 300) return BoundaryLabel::neumann(tag - 200);
  return std::nullopt;
}

int default_gmsh_tag(const BoundaryLabel& label) {
  switch (label.kind) {
    case BoundaryKind::noslip:
      return 1;
    case BoundaryKind::dirichlet:
      if (label.patch < 0 || label.patch > 99) break;
      return 100 + label.patch;
    case BoundaryKind::neumann:
      if (label.patch < 0 || label.patch > 99) break;
      return 200 + label.patch;
  }
  throw Error("patch id of '" + to_string(label) + "' has no default Gmsh tag (0..99)");
}

SimplicialMesh build_mesh(const MeshSpec& spec) {
  SimplicialMesh mesh;
  switch (spec.source) {
    case MeshSource::box:
      mesh = generate_box(spec.dimension, spec.divisions, spec.extents, spec.box_labels);
      break;
    case MeshSource::tube: {
      const Expression radius = Expression::parse(spec.radius, {"y"});
      mesh = generate_tube(
          spec.axial_divisions, spec.radial_divisions,
          [&radius](double y) { return radius(std::span<const double>(&y, 1)); }, spec.y_range, spec.tube_labels);
      break;
    }
    case MeshSource::gmsh:
      mesh = build_connectivity(read_gmsh(spec.file, spec.tags));
      break;
  }
  for (int i = 0; i < spec.refinements; ++i) mesh = refine_uniform(mesh);
  return mesh;
}

MapPtr build_map(const RunConfig& config, std::shared_ptr<const SimplicialMesh> mesh) {
  const int dim = mesh->dimension();
  switch (config.map.kind) {
    case MapKind::identity:
      return make_identity_map(dim);
    case MapKind::axis_scaling:
      return make_axis_scaling_map(config.map.expressions);
    case MapKind::tube_shrink:
      return make_tube_shrink_map();
    case MapKind::expression: {
      std::string joined;
      for (const auto& e : config.map.expressions) joined += (joined.empty() ? "" : "; ") + e;
      return parse_map_expressions(joined, dim);
    }
    case MapKind::mesh_sequence:
      return MeshSequenceMap::load(config.map.directory, std::move(mesh));
  }
  throw Error("unknown map kind");
}

SolverConfig build_solver_config(const RunConfig& config) {
  SolverConfig s = config.solver;
  s.scheme = config.time.scheme;
  s.stress = config.physics.stress;
  s.smagorinsky = config.physics.smagorinsky;
  return s;
}

FlowProblem build_problem(const RunConfig& config, SpacePtr space, MapPtr map) {
  const int dim = space->dimension();
  FlowProblem p;
  p.space = std::move(space);
  p.map = std::move(map);
  p.nu = config.physics.nu;
  if (!config.physics.forcing.empty()) p.forcing = ExpressionField(config.physics.forcing, dim);
  for (const auto& b : config.bcs) {
    if (b.label.kind == BoundaryKind::dirichlet) {
      p.bcs.dirichlet[b.label.patch] = ExpressionField(b.data, dim);
    } else if (b.label.kind == BoundaryKind::neumann) {
      p.bcs.neumann[b.label.patch] = b.data.empty() ? SpaceTimeField{} : SpaceTimeField(ExpressionField(b.data, dim));
    }
  }
  return p;
}

FlowState build_initial_state(const RunConfig& config, const SpacePtr& space, const SpaceTimeMap& map) {
  FlowState s = FlowState::zero(space, 0.0);
  if (!config.physics.initial_velocity.empty()) {
    s.u = interpolate_physical(space, map, 0.0, ExpressionField(config.physics.initial_velocity, space->dimension()));
  }
  return s;
}

std::string to_string(StressForm stress) {
  return stress == StressForm::symmetric ? "symmetric" : "full-gradient";
}

std::string to_string(TimeScheme scheme) { return scheme == TimeScheme::bdf2 ? "bdf2" : "backward-euler"; }

std::string to_string(LinearSolverKind kind) { return kind == LinearSolverKind::direct ? "direct" : "iterative"; }

}  // namespace qlflow::io
