#include <qlflow/io/output.hpp>

#include <fmt/format.h>

#include <array>
#include <bit>
#include <cstring>

namespace qlflow::io {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

constexpr std::array<char, 8> kMagic{'Q', 'L', 'F', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("checkpoint " + path.string() + " is truncated");
  return value;
}

void put_vector(std::ostream& out, const Eigen::VectorXd& v) {
  put<std::int64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Eigen::VectorXd get_vector(std::istream& in, Index expected, const char* what, const std::filesystem::path& path) {
  const auto n = get<std::int64_t>(in, path);
  if (n != expected) {
    throw Error(fmt::format("checkpoint {}: {} has {} coefficients, the space needs {}", path.string(), what, n,
                            expected));
  }
  Eigen::VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw Error("checkpoint " + path.string() + " is truncated");
  return v;
}

std::string num(double x) { return fmt::format("{:.17g}", x); }

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const FlowState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int64_t>(out, state.k);
  put<double>(out, state.t);
  put_vector(out, state.u.coefficients);
  put_vector(out, state.p.coefficients);
  if (!out) throw Error("write failed: " + path.string());
}

FlowState read_checkpoint(const std::filesystem::path& path, const SpacePtr& space) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error("checkpoint " + path.string() + ": not a checkpoint file");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw Error(fmt::format("checkpoint {}: unsupported version {}", path.string(), version));
  }
  FlowState s = FlowState::zero(space);
  s.k = get<std::int64_t>(in, path);
  s.t = get<double>(in, path);
  s.u.coefficients = get_vector(in, space->velocity_dof_count(), "velocity", path);
  s.p.coefficients = get_vector(in, space->pressure_dof_count(), "pressure", path);
  return s;
}

DiagnosticsCsv::DiagnosticsCsv(const std::filesystem::path& path) : file_(path), out_(&file_) {
  if (!file_) throw Error("cannot write " + path.string());
  header();
}

DiagnosticsCsv::DiagnosticsCsv(std::ostream& out) : out_(&out) { header(); }

void DiagnosticsCsv::header() {
  *out_ << "step,time,kinetic_energy,divergence_residual,linear_iterations,linear_residual,"
           "kinetic_rate,dissipation,boundary_work,forcing_power\n";
}

void DiagnosticsCsv::write_initial(const StepDiagnostics& d) {
  *out_ << d.step << ',' << num(d.t) << ',' << num(d.kinetic_energy) << ',' << num(d.divergence_residual) << ','
        << d.linear_iterations << ',' << num(d.linear_residual) << ",,,,\n";
  out_->flush();
}

void DiagnosticsCsv::write(const StepDiagnostics& d, const EnergyBalance& b) {
  *out_ << d.step << ',' << num(d.t) << ',' << num(d.kinetic_energy) << ',' << num(d.divergence_residual) << ','
        << d.linear_iterations << ',' << num(d.linear_residual) << ',' << num(b.kinetic_rate) << ','
        << num(b.dissipation) << ',' << num(b.boundary_work) << ',' << num(b.forcing_power) << '\n';
  out_->flush();
}

}  // namespace qlflow::io
