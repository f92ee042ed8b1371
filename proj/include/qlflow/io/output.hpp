#pragma once

// Binary checkpoints and the per-step diagnostics CSV.

#include <qlflow/analysis.hpp>
#include <qlflow/solver.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>

namespace qlflow::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header "QLFCKPT" + version, then step, time and the raw u and p coefficient
/// vectors (little-endian doubles).
void write_checkpoint(const std::filesystem::path& path, const FlowState& state);
/// Throws when the header is wrong or the sizes do not match `space`.
FlowState read_checkpoint(const std::filesystem::path& path, const SpacePtr& space);

/// Columns: step,time,kinetic_energy,divergence_residual,linear_iterations,
/// linear_residual,kinetic_rate,dissipation,boundary_work,forcing_power.
/// The energy-balance terms are empty on the row of the initial state.
class DiagnosticsCsv {
 public:
  explicit DiagnosticsCsv(const std::filesystem::path& path);
  explicit DiagnosticsCsv(std::ostream& out);

  void write_initial(const StepDiagnostics& d);
  void write(const StepDiagnostics& d, const EnergyBalance& balance);

 private:
  void header();

  std::ofstream file_;
  std::ostream* out_;
};

}  // namespace qlflow::io
