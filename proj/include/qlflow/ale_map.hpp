#pragma once

// Space-time maps xi(x, t) from the fixed reference domain onto the moving
// physical domain, with F = grad xi, J = det F and the domain velocity xi_t.

#include <qlflow/common.hpp>
#include <qlflow/expression.hpp>
#include <qlflow/mesh.hpp>

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qlflow {

enum class MapKind { identity, axis_scaling, tube_shrink, expression, mesh_sequence };

std::string to_string(MapKind kind);

/// Raw map evaluation: position, spatial gradient and time derivative.
struct MapJet {
  Vec position;
  Mat F;
  Vec xi_t;
};

struct MappingSample {
  Vec point;
  double time = 0.0;
  Vec position;
  Mat F;
  Mat F_inv;
  double J = 1.0;
  Vec xi_t;
};

class SpaceTimeMap {
 public:
  virtual ~SpaceTimeMap() = default;
  virtual MapKind kind() const = 0;
  virtual int dimension() const = 0;
  /// `cell` optionally names a mesh cell containing x; cellwise-defined maps
  /// use it to skip point location.
  virtual MapJet jet(const Vec& x, double t, Index cell = -1) const = 0;
  /// Maps whose gradient is only piecewise defined (no second derivatives).
  virtual bool piecewise() const { return false; }
};

using MapPtr = std::shared_ptr<const SpaceTimeMap>;

MapPtr make_identity_map(int dimension);

/// xi_i = s_i(t) x_i, each scale function an expression in t.
MapPtr make_axis_scaling_map(const std::vector<std::string>& scale_functions);

/// xi = (x1 s(t), x2, x3 s(t)) with s(t) = sqrt(1 - t/4): the shrinking tube.
MapPtr make_tube_shrink_map();

/// Map given by `dimension` ';'-separated expressions in x1..xd, t.
/// F and xi_t are computed by forward-mode differentiation.
MapPtr parse_map_expressions(std::string_view source, int dimension);

/// Map defined by a sequence of node positions of a fixed-topology mesh:
/// piecewise linear in space, linear in time between frames.
class MeshSequenceMap final : public SpaceTimeMap {
 public:
  struct Frame {
    double time = 0.0;
    Eigen::MatrixXd positions;  // dimension x vertex_count
  };

  MeshSequenceMap(std::shared_ptr<const SimplicialMesh> mesh, std::vector<Frame> frames);

  /// Load one text file per frame from `directory` (lexicographic order):
  /// the frame time on the first line, then one "x y z" line per node.
  static std::shared_ptr<const MeshSequenceMap> load(const std::filesystem::path& directory,
                                                     std::shared_ptr<const SimplicialMesh> mesh);

  MapKind kind() const override { return MapKind::mesh_sequence; }
  int dimension() const override { return mesh_->dimension(); }
  MapJet jet(const Vec& x, double t, Index cell = -1) const override;
  bool piecewise() const override { return true; }

  const SimplicialMesh& mesh() const { return *mesh_; }
  const std::vector<Frame>& frames() const { return frames_; }
  /// Interpolated node position; exact at stored frame times.
  Vec node_position(Index vertex, double t) const;
  /// Backward difference quotient of the node position over the frame interval.
  Vec node_velocity(Index vertex, double t) const;
  /// First cell containing x (linear search).
  Index locate(const Vec& x) const;

 private:
  struct Interval {
    std::size_t lower = 0;
    std::size_t upper = 0;
    double theta = 0.0;
    double span = 0.0;
  };
  Interval interval(double t) const;

  std::shared_ptr<const SimplicialMesh> mesh_;
  std::vector<Frame> frames_;
};

/// Full sample including F^{-1} and J; throws SingularMappingError when J <= 0.
MappingSample evaluate_map(const SpaceTimeMap& map, const Vec& x, double t, Index cell = -1);

/// |div(J F^{-1})| at x by central differences of step delta (the divergence
/// contracts the first index, so the exact value is 0 by the Piola identity).
double piola_residual(const SpaceTimeMap& map, const Vec& x, double t, double delta);

struct MapThresholds {
  double c_J = 0.1;
  double C_F = 100.0;
  double epsilon = 0.9;
};

struct MapValidationReport {
  double min_J = 0.0;
  double max_F_norm = 0.0;
  double max_Finv_norm = 0.0;
  double max_I_minus_F = 0.0;
  Index sample_count = 0;
  MapThresholds thresholds;
  bool passed = false;
};

/// Sample F and J at all mesh vertices and cell barycenters at all `times`.
MapValidationReport validate_assumptions(const SpaceTimeMap& map, const SimplicialMesh& mesh,
                                         std::span<const double> times, const MapThresholds& thresholds = {});

}  // namespace qlflow
