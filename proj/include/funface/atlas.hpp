#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "funface/adaptive_stats.hpp"
#include "funface/types.hpp"

namespace funface {

/// Frozen normalizer statistics standing in for one stage of training.
struct StageSnapshot {
  std::string name;
  NormalizerState stats;
};

/// A two-center slice: W_i = (1, 0), W_j = (cos a, sin a). Points are laid out
/// on a polar grid (feature norm x angle from W_i) and reported in Cartesian
/// coordinates.
struct AtlasConfig {
  int grid_resolution = 256;
  double angle_between_centers = 1.5707963267948966;  // pi / 2
  /// Norm axis of the grid; empty selects grid_resolution values spanning
  /// [norm_lo, norm_hi].
  std::vector<double> feature_norm_values;
  double norm_lo = 10.0;
  double norm_hi = 30.0;
  std::vector<StageSnapshot> snapshots;
  MarginConfig margin_fun;
  MarginConfig margin_ada;

  /// Defaults with early / middle / late snapshots of rising mean CR.
  static AtlasConfig defaults();
  void validate() const;
  std::vector<double> norm_axis() const;
  std::vector<double> angle_axis() const;
};

struct FieldPoint {
  double x = 0.0;
  double y = 0.0;
  double scale = 0.0;
};

struct GradientField {
  int rows = 0;  // norm axis
  int cols = 0;  // angle axis
  std::vector<FieldPoint> points;  // row-major
  std::vector<Eigen::Vector2d> boundary_b0;
  std::vector<Eigen::Vector2d> boundary_b1;
};

struct AtlasSlice {
  std::string name;
  NormalizerState stats;
  GradientField fun;
  GradientField ada;
  std::vector<double> diff;  // fun - ada
  std::vector<bool> on_b0;
  std::vector<bool> on_b1;
  std::vector<bool> in_band;  // positive side of B0, negative side of B1
};

/// |dL/dcos(theta_i)| at `point`, with the adaptation terms computed from the
/// point and the frozen `stats`. `centers` holds W_i (row 0) and W_j (row 1).
double gradient_scale(const VectorD& point, const MatrixD& centers, const MarginConfig& config,
                      const NormalizerState& stats);

/// FunFace and AdaFace fields plus their difference, one slice per snapshot.
std::vector<AtlasSlice> difference_map(const AtlasConfig& config);

/// Mean of (fun - ada) over the points between B0 and B1; NaN when empty.
double band_mean_difference(const AtlasSlice& slice);

/// Columns: x, y, scale_fun, scale_ada, diff, on_b0, on_b1.
void write_atlas_csv(const std::filesystem::path& path, const AtlasSlice& slice);

}  // namespace funface
