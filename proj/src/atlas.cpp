#include "funface/atlas.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "funface/margin.hpp"

namespace funface {

namespace {

NormalizerState snapshot_stats(double mu_cr, double sigma_cr) {
  NormalizerState s;
  s.mu_z = 20.0;
  s.sigma_z = 10.0;
  s.mu_cr = mu_cr;
  s.sigma_cr = sigma_cr;
  s.initialized = true;
  return s;
}

struct PointEval {
  double scale;
  double pct;
  double cos_pos;
  double cos_neg;
};

PointEval evaluate(const VectorD& point, const MatrixD& centers, const MarginConfig& config,
                   const NormalizerState& stats) {
  if (centers.rows() != 2) throw InvalidInput("gradient_scale: expects exactly two class centers");
  if (point.size() != centers.cols())
    throw InvalidInput("gradient_scale: point dimension does not match the centers");
  if (!(point.norm() > 0.0)) throw InvalidInput("gradient_scale: point coincides with the origin");
  EmbeddingBatch<double> batch{point.transpose(), {0}};
  const ClassPrototypes<double> protos{centers};
  const auto cl = cosine_logits(batch, protos);
  const auto out = margin_loss_forward(cl, batch.labels, config,
                                       compute_adaptation(cl, batch.labels, config, stats));
  // |s (p_i - 1) dPCT/dcos| with p_i - 1 = -p_j
  const double scale = config.s * out.probabilities(0, 1) * std::abs(out.pct_slope(0));
  return {scale, out.diagnostics[0].pct, cl.cosines(0, 0), cl.cosines(0, 1)};
}

// Crossing of f between two neighbouring grid points along the angle axis.
Eigen::Vector2d crossing(double f0, double f1, double phi0, double phi1, double norm) {
  const double t = f0 / (f0 - f1);
  const double phi = phi0 + t * (phi1 - phi0);
  return {norm * std::cos(phi), norm * std::sin(phi)};
}

}  // namespace

AtlasConfig AtlasConfig::defaults() {
  AtlasConfig c;
  c.margin_fun.variant = Variant::kFunFace;
  c.margin_fun.lambda = 0.1;
  c.margin_ada = c.margin_fun;
  c.margin_ada.variant = Variant::kAdaFace;
  c.snapshots = {{"early", snapshot_stats(1.0, 0.2)},
                 {"middle", snapshot_stats(2.0, 0.6)},
                 {"late", snapshot_stats(4.0, 1.2)}};
  return c;
}

void AtlasConfig::validate() const {
  if (grid_resolution < 16) throw InvalidInput("atlas.grid_resolution: must be >= 16");
  if (!(angle_between_centers > 0.0 && angle_between_centers < std::numbers::pi))
    throw InvalidInput("atlas.angle_between_centers: must lie in (0, pi)");
  if (feature_norm_values.empty() && !(norm_hi > norm_lo && norm_lo > 0.0))
    throw InvalidInput("atlas.norm_lo/norm_hi: need 0 < norm_lo < norm_hi");
  for (double n : feature_norm_values)
    if (!(n > 0.0)) throw InvalidInput("atlas.feature_norm_values: norms must be > 0");
  if (snapshots.empty()) throw InvalidInput("atlas.snapshots: at least one snapshot required");
  margin_fun.validate();
  margin_ada.validate();
  if (margin_fun.m != margin_ada.m || margin_fun.s != margin_ada.s || margin_fun.h != margin_ada.h)
    throw InvalidInput("atlas: FunFace and AdaFace configs must share m, s and h");
}

std::vector<double> AtlasConfig::norm_axis() const {
  if (!feature_norm_values.empty()) return feature_norm_values;
  std::vector<double> out(static_cast<std::size_t>(grid_resolution));
  for (int k = 0; k < grid_resolution; ++k)
    out[static_cast<std::size_t>(k)] = norm_lo + (norm_hi - norm_lo) * k / (grid_resolution - 1);
  return out;
}

std::vector<double> AtlasConfig::angle_axis() const {
  // Symmetric about the bisector, reaching half the center gap past each center.
  const double lo = -0.5 * angle_between_centers;
  const double hi = 1.5 * angle_between_centers;
  std::vector<double> out(static_cast<std::size_t>(grid_resolution));
  for (int k = 0; k < grid_resolution; ++k)
    out[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (grid_resolution - 1);
  return out;
}

double gradient_scale(const VectorD& point, const MatrixD& centers, const MarginConfig& config,
                      const NormalizerState& stats) {
  return evaluate(point, centers, config, stats).scale;
}

std::vector<AtlasSlice> difference_map(const AtlasConfig& config) {
  config.validate();
  const auto norms = config.norm_axis();
  const auto angles = config.angle_axis();
  const int rows = static_cast<int>(norms.size());
  const int cols = static_cast<int>(angles.size());
  MatrixD centers(2, 2);
  centers << 1.0, 0.0, std::cos(config.angle_between_centers), std::sin(config.angle_between_centers);

  std::vector<AtlasSlice> slices;
  for (const auto& snap : config.snapshots) {
    AtlasSlice sl;
    sl.name = snap.name;
    sl.stats = snap.stats;
    const std::size_t total = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    for (GradientField* f : {&sl.fun, &sl.ada}) {
      f->rows = rows;
      f->cols = cols;
      f->points.resize(total);
    }
    sl.diff.resize(total);
    sl.on_b0.assign(total, false);
    sl.on_b1.assign(total, false);
    sl.in_band.assign(total, false);

    std::vector<double> f0(static_cast<std::size_t>(cols)), f1(static_cast<std::size_t>(cols));
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const std::size_t k = static_cast<std::size_t>(r) * cols + c;
        const double n = norms[static_cast<std::size_t>(r)];
        const double phi = angles[static_cast<std::size_t>(c)];
        const VectorD point = Eigen::Vector2d(n * std::cos(phi), n * std::sin(phi));
        const PointEval fun = evaluate(point, centers, config.margin_fun, snap.stats);
        const PointEval ada = evaluate(point, centers, config.margin_ada, snap.stats);
        sl.fun.points[k] = {point(0), point(1), fun.scale};
        sl.ada.points[k] = {point(0), point(1), ada.scale};
        sl.diff[k] = fun.scale - ada.scale;
        f0[static_cast<std::size_t>(c)] = fun.cos_pos - fun.cos_neg;
        f1[static_cast<std::size_t>(c)] = fun.pct - fun.cos_neg;
        sl.in_band[k] = f0[static_cast<std::size_t>(c)] >= 0.0 && f1[static_cast<std::size_t>(c)] < 0.0;
      }
      for (int c = 0; c + 1 < cols; ++c) {
        const auto cc = static_cast<std::size_t>(c);
        const std::size_t k = static_cast<std::size_t>(r) * cols + c;
        const double n = norms[static_cast<std::size_t>(r)];
        if ((f0[cc] >= 0.0) != (f0[cc + 1] >= 0.0)) {
          sl.on_b0[k] = true;
          sl.fun.boundary_b0.push_back(crossing(f0[cc], f0[cc + 1], angles[cc], angles[cc + 1], n));
        }
        if ((f1[cc] >= 0.0) != (f1[cc + 1] >= 0.0)) {
          sl.on_b1[k] = true;
          sl.fun.boundary_b1.push_back(crossing(f1[cc], f1[cc + 1], angles[cc], angles[cc + 1], n));
        }
      }
    }
    sl.ada.boundary_b0 = sl.fun.boundary_b0;
    sl.ada.boundary_b1 = sl.fun.boundary_b1;
    slices.push_back(std::move(sl));
  }
  return slices;
}

double band_mean_difference(const AtlasSlice& slice) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < slice.diff.size(); ++k) {
    if (!slice.in_band[k]) continue;
    sum += slice.diff[k];
    ++count;
  }
  return count ? sum / double(count) : std::numeric_limits<double>::quiet_NaN();
}

void write_atlas_csv(const std::filesystem::path& path, const AtlasSlice& slice) {
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot open atlas output: " + path.string());
  os.precision(17);
  os << "x,y,scale_fun,scale_ada,diff,on_b0,on_b1\n";
  for (std::size_t k = 0; k < slice.diff.size(); ++k) {
    const auto& p = slice.fun.points[k];
    os << p.x << ',' << p.y << ',' << p.scale << ',' << slice.ada.points[k].scale << ','
       << slice.diff[k] << ',' << int(slice.on_b0[k]) << ',' << int(slice.on_b1[k]) << '\n';
  }
}

}  // namespace funface
