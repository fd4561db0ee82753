#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "funface/adaptive_stats.hpp"
#include "funface/types.hpp"

namespace funface {

struct Pair {
  Eigen::Index a = 0;
  Eigen::Index b = 0;
  bool mated = false;
};

using PairProtocol = std::vector<Pair>;

/// Throws unless every index is below `num_samples` and both classes occur.
void validate_protocol(const PairProtocol& protocol, Eigen::Index num_samples);

/// Every unordered pair among `subset` (all samples when empty).
PairProtocol all_pairs(const std::vector<int>& labels, std::span<const Eigen::Index> subset = {});

PairProtocol read_protocol_csv(const std::filesystem::path& path);
void write_protocol_csv(const std::filesystem::path& path, const PairProtocol& protocol);

/// Cosine similarity of each pair.
std::vector<double> pair_scores(const MatrixD& embeddings, const PairProtocol& protocol);

/// Best accuracy over all thresholds; a pair is accepted when score > threshold.
double best_threshold_accuracy(std::span<const double> scores, const PairProtocol& protocol);
double verify_accuracy(const MatrixD& embeddings, const PairProtocol& protocol);

struct TarAtFar {
  double far_target = 0.0;
  bool attainable = false;
  double threshold = 0.0;
  double tar = 0.0;
};

/// Decision threshold: the smallest non-mated score t with
/// #{non-mated > t} / #non-mated <= far. Unattainable when far < 1 / #non-mated.
TarAtFar threshold_at_far(std::span<const double> scores, const PairProtocol& protocol, double far);
std::vector<TarAtFar> tar_at_far(std::span<const double> scores, const PairProtocol& protocol,
                                 std::span<const double> far_targets);
std::vector<TarAtFar> tar_at_far(const MatrixD& embeddings, const PairProtocol& protocol,
                                 std::span<const double> far_targets);

struct IdentificationResult {
  std::vector<int> ranks;
  std::vector<double> rates;  // aligned with `ranks`
  std::size_t num_probes = 0;   // probes that were scored
  std::size_t num_excluded = 0;  // probes whose identity is absent from the gallery
};

/// Identity-level Rank-N: each gallery identity is represented by its best
/// cosine score; ties favour the lower identity index.
IdentificationResult identify(const MatrixD& probes, const std::vector<int>& probe_labels,
                              const MatrixD& gallery, const std::vector<int>& gallery_labels,
                              const std::vector<int>& ranks);

struct EDCCurve {
  double fmr_target = 0.0;
  double threshold = 0.0;
  std::vector<double> discard_fractions;
  std::vector<double> fnmr_values;
  std::string quality_source;
  bool truncated = false;  // a discard level left no mated pairs; later levels dropped
};

/// Error-versus-discard: the threshold is fixed once on the full set; for each
/// fraction the lowest-quality samples (ties: lower index first) are removed,
/// together with every pair touching them, and FNMR is recomputed.
EDCCurve edc(std::span<const double> scores, const PairProtocol& protocol,
             std::span<const double> quality, double fmr_target,
             std::span<const double> discard_fractions, std::string quality_source = "external");
EDCCurve edc(const MatrixD& embeddings, const PairProtocol& protocol,
             std::span<const double> quality, double fmr_target,
             std::span<const double> discard_fractions, std::string quality_source = "external");

/// Per-sample certainty ratio against trained class centers.
std::vector<double> sample_certainty_ratios(const MatrixD& embeddings, const std::vector<int>& labels,
                                            const MatrixD& prototypes, double epsilon);

struct DensityMap {
  std::vector<double> norms;
  std::vector<double> crs;
  std::vector<double> norm_hats;
  std::vector<double> cr_hats;
  double norm_lo = 0.0, norm_hi = 0.0;
  double cr_lo = 0.0, cr_hi = 0.0;
  Eigen::MatrixXd counts;  // norm bins x CR bins
};

/// Bin index of `v` among `bins` equal bins on [lo, hi]; the top edge falls
/// into the last bin and a degenerate range maps everything to bin 0.
int bin_index(double v, double lo, double hi, int bins);

DensityMap norm_utility_map(const MatrixD& embeddings, const std::vector<int>& labels,
                            const MatrixD& prototypes, const NormalizerState& stats, double epsilon,
                            double h, int norm_bins, int cr_bins);

}  // namespace funface
