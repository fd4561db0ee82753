#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "funface/rng.hpp"
#include "funface/types.hpp"

namespace funface {

struct QualityTier {
  double fraction = 0.5;
  double noise_sigma = 0.0;
};

struct SynthConfig {
  int num_identities = 32;
  int samples_per_identity = 64;
  int input_dim = 96;
  std::vector<QualityTier> quality_tiers{{0.5, 0.05}, {0.5, 0.6}};
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthSample {
  VectorD input;
  int label = 0;
  double true_quality = 0.0;  // the tier's noise sigma; never used for training
};

/// Samples stored as matrix rows, identity-major.
struct Dataset {
  MatrixD inputs;
  std::vector<int> labels;
  std::vector<double> true_quality;
  std::vector<int> tier;  // index into SynthConfig::quality_tiers, -1 when unknown
  int num_classes = 0;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index input_dim() const { return inputs.cols(); }
  SynthSample sample(Eigen::Index i) const;
  /// Indices of the samples belonging to one quality tier.
  std::vector<Eigen::Index> tier_indices(int t) const;
};

struct SynthData {
  Dataset dataset;
  MatrixD identity_prototypes;  // num_identities x input_dim, unit rows
};

/// Deterministic identity-cluster dataset. Identity prototypes depend only on
/// the seed; `split` selects an independent noise draw over the same
/// identities (0 = training, 1 = evaluation).
SynthData generate(const SynthConfig& config, std::uint64_t split = 0);

/// Vector-space analogs of image augmentations.
struct AugmentConfig {
  double p_noise = 0.20;
  double p_affine = 0.20;
  double p_mask = 0.20;
  double p_gray = 0.05;
  double noise_weight = 0.3;      // blend weight of the noise vector (RMS-matched)
  double affine_max_angle = 0.3;  // radians
  double affine_max_shift = 0.05;  // in units of the sample's RMS coordinate
  double mask_fraction = 0.25;    // block length as a fraction of the dimension

  void validate() const;
};

/// Applies each augmentation independently with its configured probability.
/// All four decisions are drawn up front so the decision pattern depends on
/// the engine state only.
VectorD augment(VectorD input, const AugmentConfig& config, Engine& rng);
SynthSample augment(SynthSample sample, const AugmentConfig& config, Engine& rng);

/// Engine for one sample in one epoch; independent of processing order.
inline Engine augment_engine(std::uint64_t seed, std::uint64_t sample_index, std::uint64_t epoch) {
  return keyed_engine(seed, streams::kAugment, mix64(sample_index) ^ epoch);
}

/// Flat little-endian file: header of five u64 (magic, version, N, D_in, C),
/// then N*D_in f64 row-major, then N i32 labels.
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

inline constexpr std::uint64_t kDatasetMagic = 0x54455344464E5546ull;  // "FUNFDSET"
inline constexpr std::uint64_t kDatasetVersion = 1;

}  // namespace funface
