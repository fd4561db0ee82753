#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "funface/eval.hpp"
#include "funface/synth.hpp"
#include "funface/trainer.hpp"

namespace funface {

/// Evaluation protocol over a held-out draw of the training identities.
struct EvalConfig {
  int samples_per_identity = 256;
  /// Samples per identity and tier that enter the pair protocols.
  int protocol_per_identity = 8;
  std::vector<double> far_targets{1e-1, 1e-2, 1e-3};
  std::vector<int> ranks{1, 5};
  double fmr_target = 1e-3;
  std::vector<double> discard_fractions{0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4};
  std::string edc_quality = "cr";  // cr | true_noise | anti_oracle
  int density_norm_bins = 32;
  int density_cr_bins = 32;

  void validate() const;
};

/// The evaluation split: same identities as `synth`, independent noise.
SynthData evaluation_split(const SynthConfig& synth, const EvalConfig& eval);

/// Every pair among the first `protocol_per_identity` samples of `tier` in
/// each identity block; tier -1 takes that many samples from every tier.
PairProtocol verification_protocol(const Dataset& data, const EvalConfig& eval, int tier);

struct BenchmarkMetrics {
  double clean_accuracy = 0.0;
  double mixed_accuracy = 0.0;
  std::vector<TarAtFar> mixed_tar;
  /// Degraded-tier probes against a gallery of clean-tier samples.
  IdentificationResult degraded_identification;
  std::vector<double> mean_norm_by_tier;
};

BenchmarkMetrics evaluate(const Checkpoint& ckpt, const Dataset& eval_set, const EvalConfig& eval);

/// Per-sample quality of the named source: "cr" (trained-model certainty
/// ratio), "true_noise" (negated tier sigma) or "anti_oracle" (tier sigma).
std::vector<double> quality_scores(const std::string& source, const Checkpoint& ckpt,
                                   const MatrixD& embeddings, const Dataset& data, double epsilon);

EDCCurve edc_benchmark(const Checkpoint& ckpt, const Dataset& eval_set, const EvalConfig& eval,
                       double epsilon, const std::string& source);

struct AblationRow {
  std::string variant;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  BenchmarkMetrics metrics;
};

/// Trains and evaluates once per (variant setting, seed). FunFace runs use
/// each entry of `lambdas`; an AdaFace reference row is added first per seed
/// when `include_adaface` is set.
std::vector<AblationRow> ablate(const SynthConfig& synth, const TrainConfig& train,
                                const EvalConfig& eval, const std::vector<double>& lambdas,
                                const std::vector<std::uint64_t>& seeds, bool include_adaface);

struct LossTiming {
  std::string variant;
  std::vector<double> seconds;  // one entry per timed repetition
  double mean = 0.0;
  double median = 0.0;
};

/// Times loss forward + backward, including the statistics update an
/// adaptive variant performs each step. Variants are interleaved, in
/// rotating order, within every repetition so slow drifts in machine speed
/// hit all of them alike.
std::vector<LossTiming> bench_loss(const MarginConfig& base, const std::vector<Variant>& variants,
                                   int batch_size, int num_classes, int embedding_dim,
                                   int repetitions, int warmup, std::uint64_t seed);

}  // namespace funface
