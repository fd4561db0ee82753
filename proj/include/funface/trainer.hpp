#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "funface/adaptive_stats.hpp"
#include "funface/encoder.hpp"
#include "funface/synth.hpp"
#include "funface/types.hpp"

namespace funface {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 256;
  double lr = 0.1;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  std::vector<int> lr_drop_epochs{14, 23, 28};  // 12/20/24 of 26, rescaled to 30
  double lr_drop_factor = 10.0;
  std::uint64_t seed = 1;
  int embedding_dim = 64;
  int hidden_dim = 0;  // 0 selects 4 * embedding_dim
  double encoder_init_gain = 20.0;  // first-layer weight scale; saturating tanh ties norm to input quality
  double ema_momentum = 0.99;
  bool augment = true;
  MarginConfig margin;
  AugmentConfig augment_config;

  void validate() const;
  int resolved_hidden_dim() const { return hidden_dim > 0 ? hidden_dim : 4 * embedding_dim; }
};

/// Learning rate in effect during zero-based `epoch`.
double learning_rate_at(const TrainConfig& config, int epoch);

/// Everything needed to resume training bit-exactly.
struct Checkpoint {
  EncoderParams encoder;
  EncoderParams encoder_velocity;
  MatrixD prototypes;  // C x D, unit rows
  MatrixD prototype_velocity;
  NormalizerState stats;
  int epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
  std::uint64_t step = 0;  // completed optimizer steps
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint64_t kCheckpointMagic = 0x54504B4346464E55ull;  // "UNFFCKPT"
inline constexpr std::uint64_t kCheckpointVersion = 1;

/// Classical momentum: v <- momentum * v + g + wd * p; p <- p - lr * v.
template <typename P, typename G, typename V>
void sgd_step(Eigen::MatrixBase<P>& params, const Eigen::MatrixBase<G>& grads,
              Eigen::MatrixBase<V>& velocity, double lr, double momentum, double weight_decay) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols() ||
      params.rows() != velocity.rows() || params.cols() != velocity.cols())
    throw InvalidInput("sgd_step: shape mismatch");
  if (!grads.allFinite()) throw NumericalError("sgd_step: non-finite gradient");
  velocity = momentum * velocity + grads + weight_decay * params;
  params -= lr * velocity;
}

struct EpochMetrics {
  int epoch = 0;  // one-based
  double lr = 0.0;
  double mean_loss = 0.0;
  double mean_norm = 0.0;
  double mean_cr = 0.0;
  double clamp_rate = 0.0;  // fraction of samples where the CR clamp was active
  std::vector<double> mean_norm_by_tier;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> metrics;
};

/// Fresh parameters, prototypes and statistics for `config`.
Checkpoint initial_checkpoint(const TrainConfig& config, Eigen::Index input_dim, int num_classes);

/// Mini-batch SGD. Starts from `resume` when given, and stops after
/// `stop_after_epoch` completed epochs (defaults to config.epochs).
TrainResult train(const Dataset& data, const TrainConfig& config,
                  std::optional<Checkpoint> resume = std::nullopt,
                  std::optional<int> stop_after_epoch = std::nullopt);

/// Raw embeddings of every dataset row under the checkpoint's encoder.
MatrixD embed(const Checkpoint& ckpt, const MatrixD& inputs);

}  // namespace funface
