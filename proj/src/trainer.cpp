#include "funface/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>

#include "binary_io.hpp"
#include "funface/margin.hpp"
#include "funface/rng.hpp"

namespace funface {

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidInput("train.epochs: must be >= 1");
  if (batch_size < 2) throw InvalidInput("train.batch_size: must be >= 2");
  if (!(lr >= 0) || !std::isfinite(lr)) throw InvalidInput("train.lr: must be >= 0");
  if (!(weight_decay >= 0)) throw InvalidInput("train.weight_decay: must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw InvalidInput("train.momentum: must lie in [0, 1)");
  if (!(lr_drop_factor > 0)) throw InvalidInput("train.lr_drop_factor: must be > 0");
  for (std::size_t i = 0; i < lr_drop_epochs.size(); ++i) {
    if (lr_drop_epochs[i] < 1 || lr_drop_epochs[i] >= epochs)
      throw InvalidInput("train.lr_drop_epochs: entries must lie in [1, epochs)");
    if (i > 0 && lr_drop_epochs[i] <= lr_drop_epochs[i - 1])
      throw InvalidInput("train.lr_drop_epochs: must be strictly increasing");
  }
  if (embedding_dim < 2) throw InvalidInput("train.embedding_dim: must be >= 2");
  if (hidden_dim < 0) throw InvalidInput("train.hidden_dim: must be >= 0");
  if (!(encoder_init_gain > 0) || !std::isfinite(encoder_init_gain))
    throw InvalidInput("train.encoder_init_gain: must be > 0");
  if (!(ema_momentum > 0 && ema_momentum < 1))
    throw InvalidInput("train.ema_momentum: must lie in (0, 1)");
  margin.validate();
  augment_config.validate();
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  double lr = config.lr;
  for (int drop : config.lr_drop_epochs)
    if (epoch >= drop) lr /= config.lr_drop_factor;
  return lr;
}

// --- serialization ---------------------------------------------------------

namespace {

void put_encoder(std::ostream& os, const EncoderParams& p) {
  io::put_matrix(os, p.w1);
  io::put_vector(os, p.b1);
  io::put_matrix(os, p.w2);
  io::put_vector(os, p.b2);
}

EncoderParams get_encoder(std::istream& is) {
  EncoderParams p;
  p.w1 = io::get_matrix(is, "encoder w1");
  p.b1 = io::get_vector(is, "encoder b1");
  p.w2 = io::get_matrix(is, "encoder w2");
  p.b2 = io::get_vector(is, "encoder b2");
  if (p.b1.size() != p.w1.rows() || p.w2.cols() != p.w1.rows() || p.b2.size() != p.w2.rows())
    throw InvalidInput("checkpoint: inconsistent encoder shapes");
  return p;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::ostringstream os(std::ios::binary);
  io::put<std::uint64_t>(os, kCheckpointMagic);
  io::put<std::uint64_t>(os, kCheckpointVersion);
  io::put<std::uint64_t>(os, c.seed);
  io::put<std::uint64_t>(os, static_cast<std::uint64_t>(c.epoch));
  io::put<std::uint64_t>(os, c.step);
  io::put<double>(os, c.stats.mu_z);
  io::put<double>(os, c.stats.sigma_z);
  io::put<double>(os, c.stats.mu_cr);
  io::put<double>(os, c.stats.sigma_cr);
  io::put<double>(os, c.stats.ema_momentum);
  io::put<std::uint64_t>(os, c.stats.initialized ? 1 : 0);
  put_encoder(os, c.encoder);
  put_encoder(os, c.encoder_velocity);
  io::put_matrix(os, c.prototypes);
  io::put_matrix(os, c.prototype_velocity);
  return std::move(os).str();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  if (io::get<std::uint64_t>(is, "checkpoint magic") != kCheckpointMagic)
    throw InvalidInput("not a checkpoint (bad magic)");
  const auto version = io::get<std::uint64_t>(is, "checkpoint version");
  if (version != kCheckpointVersion)
    throw InvalidInput("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.seed = io::get<std::uint64_t>(is, "seed");
  c.epoch = static_cast<int>(io::get<std::uint64_t>(is, "epoch"));
  c.step = io::get<std::uint64_t>(is, "step");
  c.stats.mu_z = io::get<double>(is, "stats");
  c.stats.sigma_z = io::get<double>(is, "stats");
  c.stats.mu_cr = io::get<double>(is, "stats");
  c.stats.sigma_cr = io::get<double>(is, "stats");
  c.stats.ema_momentum = io::get<double>(is, "stats");
  c.stats.initialized = io::get<std::uint64_t>(is, "stats") != 0;
  c.encoder = get_encoder(is);
  c.encoder_velocity = get_encoder(is);
  c.prototypes = io::get_matrix(is, "prototypes");
  c.prototype_velocity = io::get_matrix(is, "prototype velocity");
  if (c.prototypes.cols() != c.encoder.output_dim())
    throw InvalidInput("checkpoint: prototype dimension does not match encoder output");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open checkpoint for writing: " + path.string());
  const std::string bytes = serialize_checkpoint(ckpt);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("checkpoint file not found: " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return deserialize_checkpoint(buf.str());
}

// --- training --------------------------------------------------------------

Checkpoint initial_checkpoint(const TrainConfig& config, Eigen::Index input_dim, int num_classes) {
  Checkpoint c;
  c.seed = config.seed;
  c.encoder = EncoderParams::random(input_dim, config.resolved_hidden_dim(), config.embedding_dim,
                                    config.seed, config.encoder_init_gain);
  c.encoder_velocity = c.encoder.zeros_like();
  c.prototypes.resize(num_classes, config.embedding_dim);
  Engine rng = keyed_engine(config.seed, streams::kClassCenterInit);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < c.prototypes.size(); ++i) c.prototypes.data()[i] = normal(rng);
  c.prototypes = renormalize_prototypes(ClassPrototypes<double>{c.prototypes}).centers;
  c.prototype_velocity = MatrixD::Zero(num_classes, config.embedding_dim);
  c.stats.ema_momentum = config.ema_momentum;
  return c;
}

TrainResult train(const Dataset& data, const TrainConfig& config, std::optional<Checkpoint> resume,
                  std::optional<int> stop_after_epoch) {
  config.validate();
  if (data.size() < 2) throw InvalidInput("train: dataset needs at least 2 samples");
  const int last_epoch = std::min(config.epochs, stop_after_epoch.value_or(config.epochs));

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck = resume ? std::move(*resume) : initial_checkpoint(config, data.input_dim(), data.num_classes);
  if (ck.encoder.input_dim() != data.input_dim())
    throw InvalidInput("train: checkpoint input dimension does not match dataset");
  if (ck.prototypes.rows() != data.num_classes)
    throw InvalidInput("train: checkpoint class count does not match dataset");

  const Eigen::Index n = data.size();
  const Eigen::Index bs = std::min<Eigen::Index>(config.batch_size, n);
  int num_tiers = 0;
  for (int t : data.tier) num_tiers = std::max(num_tiers, t + 1);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (int epoch = ck.epoch; epoch < last_epoch; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Engine shuffle_rng = keyed_engine(config.seed, streams::kShuffle, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochMetrics em;
    em.epoch = epoch + 1;
    em.lr = lr;
    std::vector<double> tier_norm_sum(static_cast<std::size_t>(num_tiers), 0.0);
    std::vector<double> tier_count(static_cast<std::size_t>(num_tiers), 0.0);
    double clamps = 0.0;

    for (Eigen::Index start = 0, batch_index = 0; start < n; start += bs, ++batch_index) {
      const Eigen::Index count = std::min(bs, n - start);
      MatrixD inputs(count, data.input_dim());
      std::vector<int> labels(static_cast<std::size_t>(count));
      for (Eigen::Index r = 0; r < count; ++r) {
        const Eigen::Index idx = order[static_cast<std::size_t>(start + r)];
        labels[static_cast<std::size_t>(r)] = data.labels[static_cast<std::size_t>(idx)];
        if (config.augment) {
          Engine rng = augment_engine(config.seed, static_cast<std::uint64_t>(idx),
                                      static_cast<std::uint64_t>(epoch));
          inputs.row(r) = augment(VectorD(data.inputs.row(idx).transpose()), config.augment_config, rng)
                              .transpose();
        } else {
          inputs.row(r) = data.inputs.row(idx);
        }
      }

      try {
        EncoderCache cache;
        EmbeddingBatch<double> batch{encoder_forward(ck.encoder, inputs, &cache), std::move(labels)};
        const ClassPrototypes<double> protos{ck.prototypes};
        const auto cl = cosine_logits(batch, protos);
        const auto crs = certainty_ratios(cl, batch.labels, config.margin.epsilon);

        // update, then normalize with the updated statistics
        ck.stats = ema_update<double>(ck.stats, std::span<const double>(cl.norms.data(), cl.norms.size()),
                                      std::span<const double>(crs));
        auto out = margin_loss_forward(cl, batch.labels, config.margin,
                                       compute_adaptation(cl, batch.labels, config.margin, ck.stats));
        margin_loss_backward(cl, protos, batch.labels, config.margin, out);

        const EncoderParams g = encoder_backward(ck.encoder, cache, out.grad_features);
        const double m = config.momentum, wd = config.weight_decay;
        auto& p = ck.encoder;
        auto& v = ck.encoder_velocity;
        sgd_step(p.w1, g.w1, v.w1, lr, m, wd);
        sgd_step(p.b1, g.b1, v.b1, lr, m, wd);
        sgd_step(p.w2, g.w2, v.w2, lr, m, wd);
        sgd_step(p.b2, g.b2, v.b2, lr, m, wd);
        sgd_step(ck.prototypes, out.grad_centers, ck.prototype_velocity, lr, m, wd);
        ck.prototypes = renormalize_prototypes(ClassPrototypes<double>{std::move(ck.prototypes)}).centers;
        ++ck.step;

        em.mean_loss += out.loss * double(count);
        em.mean_norm += cl.norms.sum();
        for (std::size_t r = 0; r < crs.size(); ++r) {
          em.mean_cr += crs[r];
          if (out.diagnostics[r].cr_clamped) clamps += 1.0;
          const Eigen::Index idx = order[static_cast<std::size_t>(start) + r];
          const int t = data.tier.empty() ? -1 : data.tier[static_cast<std::size_t>(idx)];
          if (t >= 0) {
            tier_norm_sum[static_cast<std::size_t>(t)] += cl.norms(static_cast<Eigen::Index>(r));
            tier_count[static_cast<std::size_t>(t)] += 1.0;
          }
        }
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch + 1) + ", batch " +
                                 std::to_string(batch_index) + ": " + e.what(),
                             e.sample_index());
      }
    }
    em.mean_loss /= double(n);
    em.mean_norm /= double(n);
    em.mean_cr /= double(n);
    em.clamp_rate = clamps / double(n);
    for (int t = 0; t < num_tiers; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      em.mean_norm_by_tier.push_back(tier_count[ti] > 0 ? tier_norm_sum[ti] / tier_count[ti] : 0.0);
    }
    result.metrics.push_back(std::move(em));
    ck.epoch = epoch + 1;
  }
  return result;
}

MatrixD embed(const Checkpoint& ckpt, const MatrixD& inputs) {
  return encoder_forward(ckpt.encoder, inputs);
}

}  // namespace funface
