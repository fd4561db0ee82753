#include "funface/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <numeric>

#include "funface/margin.hpp"

namespace funface {

void EvalConfig::validate() const {
  if (samples_per_identity < 2) throw InvalidInput("eval.samples_per_identity: must be >= 2");
  if (protocol_per_identity < 1) throw InvalidInput("eval.protocol_per_identity: must be >= 1");
  for (double f : far_targets)
    if (!(f > 0.0 && f <= 1.0)) throw InvalidInput("eval.far_targets: entries must lie in (0, 1]");
  for (int r : ranks)
    if (r < 1) throw InvalidInput("eval.ranks: entries must be >= 1");
  if (!(fmr_target > 0.0 && fmr_target <= 1.0)) throw InvalidInput("eval.fmr_target: must lie in (0, 1]");
  for (std::size_t i = 0; i < discard_fractions.size(); ++i) {
    const double f = discard_fractions[i];
    if (!(f >= 0.0 && f < 1.0)) throw InvalidInput("eval.discard_fractions: entries must lie in [0, 1)");
    if (i > 0 && !(f > discard_fractions[i - 1]))
      throw InvalidInput("eval.discard_fractions: must be strictly increasing");
  }
  if (edc_quality != "cr" && edc_quality != "true_noise" && edc_quality != "anti_oracle")
    throw InvalidInput("eval.edc_quality: expected one of cr, true_noise, anti_oracle; got '" + edc_quality + "'");
  if (density_norm_bins < 1) throw InvalidInput("eval.density_norm_bins: must be >= 1");
  if (density_cr_bins < 1) throw InvalidInput("eval.density_cr_bins: must be >= 1");
}

SynthData evaluation_split(const SynthConfig& synth, const EvalConfig& eval) {
  eval.validate();
  SynthConfig c = synth;
  c.samples_per_identity = eval.samples_per_identity;
  return generate(c, 1);
}

namespace {

std::vector<Eigen::Index> protocol_subset(const Dataset& data, const EvalConfig& eval, int tier) {
  if (data.tier.empty() || static_cast<Eigen::Index>(data.tier.size()) != data.size())
    throw InvalidInput("eval: dataset carries no quality tiers");
  std::vector<Eigen::Index> out;
  // (label, tier) -> samples taken so far
  std::vector<std::vector<int>> taken(static_cast<std::size_t>(data.num_classes));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const int t = data.tier[static_cast<std::size_t>(i)];
    if (tier >= 0 && t != tier) continue;
    auto& row = taken[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])];
    if (static_cast<int>(row.size()) <= t) row.resize(static_cast<std::size_t>(t) + 1, 0);
    if (row[static_cast<std::size_t>(t)]++ < eval.protocol_per_identity) out.push_back(i);
  }
  return out;
}

MatrixD gather_rows(const MatrixD& m, const std::vector<Eigen::Index>& idx) {
  MatrixD out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(idx[r]);
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<Eigen::Index>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (Eigen::Index i : idx) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

// CPU time of the calling thread; unlike wall time it excludes preemption.
double thread_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return double(ts.tv_sec) + 1e-9 * double(ts.tv_nsec);
}

}  // namespace

PairProtocol verification_protocol(const Dataset& data, const EvalConfig& eval, int tier) {
  const auto subset = protocol_subset(data, eval, tier);
  return all_pairs(data.labels, subset);
}

BenchmarkMetrics evaluate(const Checkpoint& ckpt, const Dataset& eval_set, const EvalConfig& eval) {
  eval.validate();
  const MatrixD emb = embed(ckpt, eval_set.inputs);
  BenchmarkMetrics m;
  m.clean_accuracy = verify_accuracy(emb, verification_protocol(eval_set, eval, 0));
  const PairProtocol mixed = verification_protocol(eval_set, eval, -1);
  const auto scores = pair_scores(emb, mixed);
  m.mixed_accuracy = best_threshold_accuracy(scores, mixed);
  m.mixed_tar = tar_at_far(scores, mixed, eval.far_targets);

  const auto clean = eval_set.tier_indices(0);
  const auto degraded = eval_set.tier_indices(1);
  if (clean.empty() || degraded.empty())
    throw InvalidInput("eval: identification needs a clean tier (0) and a degraded tier (1)");
  m.degraded_identification =
      identify(gather_rows(emb, degraded), gather_labels(eval_set.labels, degraded), gather_rows(emb, clean),
               gather_labels(eval_set.labels, clean), eval.ranks);

  const VectorD norms = emb.rowwise().norm();
  for (int t = 0;; ++t) {
    const auto idx = eval_set.tier_indices(t);
    if (idx.empty()) break;
    double sum = 0.0;
    for (Eigen::Index i : idx) sum += norms(i);
    m.mean_norm_by_tier.push_back(sum / double(idx.size()));
  }
  return m;
}

std::vector<double> quality_scores(const std::string& source, const Checkpoint& ckpt,
                                   const MatrixD& embeddings, const Dataset& data, double epsilon) {
  if (source == "cr") return sample_certainty_ratios(embeddings, data.labels, ckpt.prototypes, epsilon);
  if (source == "true_noise" || source == "anti_oracle") {
    if (static_cast<Eigen::Index>(data.true_quality.size()) != data.size())
      throw InvalidInput("eval.edc_quality: dataset has no true quality");
    std::vector<double> q(data.true_quality);
    if (source == "true_noise")
      for (double& v : q) v = -v;
    return q;
  }
  throw InvalidInput("eval.edc_quality: unknown quality source '" + source + "'");
}

EDCCurve edc_benchmark(const Checkpoint& ckpt, const Dataset& eval_set, const EvalConfig& eval,
                       double epsilon, const std::string& source) {
  eval.validate();
  const auto subset = protocol_subset(eval_set, eval, -1);
  Dataset sub;
  sub.inputs = gather_rows(eval_set.inputs, subset);
  sub.labels = gather_labels(eval_set.labels, subset);
  for (Eigen::Index i : subset) {
    sub.true_quality.push_back(eval_set.true_quality[static_cast<std::size_t>(i)]);
    sub.tier.push_back(eval_set.tier[static_cast<std::size_t>(i)]);
  }
  sub.num_classes = eval_set.num_classes;

  const MatrixD emb = embed(ckpt, sub.inputs);
  const auto quality = quality_scores(source, ckpt, emb, sub, epsilon);
  return edc(emb, all_pairs(sub.labels), quality, eval.fmr_target, eval.discard_fractions, source);
}

std::vector<AblationRow> ablate(const SynthConfig& synth, const TrainConfig& train,
                                const EvalConfig& eval, const std::vector<double>& lambdas,
                                const std::vector<std::uint64_t>& seeds, bool include_adaface) {
  if (seeds.empty()) throw InvalidInput("ablate.seeds: must not be empty");
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : seeds) {
    SynthConfig sc = synth;
    sc.seed = seed;
    const SynthData train_data = generate(sc, 0);
    const SynthData eval_data = evaluation_split(sc, eval);

    auto run = [&](Variant v, double lambda) {
      TrainConfig tc = train;
      tc.seed = seed;
      tc.margin.variant = v;
      tc.margin.lambda = lambda;
      const TrainResult r = funface::train(train_data.dataset, tc);
      AblationRow row;
      row.variant = to_string(v);
      row.lambda = lambda;
      row.seed = seed;
      row.final_loss = r.metrics.back().mean_loss;
      row.metrics = evaluate(r.checkpoint, eval_data.dataset, eval);
      rows.push_back(std::move(row));
    };
    if (include_adaface) run(Variant::kAdaFace, train.margin.lambda);
    for (double lambda : lambdas) run(Variant::kFunFace, lambda);
  }
  return rows;
}

std::vector<LossTiming> bench_loss(const MarginConfig& base, const std::vector<Variant>& variants,
                                   int batch_size, int num_classes, int embedding_dim,
                                   int repetitions, int warmup, std::uint64_t seed) {
  if (variants.empty()) throw InvalidInput("bench.variants: must not be empty");
  if (batch_size < 1) throw InvalidInput("bench.batch_size: must be >= 1");
  if (num_classes < 2) throw InvalidInput("bench.num_classes: must be >= 2");
  if (embedding_dim < 2) throw InvalidInput("bench.embedding_dim: must be >= 2");
  if (repetitions < 1) throw InvalidInput("bench.repetitions: must be >= 1");
  if (warmup < 0) throw InvalidInput("bench.warmup: must be >= 0");

  Engine rng = keyed_engine(seed, streams::kBenchmark);
  std::normal_distribution<double> normal;
  EmbeddingBatch<double> batch;
  batch.features.resize(batch_size, embedding_dim);
  for (Eigen::Index i = 0; i < batch.features.size(); ++i) batch.features.data()[i] = 3.0 * normal(rng);
  for (int i = 0; i < batch_size; ++i) batch.labels.push_back(i % num_classes);
  ClassPrototypes<double> protos;
  protos.centers.resize(num_classes, embedding_dim);
  for (Eigen::Index i = 0; i < protos.centers.size(); ++i) protos.centers.data()[i] = normal(rng);
  protos = renormalize_prototypes(std::move(protos));

  std::vector<MarginConfig> configs;
  for (Variant v : variants) {
    MarginConfig c = base;
    c.variant = v;
    c.validate();
    configs.push_back(c);
  }
  std::vector<NormalizerState> states(variants.size());

  // One training-style loss step: cosines, statistics, margins, gradients.
  auto step = [&](std::size_t k) {
    const MarginConfig& c = configs[k];
    const auto cl = cosine_logits(batch, protos);
    if (is_adaptive(c.variant)) {
      const std::span<const double> norms(cl.norms.data(), static_cast<std::size_t>(cl.norms.size()));
      std::vector<double> crs;
      if (c.variant == Variant::kFunFace) crs = certainty_ratios(cl, batch.labels, c.epsilon);
      states[k] = ema_update<double>(states[k], norms, std::span<const double>(crs));
    }
    auto out = margin_loss_forward(
        cl, batch.labels, c, compute_adaptation(cl, batch.labels, c, states[k], DiagnosticsLevel::kMarginOnly));
    margin_loss_backward(cl, protos, batch.labels, c, out);
    return out.loss;
  };

  std::vector<LossTiming> timings(variants.size());
  for (std::size_t k = 0; k < variants.size(); ++k) timings[k].variant = to_string(variants[k]);
  volatile double sink = 0.0;
  for (int rep = 0; rep < warmup + repetitions; ++rep) {
    // rotate the starting variant so no variant always runs first
    for (std::size_t j = 0; j < variants.size(); ++j) {
      const std::size_t k = (j + static_cast<std::size_t>(rep)) % variants.size();
      const double t0 = thread_seconds();
      sink = sink + step(k);
      const double t1 = thread_seconds();
      if (rep >= warmup) timings[k].seconds.push_back(t1 - t0);
    }
  }
  for (auto& t : timings) {
    t.mean = std::accumulate(t.seconds.begin(), t.seconds.end(), 0.0) / double(t.seconds.size());
    std::vector<double> sorted = t.seconds;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    t.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  return timings;
}

}  // namespace funface
