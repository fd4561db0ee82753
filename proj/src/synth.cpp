#include "funface/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "binary_io.hpp"

namespace funface {

void SynthConfig::validate() const {
  if (num_identities < 2) throw InvalidInput("synth.num_identities: must be >= 2");
  if (samples_per_identity < 2) throw InvalidInput("synth.samples_per_identity: must be >= 2");
  if (input_dim < 4) throw InvalidInput("synth.input_dim: must be >= 4");
  if (quality_tiers.empty()) throw InvalidInput("synth.quality_tiers: must not be empty");
  double total = 0.0;
  for (const auto& t : quality_tiers) {
    if (!(t.fraction > 0.0 && t.fraction <= 1.0))
      throw InvalidInput("synth.quality_tiers: fraction must lie in (0, 1]");
    if (!(t.noise_sigma >= 0.0) || !std::isfinite(t.noise_sigma))
      throw InvalidInput("synth.quality_tiers: noise_sigma must be >= 0");
    total += t.fraction;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("synth.quality_tiers: fractions must sum to 1");
}

void AugmentConfig::validate() const {
  for (auto [name, p] : {std::pair{"p_noise", p_noise}, std::pair{"p_affine", p_affine},
                         std::pair{"p_mask", p_mask}, std::pair{"p_gray", p_gray}}) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput(std::string("augment.") + name + ": must lie in [0, 1]");
  }
  if (!(noise_weight >= 0.0 && noise_weight <= 1.0))
    throw InvalidInput("augment.noise_weight: must lie in [0, 1]");
  if (!(mask_fraction > 0.0 && mask_fraction <= 1.0))
    throw InvalidInput("augment.mask_fraction: must lie in (0, 1]");
  if (!(affine_max_angle >= 0.0)) throw InvalidInput("augment.affine_max_angle: must be >= 0");
  if (!(affine_max_shift >= 0.0)) throw InvalidInput("augment.affine_max_shift: must be >= 0");
}

SynthSample Dataset::sample(Eigen::Index i) const {
  SynthSample s;
  s.input = inputs.row(i).transpose();
  s.label = labels[static_cast<std::size_t>(i)];
  s.true_quality = true_quality.empty() ? 0.0 : true_quality[static_cast<std::size_t>(i)];
  return s;
}

std::vector<Eigen::Index> Dataset::tier_indices(int t) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < tier.size(); ++i)
    if (tier[i] == t) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

SynthData generate(const SynthConfig& config, std::uint64_t split) {
  config.validate();
  const int ids = config.num_identities;
  const int per_id = config.samples_per_identity;
  const int dim = config.input_dim;

  SynthData out;
  out.identity_prototypes.resize(ids, dim);
  {
    Engine rng = keyed_engine(config.seed, streams::kIdentityPrototypes);
    std::normal_distribution<double> normal;
    for (int c = 0; c < ids; ++c) {
      for (int d = 0; d < dim; ++d) out.identity_prototypes(c, d) = normal(rng);
      out.identity_prototypes.row(c).normalize();
    }
  }

  // Tier boundaries inside each identity's block of samples.
  std::vector<int> tier_end;
  double cum = 0.0;
  for (const auto& t : config.quality_tiers) {
    cum += t.fraction;
    tier_end.push_back(static_cast<int>(std::lround(cum * per_id)));
  }
  tier_end.back() = per_id;

  Dataset& ds = out.dataset;
  const Eigen::Index n = static_cast<Eigen::Index>(ids) * per_id;
  ds.inputs.resize(n, dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.true_quality.resize(static_cast<std::size_t>(n));
  ds.tier.resize(static_cast<std::size_t>(n));
  ds.num_classes = ids;

  const std::uint64_t stream = streams::kSamples + (split << 16);
  for (int c = 0; c < ids; ++c) {
    for (int k = 0; k < per_id; ++k) {
      const Eigen::Index i = static_cast<Eigen::Index>(c) * per_id + k;
      const int t = static_cast<int>(std::upper_bound(tier_end.begin(), tier_end.end(), k) -
                                     tier_end.begin());
      const double sigma = config.quality_tiers[static_cast<std::size_t>(t)].noise_sigma;
      ds.inputs.row(i) = out.identity_prototypes.row(c);
      if (sigma > 0.0) {
        Engine rng = keyed_engine(config.seed, stream, static_cast<std::uint64_t>(i));
        std::normal_distribution<double> normal(0.0, sigma);
        for (int d = 0; d < dim; ++d) ds.inputs(i, d) += normal(rng);
      }
      ds.labels[static_cast<std::size_t>(i)] = c;
      ds.true_quality[static_cast<std::size_t>(i)] = sigma;
      ds.tier[static_cast<std::size_t>(i)] = t;
    }
  }
  return out;
}

VectorD augment(VectorD x, const AugmentConfig& config, Engine& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool do_noise = unit(rng) < config.p_noise;
  const bool do_affine = unit(rng) < config.p_affine;
  const bool do_mask = unit(rng) < config.p_mask;
  const bool do_gray = unit(rng) < config.p_gray;
  const Eigen::Index dim = x.size();
  // Noise and shifts are scaled to the sample's RMS coordinate.
  const double rms = x.norm() / std::sqrt(double(dim));

  if (do_noise) {
    VectorD noise(dim);
    if (unit(rng) < 0.5) {
      std::normal_distribution<double> normal;
      for (Eigen::Index d = 0; d < dim; ++d) noise(d) = rms * normal(rng);
    } else {
      // unit-variance uniform
      std::uniform_real_distribution<double> u(-std::numbers::sqrt3, std::numbers::sqrt3);
      for (Eigen::Index d = 0; d < dim; ++d) noise(d) = rms * u(rng);
    }
    const double w = config.noise_weight;
    x = (1.0 - w) * x + w * noise;
  }
  if (do_affine && dim >= 2) {
    std::uniform_int_distribution<Eigen::Index> pick(0, dim - 1);
    const Eigen::Index a = pick(rng);
    Eigen::Index b = pick(rng);
    while (b == a) b = pick(rng);
    std::uniform_real_distribution<double> angle(-config.affine_max_angle, config.affine_max_angle);
    std::uniform_real_distribution<double> shift(-config.affine_max_shift, config.affine_max_shift);
    const double t = angle(rng);
    const double xa = x(a), xb = x(b);
    x(a) = std::cos(t) * xa - std::sin(t) * xb;
    x(b) = std::sin(t) * xa + std::cos(t) * xb;
    x.array() += rms * shift(rng);
  }
  if (do_mask) {
    const Eigen::Index len =
        std::clamp<Eigen::Index>(std::lround(config.mask_fraction * double(dim)), 1, dim);
    std::uniform_int_distribution<Eigen::Index> start(0, dim - len);
    x.segment(start(rng), len).setZero();
  }
  if (do_gray) {
    for (Eigen::Index d = 0; d + 3 <= dim; d += 3) x.segment<3>(d).setConstant(x.segment<3>(d).mean());
  }
  return x;
}

SynthSample augment(SynthSample sample, const AugmentConfig& config, Engine& rng) {
  sample.input = augment(std::move(sample.input), config, rng);
  return sample;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open dataset file for writing: " + path.string());
  io::put<std::uint64_t>(os, kDatasetMagic);
  io::put<std::uint64_t>(os, kDatasetVersion);
  io::put<std::uint64_t>(os, static_cast<std::uint64_t>(data.size()));
  io::put<std::uint64_t>(os, static_cast<std::uint64_t>(data.input_dim()));
  io::put<std::uint64_t>(os, static_cast<std::uint64_t>(data.num_classes));
  os.write(reinterpret_cast<const char*>(data.inputs.data()),
           static_cast<std::streamsize>(data.inputs.size() * sizeof(double)));
  for (int label : data.labels) io::put<std::int32_t>(os, label);
  if (!os) throw InvalidInput("failed writing dataset file: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("dataset file not found: " + path.string());
  if (io::get<std::uint64_t>(is, "dataset magic") != kDatasetMagic)
    throw InvalidInput("not a dataset file (bad magic): " + path.string());
  const auto version = io::get<std::uint64_t>(is, "dataset version");
  if (version != kDatasetVersion)
    throw InvalidInput("unsupported dataset version " + std::to_string(version));
  const auto n = io::get<std::uint64_t>(is, "dataset N");
  const auto dim = io::get<std::uint64_t>(is, "dataset D_in");
  const auto classes = io::get<std::uint64_t>(is, "dataset C");
  if (n == 0 || dim == 0 || n * dim > (1ull << 31) || classes > (1ull << 31))
    throw InvalidInput("implausible dataset header in " + path.string());

  Dataset ds;
  ds.num_classes = static_cast<int>(classes);
  ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  if (!is.read(reinterpret_cast<char*>(ds.inputs.data()),
               static_cast<std::streamsize>(ds.inputs.size() * sizeof(double))))
    throw InvalidInput("truncated dataset features in " + path.string());
  ds.labels.resize(n);
  for (auto& label : ds.labels) {
    label = io::get<std::int32_t>(is, "dataset labels");
    if (label < 0 || static_cast<std::uint64_t>(label) >= classes)
      throw InvalidInput("dataset label out of range in " + path.string());
  }
  ds.true_quality.assign(n, 0.0);
  ds.tier.assign(n, -1);
  return ds;
}

}  // namespace funface
