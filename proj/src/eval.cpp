#include "funface/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace funface {

void validate_protocol(const PairProtocol& protocol, Eigen::Index num_samples) {
  bool any_mated = false, any_non_mated = false;
  for (std::size_t i = 0; i < protocol.size(); ++i) {
    const Pair& p = protocol[i];
    if (p.a < 0 || p.b < 0 || p.a >= num_samples || p.b >= num_samples)
      throw InvalidInput("protocol: pair " + std::to_string(i) + " references a sample outside [0, " +
                         std::to_string(num_samples) + ")");
    (p.mated ? any_mated : any_non_mated) = true;
  }
  if (!any_mated || !any_non_mated)
    throw InvalidInput("protocol: needs at least one mated and one non-mated pair");
}

PairProtocol all_pairs(const std::vector<int>& labels, std::span<const Eigen::Index> subset) {
  std::vector<Eigen::Index> idx(subset.begin(), subset.end());
  if (idx.empty()) {
    idx.resize(labels.size());
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  }
  PairProtocol out;
  out.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = i + 1; j < idx.size(); ++j)
      out.push_back({idx[i], idx[j],
                     labels[static_cast<std::size_t>(idx[i])] == labels[static_cast<std::size_t>(idx[j])]});
  return out;
}

PairProtocol read_protocol_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("protocol file not found: " + path.string());
  PairProtocol out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("index_a", 0) == 0) continue;
    std::istringstream ls(line);
    long long a, b;
    int mated;
    char c1, c2;
    if (!(ls >> a >> c1 >> b >> c2 >> mated) || c1 != ',' || c2 != ',' || (mated != 0 && mated != 1))
      throw InvalidInput("protocol: malformed line " + std::to_string(line_no) + " in " + path.string());
    out.push_back({static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b), mated == 1});
  }
  return out;
}

void write_protocol_csv(const std::filesystem::path& path, const PairProtocol& protocol) {
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot open protocol file for writing: " + path.string());
  os << "index_a,index_b,mated\n";
  for (const Pair& p : protocol) os << p.a << ',' << p.b << ',' << (p.mated ? 1 : 0) << '\n';
}

std::vector<double> pair_scores(const MatrixD& embeddings, const PairProtocol& protocol) {
  validate_protocol(protocol, embeddings.rows());
  const VectorD inv = embeddings.rowwise().norm().cwiseInverse();
  std::vector<double> out(protocol.size());
  for (std::size_t i = 0; i < protocol.size(); ++i) {
    const Pair& p = protocol[i];
    out[i] = embeddings.row(p.a).dot(embeddings.row(p.b)) * inv(p.a) * inv(p.b);
  }
  return out;
}

double best_threshold_accuracy(std::span<const double> scores, const PairProtocol& protocol) {
  if (scores.size() != protocol.size()) throw InvalidInput("verify: score count != pair count");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return scores[i] < scores[j]; });

  // Threshold below everything: all accepted.
  std::size_t mated_total = 0;
  for (const Pair& p : protocol) mated_total += p.mated;
  std::size_t correct = mated_total;
  std::size_t best = correct;
  // Move the threshold past each group of equal scores in turn.
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k;
    while (e < order.size() && scores[order[e]] == scores[order[k]]) {
      correct += protocol[order[e]].mated ? -1 : 1;
      ++e;
    }
    best = std::max(best, correct);
    k = e;
  }
  return double(best) / double(scores.size());
}

double verify_accuracy(const MatrixD& embeddings, const PairProtocol& protocol) {
  const auto scores = pair_scores(embeddings, protocol);
  return best_threshold_accuracy(scores, protocol);
}

TarAtFar threshold_at_far(std::span<const double> scores, const PairProtocol& protocol, double far) {
  if (scores.size() != protocol.size()) throw InvalidInput("tar_at_far: score count != pair count");
  std::vector<double> non_mated, mated;
  for (std::size_t i = 0; i < scores.size(); ++i) (protocol[i].mated ? mated : non_mated).push_back(scores[i]);
  if (non_mated.empty() || mated.empty())
    throw InvalidInput("tar_at_far: needs mated and non-mated pairs");
  TarAtFar r;
  r.far_target = far;
  const double n = double(non_mated.size());
  r.attainable = far >= 1.0 / n - 1e-15;
  std::sort(non_mated.begin(), non_mated.end(), std::greater<>());
  const auto allowed = static_cast<std::size_t>(std::floor(far * n + 1e-9));
  r.threshold = non_mated[std::min(allowed, non_mated.size() - 1)];
  if (allowed >= non_mated.size()) r.threshold = -std::numeric_limits<double>::infinity();
  if (!r.attainable) {
    r.tar = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  std::size_t pass = 0;
  for (double s : mated) pass += s > r.threshold;
  r.tar = double(pass) / double(mated.size());
  return r;
}

std::vector<TarAtFar> tar_at_far(std::span<const double> scores, const PairProtocol& protocol,
                                 std::span<const double> far_targets) {
  std::vector<TarAtFar> out;
  for (double far : far_targets) out.push_back(threshold_at_far(scores, protocol, far));
  return out;
}

std::vector<TarAtFar> tar_at_far(const MatrixD& embeddings, const PairProtocol& protocol,
                                 std::span<const double> far_targets) {
  const auto scores = pair_scores(embeddings, protocol);
  return tar_at_far(scores, protocol, far_targets);
}

IdentificationResult identify(const MatrixD& probes, const std::vector<int>& probe_labels,
                              const MatrixD& gallery, const std::vector<int>& gallery_labels,
                              const std::vector<int>& ranks) {
  if (gallery.rows() == 0) throw InvalidInput("identify: empty gallery");
  if (probes.cols() != gallery.cols()) throw InvalidInput("identify: probe/gallery dimension mismatch");
  if (static_cast<Eigen::Index>(probe_labels.size()) != probes.rows() ||
      static_cast<Eigen::Index>(gallery_labels.size()) != gallery.rows())
    throw InvalidInput("identify: label count mismatch");
  for (int r : ranks)
    if (r < 1) throw InvalidInput("identify: ranks must be >= 1");

  const int max_label = std::max(*std::max_element(gallery_labels.begin(), gallery_labels.end()),
                                 probe_labels.empty() ? 0 : *std::max_element(probe_labels.begin(), probe_labels.end()));
  std::vector<bool> present(static_cast<std::size_t>(max_label) + 1, false);
  for (int l : gallery_labels) present[static_cast<std::size_t>(l)] = true;

  const MatrixD g = gallery.rowwise().normalized();
  const MatrixD p = probes.rowwise().normalized();
  const MatrixD sim = p * g.transpose();

  IdentificationResult res;
  res.ranks = ranks;
  std::vector<std::size_t> hits(ranks.size(), 0);
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  std::vector<double> best(present.size());
  for (Eigen::Index i = 0; i < probes.rows(); ++i) {
    const int truth = probe_labels[static_cast<std::size_t>(i)];
    if (truth < 0 || !present[static_cast<std::size_t>(truth)]) {
      ++res.num_excluded;
      continue;
    }
    ++res.num_probes;
    std::fill(best.begin(), best.end(), kNone);
    for (Eigen::Index k = 0; k < gallery.rows(); ++k) {
      auto& b = best[static_cast<std::size_t>(gallery_labels[static_cast<std::size_t>(k)])];
      b = std::max(b, sim(i, k));
    }
    const double mine = best[static_cast<std::size_t>(truth)];
    int rank = 1;
    for (std::size_t id = 0; id < best.size(); ++id) {
      if (!present[id] || static_cast<int>(id) == truth) continue;
      if (best[id] > mine || (best[id] == mine && static_cast<int>(id) < truth)) ++rank;
    }
    for (std::size_t r = 0; r < ranks.size(); ++r) hits[r] += rank <= ranks[r];
  }
  for (std::size_t r = 0; r < ranks.size(); ++r)
    res.rates.push_back(res.num_probes ? double(hits[r]) / double(res.num_probes) : 0.0);
  return res;
}

EDCCurve edc(std::span<const double> scores, const PairProtocol& protocol,
             std::span<const double> quality, double fmr_target,
             std::span<const double> discard_fractions, std::string quality_source) {
  Eigen::Index n = static_cast<Eigen::Index>(quality.size());
  for (const Pair& p : protocol)
    if (p.a >= n || p.b >= n) throw InvalidInput("edc: quality score missing for a protocol sample");
  for (std::size_t i = 0; i < discard_fractions.size(); ++i) {
    const double f = discard_fractions[i];
    if (!(f >= 0.0 && f < 1.0)) throw InvalidInput("edc: discard fractions must lie in [0, 1)");
    if (i > 0 && !(f > discard_fractions[i - 1]))
      throw InvalidInput("edc: discard fractions must be increasing");
  }

  const TarAtFar op = threshold_at_far(scores, protocol, fmr_target);
  if (!op.attainable)
    throw InvalidInput("edc: FMR target " + std::to_string(fmr_target) +
                       " is unattainable with this many non-mated pairs");
  EDCCurve curve;
  curve.fmr_target = fmr_target;
  curve.threshold = op.threshold;
  curve.quality_source = std::move(quality_source);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    return quality[static_cast<std::size_t>(i)] < quality[static_cast<std::size_t>(j)];
  });

  std::vector<bool> discarded(static_cast<std::size_t>(n), false);
  std::size_t removed = 0;
  for (double f : discard_fractions) {
    const auto target = static_cast<std::size_t>(std::floor(f * double(n) + 1e-9));
    while (removed < target) discarded[static_cast<std::size_t>(order[removed++])] = true;
    std::size_t mated = 0, rejected = 0;
    for (std::size_t i = 0; i < protocol.size(); ++i) {
      const Pair& p = protocol[i];
      if (!p.mated || discarded[static_cast<std::size_t>(p.a)] || discarded[static_cast<std::size_t>(p.b)])
        continue;
      ++mated;
      rejected += !(scores[i] > op.threshold);
    }
    if (mated == 0) {
      curve.truncated = true;
      break;
    }
    curve.discard_fractions.push_back(f);
    curve.fnmr_values.push_back(double(rejected) / double(mated));
  }
  return curve;
}

EDCCurve edc(const MatrixD& embeddings, const PairProtocol& protocol,
             std::span<const double> quality, double fmr_target,
             std::span<const double> discard_fractions, std::string quality_source) {
  if (static_cast<Eigen::Index>(quality.size()) != embeddings.rows())
    throw InvalidInput("edc: need exactly one quality score per sample");
  const auto scores = pair_scores(embeddings, protocol);
  return edc(scores, protocol, quality, fmr_target, discard_fractions, std::move(quality_source));
}

std::vector<double> sample_certainty_ratios(const MatrixD& embeddings, const std::vector<int>& labels,
                                            const MatrixD& prototypes, double epsilon) {
  if (embeddings.cols() != prototypes.cols())
    throw InvalidInput("certainty ratio: embedding/prototype dimension mismatch");
  const MatrixD cos = (embeddings.rowwise().normalized() * prototypes.transpose())
                          .cwiseMax(-1.0)
                          .cwiseMin(1.0);
  std::vector<double> out(labels.size());
  for (Eigen::Index i = 0; i < cos.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= cos.cols()) throw InvalidInput("certainty ratio: label out of range");
    double nn = -2.0;
    for (Eigen::Index j = 0; j < cos.cols(); ++j)
      if (j != y) nn = std::max(nn, cos(i, j));
    out[static_cast<std::size_t>(i)] = certainty_ratio(cos(i, y), nn, epsilon);
  }
  return out;
}

int bin_index(double v, double lo, double hi, int bins) {
  if (!(hi > lo)) return 0;
  const double t = (v - lo) / (hi - lo) * bins;
  return std::clamp(static_cast<int>(std::floor(t)), 0, bins - 1);
}

DensityMap norm_utility_map(const MatrixD& embeddings, const std::vector<int>& labels,
                            const MatrixD& prototypes, const NormalizerState& stats, double epsilon,
                            double h, int norm_bins, int cr_bins) {
  if (norm_bins < 1 || cr_bins < 1) throw InvalidInput("density: bin counts must be >= 1");
  if (embeddings.rows() == 0) throw InvalidInput("density: no samples");
  DensityMap map;
  map.crs = sample_certainty_ratios(embeddings, labels, prototypes, epsilon);
  const VectorD norms = embeddings.rowwise().norm();
  map.norms.assign(norms.data(), norms.data() + norms.size());
  for (std::size_t i = 0; i < map.norms.size(); ++i) {
    map.norm_hats.push_back(normalized_norm(stats, map.norms[i], h));
    map.cr_hats.push_back(normalized_cr(stats, map.crs[i], h));
  }
  const auto [nlo, nhi] = std::minmax_element(map.norms.begin(), map.norms.end());
  const auto [clo, chi] = std::minmax_element(map.crs.begin(), map.crs.end());
  map.norm_lo = *nlo;
  map.norm_hi = *nhi;
  map.cr_lo = *clo;
  map.cr_hi = *chi;
  map.counts = Eigen::MatrixXd::Zero(norm_bins, cr_bins);
  for (std::size_t i = 0; i < map.norms.size(); ++i)
    map.counts(bin_index(map.norms[i], map.norm_lo, map.norm_hi, norm_bins),
               bin_index(map.crs[i], map.cr_lo, map.cr_hi, cr_bins)) += 1.0;
  return map;
}

}  // namespace funface
