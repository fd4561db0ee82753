#pragma once

// Slow, loop-based reference implementations used as test oracles. Nothing
// here calls into the library's numerical code.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "funface/types.hpp"

namespace oracle {

using funface::MarginConfig;
using funface::MatrixD;
using funface::Variant;

inline double dot(const MatrixD& a, Eigen::Index i, const MatrixD& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
  return s;
}

inline double row_norm(const MatrixD& a, Eigen::Index i) { return std::sqrt(dot(a, i, a, i)); }

inline double cosine(const MatrixD& a, Eigen::Index i, const MatrixD& b, Eigen::Index j) {
  return dot(a, i, b, j) / (row_norm(a, i) * row_norm(b, j));
}

/// Positive-class term straight from the definition, with the angle argument
/// limited to [0, pi].
inline double pct(double cos_pos, const MarginConfig& c, double kappa) {
  const double theta = std::acos(std::clamp(cos_pos, -1.0, 1.0));
  auto clamp_angle = [](double a) { return std::clamp(a, 0.0, std::numbers::pi); };
  switch (c.variant) {
    case Variant::kCE: return cos_pos;
    case Variant::kSphere: return std::cos(clamp_angle(c.m_sph * theta));
    case Variant::kArc: return std::cos(clamp_angle(theta + c.m_arc));
    case Variant::kCos: return cos_pos - c.m_cos;
    case Variant::kGeneralized: return std::cos(clamp_angle(c.m_sph * theta + c.m_arc)) - c.m_cos;
    case Variant::kAdaFace:
    case Variant::kFunFace: {
      const double g_angle = -c.m * kappa;
      const double g_add = c.m + c.m * kappa;
      return std::cos(clamp_angle(theta + g_angle)) - g_add;
    }
  }
  return cos_pos;
}

/// Batch-mean margin cross-entropy with per-sample kappa held fixed. Cosines
/// use the prototype rows as given (no renormalization), like the loss does.
inline double loss(const MatrixD& z, const std::vector<int>& labels, const MatrixD& w,
                   const MarginConfig& c, const std::vector<double>& kappa) {
  long double total = 0.0L;
  for (Eigen::Index b = 0; b < z.rows(); ++b) {
    const double n = row_norm(z, b);
    std::vector<long double> logits;
    const int y = labels[static_cast<std::size_t>(b)];
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      const double cj = std::clamp(dot(z, b, w, j) / n, -1.0, 1.0);
      logits.push_back(c.s * (j == y ? pct(cj, c, kappa[static_cast<std::size_t>(b)]) : cj));
    }
    // log1p over the non-maximal terms keeps precision when the loss is tiny
    const auto top = std::max_element(logits.begin(), logits.end());
    long double rest = 0.0L;
    for (auto it = logits.begin(); it != logits.end(); ++it)
      if (it != top) rest += std::exp(*it - *top);
    total += std::log1p(rest) + (*top - logits[static_cast<std::size_t>(y)]);
  }
  return static_cast<double>(total / z.rows());
}

/// Central finite differences of `f` with respect to every entry of `x`.
template <typename F>
MatrixD finite_difference(MatrixD& x, F&& f, double step = 1e-5) {
  MatrixD g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + step;
    const double up = f();
    x.data()[i] = keep - step;
    const double down = f();
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), or the absolute difference when both are tiny.
inline double relative_error(const MatrixD& a, const MatrixD& b) {
  const double scale = std::max(a.norm(), b.norm());
  const double diff = (a - b).norm();
  return scale < 1e-10 ? diff : diff / scale;
}

/// Tanh MLP forward by explicit loops.
inline MatrixD encoder(const MatrixD& x, const MatrixD& w1, const MatrixD& b1, const MatrixD& w2,
                       const MatrixD& b2) {
  MatrixD out(x.rows(), w2.rows());
  std::vector<double> hidden(static_cast<std::size_t>(w1.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index h = 0; h < w1.rows(); ++h) {
      double a = b1(h, 0);
      for (Eigen::Index k = 0; k < x.cols(); ++k) a += w1(h, k) * x(r, k);
      hidden[static_cast<std::size_t>(h)] = std::tanh(a);
    }
    for (Eigen::Index o = 0; o < w2.rows(); ++o) {
      double a = b2(o, 0);
      for (Eigen::Index h = 0; h < w1.rows(); ++h) a += w2(o, h) * hidden[static_cast<std::size_t>(h)];
      out(r, o) = a;
    }
  }
  return out;
}

struct ScoredPair {
  double score;
  bool mated;
};

/// Best accuracy over every threshold that can change a decision.
inline double best_accuracy(const std::vector<ScoredPair>& pairs) {
  std::vector<double> candidates{-std::numeric_limits<double>::infinity()};
  for (const auto& p : pairs) candidates.push_back(p.score);
  double best = 0.0;
  for (double t : candidates) {
    std::size_t correct = 0;
    for (const auto& p : pairs) correct += (p.score > t) == p.mated;
    best = std::max(best, double(correct) / double(pairs.size()));
  }
  return best;
}

struct Operating {
  bool attainable;
  double threshold;
  double tar;
};

/// Smallest candidate threshold whose non-mated accept rate is <= far.
inline Operating tar_at_far(const std::vector<ScoredPair>& pairs, double far) {
  std::size_t nm = 0, m = 0;
  for (const auto& p : pairs) (p.mated ? m : nm)++;
  Operating op{far >= 1.0 / double(nm) - 1e-15, 0.0, 0.0};
  std::vector<double> candidates{-std::numeric_limits<double>::infinity()};
  for (const auto& p : pairs)
    if (!p.mated) candidates.push_back(p.score);
  std::sort(candidates.begin(), candidates.end());
  for (double t : candidates) {
    std::size_t false_accepts = 0;
    for (const auto& p : pairs) false_accepts += !p.mated && p.score > t;
    if (double(false_accepts) <= far * double(nm) + 1e-9) {
      op.threshold = t;
      break;
    }
  }
  std::size_t pass = 0;
  for (const auto& p : pairs) pass += p.mated && p.score > op.threshold;
  op.tar = double(pass) / double(m);
  return op;
}

/// Rank of the true identity for one probe: identities sorted by best score
/// (descending), ties by identity index.
inline int identity_rank(const std::vector<double>& probe_sims, const std::vector<int>& gallery_labels,
                         int truth) {
  std::vector<std::pair<int, double>> best;  // (identity, score)
  for (std::size_t k = 0; k < gallery_labels.size(); ++k) {
    auto it = std::find_if(best.begin(), best.end(), [&](auto& e) { return e.first == gallery_labels[k]; });
    if (it == best.end())
      best.emplace_back(gallery_labels[k], probe_sims[k]);
    else
      it->second = std::max(it->second, probe_sims[k]);
  }
  std::sort(best.begin(), best.end(), [](auto& a, auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (std::size_t r = 0; r < best.size(); ++r)
    if (best[r].first == truth) return static_cast<int>(r) + 1;
  return -1;
}

struct EdcPoint {
  double fraction;
  double fnmr;
};

inline std::vector<EdcPoint> edc(const std::vector<std::pair<int, int>>& index_pairs,
                                 const std::vector<ScoredPair>& pairs, const std::vector<double>& quality,
                                 double fmr, const std::vector<double>& fractions, bool& truncated) {
  const double threshold = tar_at_far(pairs, fmr).threshold;
  std::vector<std::pair<double, int>> order;
  for (std::size_t i = 0; i < quality.size(); ++i) order.emplace_back(quality[i], static_cast<int>(i));
  std::sort(order.begin(), order.end());
  std::vector<EdcPoint> out;
  truncated = false;
  for (double f : fractions) {
    const auto k = static_cast<std::size_t>(std::floor(f * double(quality.size()) + 1e-9));
    std::vector<bool> gone(quality.size(), false);
    for (std::size_t i = 0; i < k; ++i) gone[static_cast<std::size_t>(order[i].second)] = true;
    std::size_t mated = 0, rejected = 0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      if (!pairs[p].mated) continue;
      if (gone[static_cast<std::size_t>(index_pairs[p].first)] || gone[static_cast<std::size_t>(index_pairs[p].second)])
        continue;
      ++mated;
      rejected += pairs[p].score <= threshold;
    }
    if (mated == 0) {
      truncated = true;
      break;
    }
    out.push_back({f, double(rejected) / double(mated)});
  }
  return out;
}

/// Random matrix with N(0, sigma) entries.
inline MatrixD gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  MatrixD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline MatrixD unit_rows(MatrixD m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) /= row_norm(m, r);
  return m;
}

}  // namespace oracle
