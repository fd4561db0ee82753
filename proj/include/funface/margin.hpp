#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "funface/adaptive_stats.hpp"
#include "funface/types.hpp"

namespace funface {

/// Cosines between every normalized embedding and every class center.
template <typename Scalar>
struct CosineLogits {
  Matrix<Scalar> cosines;        // B x C, clamped to [-1, 1]
  Vector<Scalar> norms;          // ||z_b||
  Matrix<Scalar> unit_features;  // z_b / ||z_b||
};

template <typename Scalar>
struct PerSampleDiagnostics {
  Scalar theta_pos = 0;
  Scalar cos_pos = 0;
  Scalar cos_nn = 0;  // largest negative-class cosine
  int nn_index = -1;
  Scalar norm = 0;
  Scalar norm_hat = 0;
  Scalar cr = 0;
  Scalar cr_hat = 0;
  Scalar kappa = 0;
  Scalar g_angle = 0;
  Scalar g_add = 0;
  Scalar pct = 0;
  bool cr_clamped = false;
};

template <typename Scalar>
struct LossOutput {
  Scalar loss = 0;  // batch mean
  Matrix<Scalar> grad_features;
  Matrix<Scalar> grad_centers;
  std::vector<PerSampleDiagnostics<Scalar>> diagnostics;
  Vector<Scalar> per_sample_loss;
  Matrix<Scalar> probabilities;  // softmax over the margin logits
  Vector<Scalar> pct_slope;      // dPCT / dcos(theta_i)
};

/// kMarginOnly skips nearest-negative search and CR for variants that do not
/// need them; diagnostics for those fields are then left at zero.
enum class DiagnosticsLevel { kFull, kMarginOnly };

namespace detail {

template <typename Scalar>
void check_prototypes(const ClassPrototypes<Scalar>& protos, const char* who) {
  if (protos.num_classes() < 2)
    throw InvalidInput(std::string(who) + ": need at least 2 class prototypes");
  if (protos.dim() < 2) throw InvalidInput(std::string(who) + ": prototype dimension < 2");
}

struct StaticMargins {
  double sph, arc, cos;
};

inline StaticMargins static_margins(const MarginConfig& c) {
  switch (c.variant) {
    case Variant::kSphere: return {c.m_sph, 0.0, 0.0};
    case Variant::kArc: return {1.0, c.m_arc, 0.0};
    case Variant::kCos: return {1.0, 0.0, c.m_cos};
    case Variant::kGeneralized: return {c.m_sph, c.m_arc, c.m_cos};
    default: return {1.0, 0.0, 0.0};
  }
}

template <typename Scalar>
struct PctValue {
  Scalar value;
  Scalar slope;  // d value / d cos_pos
};

// cos(mult * theta + shift) - sub with the angle argument clamped to [0, pi].
template <typename Scalar>
PctValue<Scalar> shifted_cosine(Scalar cos_pos, Scalar mult, Scalar shift, Scalar sub) {
  constexpr Scalar kPi = std::numbers::pi_v<Scalar>;
  constexpr Scalar kTiny = Scalar(1e-12);
  const Scalar c = std::clamp(cos_pos, Scalar(-1), Scalar(1));
  const Scalar theta = std::acos(c);
  const Scalar raw = mult * theta + shift;
  const Scalar phi = std::clamp(raw, Scalar(0), kPi);
  PctValue<Scalar> out{std::cos(phi) - sub, Scalar(0)};
  if (raw <= Scalar(0) || raw >= kPi) return out;
  // dPCT/dcos = mult * sin(phi) / sin(theta)
  const Scalar sin_theta = std::sqrt(std::max(Scalar(0), Scalar(1) - c * c));
  const Scalar sin_phi = std::sin(phi);
  if (sin_theta > kTiny) {
    out.slope = mult * sin_phi / sin_theta;
  } else if (std::abs(sin_phi) <= kTiny) {
    out.slope = mult * mult * std::cos(phi) / std::cos(theta);
  } else {
    out.slope = mult * sin_phi / kTiny;
  }
  return out;
}

template <typename Scalar>
PctValue<Scalar> pct_with_slope(Scalar cos_pos, const MarginConfig& config, Scalar g_angle,
                                Scalar g_add) {
  if (config.variant == Variant::kCE) return {cos_pos, Scalar(1)};
  if (is_adaptive(config.variant)) return shifted_cosine(cos_pos, Scalar(1), g_angle, g_add);
  const StaticMargins sm = static_margins(config);
  return shifted_cosine(cos_pos, Scalar(sm.sph), Scalar(sm.arc), Scalar(sm.cos));
}

}  // namespace detail

template <typename Scalar>
CosineLogits<Scalar> cosine_logits(const EmbeddingBatch<Scalar>& batch,
                                   const ClassPrototypes<Scalar>& protos) {
  detail::check_prototypes(protos, "cosine_logits");
  if (batch.size() < 1) throw InvalidInput("cosine_logits: empty batch");
  if (batch.dim() != protos.dim())
    throw InvalidInput("cosine_logits: embedding dimension " + std::to_string(batch.dim()) +
                       " != prototype dimension " + std::to_string(protos.dim()));
  if (static_cast<Eigen::Index>(batch.labels.size()) != batch.size())
    throw InvalidInput("cosine_logits: label count does not match batch size");
  for (std::size_t b = 0; b < batch.labels.size(); ++b) {
    const int y = batch.labels[b];
    if (y < 0 || y >= protos.num_classes())
      throw InvalidInput("cosine_logits: label " + std::to_string(y) + " of sample " +
                         std::to_string(b) + " out of range");
  }

  CosineLogits<Scalar> out;
  out.norms = batch.features.rowwise().norm();
  for (Eigen::Index b = 0; b < batch.size(); ++b) {
    const Scalar n = out.norms(b);
    if (!(n > Scalar(0)) || !std::isfinite(static_cast<double>(n)))
      throw InvalidInput("cosine_logits: embedding row " + std::to_string(b) +
                         " has zero or non-finite norm");
  }
  out.unit_features = out.norms.cwiseInverse().asDiagonal() * batch.features;
  out.cosines.noalias() = out.unit_features * protos.centers.transpose();
  out.cosines = out.cosines.cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
  return out;
}

/// Margin-modified positive-class term. Static variants use the config's
/// margins; adaptive variants use cos(theta + g_angle) - g_add.
template <typename Scalar>
Scalar generalized_pct(Scalar cos_pos, const MarginConfig& config, Scalar g_angle = 0,
                       Scalar g_add = 0) {
  return detail::pct_with_slope(cos_pos, config, g_angle, g_add).value;
}

/// Per-sample adaptation terms (normalized norm, CR, kappa) for one batch.
/// The returned diagnostics can be edited before margin_loss_forward() to
/// pin the terms to chosen values.
template <typename Scalar>
std::vector<PerSampleDiagnostics<Scalar>> compute_adaptation(
    const CosineLogits<Scalar>& cl, const std::vector<int>& labels, const MarginConfig& config,
    const NormalizerState& stats, DiagnosticsLevel level = DiagnosticsLevel::kFull) {
  const Eigen::Index batch = cl.cosines.rows();
  const Eigen::Index classes = cl.cosines.cols();
  std::vector<PerSampleDiagnostics<Scalar>> out(static_cast<std::size_t>(batch));
  const bool need_nn =
      level == DiagnosticsLevel::kFull || config.variant == Variant::kFunFace;
  const bool need_norm_hat = level == DiagnosticsLevel::kFull || is_adaptive(config.variant);

  for (Eigen::Index b = 0; b < batch; ++b) {
    auto& d = out[static_cast<std::size_t>(b)];
    const int y = labels[static_cast<std::size_t>(b)];
    d.cos_pos = cl.cosines(b, y);
    d.theta_pos = std::acos(d.cos_pos);
    d.norm = cl.norms(b);
    if (need_norm_hat) d.norm_hat = Scalar(normalized_norm(stats, double(d.norm), config.h));
    if (need_nn) {
      // strict '>' keeps the lowest index on ties
      Scalar best = Scalar(-2);
      int best_j = -1;
      for (Eigen::Index j = 0; j < classes; ++j) {
        if (j == y) continue;
        if (cl.cosines(b, j) > best) {
          best = cl.cosines(b, j);
          best_j = static_cast<int>(j);
        }
      }
      d.cos_nn = best;
      d.nn_index = best_j;
      d.cr = certainty_ratio(d.cos_pos, d.cos_nn, Scalar(config.epsilon));
      d.cr_clamped = certainty_ratio_clamps(d.cos_pos, d.cos_nn);
      d.cr_hat = Scalar(normalized_cr(stats, double(d.cr), config.h));
    }
    switch (config.variant) {
      case Variant::kAdaFace: d.kappa = d.norm_hat; break;
      case Variant::kFunFace: d.kappa = mix_kappa(d.norm_hat, d.cr_hat, Scalar(config.lambda)); break;
      default: d.kappa = 0; break;
    }
  }
  return out;
}

/// Certainty ratio of every sample, taken from the loss's own cosine matrix.
template <typename Scalar>
std::vector<Scalar> certainty_ratios(const CosineLogits<Scalar>& cl, const std::vector<int>& labels,
                                     Scalar epsilon) {
  std::vector<Scalar> out(labels.size());
  for (Eigen::Index b = 0; b < cl.cosines.rows(); ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    Scalar best = Scalar(-2);
    for (Eigen::Index j = 0; j < cl.cosines.cols(); ++j)
      if (j != y) best = std::max(best, cl.cosines(b, j));
    out[static_cast<std::size_t>(b)] = certainty_ratio(cl.cosines(b, y), best, epsilon);
  }
  return out;
}

/// Margin softmax cross-entropy, given precomputed cosines and adaptation
/// terms. Gradients are left empty; see margin_loss_backward().
template <typename Scalar>
LossOutput<Scalar> margin_loss_forward(const CosineLogits<Scalar>& cl,
                                       const std::vector<int>& labels, const MarginConfig& config,
                                       std::vector<PerSampleDiagnostics<Scalar>> adaptation) {
  const Eigen::Index batch = cl.cosines.rows();
  const Eigen::Index classes = cl.cosines.cols();
  if (static_cast<Eigen::Index>(adaptation.size()) != batch)
    throw InvalidInput("margin_loss_forward: adaptation terms do not match batch size");
  const Scalar s = Scalar(config.s);
  const Scalar m = Scalar(config.m);

  LossOutput<Scalar> out;
  out.probabilities.resize(batch, classes);
  out.pct_slope.resize(batch);
  out.per_sample_loss.resize(batch);
  Vector<Scalar> logits(classes);
  Scalar total = 0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    auto& d = adaptation[static_cast<std::size_t>(b)];
    const int y = labels[static_cast<std::size_t>(b)];
    if (is_adaptive(config.variant)) {
      d.g_angle = -m * d.kappa;
      d.g_add = m + m * d.kappa;
    } else {
      d.g_angle = 0;
      d.g_add = 0;
    }
    const auto pct = detail::pct_with_slope(d.cos_pos, config, d.g_angle, d.g_add);
    d.pct = pct.value;
    out.pct_slope(b) = pct.slope;

    logits = s * cl.cosines.row(b).transpose();
    logits(y) = s * pct.value;
    const Scalar top = logits.maxCoeff();
    if (!std::isfinite(static_cast<double>(top)) || !std::isfinite(static_cast<double>(pct.slope)))
      throw NumericalError("margin_loss_forward: non-finite logit at sample " + std::to_string(b),
                           b);
    auto p = out.probabilities.row(b);
    p = (logits.array() - top).exp().transpose();
    const Scalar z = p.sum();
    p /= z;
    const Scalar loss_b = top + std::log(z) - logits(y);
    if (!std::isfinite(static_cast<double>(loss_b)))
      throw NumericalError("margin_loss_forward: non-finite loss at sample " + std::to_string(b),
                           b);
    out.per_sample_loss(b) = loss_b;
    total += loss_b;
  }
  out.loss = total / Scalar(batch);
  out.diagnostics = std::move(adaptation);
  return out;
}

/// Convenience: cosines + adaptation + forward in one call.
template <typename Scalar>
LossOutput<Scalar> margin_loss_forward(const EmbeddingBatch<Scalar>& batch,
                                       const ClassPrototypes<Scalar>& protos,
                                       const MarginConfig& config, const NormalizerState& stats) {
  const auto cl = cosine_logits(batch, protos);
  return margin_loss_forward(cl, batch.labels, config,
                             compute_adaptation(cl, batch.labels, config, stats));
}

/// Analytic gradients of the batch-mean loss with respect to the raw
/// embeddings and the prototype rows. Adaptation terms are held constant.
template <typename Scalar>
void margin_loss_backward(const CosineLogits<Scalar>& cl, const ClassPrototypes<Scalar>& protos,
                          const std::vector<int>& labels, const MarginConfig& config,
                          LossOutput<Scalar>& out) {
  const Eigen::Index batch = cl.cosines.rows();
  const Scalar scale = Scalar(config.s) / Scalar(batch);

  // dL/dcos(theta_bj)
  Matrix<Scalar> grad_cos = scale * out.probabilities;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    // p_y - 1 without cancellation
    Scalar rest = 0;
    for (Eigen::Index j = 0; j < out.probabilities.cols(); ++j)
      if (j != y) rest += out.probabilities(b, j);
    grad_cos(b, y) = -scale * rest * out.pct_slope(b);
  }

  const Matrix<Scalar> grad_unit = grad_cos * protos.centers;
  out.grad_features.resize(cl.unit_features.rows(), cl.unit_features.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto u = cl.unit_features.row(b);
    const auto g = grad_unit.row(b);
    out.grad_features.row(b) = (g - g.dot(u) * u) / cl.norms(b);
  }
  out.grad_centers.noalias() = grad_cos.transpose() * cl.unit_features;

  if (!out.grad_features.allFinite() || !out.grad_centers.allFinite())
    throw NumericalError("margin_loss_backward: non-finite gradient");
}

/// Forward and backward with adaptation computed from `stats`.
template <typename Scalar>
LossOutput<Scalar> margin_loss(const EmbeddingBatch<Scalar>& batch,
                               const ClassPrototypes<Scalar>& protos, const MarginConfig& config,
                               const NormalizerState& stats) {
  const auto cl = cosine_logits(batch, protos);
  auto out = margin_loss_forward(cl, batch.labels, config,
                                 compute_adaptation(cl, batch.labels, config, stats));
  margin_loss_backward(cl, protos, batch.labels, config, out);
  return out;
}

template <typename Scalar>
ClassPrototypes<Scalar> renormalize_prototypes(ClassPrototypes<Scalar> protos) {
  for (Eigen::Index c = 0; c < protos.num_classes(); ++c) {
    const Scalar n = protos.centers.row(c).norm();
    if (!(n > Scalar(0)) || !std::isfinite(static_cast<double>(n)))
      throw NumericalError("renormalize_prototypes: row " + std::to_string(c) +
                           " has zero or non-finite norm");
    protos.centers.row(c) /= n;
  }
  return protos;
}

}  // namespace funface
