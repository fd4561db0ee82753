#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "funface/types.hpp"

namespace funface {

/// Running statistics of feature norms and certainty ratios.
///
/// The state starts uninitialized; the first ema_update() copies the batch
/// statistics in directly, later updates blend with `ema_momentum`.
struct NormalizerState {
  double mu_z = 0.0;
  double sigma_z = 0.0;
  double mu_cr = 0.0;
  double sigma_cr = 0.0;
  double ema_momentum = 0.99;
  bool initialized = false;

  bool operator==(const NormalizerState&) const = default;
};

/// Standard deviations below this are treated as degenerate.
inline constexpr double kMinSigma = 1e-6;

namespace detail {

template <typename Scalar>
void mean_and_population_std(std::span<const Scalar> values, double& mean, double& stddev) {
  double sum = 0.0;
  for (Scalar v : values) sum += static_cast<double>(v);
  mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (Scalar v : values) {
    const double d = static_cast<double>(v) - mean;
    sq += d * d;
  }
  stddev = std::sqrt(sq / static_cast<double>(values.size()));
}

}  // namespace detail

/// Folds one batch of feature norms and certainty ratios into the running
/// statistics. An empty `batch_crs` leaves the CR statistics untouched.
template <typename Scalar>
NormalizerState ema_update(NormalizerState state, std::span<const Scalar> batch_norms,
                           std::span<const Scalar> batch_crs) {
  if (batch_norms.empty()) throw InvalidInput("ema_update: batch_norms is empty");
  auto check_finite = [](std::span<const Scalar> xs, const char* what) {
    for (Scalar x : xs)
      if (!std::isfinite(static_cast<double>(x)))
        throw InvalidInput(std::string("ema_update: non-finite value in ") + what);
  };
  check_finite(batch_norms, "batch_norms");
  check_finite(batch_crs, "batch_crs");

  double mu_z, sigma_z;
  detail::mean_and_population_std(batch_norms, mu_z, sigma_z);
  double mu_cr = state.mu_cr, sigma_cr = state.sigma_cr;
  const bool have_cr = !batch_crs.empty();
  if (have_cr) detail::mean_and_population_std(batch_crs, mu_cr, sigma_cr);

  if (!state.initialized) {
    state.mu_z = mu_z;
    state.sigma_z = sigma_z;
    if (have_cr) {
      state.mu_cr = mu_cr;
      state.sigma_cr = sigma_cr;
    }
    state.initialized = true;
    return state;
  }
  const double a = state.ema_momentum;
  const double b = 1.0 - a;
  state.mu_z = a * state.mu_z + b * mu_z;
  state.sigma_z = a * state.sigma_z + b * sigma_z;
  if (have_cr) {
    state.mu_cr = a * state.mu_cr + b * mu_cr;
    state.sigma_cr = a * state.sigma_cr + b * sigma_cr;
  }
  return state;
}

/// clamp((value - mu) / (sigma / h), -1, 1); zero when sigma is degenerate.
template <typename Scalar>
Scalar normalize_clip(Scalar value, Scalar mu, Scalar sigma, Scalar h) {
  if (sigma < Scalar(kMinSigma)) return Scalar(0);
  const Scalar t = (value - mu) / (sigma / h);
  return std::clamp(t, Scalar(-1), Scalar(1));
}

/// Certainty ratio with both cosines limited to [0, 1].
template <typename Scalar>
Scalar certainty_ratio(Scalar cos_pos, Scalar cos_neg_max, Scalar epsilon) {
  return std::clamp(cos_pos, Scalar(0), Scalar(1)) /
         (std::clamp(cos_neg_max, Scalar(0), Scalar(1)) + epsilon);
}

/// The original CR-FIQA ratio, CCS / (NNCCS + 1 + eps). Analysis only.
template <typename Scalar>
Scalar certainty_ratio_legacy(Scalar cos_pos, Scalar cos_neg_max, Scalar epsilon) {
  return cos_pos / (cos_neg_max + Scalar(1) + epsilon);
}

/// True when certainty_ratio() changed at least one of its inputs by clamping.
template <typename Scalar>
bool certainty_ratio_clamps(Scalar cos_pos, Scalar cos_neg_max) {
  return cos_pos < Scalar(0) || cos_pos > Scalar(1) || cos_neg_max < Scalar(0) ||
         cos_neg_max > Scalar(1);
}

template <typename Scalar>
Scalar mix_kappa(Scalar norm_hat, Scalar cr_hat, Scalar lambda) {
  return lambda * norm_hat + (Scalar(1) - lambda) * cr_hat;
}

inline double normalized_norm(const NormalizerState& s, double norm, double h) {
  return s.initialized ? normalize_clip(norm, s.mu_z, s.sigma_z, h) : 0.0;
}

inline double normalized_cr(const NormalizerState& s, double cr, double h) {
  return s.initialized ? normalize_clip(cr, s.mu_cr, s.sigma_cr, h) : 0.0;
}

}  // namespace funface
