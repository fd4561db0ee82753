#include "doctest.h"

#include <random>
#include <vector>

#include "funface/adaptive_stats.hpp"

using namespace funface;
using doctest::Approx;

namespace {

NormalizerState update(NormalizerState s, std::vector<double> norms, std::vector<double> crs) {
  return ema_update<double>(s, std::span<const double>(norms), std::span<const double>(crs));
}

}  // namespace

TEST_CASE("first update copies the batch statistics") {
  const auto s = update({}, {2, 2, 2}, {1, 3});
  CHECK(s.initialized);
  CHECK(s.mu_z == 2.0);
  CHECK(s.sigma_z == 0.0);
  CHECK(s.mu_cr == 2.0);
  CHECK(s.sigma_cr == 1.0);  // population std of {1, 3}
}

TEST_CASE("EMA arithmetic") {
  NormalizerState s;
  s.initialized = true;
  s.ema_momentum = 0.9;
  s.mu_z = 10.0;
  s = update(s, {20, 20}, {1});
  CHECK(s.mu_z == Approx(11.0).epsilon(1e-15));
  CHECK(s.mu_cr == Approx(0.1).epsilon(1e-15));
}

TEST_CASE("repeated identical batches approach the batch statistics monotonically") {
  NormalizerState s = update({}, {1, 3}, {0.5, 0.7});
  double prev_gap = 1e9;
  for (int i = 0; i < 200; ++i) {
    s = update(s, {10, 14}, {4, 6});
    const double gap = std::abs(s.mu_z - 12.0) + std::abs(s.sigma_z - 2.0) + std::abs(s.mu_cr - 5.0) +
                       std::abs(s.sigma_cr - 1.0);
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
}

TEST_CASE("ema_update is deterministic") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(10, 3);
  std::vector<std::vector<double>> batches(50, std::vector<double>(17));
  for (auto& b : batches)
    for (auto& v : b) v = n(rng);
  NormalizerState a, b;
  for (const auto& x : batches) a = update(a, x, x);
  for (const auto& x : batches) b = update(b, x, x);
  CHECK(a == b);
}

TEST_CASE("ema_update preconditions") {
  CHECK_THROWS_AS(update({}, {}, {1}), InvalidInput);
  CHECK_THROWS_AS(update({}, {1, std::nan("")}, {1}), InvalidInput);
  CHECK_THROWS_AS(update({}, {1}, {std::numeric_limits<double>::infinity()}), InvalidInput);
}

TEST_CASE("empty CR batch leaves CR statistics alone") {
  NormalizerState s = update({}, {1, 2}, {3, 5});
  const auto t = update(s, {4, 4}, {});
  CHECK(t.mu_cr == s.mu_cr);
  CHECK(t.sigma_cr == s.sigma_cr);
  CHECK(t.mu_z != s.mu_z);
}

TEST_CASE("normalize_clip") {
  CHECK(normalize_clip(5.0, 5.0, 2.0, 0.333) == 0.0);
  CHECK(normalize_clip(7.0, 5.0, 2.0, 0.333) == Approx(0.333).epsilon(1e-12));
  CHECK(normalize_clip(5.0 + 200.0, 5.0, 2.0, 0.333) == 1.0);
  CHECK(normalize_clip(5.0 - 200.0, 5.0, 2.0, 0.333) == -1.0);
  CHECK(normalize_clip(9.0, 5.0, 1e-7, 0.333) == 0.0);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 1000; ++i) {
    const double mu = u(rng), sigma = std::abs(u(rng)) + 0.1, d = u(rng), h = 0.333;
    const double up = normalize_clip(mu + d, mu, sigma, h), down = normalize_clip(mu - d, mu, sigma, h);
    CHECK(std::abs(up) <= 1.0);
    if (std::abs(up) < 1.0 && std::abs(down) < 1.0) CHECK(up == Approx(-down).epsilon(1e-12));
  }
}

TEST_CASE("normalization is neutral before the first update") {
  NormalizerState s;
  CHECK(normalized_norm(s, 123.0, 0.333) == 0.0);
  CHECK(normalized_cr(s, 4.0, 0.333) == 0.0);
}

TEST_CASE("certainty_ratio") {
  CHECK(certainty_ratio(0.9, 0.5, 1e-4) == Approx(1.799640071985603).epsilon(1e-12));
  CHECK(certainty_ratio(-0.2, 0.5, 1e-4) == 0.0);
  CHECK(certainty_ratio(-0.2, -0.9, 1e-4) == 0.0);
  CHECK(certainty_ratio(0.5, -0.3, 0.01) == Approx(50.0).epsilon(1e-12));
  CHECK(certainty_ratio_clamps(0.5, -0.3));
  CHECK_FALSE(certainty_ratio_clamps(0.5, 0.3));
}

TEST_CASE("certainty_ratio_legacy") {
  CHECK(certainty_ratio_legacy(0.0, 0.3, 1e-4) == 0.0);
  CHECK(certainty_ratio_legacy(1.0, 1.0, 0.0) == 0.5);
  CHECK(certainty_ratio_legacy(0.7, -1.0, 0.01) == Approx(70.0).epsilon(1e-12));
}

TEST_CASE("certainty_ratio monotonicity and range") {
  const double eps = 1e-4;
  for (double p = -1.0; p <= 1.0; p += 0.05) {
    for (double n = -1.0; n <= 1.0; n += 0.05) {
      const double cr = certainty_ratio(p, n, eps);
      CHECK(cr >= 0.0);
      CHECK(cr <= 1.0 / eps + 1e-9);
      CHECK(certainty_ratio(p + 0.05, n, eps) >= cr);
      CHECK(certainty_ratio(p, n + 0.05, eps) <= cr);
      const double legacy = certainty_ratio_legacy(p, n, eps);
      CHECK(std::abs(legacy) <= 1.0 / eps + 1e-9);
    }
  }
}

TEST_CASE("mix_kappa") {
  CHECK(mix_kappa(0.3, -0.7, 1.0) == 0.3);
  CHECK(mix_kappa(0.3, -0.7, 0.0) == -0.7);
  CHECK(mix_kappa(0.5, -0.5, 0.1) == Approx(-0.4).epsilon(1e-12));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1), l(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), b = u(rng), lambda = l(rng);
    const double k = mix_kappa(a, b, lambda);
    CHECK(k >= std::min(a, b) - 1e-15);
    CHECK(k <= std::max(a, b) + 1e-15);
  }
}
