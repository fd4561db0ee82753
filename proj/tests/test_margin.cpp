#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "checks.hpp"
#include "funface/margin.hpp"
#include "oracles.hpp"

using namespace funface;
using doctest::Approx;

namespace {

EmbeddingBatch<double> single(double x, double y, int label = 0) {
  EmbeddingBatch<double> b;
  b.features.resize(1, 2);
  b.features << x, y;
  b.labels = {label};
  return b;
}

ClassPrototypes<double> centers(std::initializer_list<std::pair<double, double>> rows) {
  ClassPrototypes<double> p;
  p.centers.resize(static_cast<Eigen::Index>(rows.size()), 2);
  Eigen::Index r = 0;
  for (auto [x, y] : rows) p.centers.row(r++) << x, y;
  return p;
}

}  // namespace

TEST_CASE("cosine_logits hand examples") {
  const auto protos = centers({{0, 1}, {1, 0}});
  auto cl = cosine_logits(single(0, 2), protos);
  CHECK(cl.cosines(0, 0) == Approx(1.0));
  CHECK(cl.norms(0) == Approx(2.0));

  cl = cosine_logits(single(1, 0), protos);
  CHECK(cl.cosines(0, 0) == Approx(0.0));

  cl = cosine_logits(single(3, 4), protos);
  CHECK(cl.cosines(0, 1) == Approx(0.6).epsilon(1e-12));
  CHECK(cl.norms(0) == Approx(5.0));
}

TEST_CASE("cosine_logits rejects bad input") {
  const auto protos = centers({{0, 1}, {1, 0}});
  CHECK_THROWS_AS(cosine_logits(single(0, 0), protos), InvalidInput);

  EmbeddingBatch<double> wide;
  wide.features = MatrixD::Ones(1, 3);
  wide.labels = {0};
  CHECK_THROWS_AS(cosine_logits(wide, protos), InvalidInput);

  CHECK_THROWS_AS(cosine_logits(single(1, 1, 2), protos), InvalidInput);
  CHECK_THROWS_AS(cosine_logits(single(1, 1, -1), protos), InvalidInput);

  EmbeddingBatch<double> bad = single(1, 0);
  bad.features(0, 1) = std::nan("");
  CHECK_THROWS_AS(cosine_logits(bad, protos), InvalidInput);
}

TEST_CASE("cosines stay within [-1, 1]") {
  std::mt19937_64 rng(11);
  for (int it = 0; it < 200; ++it) {
    const auto in = checks::random_instance(rng, 6, 8, 16);
    // near-parallel rows probe the clamp
    MatrixD z = in.z;
    z.row(0) = 1e3 * in.w.row(in.labels[0]);
    const auto cl = cosine_logits(EmbeddingBatch<double>{z, in.labels}, ClassPrototypes<double>{in.w});
    CHECK(cl.cosines.maxCoeff() <= 1.0);
    CHECK(cl.cosines.minCoeff() >= -1.0);
  }
}

TEST_CASE("generalized_pct hand examples") {
  MarginConfig c;
  c.variant = Variant::kGeneralized;
  c.m_sph = 1, c.m_arc = 0, c.m_cos = 0;
  CHECK(generalized_pct(0.5, c) == Approx(0.5).epsilon(1e-12));

  c.m_arc = 0.5;
  CHECK(generalized_pct(1.0, c) == Approx(0.877582561890373).epsilon(1e-12));

  c.m_arc = 0.0, c.m_cos = 0.35;
  CHECK(generalized_pct(0.3, c) == Approx(-0.05).epsilon(1e-12));
}

TEST_CASE("angle argument is clamped to [0, pi]") {
  MarginConfig c;
  c.variant = Variant::kArc;
  c.m_arc = 0.5;
  // theta = pi already; cos(pi + 0.5) would wrap back up
  CHECK(generalized_pct(-1.0, c) == Approx(-1.0));
  c.variant = Variant::kAdaFace;
  // g_angle pushes theta = 0 below zero
  CHECK(generalized_pct(1.0, c, -0.4, 0.0) == Approx(1.0));
  // monotone: larger additive angle never raises the term
  double prev = 2.0;
  for (double g = 0.0; g <= 4.0; g += 0.05) {
    const double v = generalized_pct(0.2, c, g, 0.0);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}

TEST_CASE("symmetric two-class CE loss is ln 2") {
  MarginConfig c;
  c.variant = Variant::kCE;
  c.s = 1.0;
  const auto protos = centers({{1, 0}, {0, 1}});
  const auto out = margin_loss(single(1, 1), protos, c, NormalizerState{});
  CHECK(out.loss == Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("AdaFace degenerates to CosFace and ArcFace") {
  std::mt19937_64 rng(3);
  const auto in = checks::random_instance(rng);
  MarginConfig ada;
  ada.variant = Variant::kAdaFace;
  const auto cl = cosine_logits(EmbeddingBatch<double>{in.z, in.labels}, ClassPrototypes<double>{in.w});
  auto pinned = compute_adaptation(cl, in.labels, ada, in.stats);

  MarginConfig cos = ada, arc = ada;
  cos.variant = Variant::kCos;
  cos.m_cos = ada.m;
  arc.variant = Variant::kArc;
  arc.m_arc = ada.m;

  for (auto& d : pinned) d.kappa = 0.0;
  CHECK(margin_loss_forward(cl, in.labels, ada, pinned).loss ==
        Approx(margin_loss_forward(cl, in.labels, cos, pinned).loss).epsilon(1e-12));
  for (auto& d : pinned) d.kappa = -1.0;
  CHECK(margin_loss_forward(cl, in.labels, ada, pinned).loss ==
        Approx(margin_loss_forward(cl, in.labels, arc, pinned).loss).epsilon(1e-12));
}

TEST_CASE("reduction lattice holds to 1e-9") {
  std::mt19937_64 rng(5);
  for (const auto& r : checks::reduction_lattice(rng, 50)) {
    INFO(r.identity);
    CHECK(r.max_deviation < 1e-9);
  }
}

TEST_CASE("FunFace with lambda = 1 equals AdaFace bit for bit") {
  std::mt19937_64 rng(6);
  for (int it = 0; it < 20; ++it) {
    const auto in = checks::random_instance(rng);
    MarginConfig fun = checks::random_config(Variant::kFunFace, rng);
    fun.lambda = 1.0;
    MarginConfig ada = fun;
    ada.variant = Variant::kAdaFace;
    const auto a = checks::run_loss(in, fun), b = checks::run_loss(in, ada);
    CHECK(a.loss == b.loss);
    CHECK(a.grad_features == b.grad_features);
    CHECK(a.grad_centers == b.grad_centers);
  }
}

TEST_CASE("analytic gradients match finite differences") {
  std::mt19937_64 rng(7);
  for (Variant v : checks::all_variants()) {
    double worst = 0.0;
    for (int it = 0; it < 20; ++it) worst = std::max(worst, checks::gradient_error(rng, v));
    INFO(to_string(v));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("CE gradients are the softmax cross-entropy gradients") {
  std::mt19937_64 rng(8);
  const auto in = checks::random_instance(rng);
  MarginConfig c;
  c.variant = Variant::kGeneralized;
  c.m_sph = 1, c.m_arc = 0, c.m_cos = 0, c.s = 1;
  const auto out = checks::run_loss(in, c);

  const Eigen::Index b = in.z.rows(), k = in.w.rows();
  MatrixD u = in.z;
  for (Eigen::Index r = 0; r < b; ++r) u.row(r) /= in.z.row(r).norm();
  MatrixD logits = u * in.w.transpose();
  MatrixD delta(b, k);  // (softmax - onehot) / B
  for (Eigen::Index r = 0; r < b; ++r) {
    const double z = logits.row(r).array().exp().sum();
    for (Eigen::Index j = 0; j < k; ++j)
      delta(r, j) = (std::exp(logits(r, j)) / z - (j == in.labels[static_cast<std::size_t>(r)])) / double(b);
  }
  const MatrixD expected_centers = delta.transpose() * u;
  CHECK(oracle::relative_error(out.grad_centers, expected_centers) < 1e-12);
}

TEST_CASE("saturated softmax gives vanishing gradients") {
  MarginConfig c;
  c.variant = Variant::kArc;
  c.s = 1e4;
  const auto protos = centers({{1, 0}, {0, 1}});
  auto out = margin_loss(single(5, 0.2), protos, c, NormalizerState{});
  CHECK(out.grad_features.norm() < 1e-12);
  CHECK(out.grad_centers.norm() < 1e-12);

  // and the finite-difference estimate agrees
  checks::Instance in{single(5, 0.2).features, {0}, protos.centers, NormalizerState{}};
  auto f = [&] { return oracle::loss(in.z, in.labels, in.w, c, {0.0}); };
  const MatrixD fd = oracle::finite_difference(in.z, f);
  CHECK(fd.norm() < 1e-8);
}

TEST_CASE("permuting the batch permutes per-sample outputs") {
  std::mt19937_64 rng(9);
  for (Variant v : checks::all_variants()) {
    auto in = checks::random_instance(rng, 6);
    in.z.conservativeResize(6, Eigen::NoChange);
    while (in.labels.size() < 6) in.labels.push_back(0);
    for (Eigen::Index r = 0; r < 6; ++r) in.z.row(r) = oracle::gaussian(1, in.z.cols(), rng) * 5.0;
    const MarginConfig c = checks::random_config(v, rng);
    const auto a = checks::run_loss(in, c);

    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    checks::Instance p = in;
    for (int r = 0; r < 6; ++r) {
      p.z.row(r) = in.z.row(perm[static_cast<std::size_t>(r)]);
      p.labels[static_cast<std::size_t>(r)] = in.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])];
    }
    const auto b = checks::run_loss(p, c);
    CHECK(b.loss == Approx(a.loss).epsilon(1e-12));
    CHECK(oracle::relative_error(b.grad_centers, a.grad_centers) < 1e-12);
    for (int r = 0; r < 6; ++r) {
      const auto src = static_cast<std::size_t>(perm[static_cast<std::size_t>(r)]);
      CHECK((b.grad_features.row(r) - a.grad_features.row(static_cast<Eigen::Index>(src))).norm() < 1e-12);
      CHECK(b.diagnostics[static_cast<std::size_t>(r)].kappa == a.diagnostics[src].kappa);
      CHECK(b.diagnostics[static_cast<std::size_t>(r)].pct == a.diagnostics[src].pct);
    }
  }
}

TEST_CASE("per-sample loss is non-decreasing in the additive cosine margin") {
  std::mt19937_64 rng(10);
  for (int it = 0; it < 30; ++it) {
    const auto in = checks::random_instance(rng);
    MarginConfig c = checks::random_config(Variant::kCos, rng);
    Vector<double> prev = Vector<double>::Constant(in.z.rows(), -1.0);
    for (double m = 0.0; m <= 1.0; m += 0.05) {
      c.m_cos = m;
      const auto out = checks::run_loss(in, c);
      CHECK((out.per_sample_loss.array() >= prev.array() - 1e-12).all());
      prev = out.per_sample_loss;
    }
  }
}

TEST_CASE("diagnostics are consistent") {
  std::mt19937_64 rng(12);
  for (int it = 0; it < 50; ++it) {
    const auto in = checks::random_instance(rng);
    const MarginConfig c = checks::random_config(Variant::kFunFace, rng);
    const auto out = checks::run_loss(in, c);
    for (const auto& d : out.diagnostics) {
      CHECK(std::abs(std::cos(d.theta_pos) - d.cos_pos) < 1e-9);
      CHECK(std::abs(d.norm_hat) <= 1.0);
      CHECK(std::abs(d.cr_hat) <= 1.0);
      CHECK(std::abs(d.kappa) <= 1.0);
      CHECK(d.g_angle == Approx(-c.m * d.kappa));
      CHECK(d.g_add == Approx(c.m + c.m * d.kappa));
    }
    CHECK(out.loss >= 0.0);
  }
}

TEST_CASE("nearest negative ties resolve to the lowest class index") {
  MarginConfig c;
  const auto protos = centers({{1, 0}, {0, 1}, {0, 1}});
  const auto cl = cosine_logits(single(1, 1), protos);
  const auto d = compute_adaptation(cl, {0}, c, NormalizerState{});
  CHECK(d[0].nn_index == 1);
}

TEST_CASE("non-finite intermediates report the sample") {
  MarginConfig c;
  c.variant = Variant::kCE;
  c.s = std::numeric_limits<double>::infinity();
  EmbeddingBatch<double> b;
  b.features.resize(2, 2);
  b.features << 1, 0, 0, 1;
  b.labels = {0, 1};
  try {
    margin_loss(b, centers({{1, 0}, {0, 1}}), c, NormalizerState{});
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.sample_index() == 0);
  }
}

TEST_CASE("renormalize_prototypes") {
  auto p = renormalize_prototypes(centers({{3, 4}, {0, 1}}));
  CHECK(p.centers(0, 0) == Approx(0.6).epsilon(1e-15));
  CHECK(p.centers(0, 1) == Approx(0.8).epsilon(1e-15));
  CHECK(p.centers(1, 1) == 1.0);

  std::mt19937_64 rng(13);
  ClassPrototypes<double> r{oracle::gaussian(5, 7, rng)};
  const auto once = renormalize_prototypes(r);
  const auto twice = renormalize_prototypes(once);
  CHECK((once.centers - twice.centers).cwiseAbs().maxCoeff() < 1e-12);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(std::abs(once.centers.row(i).norm() - 1.0) < 1e-9);

  CHECK_THROWS_AS(renormalize_prototypes(centers({{0, 0}, {0, 1}})), NumericalError);
}

TEST_CASE("margin config validation names the field") {
  MarginConfig c;
  c.lambda = 1.5;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("margin.lambda"), InvalidInput);
  c = MarginConfig{};
  c.s = 0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("margin.s"), InvalidInput);
  c = MarginConfig{};
  c.variant = Variant::kSphere;
  c.m_sph = 0.5;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("margin.m_sph"), InvalidInput);
  CHECK_THROWS_AS(parse_variant("magface"), InvalidInput);
  for (Variant v : checks::all_variants()) CHECK(parse_variant(to_string(v)) == v);
}

TEST_CASE("float instantiation runs") {
  EmbeddingBatch<float> b;
  b.features.resize(2, 3);
  b.features << 1, 2, 3, -1, 0.5f, 2;
  b.labels = {0, 1};
  ClassPrototypes<float> p;
  p.centers.resize(2, 3);
  p.centers << 1, 0, 0, 0, 1, 0;
  NormalizerState st;
  const auto out = margin_loss(b, p, MarginConfig{}, st);
  CHECK(std::isfinite(out.loss));
  CHECK(out.grad_features.allFinite());
}
