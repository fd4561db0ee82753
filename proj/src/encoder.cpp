#include "funface/encoder.hpp"

#include <cmath>
#include <random>
#include <string>

#include "funface/rng.hpp"

namespace funface {

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z;
  z.w1 = MatrixD::Zero(w1.rows(), w1.cols());
  z.b1 = VectorD::Zero(b1.size());
  z.w2 = MatrixD::Zero(w2.rows(), w2.cols());
  z.b2 = VectorD::Zero(b2.size());
  return z;
}

EncoderParams EncoderParams::random(Eigen::Index input_dim, Eigen::Index hidden_dim,
                                    Eigen::Index output_dim, std::uint64_t seed, double input_gain) {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1)
    throw InvalidInput("encoder: dimensions must be positive");
  Engine rng = keyed_engine(seed, streams::kEncoderInit);
  std::normal_distribution<double> normal;
  EncoderParams p;
  const double s1 = input_gain / std::sqrt(double(input_dim));
  const double s2 = 1.0 / std::sqrt(double(hidden_dim));
  p.w1.resize(hidden_dim, input_dim);
  for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = s1 * normal(rng);
  p.b1 = VectorD::Zero(hidden_dim);
  p.w2.resize(output_dim, hidden_dim);
  for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = s2 * normal(rng);
  p.b2 = VectorD::Zero(output_dim);
  return p;
}

EncoderParams EncoderParams::identity_like(Eigen::Index dim, Eigen::Index hidden_dim) {
  if (hidden_dim < dim) throw InvalidInput("encoder: identity_like needs hidden_dim >= dim");
  EncoderParams p;
  p.w1 = MatrixD::Zero(hidden_dim, dim);
  p.w1.topRows(dim).setIdentity();
  p.b1 = VectorD::Zero(hidden_dim);
  p.w2 = MatrixD::Zero(dim, hidden_dim);
  p.w2.leftCols(dim).setIdentity();
  p.b2 = VectorD::Zero(dim);
  return p;
}

MatrixD encoder_forward(const EncoderParams& params, const MatrixD& inputs, EncoderCache* cache) {
  if (inputs.cols() != params.input_dim())
    throw InvalidInput("encoder_forward: input dimension " + std::to_string(inputs.cols()) +
                       " != " + std::to_string(params.input_dim()));
  MatrixD hidden = inputs * params.w1.transpose();
  hidden.rowwise() += params.b1.transpose();
  hidden = hidden.array().tanh().matrix();
  MatrixD out = hidden * params.w2.transpose();
  out.rowwise() += params.b2.transpose();
  if (cache) {
    cache->inputs = inputs;
    cache->hidden = std::move(hidden);
  }
  return out;
}

EncoderParams encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                               const MatrixD& grad_output) {
  if (grad_output.rows() != cache.hidden.rows() || grad_output.cols() != params.output_dim())
    throw InvalidInput("encoder_backward: gradient shape does not match the cached forward pass");
  EncoderParams g;
  g.w2.noalias() = grad_output.transpose() * cache.hidden;
  g.b2 = grad_output.colwise().sum().transpose();
  // d tanh(a) = 1 - tanh(a)^2
  const MatrixD grad_pre =
      ((grad_output * params.w2).array() * (1.0 - cache.hidden.array().square())).matrix();
  g.w1.noalias() = grad_pre.transpose() * cache.inputs;
  g.b1 = grad_pre.colwise().sum().transpose();
  return g;
}

}  // namespace funface
