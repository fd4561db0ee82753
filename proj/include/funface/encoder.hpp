#pragma once

#include <cstdint>

#include "funface/types.hpp"

namespace funface {

/// Two affine layers with tanh between them: z = W2 tanh(W1 x + b1) + b2.
/// The output is the raw embedding; it is never normalized here.
struct EncoderParams {
  MatrixD w1;  // hidden x input
  VectorD b1;
  MatrixD w2;  // output x hidden
  VectorD b2;

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }
  Eigen::Index output_dim() const { return w2.rows(); }

  /// Same shapes, all zeros.
  EncoderParams zeros_like() const;

  static EncoderParams random(Eigen::Index input_dim, Eigen::Index hidden_dim,
                              Eigen::Index output_dim, std::uint64_t seed, double input_gain = 1.0);
  /// W1 = [I; 0], W2 = [I 0], zero biases, so z = tanh(x). Requires hidden >= dim.
  static EncoderParams identity_like(Eigen::Index dim, Eigen::Index hidden_dim);
};

struct EncoderCache {
  MatrixD inputs;  // B x input
  MatrixD hidden;  // B x hidden, post-activation
};

MatrixD encoder_forward(const EncoderParams& params, const MatrixD& inputs,
                        EncoderCache* cache = nullptr);

/// Gradients of a loss with respect to every parameter, given dL/dz.
EncoderParams encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                               const MatrixD& grad_output);

}  // namespace funface
