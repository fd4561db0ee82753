#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace funface {

// Row-major so that one sample (or one class center) is one contiguous row.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixD = Matrix<double>;
using VectorD = Vector<double>;

/// Raised for inputs that violate a documented precondition (shape mismatch,
/// zero-norm rows, out-of-range labels, malformed files or configs).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::int64_t sample_index = -1)
      : std::runtime_error(what), sample_index_(sample_index) {}
  std::int64_t sample_index() const noexcept { return sample_index_; }

 private:
  std::int64_t sample_index_;
};

enum class Variant { kCE, kSphere, kArc, kCos, kGeneralized, kAdaFace, kFunFace };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

inline bool is_adaptive(Variant v) { return v == Variant::kAdaFace || v == Variant::kFunFace; }

struct MarginConfig {
  Variant variant = Variant::kFunFace;
  double m = 0.4;       // adaptive margin magnitude
  double m_sph = 1.0;   // multiplicative angular margin
  double m_arc = 0.5;   // additive angular margin
  double m_cos = 0.35;  // additive cosine margin
  double s = 64.0;
  double h = 0.333;
  double lambda = 0.1;
  double epsilon = 1e-4;

  /// Throws InvalidInput naming the first offending field.
  void validate() const;
};

/// Raw (unnormalized) embeddings, one per row, with class labels.
template <typename Scalar>
struct EmbeddingBatch {
  Matrix<Scalar> features;
  std::vector<int> labels;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
};

/// Unit-norm class centers, one per row.
template <typename Scalar>
struct ClassPrototypes {
  Matrix<Scalar> centers;

  Eigen::Index num_classes() const { return centers.rows(); }
  Eigen::Index dim() const { return centers.cols(); }
};

}  // namespace funface
