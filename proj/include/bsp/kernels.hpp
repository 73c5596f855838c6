#ifndef BSP_KERNELS_HPP
#define BSP_KERNELS_HPP

/**
 * @file
 * @brief Kernel families, Gram matrices and cross-kernel vectors.
 *
 * Supported covariances K(x, a):
 *  - first-order spline   min(x, a)                (scalar, x, a >= 0)
 *  - Gaussian             exp(-|x - a|^2 / eta)
 *  - ARD Gaussian         exp(-(x - a)^T D (x - a)), D diagonal
 *  - polynomial           (x^T a + 1)^r
 *  - linear               x^T M a, M symmetric PSD (optionally TC-structured)
 */

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "bsp/error.hpp"
#include "bsp/types.hpp"

namespace bsp {

enum class KernelFamily { SplineFirstOrder, Gaussian, GaussianArd, Polynomial, Linear };

inline std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::SplineFirstOrder: return "spline";
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::GaussianArd: return "gaussian_ard";
    case KernelFamily::Polynomial: return "polynomial";
    case KernelFamily::Linear: return "linear";
  }
  return "unknown";
}

/// Decay rates of the two TC blocks of a linear kernel's structure matrix.
template <typename Scalar>
struct TcDecay {
  Scalar alpha_y;
  Scalar alpha_u;
};

/**
 * @brief Immutable kernel description.
 *
 * Built only through the named constructors, each of which validates its
 * hyperparameters, so a KernelSpec in hand is always well formed.
 */
template <typename Scalar>
class KernelSpec {
 public:
  static KernelSpec spline() { return KernelSpec(KernelFamily::SplineFirstOrder); }

  static KernelSpec gaussian(Scalar eta) {
    detail::require(std::isfinite(static_cast<double>(eta)) && eta > Scalar(0), ErrorCode::InvalidArgument,
                    "gaussian kernel: eta must be positive");
    KernelSpec k(KernelFamily::Gaussian);
    k.eta_ = eta;
    return k;
  }

  static KernelSpec gaussian_ard(const Vector<Scalar>& weights) {
    detail::require(weights.size() > 0, ErrorCode::InvalidArgument, "gaussian_ard kernel: empty weight vector");
    detail::require(weights.allFinite() && (weights.array() >= Scalar(0)).all(), ErrorCode::InvalidArgument,
                    "gaussian_ard kernel: weights must be finite and nonnegative");
    KernelSpec k(KernelFamily::GaussianArd);
    k.ard_weights_ = weights;
    return k;
  }

  static KernelSpec polynomial(int degree) {
    detail::require(degree >= 1, ErrorCode::InvalidArgument, "polynomial kernel: degree must be >= 1");
    KernelSpec k(KernelFamily::Polynomial);
    k.degree_ = degree;
    return k;
  }

  static KernelSpec linear(const Matrix<Scalar>& structure) {
    detail::require(structure.rows() > 0 && structure.rows() == structure.cols(), ErrorCode::InvalidArgument,
                    "linear kernel: structure matrix must be square and nonempty");
    detail::require(structure.allFinite(), ErrorCode::NonFinite, "linear kernel: non-finite structure matrix");
    const Scalar scale = std::max(Scalar(1), structure.cwiseAbs().maxCoeff());
    detail::require((structure - structure.transpose()).cwiseAbs().maxCoeff() <= Scalar(1e-12) * scale,
                    ErrorCode::InvalidArgument, "linear kernel: structure matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(structure, Eigen::EigenvaluesOnly);
    detail::require(es.eigenvalues().minCoeff() >= Scalar(-1e-10), ErrorCode::NotPositiveSemidefinite,
                    "linear kernel: structure matrix is not positive semidefinite");
    KernelSpec k(KernelFamily::Linear);
    k.structure_ = structure;
    return k;
  }

  /// Linear kernel with M = blkdiag(TC(alpha_y, n_y), TC(alpha_u, n_u)).
  static KernelSpec linear_tc(Scalar alpha_y, Eigen::Index n_y, Scalar alpha_u, Eigen::Index n_u);

  KernelFamily family() const noexcept { return family_; }
  Scalar eta() const noexcept { return eta_; }
  int degree() const noexcept { return degree_; }
  const Vector<Scalar>& ard_weights() const noexcept { return ard_weights_; }
  const Matrix<Scalar>& structure_matrix() const noexcept { return structure_; }
  const std::optional<TcDecay<Scalar>>& tc_decay() const noexcept { return tc_; }

  /// Required location dimension, or nullopt when any dimension is accepted.
  std::optional<Eigen::Index> required_dimension() const {
    switch (family_) {
      case KernelFamily::SplineFirstOrder: return 1;
      case KernelFamily::GaussianArd: return ard_weights_.size();
      case KernelFamily::Linear: return structure_.rows();
      default: return std::nullopt;
    }
  }

 private:
  explicit KernelSpec(KernelFamily family) : family_(family) {}

  KernelFamily family_;
  Scalar eta_ = Scalar(1);
  int degree_ = 1;
  Vector<Scalar> ard_weights_;
  Matrix<Scalar> structure_;
  std::optional<TcDecay<Scalar>> tc_;
};

/// TC covariance: entry (i, j) = alpha^max(i, j) with 1-based indices.
template <typename Scalar>
Matrix<Scalar> tc_covariance(Scalar alpha, Eigen::Index n) {
  detail::require(alpha >= Scalar(0) && alpha < Scalar(1), ErrorCode::InvalidArgument,
                  "tc_covariance: alpha must lie in [0, 1)");
  detail::require(n >= 1, ErrorCode::InvalidArgument, "tc_covariance: n must be positive");
  Matrix<Scalar> m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      m(i, j) = std::pow(alpha, static_cast<Scalar>(std::max(i, j) + 1));
    }
  }
  return m;
}

template <typename Scalar>
KernelSpec<Scalar> KernelSpec<Scalar>::linear_tc(Scalar alpha_y, Eigen::Index n_y, Scalar alpha_u,
                                                 Eigen::Index n_u) {
  detail::require(n_y >= 0 && n_u >= 0 && n_y + n_u > 0, ErrorCode::InvalidArgument,
                  "linear_tc kernel: block sizes must be nonnegative and not both zero");
  Matrix<Scalar> m = Matrix<Scalar>::Zero(n_y + n_u, n_y + n_u);
  if (n_y > 0) m.topLeftCorner(n_y, n_y) = tc_covariance(alpha_y, n_y);
  if (n_u > 0) m.bottomRightCorner(n_u, n_u) = tc_covariance(alpha_u, n_u);
  // tc_covariance validates alpha only for nonempty blocks.
  detail::require(alpha_y >= Scalar(0) && alpha_y < Scalar(1) && alpha_u >= Scalar(0) && alpha_u < Scalar(1),
                  ErrorCode::InvalidArgument, "linear_tc kernel: decays must lie in [0, 1)");
  KernelSpec k = linear(m);
  k.tc_ = TcDecay<Scalar>{alpha_y, alpha_u};
  return k;
}

namespace detail {

template <typename Scalar>
void check_location_dim(const KernelSpec<Scalar>& spec, Eigen::Index dim) {
  detail::require(dim >= 1, ErrorCode::DimensionMismatch, "kernel: empty input location");
  if (auto req = spec.required_dimension()) {
    if (spec.family() == KernelFamily::SplineFirstOrder) {
      detail::require(dim == 1, ErrorCode::Unsupported, "spline kernel: only scalar input locations are supported");
    }
    detail::require(*req == dim, ErrorCode::DimensionMismatch,
                    "kernel: location dimension " + std::to_string(dim) + " does not match kernel dimension " +
                        std::to_string(*req));
  }
}

/// Unchecked evaluation; callers have validated dimensions.
template <typename Scalar, typename DerivedX, typename DerivedA>
Scalar kernel_value(const KernelSpec<Scalar>& spec, const Eigen::MatrixBase<DerivedX>& x,
                    const Eigen::MatrixBase<DerivedA>& a) {
  switch (spec.family()) {
    case KernelFamily::SplineFirstOrder: {
      const Scalar xs = x(0), as = a(0);
      detail::require(xs >= Scalar(0) && as >= Scalar(0), ErrorCode::InvalidArgument,
                      "spline kernel: coordinates must be nonnegative");
      return std::min(xs, as);
    }
    case KernelFamily::Gaussian:
      return std::exp(-(x - a).squaredNorm() / spec.eta());
    case KernelFamily::GaussianArd: {
      return std::exp(-((x - a).array().square() * spec.ard_weights().array()).sum());
    }
    case KernelFamily::Polynomial:
      return std::pow(x.dot(a) + Scalar(1), static_cast<Scalar>(spec.degree()));
    case KernelFamily::Linear:
      return x.dot(spec.structure_matrix() * a);
  }
  return Scalar(0);
}

}  // namespace detail

/// K(x, a). Accepts row or column vectors.
template <typename Scalar, typename DerivedX, typename DerivedA>
Scalar eval_kernel(const KernelSpec<Scalar>& spec, const Eigen::MatrixBase<DerivedX>& x,
                   const Eigen::MatrixBase<DerivedA>& a) {
  detail::require(x.size() == a.size(), ErrorCode::DimensionMismatch, "eval_kernel: location dimensions differ");
  detail::check_location_dim(spec, x.size());
  const Vector<Scalar> xv = x.reshaped();
  const Vector<Scalar> av = a.reshaped();
  return detail::kernel_value(spec, xv, av);
}

/**
 * Fails unless the symmetric matrix has min eigenvalue >= -tol * max(lambda_max, 0).
 * Matrices are never repaired.
 */
template <typename Scalar>
void require_psd(const Matrix<Scalar>& m, Scalar rel_tol, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(m, Eigen::EigenvaluesOnly);
  detail::require(es.info() == Eigen::Success, ErrorCode::FactorizationFailure, what + ": eigensolver failed");
  const Scalar lo = es.eigenvalues().minCoeff();
  const Scalar hi = es.eigenvalues().maxCoeff();
  detail::require(lo >= -rel_tol * std::max(hi, Scalar(0)), ErrorCode::NotPositiveSemidefinite,
                  what + ": matrix is not positive semidefinite (min eigenvalue " +
                      std::to_string(static_cast<double>(lo)) + ")");
}

/// N x N matrix of K(z^i, z^j) over the rows of `locations`; checked for numerical PSD.
template <typename Scalar>
Matrix<Scalar> gram_matrix(const KernelSpec<Scalar>& spec, const Locations<Scalar>& locations,
                           bool check_psd = true) {
  const Eigen::Index n = locations.rows();
  detail::require(n >= 1, ErrorCode::InvalidArgument, "gram_matrix: no locations");
  detail::check_location_dim(spec, locations.cols());
  Matrix<Scalar> g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      g(i, j) = detail::kernel_value(spec, locations.row(i).transpose(), locations.row(j).transpose());
      g(j, i) = g(i, j);
    }
  }
  if (check_psd) require_psd<Scalar>(g, Scalar(1e-8), "gram_matrix");
  return g;
}

/// Row vector Gamma with Gamma_i = K(z*, z^i).
template <typename Scalar, typename Derived>
RowVector<Scalar> cross_kernel(const KernelSpec<Scalar>& spec, const Eigen::MatrixBase<Derived>& z_star,
                               const Locations<Scalar>& locations) {
  detail::require(z_star.size() == locations.cols(), ErrorCode::DimensionMismatch,
                  "cross_kernel: z* dimension does not match training locations");
  detail::check_location_dim(spec, z_star.size());
  const Vector<Scalar> z = z_star.reshaped();
  RowVector<Scalar> gamma(locations.rows());
  for (Eigen::Index i = 0; i < locations.rows(); ++i) {
    gamma(i) = detail::kernel_value(spec, z, locations.row(i).transpose());
  }
  return gamma;
}

}  // namespace bsp

#endif  // BSP_KERNELS_HPP
