#ifndef BSP_GP_REGRESSION_HPP
#define BSP_GP_REGRESSION_HPP

/**
 * @file
 * @brief Gaussian regression of an unknown predictor f ~ N(0, lambda K).
 *
 * Scaling convention: the fitted system matrix is Sigma = K + gamma I with
 * gamma = sigma2 / lambda, so c = Sigma^{-1} Y. The output covariance used by
 * the marginal likelihood is lambda K + sigma2 I = lambda Sigma.
 *
 * When the locations contain lagged outputs (NARX layout) the marginal
 * likelihood is still evaluated as a Gaussian density of Y with the Gram
 * matrix built from the observed locations.
 */

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <optional>
#include <utility>

#include "bsp/error.hpp"
#include "bsp/kernels.hpp"
#include "bsp/types.hpp"

namespace bsp {

/// z^t = [y(t-1) ... y(t-output_lags), u(t) ... u(t-input_lags+1)].
struct LocationLayout {
  Eigen::Index output_lags = 0;
  Eigen::Index input_lags = 0;

  Eigen::Index dimension() const noexcept { return output_lags + input_lags; }
  bool operator==(const LocationLayout&) const = default;
};

template <typename Scalar>
class Dataset {
 public:
  /// Without a layout, every coordinate is treated as an input lag.
  Dataset(Locations<Scalar> locations, Vector<Scalar> outputs, std::optional<LocationLayout> layout = std::nullopt)
      : locations_(std::move(locations)), outputs_(std::move(outputs)) {
    detail::require(locations_.rows() >= 1, ErrorCode::DegenerateData, "dataset: at least one sample is required");
    detail::require(locations_.cols() >= 1, ErrorCode::DimensionMismatch, "dataset: locations have zero dimension");
    detail::require(locations_.rows() == outputs_.size(), ErrorCode::DimensionMismatch,
                    "dataset: number of locations and outputs differ");
    detail::require(locations_.allFinite() && outputs_.allFinite(), ErrorCode::NonFinite,
                    "dataset: non-finite entries");
    layout_ = layout.value_or(LocationLayout{0, locations_.cols()});
    detail::require(layout_.output_lags >= 0 && layout_.input_lags >= 0 && layout_.dimension() == locations_.cols(),
                    ErrorCode::DimensionMismatch, "dataset: layout does not match location dimension");
  }

  const Locations<Scalar>& locations() const noexcept { return locations_; }
  const Vector<Scalar>& outputs() const noexcept { return outputs_; }
  const LocationLayout& layout() const noexcept { return layout_; }
  Eigen::Index size() const noexcept { return outputs_.size(); }
  Eigen::Index dimension() const noexcept { return locations_.cols(); }

 private:
  Locations<Scalar> locations_;
  Vector<Scalar> outputs_;
  LocationLayout layout_;
};

/// Gaussian belief over linear predictor coefficients.
template <typename Scalar>
class ThetaBelief {
 public:
  ThetaBelief(Vector<Scalar> mean, Matrix<Scalar> covariance)
      : mean_(std::move(mean)), covariance_(std::move(covariance)) {
    detail::require(mean_.size() >= 1 && covariance_.rows() == mean_.size() && covariance_.cols() == mean_.size(),
                    ErrorCode::DimensionMismatch, "theta belief: covariance must be square and match the mean");
    detail::require(mean_.allFinite() && covariance_.allFinite(), ErrorCode::NonFinite,
                    "theta belief: non-finite entries");
    const Scalar scale = std::max(Scalar(1), covariance_.cwiseAbs().maxCoeff());
    detail::require((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() <= Scalar(1e-12) * scale,
                    ErrorCode::InvalidArgument, "theta belief: covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(covariance_, Eigen::EigenvaluesOnly);
    detail::require(es.eigenvalues().minCoeff() >= Scalar(-1e-10), ErrorCode::NotPositiveSemidefinite,
                    "theta belief: covariance is not positive semidefinite");
  }

  /// Degenerate belief concentrated at `theta`.
  static ThetaBelief point(const Vector<Scalar>& theta) {
    return ThetaBelief(theta, Matrix<Scalar>::Zero(theta.size(), theta.size()));
  }

  const Vector<Scalar>& mean() const noexcept { return mean_; }
  const Matrix<Scalar>& covariance() const noexcept { return covariance_; }
  Eigen::Index dimension() const noexcept { return mean_.size(); }
  bool is_degenerate() const { return (covariance_.array() == Scalar(0)).all(); }

 private:
  Vector<Scalar> mean_;
  Matrix<Scalar> covariance_;
};

/**
 * @brief Fitted Gaussian-regression posterior. Immutable.
 *
 * Sigma = K + gamma I is factorized once. If the Cholesky factorization
 * fails, a jitter of 1e-10 trace(Sigma) / N is added and escalated by x100
 * up to three times.
 */
template <typename Scalar>
class GpPosterior {
 public:
  GpPosterior(Dataset<Scalar> data, KernelSpec<Scalar> spec, Scalar lambda, Scalar sigma2)
      : data_(std::move(data)), spec_(std::move(spec)), lambda_(lambda), sigma2_(sigma2) {
    detail::require(std::isfinite(static_cast<double>(lambda)) && lambda > Scalar(0), ErrorCode::InvalidArgument,
                    "fit_posterior: lambda must be positive");
    detail::require(std::isfinite(static_cast<double>(sigma2)) && sigma2 > Scalar(0), ErrorCode::InvalidArgument,
                    "fit_posterior: sigma2 must be positive");
    gamma_ = sigma2_ / lambda_;

    const Eigen::Index n = data_.size();
    Matrix<Scalar> sigma = gram_matrix(spec_, data_.locations());
    sigma.diagonal().array() += gamma_;

    llt_.compute(sigma);
    if (llt_.info() != Eigen::Success) {
      Scalar jitter = Scalar(1e-10) * sigma.trace() / static_cast<Scalar>(n);
      for (int attempt = 0; attempt < 4 && llt_.info() != Eigen::Success; ++attempt, jitter *= Scalar(100)) {
        Matrix<Scalar> jittered = sigma;
        jittered.diagonal().array() += jitter;
        llt_.compute(jittered);
        jitter_ = jitter;
      }
      detail::require(llt_.info() == Eigen::Success, ErrorCode::FactorizationFailure,
                      "fit_posterior: factorization of K + gamma I failed after jitter escalation");
    }
    weights_ = llt_.solve(data_.outputs());
  }

  const Dataset<Scalar>& data() const noexcept { return data_; }
  const KernelSpec<Scalar>& spec() const noexcept { return spec_; }
  const Locations<Scalar>& locations() const noexcept { return data_.locations(); }
  const LocationLayout& layout() const noexcept { return data_.layout(); }
  /// c = (K + gamma I)^{-1} Y.
  const Vector<Scalar>& weights() const noexcept { return weights_; }
  const Eigen::LLT<Matrix<Scalar>>& sigma_factor() const noexcept { return llt_; }
  Scalar lambda() const noexcept { return lambda_; }
  Scalar sigma2() const noexcept { return sigma2_; }
  Scalar gamma() const noexcept { return gamma_; }
  /// Diagonal jitter added during factorization (0 when none was needed).
  Scalar jitter() const noexcept { return jitter_; }

 private:
  Dataset<Scalar> data_;
  KernelSpec<Scalar> spec_;
  Scalar lambda_;
  Scalar sigma2_;
  Scalar gamma_ = Scalar(0);
  Scalar jitter_ = Scalar(0);
  Eigen::LLT<Matrix<Scalar>> llt_;
  Vector<Scalar> weights_;
};

template <typename Scalar>
GpPosterior<Scalar> fit_posterior(const Dataset<Scalar>& data, const KernelSpec<Scalar>& spec, Scalar lambda,
                                  Scalar sigma2) {
  return GpPosterior<Scalar>(data, spec, lambda, sigma2);
}

/// E[f(z*) | D] = sum_i c_i K(z*, z^i).
template <typename Scalar, typename Derived>
Scalar posterior_mean(const GpPosterior<Scalar>& post, const Eigen::MatrixBase<Derived>& z_star) {
  return cross_kernel(post.spec(), z_star, post.locations()).dot(post.weights());
}

/// Var[f(z*) | D] = lambda K(z*, z*) - lambda Gamma Sigma^{-1} Gamma^T, clamped at zero.
template <typename Scalar, typename Derived>
Scalar posterior_variance(const GpPosterior<Scalar>& post, const Eigen::MatrixBase<Derived>& z_star) {
  const Vector<Scalar> gamma = cross_kernel(post.spec(), z_star, post.locations()).transpose();
  const Vector<Scalar> half = post.sigma_factor().matrixL().solve(gamma);
  const Scalar prior = eval_kernel(post.spec(), z_star, z_star);
  return std::max(Scalar(0), post.lambda() * (prior - half.squaredNorm()));
}

/**
 * Posterior of theta under Y = F theta + E with theta ~ N(0, lambda M):
 * mean (F^T F + gamma M^{-1})^{-1} F^T Y, covariance sigma2 (F^T F + gamma M^{-1})^{-1}.
 */
template <typename Scalar>
ThetaBelief<Scalar> linear_posterior(const Matrix<Scalar>& F, const Vector<Scalar>& Y, const Matrix<Scalar>& M,
                                     Scalar lambda, Scalar sigma2) {
  detail::require(F.rows() == Y.size(), ErrorCode::DimensionMismatch, "linear_posterior: F and Y row counts differ");
  detail::require(M.rows() == F.cols() && M.cols() == F.cols(), ErrorCode::DimensionMismatch,
                  "linear_posterior: M must be p x p with p = cols(F)");
  detail::require(lambda > Scalar(0) && sigma2 > Scalar(0), ErrorCode::InvalidArgument,
                  "linear_posterior: lambda and sigma2 must be positive");
  const Scalar gamma = sigma2 / lambda;
  const Eigen::Index p = M.rows();

  Eigen::LLT<Matrix<Scalar>> m_llt(M);
  detail::require(m_llt.info() == Eigen::Success, ErrorCode::SingularMatrix,
                  "linear_posterior: structure matrix M is singular");
  const Matrix<Scalar> m_inv = m_llt.solve(Matrix<Scalar>::Identity(p, p));

  Matrix<Scalar> normal = F.transpose() * F + gamma * m_inv;
  normal = (Scalar(0.5) * (normal + normal.transpose())).eval();
  Eigen::LLT<Matrix<Scalar>> n_llt(normal);
  detail::require(n_llt.info() == Eigen::Success, ErrorCode::SingularMatrix,
                  "linear_posterior: normal-equations matrix is singular");

  Vector<Scalar> mean = n_llt.solve(F.transpose() * Y);
  Matrix<Scalar> cov = sigma2 * n_llt.solve(Matrix<Scalar>::Identity(p, p));
  cov = (Scalar(0.5) * (cov + cov.transpose())).eval();
  return ThetaBelief<Scalar>(std::move(mean), std::move(cov));
}

/// log p(Y) for Y ~ N(0, lambda K + sigma2 I).
template <typename Scalar>
Scalar log_marginal_likelihood(const Dataset<Scalar>& data, const KernelSpec<Scalar>& spec, Scalar lambda,
                               Scalar sigma2) {
  detail::require(lambda > Scalar(0) && sigma2 > Scalar(0), ErrorCode::InvalidArgument,
                  "log_marginal_likelihood: lambda and sigma2 must be positive");
  Matrix<Scalar> cov = lambda * gram_matrix(spec, data.locations());
  cov.diagonal().array() += sigma2;
  Eigen::LLT<Matrix<Scalar>> llt(cov);
  detail::require(llt.info() == Eigen::Success, ErrorCode::NotPositiveSemidefinite,
                  "log_marginal_likelihood: output covariance is not positive definite");
  const Vector<Scalar> white = llt.matrixL().solve(data.outputs());
  const Scalar log_det = Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
  const auto n = static_cast<Scalar>(data.size());
  return Scalar(-0.5) * white.squaredNorm() - Scalar(0.5) * log_det -
         Scalar(0.5) * n * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

/// Refit on the concatenated dataset with the same (lambda, sigma2).
template <typename Scalar>
GpPosterior<Scalar> augment_posterior(const GpPosterior<Scalar>& post, const Locations<Scalar>& extra_locations,
                                      const Vector<Scalar>& extra_outputs) {
  detail::require(extra_locations.rows() == extra_outputs.size(), ErrorCode::DimensionMismatch,
                  "augment_posterior: number of extra locations and outputs differ");
  if (extra_locations.rows() == 0) return post;
  detail::require(extra_locations.cols() == post.locations().cols(), ErrorCode::DimensionMismatch,
                  "augment_posterior: extra locations have the wrong dimension");
  const Eigen::Index n = post.data().size();
  const Eigen::Index k = extra_locations.rows();
  Locations<Scalar> locs(n + k, post.locations().cols());
  locs << post.locations(), extra_locations;
  Vector<Scalar> ys(n + k);
  ys << post.data().outputs(), extra_outputs;
  return GpPosterior<Scalar>(Dataset<Scalar>(std::move(locs), std::move(ys), post.layout()), post.spec(),
                             post.lambda(), post.sigma2());
}

template <typename Scalar>
GpPosterior<Scalar> augment_posterior(const GpPosterior<Scalar>& post, const Dataset<Scalar>& extra) {
  detail::require(extra.layout() == post.layout(), ErrorCode::DimensionMismatch,
                  "augment_posterior: layouts differ");
  return augment_posterior(post, extra.locations(), extra.outputs());
}

}  // namespace bsp

#endif  // BSP_GP_REGRESSION_HPP
