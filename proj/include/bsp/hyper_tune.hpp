#ifndef BSP_HYPER_TUNE_HPP
#define BSP_HYPER_TUNE_HPP

/**
 * @file
 * @brief Empirical-Bayes tuning of (lambda, sigma2) through the degrees of freedom.
 *
 * With H(gamma) = K (K + gamma I)^{-1}, f = H Y and q = tr H, the marginal
 * likelihood is stationary where
 *
 *   lambda = WSSU(gamma) / q(gamma),    sigma2 = WSRR(gamma) / (N - q(gamma)),
 *
 * and gamma = sigma2 / lambda. empirical_bayes() solves the resulting scalar
 * equation in log10(gamma); schedule_gamma() fixes gamma = scale N^(1-alpha)
 * and only evaluates the sigma2 equation.
 */

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "bsp/error.hpp"
#include "bsp/types.hpp"

namespace bsp {

template <typename Scalar>
struct TuningResult {
  Scalar gamma{};
  Scalar lambda{};
  Scalar sigma2{};
  Scalar dof{};
  Scalar wsrr{};
  Scalar wssu{};
  int iterations = 0;
  /// Relative mismatch between lambda and WSSU / q at the returned gamma.
  Scalar residual{};
  /// False when no sign change was found and an endpoint was returned.
  bool bracketed = true;
  std::string diagnostics;
};

struct TuningOptions {
  double log10_gamma_min = -8.0;
  double log10_gamma_max = 8.0;
  int scan_points = 161;
  double log10_tolerance = 1e-10;
  /// q is clamped to N - interpolation_margin inside the sigma2 equation.
  double interpolation_margin = 1e-6;
};

namespace detail {

template <typename Scalar>
void check_gram(const Matrix<Scalar>& gram, Scalar gamma, const char* who) {
  detail::require(gram.rows() >= 1 && gram.rows() == gram.cols(), ErrorCode::DimensionMismatch,
                  std::string(who) + ": gram matrix must be square and nonempty");
  const Scalar scale = std::max(Scalar(1), gram.cwiseAbs().maxCoeff());
  detail::require((gram - gram.transpose()).cwiseAbs().maxCoeff() <= Scalar(1e-12) * scale,
                  ErrorCode::InvalidArgument, std::string(who) + ": gram matrix is not symmetric");
  detail::require(gamma > Scalar(0) && std::isfinite(static_cast<double>(gamma)), ErrorCode::InvalidArgument,
                  std::string(who) + ": gamma must be positive");
}

template <typename Scalar>
Eigen::LDLT<Matrix<Scalar>> regularized_factor(const Matrix<Scalar>& gram, Scalar gamma) {
  Matrix<Scalar> sys = gram;
  sys.diagonal().array() += gamma;
  Eigen::LDLT<Matrix<Scalar>> ldlt(sys);
  detail::require(ldlt.info() == Eigen::Success, ErrorCode::FactorizationFailure,
                  "factorization of K + gamma I failed");
  return ldlt;
}

/// Closed-form evaluation of q, WSRR and WSSU from one eigen-decomposition of K.
template <typename Scalar>
class SpectralFit {
 public:
  SpectralFit(const Matrix<Scalar>& gram, const Vector<Scalar>& y) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(gram);
    detail::require(es.info() == Eigen::Success, ErrorCode::FactorizationFailure, "eigen-decomposition of K failed");
    d_ = es.eigenvalues().cwiseMax(Scalar(0));
    b2_ = (es.eigenvectors().transpose() * y).array().square().matrix();
  }

  Scalar dof(Scalar gamma) const { return (d_.array() / (d_.array() + gamma)).sum(); }
  Scalar wsrr(Scalar gamma) const {
    return (b2_.array() * (gamma / (d_.array() + gamma)).square()).sum();
  }
  Scalar wssu(Scalar gamma) const {
    return (b2_.array() * d_.array() / (d_.array() + gamma).square()).sum();
  }
  /// Maximizer of the likelihood over lambda with sigma2 = gamma lambda.
  Scalar profile_lambda(Scalar gamma) const {
    return (b2_.array() / (d_.array() + gamma)).sum() / static_cast<Scalar>(d_.size());
  }
  /// log N(Y; 0, lambda K + sigma2 I).
  Scalar log_likelihood(Scalar lambda, Scalar sigma2) const {
    const auto var = lambda * d_.array() + sigma2;
    const auto n = static_cast<Scalar>(d_.size());
    return Scalar(-0.5) * ((b2_.array() / var).sum() + var.log().sum() +
                           n * std::log(Scalar(2) * std::numbers::pi_v<Scalar>));
  }
  Eigen::Index size() const noexcept { return d_.size(); }

 private:
  Vector<Scalar> d_;
  Vector<Scalar> b2_;
};

}  // namespace detail

/// H(gamma) = K (K + gamma I)^{-1}.
template <typename Scalar>
Matrix<Scalar> hat_matrix(const Matrix<Scalar>& gram, Scalar gamma) {
  detail::check_gram(gram, gamma, "hat_matrix");
  // K and (K + gamma I)^{-1} commute, so H = ((K + gamma I)^{-1} K)^T.
  return detail::regularized_factor(gram, gamma).solve(gram).transpose();
}

/// q(gamma) = tr H(gamma).
template <typename Scalar>
Scalar degrees_of_freedom(const Matrix<Scalar>& gram, Scalar gamma) {
  detail::check_gram(gram, gamma, "degrees_of_freedom");
  return detail::regularized_factor(gram, gamma).solve(gram).trace();
}

/// ||Y - H Y||^2, using Y - H Y = gamma (K + gamma I)^{-1} Y.
template <typename Scalar>
Scalar wsrr(const Matrix<Scalar>& gram, Scalar gamma, const Vector<Scalar>& y) {
  detail::check_gram(gram, gamma, "wsrr");
  detail::require(y.size() == gram.rows(), ErrorCode::DimensionMismatch, "wsrr: Y length does not match K");
  const Vector<Scalar> c = detail::regularized_factor(gram, gamma).solve(y);
  return (gamma * c).squaredNorm();
}

/// f^T K^{-1} f without forming K^{-1}: Y^T (K + gamma I)^{-1} K (K + gamma I)^{-1} Y.
template <typename Scalar>
Scalar wssu(const Matrix<Scalar>& gram, Scalar gamma, const Vector<Scalar>& y) {
  detail::check_gram(gram, gamma, "wssu");
  detail::require(y.size() == gram.rows(), ErrorCode::DimensionMismatch, "wssu: Y length does not match K");
  const Vector<Scalar> c = detail::regularized_factor(gram, gamma).solve(y);
  return std::max(Scalar(0), c.dot(gram * c));
}

/**
 * @brief Solve the lambda / sigma2 fixed point for gamma.
 *
 * Scans log10(gamma) on a uniform grid, bisects every sign change of
 * log(gamma) - log(sigma2(gamma) / lambda(gamma)) and keeps the root with the
 * largest marginal likelihood. Without a sign change the grid endpoint with
 * the larger profile likelihood is returned with `bracketed = false`, and
 * lambda there is the profile estimate Y^T (K + gamma I)^{-1} Y / N.
 */
template <typename Scalar>
TuningResult<Scalar> empirical_bayes(const Matrix<Scalar>& gram, const Vector<Scalar>& y,
                                     const TuningOptions& opts = {}) {
  detail::check_gram(gram, Scalar(1), "empirical_bayes");
  const Eigen::Index n = gram.rows();
  detail::require(n >= 2, ErrorCode::DegenerateData, "empirical_bayes: at least two samples are required");
  detail::require(y.size() == n, ErrorCode::DimensionMismatch, "empirical_bayes: Y length does not match K");
  detail::require(opts.scan_points >= 2, ErrorCode::InvalidArgument, "empirical_bayes: scan needs two points");

  const detail::SpectralFit<Scalar> fit(gram, y);
  const auto nn = static_cast<Scalar>(n);
  const auto margin = static_cast<Scalar>(opts.interpolation_margin);
  detail::require(fit.wssu(Scalar(1)) > Scalar(0), ErrorCode::DegenerateData,
                  "empirical_bayes: WSSU vanishes (Y is zero or orthogonal to the range of K)");

  struct Eval {
    Scalar gamma, q, wsrr, wssu, sigma2, lambda, h;
  };
  auto eval = [&](double log10_gamma) {
    Eval e{};
    e.gamma = std::pow(Scalar(10), static_cast<Scalar>(log10_gamma));
    e.q = fit.dof(e.gamma);
    e.wsrr = fit.wsrr(e.gamma);
    e.wssu = fit.wssu(e.gamma);
    const Scalar q_clamped = std::min(e.q, nn - margin);
    e.sigma2 = e.wsrr / (nn - q_clamped);
    e.lambda = e.wssu / e.q;
    // A zero numerator drives the implied gamma to zero: treat as +inf.
    if (!(e.sigma2 > Scalar(0)) || !(e.lambda > Scalar(0))) {
      e.h = std::numeric_limits<Scalar>::infinity();
    } else {
      e.h = std::log(e.gamma) - std::log(e.sigma2 / e.lambda);
    }
    return e;
  };

  const double lo = opts.log10_gamma_min;
  const double step = (opts.log10_gamma_max - lo) / (opts.scan_points - 1);
  std::vector<double> grid(opts.scan_points);
  std::vector<Eval> evals(opts.scan_points);
  for (int i = 0; i < opts.scan_points; ++i) {
    grid[i] = lo + step * i;
    evals[i] = eval(grid[i]);
  }

  TuningResult<Scalar> best;
  bool found = false;
  Scalar best_ll = -std::numeric_limits<Scalar>::infinity();
  int total_iterations = 0;
  int roots = 0;
  for (int i = 0; i + 1 < opts.scan_points; ++i) {
    const Scalar h0 = evals[i].h, h1 = evals[i + 1].h;
    if (!std::isfinite(static_cast<double>(h0)) && !std::isfinite(static_cast<double>(h1))) continue;
    if (h0 != Scalar(0) && h1 != Scalar(0) && std::signbit(h0) == std::signbit(h1)) continue;
    double a = grid[i], b = grid[i + 1];
    bool a_neg = std::signbit(h0);
    int iters = 0;
    while (b - a >= opts.log10_tolerance && iters < 200) {
      const double mid = 0.5 * (a + b);
      const Scalar hm = eval(mid).h;
      if (hm == Scalar(0)) {
        a = b = mid;
        break;
      }
      if (std::signbit(hm) == a_neg) {
        a = mid;
      } else {
        b = mid;
      }
      ++iters;
    }
    total_iterations += iters;
    ++roots;
    const Eval e = eval(0.5 * (a + b));
    const Scalar lambda = e.sigma2 / e.gamma;
    const Scalar ll = fit.log_likelihood(lambda, e.sigma2);
    if (!found || ll > best_ll) {
      found = true;
      best_ll = ll;
      best.gamma = e.gamma;
      best.sigma2 = e.sigma2;
      best.lambda = lambda;
      best.dof = e.q;
      best.wsrr = e.wsrr;
      best.wssu = e.wssu;
    }
  }

  if (found) {
    best.bracketed = true;
    best.iterations = total_iterations;
    if (roots > 1) {
      std::ostringstream os;
      os << roots << " fixed points bracketed; kept the one with the largest marginal likelihood";
      best.diagnostics = os.str();
    }
  } else {
    // Profile estimates at each endpoint: lambda = Y^T Sigma^-1 Y / N, sigma2 = gamma lambda.
    struct Endpoint {
      const Eval* e;
      Scalar lambda, ll;
    };
    auto profile = [&](const Eval& e) {
      const Scalar lambda = fit.profile_lambda(e.gamma);
      return Endpoint{&e, lambda, fit.log_likelihood(lambda, lambda * e.gamma)};
    };
    const Endpoint p0 = profile(evals.front()), p1 = profile(evals.back());
    const bool take_low = !(p1.ll > p0.ll);
    const Endpoint& p = take_low ? p0 : p1;
    const Eval& e0 = *p0.e;
    const Eval& e1 = *p1.e;
    best.gamma = p.e->gamma;
    best.lambda = p.lambda;
    best.sigma2 = p.lambda * p.e->gamma;
    best.dof = p.e->q;
    best.wsrr = p.e->wsrr;
    best.wssu = p.e->wssu;
    best.bracketed = false;
    best.iterations = 0;
    std::ostringstream os;
    os << "no sign change of the fixed-point residual on log10(gamma) in [" << opts.log10_gamma_min << ", "
       << opts.log10_gamma_max << "]; residual at endpoints " << static_cast<double>(e0.h) << " and "
       << static_cast<double>(e1.h) << "; returned the " << (take_low ? "lower" : "upper")
       << " endpoint, which has the larger marginal likelihood";
    best.diagnostics = os.str();
  }
  const Scalar lambda_eq = best.wssu / best.dof;
  best.residual = std::abs(best.lambda - lambda_eq) / lambda_eq;
  if (!(best.sigma2 > Scalar(0)) || !(best.lambda > Scalar(0))) {
    throw Error(ErrorCode::DegenerateData, "empirical_bayes: degenerate estimates (sigma2 or lambda is zero). " +
                                               best.diagnostics);
  }
  return best;
}

/// gamma = scale * N^(1 - alpha) with 0 < alpha < 1/2.
template <typename Scalar>
Scalar scheduled_gamma(Eigen::Index n, Scalar alpha, Scalar scale) {
  detail::require(alpha > Scalar(0) && alpha < Scalar(0.5), ErrorCode::InvalidArgument,
                  "schedule_gamma: alpha must lie in (0, 1/2)");
  detail::require(scale > Scalar(0), ErrorCode::InvalidArgument, "schedule_gamma: scale must be positive");
  detail::require(n >= 1, ErrorCode::InvalidArgument, "schedule_gamma: N must be positive");
  return scale * std::pow(static_cast<Scalar>(n), Scalar(1) - alpha);
}

/// Non-iterative tuning: scheduled gamma, sigma2 from the residual equation, lambda = sigma2 / gamma.
template <typename Scalar>
TuningResult<Scalar> schedule_gamma(Eigen::Index n, Scalar alpha, Scalar scale, const Matrix<Scalar>& gram,
                                    const Vector<Scalar>& y, const TuningOptions& opts = {}) {
  const Scalar gamma = scheduled_gamma(n, alpha, scale);
  detail::check_gram(gram, gamma, "schedule_gamma");
  detail::require(gram.rows() == n && y.size() == n, ErrorCode::DimensionMismatch,
                  "schedule_gamma: N does not match the data size");
  TuningResult<Scalar> r;
  r.gamma = gamma;
  r.dof = degrees_of_freedom(gram, gamma);
  r.wsrr = wsrr(gram, gamma, y);
  r.wssu = wssu(gram, gamma, y);
  const auto nn = static_cast<Scalar>(n);
  const Scalar q_clamped = std::min(r.dof, nn - static_cast<Scalar>(opts.interpolation_margin));
  r.sigma2 = r.wsrr / (nn - q_clamped);
  r.lambda = r.sigma2 / gamma;
  r.iterations = 0;
  r.bracketed = true;
  r.residual = Scalar(0);
  detail::require(r.sigma2 > Scalar(0), ErrorCode::DegenerateData, "schedule_gamma: residuals vanish (sigma2 = 0)");
  return r;
}

}  // namespace bsp

#endif  // BSP_HYPER_TUNE_HPP
