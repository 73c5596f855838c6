#ifndef BSP_LINEAR_PREDICTOR_HPP
#define BSP_LINEAR_PREDICTOR_HPP

/**
 * @file
 * @brief Multistep matrices of a linear one-step predictor.
 *
 * One-step predictor with memory m:
 *   y(t) = b_1 u(t) + ... + b_m u(t-m+1) + a_1 y(t-1) + ... + a_m y(t-m)
 * with theta = [b_1 .. b_m, a_1 .. a_m]. Substituting predicted outputs
 * recursively gives, over a horizon T,
 *   Y = A(theta) U + B(theta) Y_- + C(theta) U_-
 * with U = [u(t) .. u(t+T-1)], Y_- = [y(t-1) .. y(t-m)], U_- = [u(t-1) .. u(t-m+1)].
 * The noise term D(theta) E is never formed.
 */

#include <cmath>
#include <string>
#include <utility>

#include "bsp/error.hpp"
#include "bsp/mpc_problem.hpp"
#include "bsp/types.hpp"

namespace bsp {

template <typename Scalar>
class PredictorCoefficients {
 public:
  explicit PredictorCoefficients(Vector<Scalar> theta) : theta_(std::move(theta)) {
    detail::require(theta_.size() >= 2 && theta_.size() % 2 == 0, ErrorCode::InvalidArgument,
                    "predictor coefficients: theta must have length 2m with m >= 1");
    detail::require(theta_.allFinite(), ErrorCode::NonFinite, "predictor coefficients: non-finite theta");
  }

  Eigen::Index memory() const noexcept { return theta_.size() / 2; }
  const Vector<Scalar>& theta() const noexcept { return theta_; }
  auto input_coefficients() const { return theta_.head(memory()); }
  auto output_coefficients() const { return theta_.tail(memory()); }

 private:
  Vector<Scalar> theta_;
};

template <typename Scalar>
struct MultistepMatrices {
  Matrix<Scalar> A;  ///< T x T, lower triangular
  Matrix<Scalar> B;  ///< T x m
  Matrix<Scalar> C;  ///< T x (m - 1)

  Eigen::Index horizon() const noexcept { return A.rows(); }
};

/// In-place variant of build_multistep(); reuses the storage of `out`.
template <typename Scalar>
void build_multistep_into(const PredictorCoefficients<Scalar>& coeffs, Eigen::Index horizon,
                          MultistepMatrices<Scalar>& out) {
  detail::require(horizon >= 1, ErrorCode::InvalidArgument, "build_multistep: horizon must be at least 1");
  const Eigen::Index m = coeffs.memory();
  const auto& theta = coeffs.theta();
  out.A.setZero(horizon, horizon);
  out.B.setZero(horizon, m);
  out.C.setZero(horizon, m - 1);
  for (Eigen::Index k = 0; k < horizon; ++k) {
    for (Eigen::Index j = 1; j <= m; ++j) {
      const Scalar b = theta(j - 1);
      const Eigen::Index i = k - j + 1;
      if (i >= 0) {
        out.A(k, i) += b;
      } else {
        out.C(k, -i - 1) += b;
      }
    }
    for (Eigen::Index j = 1; j <= m; ++j) {
      const Scalar a = theta(m + j - 1);
      const Eigen::Index s = k - j;
      if (s >= 0) {
        out.A.row(k) += a * out.A.row(s);
        out.B.row(k) += a * out.B.row(s);
        if (m > 1) out.C.row(k) += a * out.C.row(s);
      } else {
        out.B(k, -s - 1) += a;
      }
    }
  }
}

template <typename Scalar>
MultistepMatrices<Scalar> build_multistep(const PredictorCoefficients<Scalar>& coeffs, Eigen::Index horizon) {
  MultistepMatrices<Scalar> out;
  build_multistep_into(coeffs, horizon, out);
  return out;
}

/// A U + B Y_- + C U_-.
template <typename Scalar>
Vector<Scalar> predict(const MultistepMatrices<Scalar>& mats, const Vector<Scalar>& u, const Vector<Scalar>& y_past,
                       const Vector<Scalar>& u_past) {
  detail::require(u.size() == mats.A.cols() && y_past.size() == mats.B.cols() && u_past.size() == mats.C.cols(),
                  ErrorCode::DimensionMismatch, "predict: vector lengths do not match the multistep matrices");
  Vector<Scalar> y = mats.A * u + mats.B * y_past;
  if (mats.C.cols() > 0) y += mats.C * u_past;
  return y;
}

namespace detail {

template <typename Scalar>
void check_problem_memory(const MpcProblem<Scalar>& problem, Eigen::Index m, const char* who) {
  detail::require(problem.y_past().size() == m && problem.u_past().size() == m - 1, ErrorCode::DimensionMismatch,
                  std::string(who) + ": problem needs " + std::to_string(m) + " past outputs and " +
                      std::to_string(m - 1) + " past inputs");
}

}  // namespace detail

/**
 * Input that makes the noise-free predictor under `coeffs` hit y_ref exactly.
 * Only defined without an input penalty and with b_1 != 0.
 */
template <typename Scalar>
Vector<Scalar> oracle_input(const PredictorCoefficients<Scalar>& coeffs, const MpcProblem<Scalar>& problem) {
  detail::check_problem_memory(problem, coeffs.memory(), "oracle_input");
  detail::require(!problem.has_input_penalty(), ErrorCode::Unsupported,
                  "oracle_input: defined only for a zero input penalty R = 0");
  detail::require(std::abs(coeffs.theta()(0)) >= Scalar(1e-12), ErrorCode::SingularMatrix,
                  "oracle_input: leading input coefficient is zero (A is singular)");
  const auto mats = build_multistep(coeffs, problem.horizon());
  Vector<Scalar> rhs = problem.y_ref() - mats.B * problem.y_past();
  if (mats.C.cols() > 0) rhs -= mats.C * problem.u_past();
  return mats.A.template triangularView<Eigen::Lower>().solve(rhs);
}

}  // namespace bsp

#endif  // BSP_LINEAR_PREDICTOR_HPP
