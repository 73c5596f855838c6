#ifndef BSP_MPC_CONTROL_HPP
#define BSP_MPC_CONTROL_HPP

/**
 * @file
 * @brief Posterior-averaged MPC costs and their minimizers.
 *
 * Linear case: the posterior mean of
 *   ||Y_ref - A U - B Y_- - C U_-||_Q^2 + ||U_ref - U||_R^2
 * is U^T (E[A^T Q A] + R) U - 2 U^T rhs + H with
 *   rhs = E[A^T] Q Y_ref - E[A^T Q B] Y_- - E[A^T Q C] U_- + R U_ref,
 * minimized by U* = (E[A^T Q A] + R)^{-1} rhs. Reported costs omit the
 * U-independent constant H.
 *
 * Nonparametric case: per-step posterior mean/variance of f at the future
 * locations, with future outputs inside the locations replaced by their
 * predicted means.
 */

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>

#include "bsp/error.hpp"
#include "bsp/gaussian_moments.hpp"
#include "bsp/gp_regression.hpp"
#include "bsp/linear_predictor.hpp"
#include "bsp/mpc_problem.hpp"
#include "bsp/types.hpp"

namespace bsp {

enum class ControlMethod { Bsp, Nominal, Nfir, Narx };

inline std::string_view to_string(ControlMethod m) {
  switch (m) {
    case ControlMethod::Bsp: return "bsp";
    case ControlMethod::Nominal: return "nominal";
    case ControlMethod::Nfir: return "nfir";
    case ControlMethod::Narx: return "narx";
  }
  return "unknown";
}

template <typename Scalar>
struct ControlSolution {
  Vector<Scalar> u;
  Scalar predicted_cost{};
  ControlMethod method = ControlMethod::Bsp;
  /// Cost evaluations spent by the iterative optimizer (0 for closed forms).
  int evaluations = 0;
};

/// (E[A^T Q A] + R, rhs) of the posterior-mean quadratic.
template <typename Scalar>
std::pair<Matrix<Scalar>, Vector<Scalar>> bsp_normal_equations(const PredictorMoments<Scalar>& moments,
                                                               const MpcProblem<Scalar>& problem) {
  const Eigen::Index t = problem.horizon();
  detail::require(moments.horizon() == t, ErrorCode::DimensionMismatch,
                  "bsp: moments horizon does not match the problem horizon");
  detail::check_problem_memory(problem, moments.memory(), "bsp");
  const Matrix<Scalar> r = problem.r();
  Matrix<Scalar> normal = moments.e_AtQA + r;
  Vector<Scalar> rhs = moments.e_At * (problem.q() * problem.y_ref()) - moments.e_AtQB * problem.y_past() +
                       r * problem.u_ref();
  if (moments.e_AtQC.cols() > 0) rhs -= moments.e_AtQC * problem.u_past();
  return {std::move(normal), std::move(rhs)};
}

/// U^T (E[A^T Q A] + R) U - 2 U^T rhs.
template <typename Scalar>
Scalar posterior_quadratic_cost(const PredictorMoments<Scalar>& moments, const MpcProblem<Scalar>& problem,
                                const Vector<Scalar>& u) {
  const auto [normal, rhs] = bsp_normal_equations(moments, problem);
  detail::require(u.size() == problem.horizon(), ErrorCode::DimensionMismatch, "cost: input length must equal T");
  return u.dot(normal * u) - Scalar(2) * u.dot(rhs);
}

template <typename Scalar>
Vector<Scalar> posterior_quadratic_gradient(const PredictorMoments<Scalar>& moments,
                                            const MpcProblem<Scalar>& problem, const Vector<Scalar>& u) {
  const auto [normal, rhs] = bsp_normal_equations(moments, problem);
  detail::require(u.size() == problem.horizon(), ErrorCode::DimensionMismatch, "cost: input length must equal T");
  return Scalar(2) * (normal * u - rhs);
}

template <typename Scalar>
ControlSolution<Scalar> bsp_optimal_input(const PredictorMoments<Scalar>& moments, const MpcProblem<Scalar>& problem) {
  const auto [normal, rhs] = bsp_normal_equations(moments, problem);
  const Matrix<Scalar> sym = Scalar(0.5) * (normal + normal.transpose());
  Eigen::LDLT<Matrix<Scalar>> ldlt(sym);
  const Scalar rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : Scalar(0);
  detail::require(rcond > Scalar(64) * std::numeric_limits<Scalar>::epsilon(), ErrorCode::SingularMatrix,
                  "bsp: E[A^T Q A] + R is singular (degenerate moments)");
  ControlSolution<Scalar> sol;
  sol.u = ldlt.solve(rhs);
  sol.predicted_cost = sol.u.dot(normal * sol.u) - Scalar(2) * sol.u.dot(rhs);
  sol.method = ControlMethod::Bsp;
  return sol;
}

/// Certainty-equivalent input: the BSP solution for the belief collapsed at its mean.
template <typename Scalar>
ControlSolution<Scalar> nominal_input(const ThetaBelief<Scalar>& belief, const MpcProblem<Scalar>& problem) {
  const auto moments = plugin_moments(PredictorCoefficients<Scalar>(belief.mean()), problem.q(), problem.horizon());
  auto sol = bsp_optimal_input(moments, problem);
  sol.method = ControlMethod::Nominal;
  return sol;
}

template <typename Scalar>
struct Rollout {
  Vector<Scalar> means;
  Vector<Scalar> variances;
  Locations<Scalar> locations;  ///< row l is z*_l
};

/**
 * Propagate predicted means through the horizon: z*_l uses the earlier
 * predicted means in place of future outputs, then past data and u.
 */
template <typename Scalar>
Rollout<Scalar> narx_rollout(const GpPosterior<Scalar>& post, const MpcProblem<Scalar>& problem,
                             const Vector<Scalar>& u) {
  const LocationLayout& layout = post.layout();
  const Eigen::Index t = problem.horizon();
  const Eigen::Index ny = layout.output_lags, nu = layout.input_lags;
  detail::require(u.size() == t, ErrorCode::DimensionMismatch, "narx_rollout: input length must equal T");
  detail::require(problem.y_past().size() >= ny, ErrorCode::DimensionMismatch,
                  "narx_rollout: problem has fewer past outputs than the location layout requires");
  detail::require(problem.u_past().size() >= std::max<Eigen::Index>(nu - 1, 0), ErrorCode::DimensionMismatch,
                  "narx_rollout: problem has fewer past inputs than the location layout requires");

  Rollout<Scalar> out;
  out.means.resize(t);
  out.variances.resize(t);
  out.locations.resize(t, layout.dimension());
  Vector<Scalar> z(layout.dimension());
  for (Eigen::Index l = 0; l < t; ++l) {
    for (Eigen::Index j = 1; j <= ny; ++j) {
      const Eigen::Index s = l - j;
      z(j - 1) = s >= 0 ? out.means(s) : problem.y_past()(-s - 1);
    }
    for (Eigen::Index i = 0; i < nu; ++i) {
      const Eigen::Index s = l - i;
      z(ny + i) = s >= 0 ? u(s) : problem.u_past()(-s - 1);
    }
    out.locations.row(l) = z.transpose();
    out.means(l) = posterior_mean(post, z);
    out.variances(l) = posterior_variance(post, z);
  }
  return out;
}

namespace detail {

template <typename Scalar>
Scalar assemble_cost(const MpcProblem<Scalar>& problem, const Vector<Scalar>& u, const Vector<Scalar>& means,
                     const Vector<Scalar>& variances) {
  const auto& q = problem.q_weights();
  const auto& r = problem.r_weights();
  return (q.array() * (problem.y_ref() - means).array().square()).sum() + (q.array() * variances.array()).sum() +
         (r.array() * (problem.u_ref() - u).array().square()).sum();
}

}  // namespace detail

/// sum_l q_l (y_ref - E f)^2 + q_l Var f + r_l (u_ref - u)^2 along the mean rollout.
template <typename Scalar>
Scalar narx_cost(const GpPosterior<Scalar>& post, const MpcProblem<Scalar>& problem, const Vector<Scalar>& u) {
  const auto roll = narx_rollout(post, problem, u);
  return detail::assemble_cost(problem, u, roll.means, roll.variances);
}

/// Closed-form cost for predictors trained on input-only locations.
template <typename Scalar>
Scalar nfir_cost(const GpPosterior<Scalar>& post, const MpcProblem<Scalar>& problem, const Vector<Scalar>& u) {
  detail::require(post.layout().output_lags == 0, ErrorCode::DimensionMismatch,
                  "nfir_cost: posterior locations contain past outputs");
  return narx_cost(post, problem, u);
}

struct CoordinateSearchOptions {
  /// Initial step; nonpositive means 0.25 * max(1, max|u0|).
  double initial_step = 0.0;
  double step_tolerance = 1e-6;
  int max_evaluations = 200000;
};

/**
 * @brief Derivative-free compass search on narx_cost().
 *
 * Tries +/- step along each coordinate, keeps any improvement and halves the
 * step after a sweep without one. Never returns a point worse than u0.
 */
template <typename Scalar>
ControlSolution<Scalar> optimize_narx_input(const GpPosterior<Scalar>& post, const MpcProblem<Scalar>& problem,
                                            const Vector<Scalar>& u0, const CoordinateSearchOptions& opts = {}) {
  detail::require(u0.size() == problem.horizon(), ErrorCode::DimensionMismatch,
                  "optimize_narx_input: u0 length must equal T");
  int evaluations = 0;
  auto cost = [&](const Vector<Scalar>& u) {
    ++evaluations;
    const Scalar c = narx_cost(post, problem, u);
    if (!std::isfinite(static_cast<double>(c))) {
      std::ostringstream os;
      os << "optimize_narx_input: non-finite cost at u = [" << u.transpose() << "]";
      throw Error(ErrorCode::NonFinite, os.str());
    }
    return c;
  };

  Vector<Scalar> u = u0;
  Scalar best = cost(u);
  Scalar step = opts.initial_step > 0.0
                    ? static_cast<Scalar>(opts.initial_step)
                    : Scalar(0.25) * std::max(Scalar(1), u0.cwiseAbs().maxCoeff());
  const auto tol = static_cast<Scalar>(opts.step_tolerance);
  while (step >= tol && evaluations < opts.max_evaluations) {
    bool improved = false;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      for (const Scalar dir : {Scalar(1), Scalar(-1)}) {
        Vector<Scalar> trial = u;
        trial(i) += dir * step;
        const Scalar c = cost(trial);
        if (c < best) {
          best = c;
          u = std::move(trial);
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= Scalar(0.5);
  }

  ControlSolution<Scalar> sol;
  sol.u = std::move(u);
  sol.predicted_cost = best;
  sol.method = post.layout().output_lags == 0 ? ControlMethod::Nfir : ControlMethod::Narx;
  sol.evaluations = evaluations;
  return sol;
}

}  // namespace bsp

#endif  // BSP_MPC_CONTROL_HPP
