#ifndef BSP_MPC_PROBLEM_HPP
#define BSP_MPC_PROBLEM_HPP

#include <utility>

#include "bsp/error.hpp"
#include "bsp/types.hpp"

namespace bsp {

/**
 * @brief Finite-horizon tracking problem for a scalar-output system.
 *
 * Cost: sum_l q_l (y_ref_l - y_l)^2 + sum_l r_l (u_ref_l - u_l)^2 over l = 0..T-1.
 * The per-step weights are the 1x1 blocks Q_l, R_l; q() and r() return the
 * block-diagonal matrices. Past values are ordered most-recent first:
 * y_past = [y(t-1), y(t-2), ...], u_past = [u(t-1), u(t-2), ...].
 */
template <typename Scalar>
class MpcProblem {
 public:
  MpcProblem(Vector<Scalar> q_weights, Vector<Scalar> r_weights, Vector<Scalar> y_ref, Vector<Scalar> u_ref,
             Vector<Scalar> y_past, Vector<Scalar> u_past)
      : q_(std::move(q_weights)),
        r_(std::move(r_weights)),
        y_ref_(std::move(y_ref)),
        u_ref_(std::move(u_ref)),
        y_past_(std::move(y_past)),
        u_past_(std::move(u_past)) {
    const Eigen::Index t = y_ref_.size();
    detail::require(t >= 1, ErrorCode::InvalidArgument, "mpc problem: horizon must be at least 1");
    detail::require(q_.size() == t && r_.size() == t && u_ref_.size() == t, ErrorCode::DimensionMismatch,
                    "mpc problem: q, r, y_ref and u_ref must all have length T");
    detail::require(q_.allFinite() && r_.allFinite() && y_ref_.allFinite() && u_ref_.allFinite() &&
                        y_past_.allFinite() && u_past_.allFinite(),
                    ErrorCode::NonFinite, "mpc problem: non-finite entries");
    detail::require((q_.array() >= Scalar(0)).all() && (r_.array() >= Scalar(0)).all(), ErrorCode::InvalidArgument,
                    "mpc problem: weights must be nonnegative");
  }

  /// Q = I, R = 0, U_ref = 0.
  static MpcProblem tracking(Vector<Scalar> y_ref, Vector<Scalar> y_past, Vector<Scalar> u_past = {}) {
    const Eigen::Index t = y_ref.size();
    return MpcProblem(Vector<Scalar>::Ones(t), Vector<Scalar>::Zero(t), std::move(y_ref), Vector<Scalar>::Zero(t),
                      std::move(y_past), std::move(u_past));
  }

  Eigen::Index horizon() const noexcept { return y_ref_.size(); }
  const Vector<Scalar>& q_weights() const noexcept { return q_; }
  const Vector<Scalar>& r_weights() const noexcept { return r_; }
  Matrix<Scalar> q() const { return q_.asDiagonal(); }
  Matrix<Scalar> r() const { return r_.asDiagonal(); }
  const Vector<Scalar>& y_ref() const noexcept { return y_ref_; }
  const Vector<Scalar>& u_ref() const noexcept { return u_ref_; }
  const Vector<Scalar>& y_past() const noexcept { return y_past_; }
  const Vector<Scalar>& u_past() const noexcept { return u_past_; }
  bool has_input_penalty() const { return (r_.array() != Scalar(0)).any(); }

  MpcProblem with_weights(Vector<Scalar> q_weights, Vector<Scalar> r_weights) const {
    return MpcProblem(std::move(q_weights), std::move(r_weights), y_ref_, u_ref_, y_past_, u_past_);
  }

 private:
  Vector<Scalar> q_;
  Vector<Scalar> r_;
  Vector<Scalar> y_ref_;
  Vector<Scalar> u_ref_;
  Vector<Scalar> y_past_;
  Vector<Scalar> u_past_;
};

}  // namespace bsp

#endif  // BSP_MPC_PROBLEM_HPP
