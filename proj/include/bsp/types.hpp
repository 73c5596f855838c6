#ifndef BSP_TYPES_HPP
#define BSP_TYPES_HPP

#include <Eigen/Core>

namespace bsp {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Input locations stacked one per row: row t is z^t.
template <typename Scalar>
using Locations = Matrix<Scalar>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

}  // namespace bsp

#endif  // BSP_TYPES_HPP
