#pragma once

#include <Eigen/Dense>

namespace kpf {

/// Largest latent state dimension handled by the fixed-capacity types.
/// State-sized objects live on the stack; observation-sized ones do not.
inline constexpr int kMaxState = 4;

template <typename Scalar>
using StateVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxState, 1>;

template <typename Scalar>
using StateMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxState, kMaxState>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Row-major storage for observation panels (one row per time step).
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Derived>
auto symmetrized(const Eigen::MatrixBase<Derived>& m) {
  return (0.5 * (m + m.transpose())).eval();
}

}  // namespace kpf
