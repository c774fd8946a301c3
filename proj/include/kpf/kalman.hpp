#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "kpf/affine_model.hpp"
#include "kpf/dense.hpp"
#include "kpf/errors.hpp"

namespace kpf {

template <typename Scalar>
struct GaussianState {
  StateVector<Scalar> mean;
  StateMatrix<Scalar> cov;

  int dim() const { return static_cast<int>(mean.size()); }
};

template <typename Scalar>
struct UpdateResult {
  GaussianState<Scalar> posterior;
  Scalar loglik = 0;                 // log p(y_k | y_{1:k-1}, theta)
  Vector<Scalar> innovation;
  Matrix<Scalar> S;                  // innovation covariance
};

inline constexpr double kPsdRepairTolerance = 1e-10;
inline constexpr double kMaxInnovationCondition = 1e14;

/// Symmetrizes and clips eigenvalues in (-1e-10, 0) to zero. Anything more
/// negative means the recursion has gone wrong and is reported.
template <typename Scalar>
StateMatrix<Scalar> psd_repair(const StateMatrix<Scalar>& cov) {
  StateMatrix<Scalar> sym = symmetrized(cov);
  const int d = static_cast<int>(sym.rows());
  if (d == 1) {
    if (sym(0, 0) < Scalar(0)) {
      if (sym(0, 0) < Scalar(-kPsdRepairTolerance))
        throw NumericalError("covariance lost positive semi-definiteness");
      sym(0, 0) = 0;
    }
    return sym;
  }
  Eigen::LLT<StateMatrix<Scalar>> llt(sym);
  if (llt.info() == Eigen::Success) return sym;
  Eigen::SelfAdjointEigenSolver<StateMatrix<Scalar>> eig(sym);
  const auto values = eig.eigenvalues();
  if (values.minCoeff() >= Scalar(0)) return sym;
  if (values.minCoeff() < Scalar(-kPsdRepairTolerance))
    throw NumericalError("covariance lost positive semi-definiteness");
  const StateVector<Scalar> clipped = values.cwiseMax(Scalar(0));
  return symmetrized(StateMatrix<Scalar>(eig.eigenvectors() * clipped.asDiagonal() *
                                         eig.eigenvectors().transpose()));
}

template <typename Scalar>
GaussianState<Scalar> kf_predict(const GaussianState<Scalar>& state, const TransitionMoments<Scalar>& tm) {
  if (tm.F.rows() != state.dim() || tm.Q.rows() != state.dim())
    throw DimensionError("kf_predict: transition and state dimensions differ");
  GaussianState<Scalar> out;
  out.mean.noalias() = tm.F * state.mean;
  out.mean += tm.offset;
  out.cov = symmetrized(StateMatrix<Scalar>(tm.F * state.cov * tm.F.transpose() + tm.Q));
  return out;
}

/// Full update against y ~ N(H x + H0, S), S = H P H' + h I.
template <typename Scalar>
UpdateResult<Scalar> kf_update(const GaussianState<Scalar>& prior, const ObservationMap<Scalar>& obs,
                               const Vector<Scalar>& y) {
  using std::log;
  const int L = obs.observations();
  const int d = prior.dim();
  if (obs.H.rows() != L || obs.H.cols() != d || y.size() != L)
    throw DimensionError("kf_update: observation shapes disagree");
  if (!(obs.h > 0)) throw Error("kf_update: observation noise variance must be positive");

  const Matrix<Scalar> HP = obs.H * prior.cov;
  Matrix<Scalar> S = HP * obs.H.transpose();
  S.diagonal().array() += obs.h;
  S = symmetrized(S);

  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(S, Eigen::EigenvaluesOnly);
  const Scalar lo = eig.eigenvalues().minCoeff();
  const Scalar hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0) || hi / lo > Scalar(kMaxInnovationCondition))
    throw DegenerateObservation("kf_update: innovation covariance is numerically singular");

  Eigen::LLT<Matrix<Scalar>> llt(S);
  if (llt.info() != Eigen::Success)
    throw DegenerateObservation("kf_update: innovation covariance is not positive definite");

  UpdateResult<Scalar> out;
  out.innovation = y - obs.H * prior.mean - obs.H0;
  out.S = S;
  // K' = S^{-1} H P
  const Matrix<Scalar> Kt = llt.solve(HP);
  const Matrix<Scalar> K = Kt.transpose();
  out.posterior.mean = prior.mean + K * out.innovation;

  // Joseph form (I - K H) P (I - K H)' + h K K'
  StateMatrix<Scalar> IKH = StateMatrix<Scalar>::Identity(d, d);
  IKH -= K * obs.H;
  StateMatrix<Scalar> cov = IKH * prior.cov * IKH.transpose();
  cov += obs.h * (K * K.transpose());
  out.posterior.cov = psd_repair<Scalar>(cov);

  const Matrix<Scalar> Lmat = llt.matrixL();
  const Scalar logdet = 2 * Lmat.diagonal().array().log().sum();
  const Vector<Scalar> white = llt.matrixL().solve(out.innovation);
  out.loglik = Scalar(-0.5) * (L * log(Scalar(2) * std::numbers::pi_v<Scalar>) + logdet + white.squaredNorm());
  return out;
}

/// Sufficient statistics of an observation map for R = h I:
/// only H'H, H'H0, |H0|^2 and L are needed to update against any y.
template <typename Scalar>
struct ReducedObservation {
  StateMatrix<Scalar> HtH;
  StateVector<Scalar> HtH0;
  Scalar H0sq = 0;
  Scalar h = 0;
  int L = 0;

  static ReducedObservation from(const ObservationMap<Scalar>& obs) {
    ReducedObservation r;
    r.HtH = obs.H.transpose() * obs.H;
    r.HtH0 = obs.H.transpose() * obs.H0;
    r.H0sq = obs.H0.squaredNorm();
    r.h = obs.h;
    r.L = obs.observations();
    return r;
  }
};

/// Per-step data projected through one observation map:
/// g = H'(y - H0), s = |y - H0|^2.
template <typename Scalar>
struct ReducedData {
  StateVector<Scalar> g;
  Scalar s = 0;
};

template <typename Scalar>
ReducedData<Scalar> reduce(const ObservationMap<Scalar>& obs, const ReducedObservation<Scalar>& red,
                           const Vector<Scalar>& y) {
  ReducedData<Scalar> out;
  out.g = obs.H.transpose() * y - red.HtH0;
  out.s = y.squaredNorm() - 2 * obs.H0.dot(y) + red.H0sq;
  return out;
}

template <typename Scalar>
struct ReducedUpdate {
  GaussianState<Scalar> posterior;
  Scalar loglik = 0;
};

/// Same update as kf_update but in d x d arithmetic:
///   W = h I + H'H P,  K = P W^{-1} H',
///   log det S = (L - d) log h + log det W,
///   e' S^{-1} e = (e'e - z' P W^{-1} z) / h,  z = H'e.
template <typename Scalar>
ReducedUpdate<Scalar> kf_update_reduced(const GaussianState<Scalar>& prior,
                                        const ReducedObservation<Scalar>& red,
                                        const ReducedData<Scalar>& data) {
  using std::log;
  const int d = prior.dim();
  const Scalar h = red.h;
  const auto& m = prior.mean;
  const auto& P = prior.cov;

  StateMatrix<Scalar> W = red.HtH * P;
  W.diagonal().array() += h;
  const Scalar load = W.trace() - d * h;  // trace(H P H')
  if (!(load / h + 1 <= Scalar(kMaxInnovationCondition)))
    throw DegenerateObservation("kf_update: innovation covariance is numerically singular");

  Eigen::PartialPivLU<StateMatrix<Scalar>> lu(W);
  const Scalar det_w = lu.determinant();
  if (!(det_w > 0)) throw DegenerateObservation("kf_update: innovation covariance is not positive definite");

  const StateVector<Scalar> Mm = red.HtH * m;
  const StateVector<Scalar> z = data.g - Mm;
  const StateVector<Scalar> Winv_z = lu.solve(z);
  const StateVector<Scalar> gain = P * Winv_z;  // K e
  const Scalar ee = data.s - 2 * m.dot(data.g) + m.dot(Mm);
  const Scalar quad = (ee - z.dot(gain)) / h;

  ReducedUpdate<Scalar> out;
  out.posterior.mean = m + gain;
  // Joseph form with K H = P W^{-1} H'H and h K K' = h P W^{-1} H'H W^{-T} P.
  const StateMatrix<Scalar> WinvM = lu.solve(red.HtH);
  const StateMatrix<Scalar> KH = P * WinvM;
  StateMatrix<Scalar> IKH = StateMatrix<Scalar>::Identity(d, d) - KH;
  const StateMatrix<Scalar> WinvT_P = lu.transpose().solve(P);
  StateMatrix<Scalar> cov = IKH * P * IKH.transpose();
  cov.noalias() += h * (P * WinvM * WinvT_P);
  out.posterior.cov = psd_repair<Scalar>(cov);
  out.loglik = Scalar(-0.5) * (red.L * log(Scalar(2) * std::numbers::pi_v<Scalar>) +
                               (red.L - d) * log(h) + log(det_w) + quad);
  return out;
}

template <typename Scalar>
struct FilterPassResult {
  GaussianState<Scalar> final_state;
  Scalar total_loglik = 0;
  std::vector<Scalar> step_logliks;
};

/// Folds predict/update over a sequence of steps.
template <typename Scalar>
FilterPassResult<Scalar> kf_filter_pass(const GaussianState<Scalar>& initial,
                                        std::span<const TransitionMoments<Scalar>> transitions,
                                        std::span<const ObservationMap<Scalar>> maps,
                                        std::span<const Vector<Scalar>> ys) {
  if (transitions.size() != maps.size() || maps.size() != ys.size())
    throw DimensionError("kf_filter_pass: sequences must have equal length");
  FilterPassResult<Scalar> out{initial, 0, {}};
  out.step_logliks.reserve(ys.size());
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const auto prior = kf_predict(out.final_state, transitions[k]);
    auto upd = kf_update(prior, maps[k], ys[k]);
    out.final_state = std::move(upd.posterior);
    out.total_loglik += upd.loglik;
    out.step_logliks.push_back(upd.loglik);
  }
  return out;
}

}  // namespace kpf
