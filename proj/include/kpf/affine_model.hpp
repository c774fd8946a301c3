#pragma once

// Affine short-rate models
//
//   dx = A (beta - x) dt + (Sigma + SigmaTilde sqrt(x_1)) dW,   r = c + gamma' x
//
// with A diagonal, their discrete-time transition moments and the map from
// latent state to the observed zero-rate curve.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "kpf/dense.hpp"
#include "kpf/errors.hpp"
#include "kpf/riccati.hpp"

namespace kpf {

template <typename Scalar>
struct AffineModelSpec {
  int p = 0;                         // number of non-negative coordinates; q = d - p
  StateMatrix<Scalar> A;             // mean-reversion speeds on the diagonal (1/year)
  StateVector<Scalar> beta;          // long-run mean
  StateMatrix<Scalar> Sigma;         // constant diffusion
  StateMatrix<Scalar> SigmaTilde;    // diffusion scaled by sqrt(x_1)
  StateVector<Scalar> gamma;         // short-rate loading
  Scalar c = 0;                      // short-rate offset

  int dim() const { return static_cast<int>(beta.size()); }
  int q() const { return dim() - p; }

  /// Sigma-regime (SigmaTilde == 0): the transition is exactly Gaussian.
  bool gaussian() const { return SigmaTilde.isZero(0); }

  void check_dimensions() const {
    const int d = dim();
    if (d < 1 || d > kMaxState) throw DimensionError("affine model: state dimension out of range");
    if (p < 0 || p > d) throw DimensionError("affine model: p must lie in [0, d]");
    if (A.rows() != d || A.cols() != d || Sigma.rows() != d || Sigma.cols() != d ||
        SigmaTilde.rows() != d || SigmaTilde.cols() != d || gamma.size() != d)
      throw DimensionError("affine model: field shapes disagree with beta");
  }
};

/// Returns the violated admissibility conditions; empty means admissible.
/// Throws DimensionError when the fields do not even fit together.
template <typename Scalar>
std::vector<std::string> validate_admissibility(const AffineModelSpec<Scalar>& spec) {
  using std::abs;
  spec.check_dimensions();
  std::vector<std::string> violations;
  const int d = spec.dim();
  const int p = spec.p;
  const bool sigma_zero = spec.Sigma.isZero(0);
  const bool tilde_zero = spec.SigmaTilde.isZero(0);

  if (!sigma_zero && !tilde_zero)
    violations.emplace_back("Sigma and SigmaTilde are both non-zero; the model is not affine");

  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j && spec.A(i, j) != 0) {
        violations.emplace_back("A must be diagonal");
        i = d;
        break;
      }

  if (!(spec.beta(0) >= 0)) violations.emplace_back("beta[0] must be non-negative");

  // A beta in R_+^p x R^q
  const StateVector<Scalar> drift = spec.A * spec.beta;
  for (int i = 0; i < p; ++i)
    if (drift(i) < 0) {
      violations.emplace_back("A beta must be non-negative on the first p coordinates");
      break;
    }
  // A_IJ = 0 and non-positive off-diagonals in A_II
  for (int i = 0; i < p; ++i) {
    for (int j = p; j < d; ++j)
      if (spec.A(i, j) != 0) {
        violations.emplace_back("A_IJ must vanish");
        j = d;
        i = p;
      }
  }
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j)
      if (i != j && spec.A(i, j) > 0) {
        violations.emplace_back("A_II must have non-positive off-diagonal entries");
        i = p;
        break;
      }

  if (tilde_zero) {
    const StateMatrix<Scalar> G = spec.Sigma * spec.Sigma.transpose();
    if (p > 0 && !G.topLeftCorner(p, p).isZero(0))
      violations.emplace_back("Sigma Sigma' must vanish on the non-negative block");
  } else {
    // The sqrt(x_1) regime: only the first coordinate may carry state-driven
    // variance, and none at all without a non-negative coordinate.
    const StateMatrix<Scalar> G = spec.SigmaTilde * spec.SigmaTilde.transpose();
    if (p == 0) {
      if (!G.isZero(0)) violations.emplace_back("SigmaTilde must vanish when p = 0");
    } else {
      bool bad = false;
      for (int k = 1; k < p && !bad; ++k)
        for (int l = 0; l < d; ++l)
          if (G(k, l) != 0 || G(l, k) != 0) {
            bad = true;
            break;
          }
      if (bad) violations.emplace_back("SigmaTilde Sigma~' must vanish on rows/columns 2..p");
    }
  }
  return violations;
}

template <typename Scalar>
struct TransitionMoments {
  StateMatrix<Scalar> F;        // e^{-A delta}
  StateVector<Scalar> offset;   // (I - e^{-A delta}) beta
  StateMatrix<Scalar> Q;        // conditional covariance
};

namespace detail {

// (1 - e^{-s delta}) / s, with the delta-limit when s delta is tiny.
template <typename Scalar>
Scalar decay_integral(Scalar s, Scalar delta) {
  using std::abs;
  using std::expm1;
  const Scalar z = s * delta;
  if (abs(z) < Scalar(1e-8)) return delta * (Scalar(1) - z / 2 + z * z / 6);
  return -expm1(-z) / s;
}

}  // namespace detail

/// Everything about a transition over a fixed step that does not depend on
/// the previous state. moments(x) applies the sqrt(x_1) freeze.
template <typename Scalar>
struct TransitionKernel {
  StateMatrix<Scalar> F;
  StateVector<Scalar> offset;
  StateMatrix<Scalar> decay;       // (1 - e^{-(a_i + a_j) delta}) / (a_i + a_j)
  StateMatrix<Scalar> constant;    // Sigma Sigma'
  StateMatrix<Scalar> cross;       // Sigma SigmaTilde' + SigmaTilde Sigma'
  StateMatrix<Scalar> scaled;      // SigmaTilde SigmaTilde'
  bool state_dependent = false;
  Scalar delta = 0;

  TransitionMoments<Scalar> moments(const StateVector<Scalar>& x_prev) const {
    using std::sqrt;
    TransitionMoments<Scalar> tm{F, offset, {}};
    if (!state_dependent) {
      tm.Q = constant.cwiseProduct(decay);
      return tm;
    }
    const Scalar x1 = std::max<Scalar>(x_prev(0), Scalar(0));
    tm.Q = (constant + sqrt(x1) * cross + x1 * scaled).cwiseProduct(decay);
    return tm;
  }
};

template <typename Scalar>
TransitionKernel<Scalar> make_transition_kernel(const AffineModelSpec<Scalar>& spec, Scalar delta) {
  using std::exp;
  spec.check_dimensions();
  if (!(delta >= 0)) throw Error("transition_moments: step must be non-negative");
  const int d = spec.dim();
  TransitionKernel<Scalar> k;
  k.delta = delta;
  const StateVector<Scalar> alpha = spec.A.diagonal();
  StateVector<Scalar> f(d);
  for (int i = 0; i < d; ++i) f(i) = exp(-alpha(i) * delta);
  k.F = f.asDiagonal();
  k.offset = (StateVector<Scalar>::Ones(d) - f).cwiseProduct(spec.beta);
  k.decay.resize(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) k.decay(i, j) = detail::decay_integral(alpha(i) + alpha(j), delta);
  k.constant = spec.Sigma * spec.Sigma.transpose();
  k.scaled = spec.SigmaTilde * spec.SigmaTilde.transpose();
  k.cross = spec.Sigma * spec.SigmaTilde.transpose() + spec.SigmaTilde * spec.Sigma.transpose();
  k.state_dependent = !spec.SigmaTilde.isZero(0);
  return k;
}

/// Moments of the Gaussian transition over `delta`, with sqrt(x_1) frozen at
/// the floored previous value. Exact when SigmaTilde = 0.
template <typename Scalar>
TransitionMoments<Scalar> transition_moments(const AffineModelSpec<Scalar>& spec,
                                             const StateVector<Scalar>& x_prev, Scalar delta) {
  if (x_prev.size() != spec.dim()) throw DimensionError("transition_moments: x_prev has wrong size");
  return make_transition_kernel(spec, delta).moments(x_prev);
}

/// Riccati data for the bond-price ODEs of this model:
///   SigmaTilde = 0: phi quadratic term a = Gamma restricted to the J block,
///                   all psi equations linear;
///   Sigma = 0:      psi_1 carries the quadratic term Gamma~ = SigmaTilde SigmaTilde',
///                   phi is linear.
template <typename Scalar>
RiccatiParams<Scalar> riccati_params(const AffineModelSpec<Scalar>& spec) {
  spec.check_dimensions();
  const int d = spec.dim();
  auto params = RiccatiParams<Scalar>::zero(d);
  params.b = spec.A * spec.beta;
  params.c = spec.c;
  params.beta = -spec.A;  // beta_i' psi = -(A' psi)_i
  params.gamma = spec.gamma;
  if (spec.gaussian()) {
    StateMatrix<Scalar> G = spec.Sigma * spec.Sigma.transpose();
    G.topRows(spec.p).setZero();
    G.leftCols(spec.p).setZero();
    params.a = G;
  } else {
    params.alpha[0] = spec.SigmaTilde * spec.SigmaTilde.transpose();
  }
  return params;
}

/// Linear-Gaussian observation map y = H x + H0 + v, v ~ N(0, h I).
template <typename Scalar>
struct ObservationMap {
  Matrix<Scalar> H;
  Vector<Scalar> H0;
  Scalar h = 0;
  Vector<Scalar> maturities;

  int observations() const { return static_cast<int>(H0.size()); }
};

template <typename Scalar>
ObservationMap<Scalar> build_observation_map(const AffineModelSpec<Scalar>& spec,
                                             const Vector<Scalar>& maturities,
                                             std::span<const RiccatiSolution<Scalar>> riccati,
                                             Scalar h) {
  spec.check_dimensions();
  const int L = static_cast<int>(maturities.size());
  const int d = spec.dim();
  if (L < 1) throw DimensionError("observation map: need at least one maturity");
  if (static_cast<int>(riccati.size()) != L)
    throw DimensionError("observation map: one Riccati solution per maturity");
  if (!(h > 0)) throw Error("observation map: noise variance must be positive");
  ObservationMap<Scalar> obs;
  obs.H.resize(L, d);
  obs.H0.resize(L);
  obs.h = h;
  obs.maturities = maturities;
  for (int l = 0; l < L; ++l) {
    const Scalar tau = maturities(l);
    if (!(tau > 0)) throw Error("observation map: maturities must be positive");
    if (riccati[l].psi.size() != d) throw DimensionError("observation map: psi has wrong size");
    obs.H.row(l) = -riccati[l].psi.transpose() / tau;
    obs.H0(l) = -riccati[l].phi / tau;
  }
  return obs;
}

/// Solves the model's Riccati system once across all maturities and builds
/// the observation map. Throws RiccatiBlowUp for exploding parameters.
template <typename Scalar>
ObservationMap<Scalar> observation_map_for(const AffineModelSpec<Scalar>& spec,
                                           const Vector<Scalar>& maturities, Scalar h,
                                           const RiccatiOptions& opts = {}) {
  const int L = static_cast<int>(maturities.size());
  std::vector<Scalar> sorted(maturities.data(), maturities.data() + L);
  std::vector<int> order(L);
  for (int l = 0; l < L; ++l) order[l] = l;
  std::sort(order.begin(), order.end(), [&](int i, int j) { return maturities(i) < maturities(j); });
  for (int l = 0; l < L; ++l) sorted[l] = maturities(order[l]);
  for (const Scalar tau : sorted)
    if (!(tau > 0)) throw Error("observation map: maturities must be positive");

  const auto params = riccati_params(spec);
  const auto swept = riccati_sweep<Scalar>(params, StateVector<Scalar>::Zero(spec.dim()),
                                           std::span<const Scalar>(sorted), opts);
  std::vector<RiccatiSolution<Scalar>> by_maturity(L);
  for (int l = 0; l < L; ++l) by_maturity[order[l]] = swept[l];
  return build_observation_map<Scalar>(spec, maturities, by_maturity, h);
}

/// Zero-coupon bond price e^{phi + psi' x} implied by a Riccati solution.
template <typename Scalar, typename D1, typename D2>
Scalar bond_price(Scalar phi, const Eigen::MatrixBase<D1>& psi, const Eigen::MatrixBase<D2>& x) {
  using std::exp;
  return exp(phi + psi.dot(x));
}

/// Zero rate -(phi + psi' x) / tau.
template <typename Scalar, typename D1, typename D2>
Scalar zero_rate(Scalar tau, Scalar phi, const Eigen::MatrixBase<D1>& psi,
                 const Eigen::MatrixBase<D2>& x) {
  return -(phi + psi.dot(x)) / tau;
}

/// Noise-free yields H x + H0.
template <typename Scalar, typename Derived>
Vector<Scalar> yields(const ObservationMap<Scalar>& obs, const Eigen::MatrixBase<Derived>& x) {
  return obs.H * x + obs.H0;
}

}  // namespace kpf
