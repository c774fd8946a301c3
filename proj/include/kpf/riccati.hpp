#pragma once

// Generalised Riccati systems
//
//   dphi/dt   = 1/2 psi' a psi + b' psi - c,                 phi(0) = 0
//   dpsi_i/dt = 1/2 psi' alpha_i psi + beta_i' psi - gamma_i, psi(0) = u
//
// solved by a truncated Taylor series on short substeps, chained through
//   phi(T, u) = sum_i phi(D_i, u_{i-1}),   psi(T, u) = psi(D_n, u_{n-1}),
// with u_i = psi(D_i, u_{i-1}).

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "kpf/dense.hpp"
#include "kpf/errors.hpp"

namespace kpf {

template <typename Scalar>
struct RiccatiParams {
  StateMatrix<Scalar> a;                    // phi quadratic term
  StateVector<Scalar> b;                    // phi linear term
  Scalar c = 0;                             // phi constant
  std::vector<StateMatrix<Scalar>> alpha;   // psi_i quadratic terms, one per i
  StateMatrix<Scalar> beta;                 // column i is beta_i
  StateVector<Scalar> gamma;                // psi constants

  int dim() const { return static_cast<int>(b.size()); }

  static RiccatiParams zero(int d) {
    RiccatiParams p;
    p.a = StateMatrix<Scalar>::Zero(d, d);
    p.b = StateVector<Scalar>::Zero(d);
    p.alpha.assign(d, StateMatrix<Scalar>::Zero(d, d));
    p.beta = StateMatrix<Scalar>::Zero(d, d);
    p.gamma = StateVector<Scalar>::Zero(d);
    return p;
  }

  void check() const {
    const int d = dim();
    if (d < 1 || d > kMaxState) throw DimensionError("riccati: dimension out of range");
    if (a.rows() != d || a.cols() != d || beta.rows() != d || beta.cols() != d ||
        gamma.size() != d || static_cast<int>(alpha.size()) != d)
      throw DimensionError("riccati: parameter shapes disagree");
    for (const auto& m : alpha)
      if (m.rows() != d || m.cols() != d) throw DimensionError("riccati: alpha_i must be d x d");
  }
};

template <typename Scalar>
struct RiccatiSolution {
  Scalar phi = 0;
  StateVector<Scalar> psi;
  Scalar horizon = 0;
  Scalar tol = 0;  // per-substep truncation target that was in force
};

struct RiccatiOptions {
  int order = 10;
  double tol = 1e-12;
  double min_step = 1e-6;
  double max_step = 0.5;
  double blowup = 1e12;
};

template <typename Scalar>
struct TaylorCoefficients {
  std::vector<Scalar> C;               // phi coefficients, C[0..N]
  std::vector<StateVector<Scalar>> D;  // psi coefficients, D[0..N]
};

namespace detail {

// Flat copies of the parameters plus coefficient storage; row n of D sits at
// offset n * d. alpha_i D_n and a D_n are cached so each new order costs O(k d^2).
// Only the symmetric part of a quadratic term enters the forms, so the
// matrices are symmetrized once here.
template <typename Scalar>
struct TaylorWorkspace {
  int d = 0;
  int order = 0;
  std::vector<Scalar> C, D, inverse;
  std::vector<Scalar> beta_rows;    // row i is beta_i
  std::vector<Scalar> b, gamma;
  Scalar c = 0;
  std::vector<int> active;          // indices i with alpha_i != 0
  std::vector<Scalar> alpha_flat;   // one symmetric d x d block per active i
  std::vector<Scalar> alpha_D;      // one (order+1) x d block per active i
  bool a_active = false;
  std::vector<Scalar> a_flat, a_D;

  TaylorWorkspace(const RiccatiParams<Scalar>& p, int n) : d(p.dim()), order(n) {
    C.assign(order + 1, Scalar(0));
    D.assign((order + 1) * d, Scalar(0));
    for (int k = 0; k < order; ++k) inverse.push_back(Scalar(1) / Scalar(k + 1));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) beta_rows.push_back(p.beta(j, i));
    b.assign(p.b.data(), p.b.data() + d);
    gamma.assign(p.gamma.data(), p.gamma.data() + d);
    c = p.c;
    auto push_symmetric = [&](const StateMatrix<Scalar>& m, std::vector<Scalar>& dst) {
      for (int r = 0; r < d; ++r)
        for (int q = 0; q < d; ++q) dst.push_back(Scalar(0.5) * (m(r, q) + m(q, r)));
    };
    for (int i = 0; i < d; ++i)
      if (!p.alpha[i].isZero(0)) {
        active.push_back(i);
        push_symmetric(p.alpha[i], alpha_flat);
      }
    alpha_D.assign(active.size() * (order + 1) * d, Scalar(0));
    a_active = !p.a.isZero(0);
    if (a_active) {
      push_symmetric(p.a, a_flat);
      a_D.assign((order + 1) * d, Scalar(0));
    }
  }

  const Scalar* row(int n) const { return D.data() + n * d; }
  StateVector<Scalar> coefficient(int n) const {
    return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(row(n), d);
  }
};

template <int Dim, typename Scalar>
inline Scalar dot_n(const Scalar* x, const Scalar* y, int d) {
  const int n = Dim > 0 ? Dim : d;
  Scalar s = 0;
  for (int j = 0; j < n; ++j) s += x[j] * y[j];
  return s;
}

template <int Dim, typename Scalar>
inline void matvec_n(const Scalar* m, const Scalar* x, Scalar* out, int d) {
  const int n = Dim > 0 ? Dim : d;
  for (int r = 0; r < n; ++r) out[r] = dot_n<Dim>(m + r * n, x, d);
}

// sum_{n=0..k} D_{k-n}' M D_n for symmetric M, folded onto n <= k/2.
template <int Dim, typename Scalar>
inline Scalar convolve_quadratic(const Scalar* D, const Scalar* MD, int k, int d) {
  const int n_dim = Dim > 0 ? Dim : d;
  Scalar s = 0;
  for (int n = 0; 2 * n < k; ++n) s += dot_n<Dim>(D + (k - n) * n_dim, MD + n * n_dim, d);
  s *= 2;
  if (k % 2 == 0) s += dot_n<Dim>(D + (k / 2) * n_dim, MD + (k / 2) * n_dim, d);
  return s;
}

// Fills ws.C / ws.D up to ws.order for initial value u. Dim > 0 fixes the
// state dimension at compile time.
template <int Dim, typename Scalar>
void fill_taylor_fixed(const Scalar* u, TaylorWorkspace<Scalar>& ws) {
  const int d = Dim > 0 ? Dim : ws.d;
  const int order = ws.order;
  const int n_active = static_cast<int>(ws.active.size());
  const int block = (order + 1) * d;
  Scalar* __restrict D = ws.D.data();
  Scalar* __restrict C = ws.C.data();
  Scalar* __restrict alpha_D = ws.alpha_D.data();
  Scalar* __restrict a_D = ws.a_D.data();
  const Scalar* alpha = ws.alpha_flat.data();
  const Scalar* a = ws.a_flat.data();
  const Scalar* beta = ws.beta_rows.data();
  const Scalar* b = ws.b.data();
  const bool a_active = ws.a_active;

  auto cache_products = [&](int n) {
    const Scalar* dn = D + n * d;
    for (int m = 0; m < n_active; ++m) matvec_n<Dim>(alpha + m * d * d, dn, alpha_D + m * block + n * d, d);
    if (a_active) matvec_n<Dim>(a, dn, a_D + n * d, d);
  };
  C[0] = 0;
  for (int j = 0; j < d; ++j) D[j] = u[j];
  cache_products(0);
  for (int k = 0; k < order; ++k) {
    const Scalar inv = ws.inverse[k];
    const Scalar* dk = D + k * d;
    // Order k+1 from orders 0..k; the k = 0 case carries the constants.
    Scalar next_c = dot_n<Dim>(b, dk, d);
    if (a_active) next_c += Scalar(0.5) * convolve_quadratic<Dim>(D, a_D, k, d);
    if (k == 0) next_c -= ws.c;
    C[k + 1] = inv * next_c;

    Scalar* next = D + (k + 1) * d;
    for (int i = 0; i < d; ++i) next[i] = dot_n<Dim>(beta + i * d, dk, d);
    for (int m = 0; m < n_active; ++m)
      next[ws.active[m]] += Scalar(0.5) * convolve_quadratic<Dim>(D, alpha_D + m * block, k, d);
    if (k == 0)
      for (int i = 0; i < d; ++i) next[i] -= ws.gamma[i];
    for (int i = 0; i < d; ++i) next[i] *= inv;
    cache_products(k + 1);
  }
}

template <typename Scalar>
void fill_taylor(const Scalar* u, TaylorWorkspace<Scalar>& ws) {
  switch (ws.d) {
    case 1: fill_taylor_fixed<1>(u, ws); break;
    case 2: fill_taylor_fixed<2>(u, ws); break;
    case 3: fill_taylor_fixed<3>(u, ws); break;
    default: fill_taylor_fixed<-1>(u, ws); break;
  }
}

// max(|C_k|, |D_k|_inf)
template <typename Scalar>
Scalar max_abs_coefficient(const TaylorWorkspace<Scalar>& ws, int k) {
  using std::abs;
  Scalar m = abs(ws.C[k]);
  const Scalar* dk = ws.row(k);
  for (int j = 0; j < ws.d; ++j) m = std::max<Scalar>(m, abs(dk[j]));
  return m;
}

}  // namespace detail

/// Taylor coefficients of (phi, psi) around t = 0 for initial value u.
template <typename Scalar>
TaylorCoefficients<Scalar> taylor_coeffs(const RiccatiParams<Scalar>& params,
                                         const StateVector<Scalar>& u, int order) {
  params.check();
  if (order < 1) throw Error("taylor_coeffs: order must be at least 1");
  if (u.size() != params.dim()) throw DimensionError("taylor_coeffs: u has wrong size");
  detail::TaylorWorkspace<Scalar> ws(params, order);
  detail::fill_taylor(u.data(), ws);
  TaylorCoefficients<Scalar> out{ws.C, {}};
  for (int n = 0; n <= order; ++n) out.D.push_back(ws.coefficient(n));
  return out;
}

/// Solves to every horizon in `horizons` (sorted ascending, >= 0) in one
/// sweep. Each horizon becomes a substep boundary.
template <typename Scalar>
std::vector<RiccatiSolution<Scalar>> riccati_sweep(const RiccatiParams<Scalar>& params,
                                                   const StateVector<Scalar>& u,
                                                   std::span<const Scalar> horizons,
                                                   const RiccatiOptions& opts = {}) {
  using std::abs;
  using std::isfinite;
  using std::pow;
  params.check();
  if (u.size() != params.dim()) throw DimensionError("riccati: u has wrong size");
  if (!(opts.tol > 0)) throw Error("riccati: tolerance must be positive");
  if (opts.order < 1) throw Error("riccati: order must be at least 1");
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (!(horizons[i] >= 0)) throw Error("riccati: horizon must be non-negative");
    if (i > 0 && horizons[i] < horizons[i - 1]) throw Error("riccati: horizons must be sorted");
  }

  const int order = opts.order;
  detail::TaylorWorkspace<Scalar> ws(params, order);
  std::vector<RiccatiSolution<Scalar>> out;
  out.reserve(horizons.size());

  const int d = params.dim();
  // (tol / last)^(1/order) lands on a clamp exactly when last passes these.
  const Scalar max_step_threshold = Scalar(opts.tol) / pow(Scalar(opts.max_step), Scalar(order));
  const Scalar min_step_threshold = Scalar(opts.tol) / pow(Scalar(opts.min_step), Scalar(order));
  Scalar t = 0;
  Scalar phi = 0;
  std::vector<Scalar> current(u.data(), u.data() + d);
  for (const Scalar target : horizons) {
    while (t < target) {
      detail::fill_taylor(current.data(), ws);
      Scalar largest = 0;
      for (int k = 1; k <= order; ++k) largest = std::max(largest, abs(ws.C[k]));
      for (int j = d; j < (order + 1) * d; ++j) largest = std::max(largest, abs(ws.D[j]));
      if (!(largest <= opts.blowup)) throw RiccatiBlowUp("riccati: Taylor coefficients exceed blow-up guard");
      const Scalar last = detail::max_abs_coefficient(ws, order);

      Scalar step;
      if (last <= max_step_threshold)
        step = Scalar(opts.max_step);
      else if (last >= min_step_threshold)
        step = Scalar(opts.min_step);
      else
        step = pow(Scalar(opts.tol) / last, Scalar(1) / order);
      const Scalar remaining = target - t;
      // Snap to the boundary rather than leave a sliver substep behind.
      if (step >= remaining * Scalar(1 - 1e-12)) step = remaining;

      Scalar dphi = ws.C[order];
      for (int j = 0; j < d; ++j) current[j] = ws.row(order)[j];
      for (int k = order - 1; k >= 0; --k) {
        dphi = dphi * step + ws.C[k];
        const Scalar* dk = ws.row(k);
        for (int j = 0; j < d; ++j) current[j] = current[j] * step + dk[j];
      }
      phi += dphi;
      t = (step == remaining) ? target : t + step;
      bool finite = isfinite(phi);
      for (int j = 0; j < d; ++j) finite = finite && isfinite(current[j]);
      if (!finite) throw RiccatiBlowUp("riccati: solution is not finite");
    }
    RiccatiSolution<Scalar> sol{phi, StateVector<Scalar>(d), target, Scalar(opts.tol)};
    for (int j = 0; j < d; ++j) sol.psi(j) = current[j];
    out.push_back(std::move(sol));
  }
  return out;
}

inline constexpr int kRiccatiLanes = 8;

/// Per-parameter-set result of a batched sweep. ok = false means the
/// solution blew up before the last horizon; `at` is then empty.
template <typename Scalar>
struct RiccatiBatchSolution {
  bool ok = true;
  std::vector<RiccatiSolution<Scalar>> at;
};

namespace detail {

// Lane-major storage: element (row, lane) at row * kRiccatiLanes + lane.
template <typename Scalar>
struct LaneWorkspace {
  static constexpr int L = kRiccatiLanes;
  int d = 0;
  int order = 0;
  std::vector<Scalar> C, D, inverse;
  std::vector<Scalar> beta_rows, b, gamma, c;
  std::vector<int> active;
  std::vector<Scalar> alpha_sym, alpha_D;
  bool a_active = false;
  std::vector<Scalar> a_sym, a_D;

  LaneWorkspace(std::span<const RiccatiParams<Scalar>* const> lanes, int n) : d(lanes[0]->dim()), order(n) {
    C.assign((order + 1) * L, Scalar(0));
    D.assign((order + 1) * d * L, Scalar(0));
    for (int k = 0; k < order; ++k) inverse.push_back(Scalar(1) / Scalar(k + 1));
    beta_rows.assign(d * d * L, Scalar(0));
    b.assign(d * L, Scalar(0));
    gamma.assign(d * L, Scalar(0));
    c.assign(L, Scalar(0));
    for (int l = 0; l < L; ++l) {
      const auto& p = *lanes[l];
      for (int i = 0; i < d; ++i) {
        b[i * L + l] = p.b(i);
        gamma[i * L + l] = p.gamma(i);
        for (int j = 0; j < d; ++j) beta_rows[(i * d + j) * L + l] = p.beta(j, i);
      }
      c[l] = p.c;
    }
    // A quadratic term is active when any lane carries it.
    for (int i = 0; i < d; ++i)
      for (int l = 0; l < L; ++l)
        if (!lanes[l]->alpha[i].isZero(0)) {
          active.push_back(i);
          break;
        }
    for (int l = 0; l < L; ++l) a_active = a_active || !lanes[l]->a.isZero(0);
    auto symmetric = [&](auto pick, std::vector<Scalar>& dst, int offset) {
      for (int l = 0; l < L; ++l) {
        const StateMatrix<Scalar>& m = pick(*lanes[l]);
        for (int r = 0; r < d; ++r)
          for (int q = 0; q < d; ++q) dst[(offset + r * d + q) * L + l] = Scalar(0.5) * (m(r, q) + m(q, r));
      }
    };
    const int n_active = static_cast<int>(active.size());
    alpha_sym.assign(n_active * d * d * L, Scalar(0));
    alpha_D.assign(n_active * (order + 1) * d * L, Scalar(0));
    for (int m = 0; m < n_active; ++m) {
      const int i = active[m];
      symmetric([i](const RiccatiParams<Scalar>& p) -> const StateMatrix<Scalar>& { return p.alpha[i]; },
                alpha_sym, m * d * d);
    }
    if (a_active) {
      a_sym.assign(d * d * L, Scalar(0));
      a_D.assign((order + 1) * d * L, Scalar(0));
      symmetric([](const RiccatiParams<Scalar>& p) -> const StateMatrix<Scalar>& { return p.a; }, a_sym, 0);
    }
  }
};

template <int Dim, typename Scalar>
void fill_taylor_lanes(const Scalar* u, LaneWorkspace<Scalar>& ws) {
  constexpr int L = kRiccatiLanes;
  const int d = Dim > 0 ? Dim : ws.d;
  const int order = ws.order;
  const int n_active = static_cast<int>(ws.active.size());
  const int block = (order + 1) * d;
  Scalar* __restrict D = ws.D.data();
  Scalar* __restrict C = ws.C.data();
  Scalar* __restrict alpha_D = ws.alpha_D.data();
  Scalar* __restrict a_D = ws.a_D.data();
  const Scalar* alpha = ws.alpha_sym.data();
  const Scalar* a = ws.a_sym.data();
  const Scalar* beta = ws.beta_rows.data();
  const Scalar* b = ws.b.data();

  // out[r] = M x over lanes; M is d x d lane-major, x and out are d rows.
  auto matvec = [&](const Scalar* M, const Scalar* x, Scalar* out) {
    for (int r = 0; r < d; ++r) {
      Scalar acc[L] = {};
      for (int q = 0; q < d; ++q)
        for (int l = 0; l < L; ++l) acc[l] += M[(r * d + q) * L + l] * x[q * L + l];
      for (int l = 0; l < L; ++l) out[r * L + l] = acc[l];
    }
  };
  // sum_{n=0..k} D_{k-n}' M D_n, folded onto n <= k/2.
  auto convolve = [&](const Scalar* MD, int k, Scalar* out) {
    Scalar acc[L] = {};
    for (int n = 0; 2 * n < k; ++n)
      for (int j = 0; j < d; ++j)
        for (int l = 0; l < L; ++l) acc[l] += D[((k - n) * d + j) * L + l] * MD[(n * d + j) * L + l];
    for (int l = 0; l < L; ++l) acc[l] *= 2;
    if (k % 2 == 0)
      for (int j = 0; j < d; ++j)
        for (int l = 0; l < L; ++l) acc[l] += D[((k / 2) * d + j) * L + l] * MD[((k / 2) * d + j) * L + l];
    for (int l = 0; l < L; ++l) out[l] = acc[l];
  };
  auto cache_products = [&](int n) {
    for (int m = 0; m < n_active; ++m)
      matvec(alpha + m * d * d * L, D + n * d * L, alpha_D + (m * block + n * d) * L);
    if (ws.a_active) matvec(a, D + n * d * L, a_D + n * d * L);
  };

  for (int l = 0; l < L; ++l) C[l] = 0;
  for (int j = 0; j < d * L; ++j) D[j] = u[j];
  cache_products(0);
  for (int k = 0; k < order; ++k) {
    const Scalar inv = ws.inverse[k];
    const Scalar* dk = D + k * d * L;
    Scalar quad[L];
    Scalar next_c[L] = {};
    for (int j = 0; j < d; ++j)
      for (int l = 0; l < L; ++l) next_c[l] += b[j * L + l] * dk[j * L + l];
    if (ws.a_active) {
      convolve(a_D, k, quad);
      for (int l = 0; l < L; ++l) next_c[l] += Scalar(0.5) * quad[l];
    }
    if (k == 0)
      for (int l = 0; l < L; ++l) next_c[l] -= ws.c[l];
    for (int l = 0; l < L; ++l) C[(k + 1) * L + l] = inv * next_c[l];

    Scalar* next = D + (k + 1) * d * L;
    matvec(beta, dk, next);
    for (int m = 0; m < n_active; ++m) {
      convolve(alpha_D + m * block * L, k, quad);
      const int i = ws.active[m];
      for (int l = 0; l < L; ++l) next[i * L + l] += Scalar(0.5) * quad[l];
    }
    if (k == 0)
      for (int j = 0; j < d * L; ++j) next[j] -= ws.gamma[j];
    for (int j = 0; j < d * L; ++j) next[j] *= inv;
    cache_products(k + 1);
  }
}

template <int Dim, typename Scalar>
void sweep_lanes(std::span<const RiccatiParams<Scalar>* const> lanes, const StateVector<Scalar>& u,
                 std::span<const Scalar> horizons, const RiccatiOptions& opts,
                 std::span<RiccatiBatchSolution<Scalar>> out) {
  using std::abs;
  using std::isfinite;
  using std::pow;
  constexpr int L = kRiccatiLanes;
  const int d = Dim > 0 ? Dim : lanes[0]->dim();
  const int order = opts.order;
  LaneWorkspace<Scalar> ws(lanes, order);
  const Scalar max_step_threshold = Scalar(opts.tol) / pow(Scalar(opts.max_step), Scalar(order));
  const Scalar min_step_threshold = Scalar(opts.tol) / pow(Scalar(opts.min_step), Scalar(order));

  std::vector<Scalar> current(d * L);
  for (int j = 0; j < d; ++j)
    for (int l = 0; l < L; ++l) current[j * L + l] = u(j);
  Scalar phi[L] = {};
  bool alive[L];
  for (int l = 0; l < L; ++l) alive[l] = true;
  const int n_out = static_cast<int>(out.size());
  for (int l = 0; l < n_out; ++l) {
    out[l].ok = true;
    out[l].at.clear();
    out[l].at.reserve(horizons.size());
  }

  Scalar t = 0;
  for (const Scalar target : horizons) {
    while (t < target) {
      fill_taylor_lanes<Dim>(current.data(), ws);
      Scalar step = Scalar(opts.max_step);
      bool any_alive = false;
      for (int l = 0; l < L; ++l) {
        if (!alive[l]) continue;
        Scalar largest = 0;
        Scalar last = abs(ws.C[order * L + l]);
        for (int k = 1; k <= order; ++k) largest = std::max(largest, abs(ws.C[k * L + l]));
        for (int j = d; j < (order + 1) * d; ++j) largest = std::max(largest, abs(ws.D[j * L + l]));
        for (int j = 0; j < d; ++j) last = std::max(last, abs(ws.D[(order * d + j) * L + l]));
        if (!(largest <= opts.blowup)) {
          alive[l] = false;
          continue;
        }
        any_alive = true;
        Scalar lane_step;
        if (last <= max_step_threshold)
          lane_step = Scalar(opts.max_step);
        else if (last >= min_step_threshold)
          lane_step = Scalar(opts.min_step);
        else
          lane_step = pow(Scalar(opts.tol) / last, Scalar(1) / order);
        step = std::min(step, lane_step);
      }
      if (!any_alive) break;
      step = std::max(step, Scalar(opts.min_step));
      const Scalar remaining = target - t;
      if (step >= remaining * Scalar(1 - 1e-12)) step = remaining;

      Scalar dphi[L];
      for (int l = 0; l < L; ++l) dphi[l] = ws.C[order * L + l];
      for (int j = 0; j < d * L; ++j) current[j] = ws.D[order * d * L + j];
      for (int k = order - 1; k >= 0; --k) {
        for (int l = 0; l < L; ++l) dphi[l] = dphi[l] * step + ws.C[k * L + l];
        for (int j = 0; j < d * L; ++j) current[j] = current[j] * step + ws.D[k * d * L + j];
      }
      for (int l = 0; l < L; ++l) {
        phi[l] += dphi[l];
        bool finite = isfinite(phi[l]);
        for (int j = 0; j < d; ++j) finite = finite && isfinite(current[j * L + l]);
        if (!finite) alive[l] = false;
        // A dead lane is parked at zero so it cannot poison the shared step.
        if (!alive[l]) {
          phi[l] = 0;
          for (int j = 0; j < d; ++j) current[j * L + l] = 0;
        }
      }
      t = (step == remaining) ? target : t + step;
    }
    for (int l = 0; l < n_out; ++l) {
      if (!alive[l]) continue;
      RiccatiSolution<Scalar> sol{phi[l], StateVector<Scalar>(d), target, Scalar(opts.tol)};
      for (int j = 0; j < d; ++j) sol.psi(j) = current[j * L + l];
      out[l].at.push_back(std::move(sol));
    }
    t = target;
  }
  for (int l = 0; l < n_out; ++l)
    if (!alive[l]) {
      out[l].ok = false;
      out[l].at.clear();
    }
}

}  // namespace detail

/// Solves many parameter sets (same dimension) from the same u to the same
/// sorted horizons. Sets are advanced kRiccatiLanes at a time on a shared
/// substep, the smallest any set in the group asks for. Blow-ups are reported
/// per set instead of thrown.
template <typename Scalar>
std::vector<RiccatiBatchSolution<Scalar>> riccati_sweep_batch(std::span<const RiccatiParams<Scalar>* const> params,
                                                              const StateVector<Scalar>& u,
                                                              std::span<const Scalar> horizons,
                                                              const RiccatiOptions& opts = {}) {
  std::vector<RiccatiBatchSolution<Scalar>> out(params.size());
  if (params.empty()) return out;
  const int d = params[0]->dim();
  for (const auto* p : params) {
    p->check();
    if (p->dim() != d) throw DimensionError("riccati: batched parameter sets must share a dimension");
  }
  if (u.size() != d) throw DimensionError("riccati: u has wrong size");
  if (!(opts.tol > 0)) throw Error("riccati: tolerance must be positive");
  if (opts.order < 1) throw Error("riccati: order must be at least 1");
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (!(horizons[i] >= 0)) throw Error("riccati: horizon must be non-negative");
    if (i > 0 && horizons[i] < horizons[i - 1]) throw Error("riccati: horizons must be sorted");
  }

  const RiccatiParams<Scalar>* lanes[kRiccatiLanes];
  for (std::size_t first = 0; first < params.size(); first += kRiccatiLanes) {
    const std::size_t count = std::min<std::size_t>(kRiccatiLanes, params.size() - first);
    // Short groups are padded with copies of their last member.
    for (std::size_t l = 0; l < kRiccatiLanes; ++l) lanes[l] = params[first + std::min(l, count - 1)];
    const std::span<const RiccatiParams<Scalar>* const> group(lanes, kRiccatiLanes);
    const std::span<RiccatiBatchSolution<Scalar>> dst(out.data() + first, count);
    switch (d) {
      case 1: detail::sweep_lanes<1>(group, u, horizons, opts, dst); break;
      case 2: detail::sweep_lanes<2>(group, u, horizons, opts, dst); break;
      case 3: detail::sweep_lanes<3>(group, u, horizons, opts, dst); break;
      default: detail::sweep_lanes<-1>(group, u, horizons, opts, dst); break;
    }
  }
  return out;
}

/// (phi, psi) at a single horizon. horizon = 0 returns (0, u) untouched.
template <typename Scalar>
RiccatiSolution<Scalar> riccati_solve(const RiccatiParams<Scalar>& params,
                                      const StateVector<Scalar>& u, Scalar horizon,
                                      const RiccatiOptions& opts = {}) {
  const Scalar h[1] = {horizon};
  return riccati_sweep<Scalar>(params, u, std::span<const Scalar>(h, 1), opts).front();
}

}  // namespace kpf
