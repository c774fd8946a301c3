#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "kpf/dense.hpp"
#include "kpf/errors.hpp"
#include "kpf/rng.hpp"

namespace kpf {

/// Compact box D_theta = prod_j [lo_j, hi_j].
template <typename Scalar>
struct ThetaBounds {
  Vector<Scalar> lo;
  Vector<Scalar> hi;

  int dim() const { return static_cast<int>(lo.size()); }

  template <typename Derived>
  bool contains(const Eigen::MatrixBase<Derived>& theta) const {
    if (theta.size() != lo.size()) return false;
    for (Eigen::Index j = 0; j < lo.size(); ++j)
      if (!(theta(j) >= lo(j) && theta(j) <= hi(j))) return false;
    return true;
  }

  void check() const {
    if (lo.size() != hi.size() || lo.size() < 1) throw DimensionError("theta bounds: lo/hi sizes differ");
    if (!(lo.array() <= hi.array()).all()) throw ConfigError("theta bounds: lo must not exceed hi");
  }
};

/// Weighted population; row i of `particles` is theta^(i).
template <typename Scalar>
struct ThetaCloud {
  RowMatrix<Scalar> particles;
  Vector<Scalar> weights;

  int size() const { return static_cast<int>(particles.rows()); }
  int dim() const { return static_cast<int>(particles.cols()); }

  static ThetaCloud uniform(RowMatrix<Scalar> p) {
    ThetaCloud c;
    const auto n = p.rows();
    c.particles = std::move(p);
    c.weights = Vector<Scalar>::Constant(n, n > 0 ? Scalar(1) / Scalar(n) : Scalar(0));
    return c;
  }
};

enum class KernelMode { shrinkage, local };

struct JitterConfig {
  double a = 0.98;
  double V_N = 0;
  double V_f = 0;
  KernelMode mode = KernelMode::shrinkage;

  /// V_f = V_N = 0 is accepted: it switches kernel 2 off entirely.
  void check() const {
    if (!(a > 0 && a < 1)) throw ConfigError("jitter: a must lie in (0, 1)");
    if (!(V_f >= 0 && V_f <= V_N)) throw ConfigError("jitter: need 0 <= V_f <= V_N");
  }
};

template <typename Scalar>
struct CloudMoments {
  Vector<Scalar> mean;
  Matrix<Scalar> cov;
};

template <typename Scalar>
CloudMoments<Scalar> cloud_moments(const ThetaCloud<Scalar>& cloud) {
  const int n = cloud.size();
  const int p = cloud.dim();
  if (n < 1) throw DimensionError("cloud_moments: empty cloud");
  if (cloud.weights.size() != n) throw DimensionError("cloud_moments: one weight per particle");
  CloudMoments<Scalar> m;
  m.mean = cloud.particles.transpose() * cloud.weights;
  if (n == 1) {
    m.cov = Matrix<Scalar>::Zero(p, p);
    return m;
  }
  const RowMatrix<Scalar> centred = cloud.particles.rowwise() - m.mean.transpose();
  m.cov = symmetrized(Matrix<Scalar>(centred.transpose() * cloud.weights.asDiagonal() * centred));
  return m;
}

/// max_j (1 - a^2) Var(theta_j): the quantity compared with V_N.
template <typename Scalar>
Scalar switching_statistic(const Matrix<Scalar>& cov, double a) {
  return Scalar(1 - a * a) * cov.diagonal().maxCoeff();
}

namespace detail {

// Square root of a PSD matrix; tiny negative eigenvalues from round-off are
// clipped, anything larger is reported.
template <typename Scalar>
Matrix<Scalar> psd_sqrt(const Matrix<Scalar>& m) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(symmetrized(m));
  if (eig.info() != Eigen::Success) throw NumericalError("jitter: covariance decomposition failed");
  const auto& values = eig.eigenvalues();
  const Scalar scale = std::max<Scalar>(values.cwiseAbs().maxCoeff(), std::numeric_limits<Scalar>::min());
  if (values.minCoeff() < -Scalar(1e-8) * scale) throw NumericalError("jitter: covariance is not PSD");
  return eig.eigenvectors() * values.cwiseMax(Scalar(0)).cwiseSqrt().asDiagonal();
}

inline constexpr int kMaxBoundRetries = 100;

}  // namespace detail

/// Liu-West shrinkage kernel:
///   theta' ~ N(a theta + (1 - a) mean, (1 - a^2) cov),
/// redrawn up to 100 times when it leaves the box, then clamped.
template <typename Scalar>
RowMatrix<Scalar> jitter_kernel1(const ThetaCloud<Scalar>& cloud, double a, const ThetaBounds<Scalar>& bounds,
                                 const StreamKey& key) {
  if (!(a > 0 && a < 1)) throw ConfigError("jitter: a must lie in (0, 1)");
  const int n = cloud.size();
  const int p = cloud.dim();
  if (bounds.dim() != p) throw DimensionError("jitter: bounds and particles differ in dimension");
  const auto m = cloud_moments(cloud);
  const Matrix<Scalar> root = detail::psd_sqrt<Scalar>(Matrix<Scalar>(Scalar(1 - a * a) * m.cov));
  RowMatrix<Scalar> out(n, p);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    auto rng = key.stream(static_cast<std::uint64_t>(i), StreamPurpose::jitter);
    std::normal_distribution<Scalar> normal;
    const Vector<Scalar> centre = Scalar(a) * cloud.particles.row(i).transpose() + Scalar(1 - a) * m.mean;
    Vector<Scalar> z(p), draw(p);
    for (int attempt = 0; attempt < detail::kMaxBoundRetries; ++attempt) {
      for (int j = 0; j < p; ++j) z(j) = normal(rng);
      draw = centre + root * z;
      if (bounds.contains(draw)) break;
    }
    out.row(i) = draw.cwiseMax(bounds.lo).cwiseMin(bounds.hi).transpose();
  }
  return out;
}

/// Per-coordinate kernel-2 variance: (1 - a^2) Var(theta_j) clamped to [V_f, V_N].
template <typename Scalar>
Vector<Scalar> kernel2_variance(const Matrix<Scalar>& cov, const JitterConfig& jc) {
  return (Scalar(1 - jc.a * jc.a) * cov.diagonal()).cwiseMax(Scalar(jc.V_f)).cwiseMin(Scalar(jc.V_N));
}

/// Local kernel: theta' ~ N(theta, diag(variance)), each coordinate redrawn
/// up to 100 times when it leaves its interval, then clamped.
template <typename Scalar>
RowMatrix<Scalar> jitter_kernel2(const ThetaCloud<Scalar>& cloud, const Vector<Scalar>& variance,
                                 const ThetaBounds<Scalar>& bounds, const StreamKey& key) {
  using std::sqrt;
  const int n = cloud.size();
  const int p = cloud.dim();
  if (bounds.dim() != p || variance.size() != p) throw DimensionError("jitter: dimensions disagree");
  const Vector<Scalar> sd = variance.cwiseMax(Scalar(0)).cwiseSqrt();
  RowMatrix<Scalar> out = cloud.particles;
  if (sd.isZero(0)) return out;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    auto rng = key.stream(static_cast<std::uint64_t>(i), StreamPurpose::jitter);
    std::normal_distribution<Scalar> normal;
    for (int j = 0; j < p; ++j) {
      const Scalar centre = cloud.particles(i, j);
      Scalar draw = centre;
      for (int attempt = 0; attempt < detail::kMaxBoundRetries; ++attempt) {
        draw = centre + sd(j) * normal(rng);
        if (draw >= bounds.lo(j) && draw <= bounds.hi(j)) break;
      }
      out(i, j) = std::clamp(draw, bounds.lo(j), bounds.hi(j));
    }
  }
  return out;
}

template <typename Scalar>
RowMatrix<Scalar> jitter_kernel2(const ThetaCloud<Scalar>& cloud, const JitterConfig& jc,
                                 const ThetaBounds<Scalar>& bounds, const StreamKey& key) {
  return jitter_kernel2(cloud, kernel2_variance(cloud_moments(cloud).cov, jc), bounds, key);
}

/// exp(l_i - max) / sum_j exp(l_j - max). NaN counts as -inf.
template <typename Scalar>
Vector<Scalar> normalize_log_weights(const Vector<Scalar>& loglik) {
  using std::exp;
  using std::isnan;
  Scalar top = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index i = 0; i < loglik.size(); ++i)
    if (!isnan(loglik(i))) top = std::max(top, loglik(i));
  if (!(top > -std::numeric_limits<Scalar>::infinity()))
    throw WeightDegeneracy("normalize_log_weights: every log-likelihood is -inf");
  if (top == std::numeric_limits<Scalar>::infinity())
    throw WeightDegeneracy("normalize_log_weights: a log-likelihood is +inf");
  Vector<Scalar> w(loglik.size());
  for (Eigen::Index i = 0; i < loglik.size(); ++i) w(i) = isnan(loglik(i)) ? Scalar(0) : exp(loglik(i) - top);
  return w / w.sum();
}

/// log (1/n) sum exp(l_i), stable; -inf when every entry is -inf.
template <typename Scalar>
Scalar log_mean_exp(const Vector<Scalar>& l) {
  using std::exp;
  using std::log;
  if (l.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar top = l.maxCoeff();
  if (!(top > -std::numeric_limits<Scalar>::infinity())) return top;
  return top + log((l.array() - top).exp().sum() / Scalar(l.size()));
}

namespace detail {

template <typename Scalar>
void check_weights(const Vector<Scalar>& w) {
  using std::abs;
  if (w.size() == 0) throw Error("resample: empty weight vector");
  if (!w.allFinite() || (w.array() < 0).any()) throw Error("resample: weights must be finite and non-negative");
  if (abs(w.sum() - Scalar(1)) > Scalar(1e-9)) throw Error("resample: weights must sum to one");
}

// Maps sorted positions in [0, 1) to indices through the weight CDF.
template <typename Scalar>
std::vector<int> invert_sorted(const Vector<Scalar>& w, const std::vector<Scalar>& sorted_u) {
  std::vector<int> idx(sorted_u.size());
  const int n = static_cast<int>(w.size());
  int j = 0;
  Scalar cdf = w(0);
  for (std::size_t k = 0; k < sorted_u.size(); ++k) {
    while (sorted_u[k] >= cdf && j < n - 1) cdf += w(++j);
    idx[k] = j;
  }
  // Zero-weight tail entries are never selected, even after round-off.
  for (auto& i : idx)
    while (w(i) == 0 && i > 0) --i;
  return idx;
}

}  // namespace detail

/// n_out i.i.d. categorical draws, O(N + n_out) via sorted uniforms built
/// from exponential spacings.
template <typename Scalar>
std::vector<int> resample_multinomial(const Vector<Scalar>& weights, int n_out, Xoshiro256& rng) {
  using std::log;
  if (n_out < 0) throw Error("resample: negative output size");
  if (n_out == 0) return {};
  detail::check_weights(weights);
  std::exponential_distribution<Scalar> expo(1);
  std::vector<Scalar> u(n_out);
  Scalar total = 0;
  for (int k = 0; k < n_out; ++k) {
    total += expo(rng);
    u[k] = total;
  }
  total += expo(rng);
  for (auto& v : u) v /= total;
  return detail::invert_sorted(weights, u);
}

/// Systematic resampling: one uniform offset, evenly spaced positions.
template <typename Scalar>
std::vector<int> resample_systematic(const Vector<Scalar>& weights, int n_out, Xoshiro256& rng) {
  if (n_out < 0) throw Error("resample: negative output size");
  if (n_out == 0) return {};
  detail::check_weights(weights);
  std::uniform_real_distribution<Scalar> unif(0, 1);
  const Scalar offset = unif(rng);
  std::vector<Scalar> u(n_out);
  for (int k = 0; k < n_out; ++k) u[k] = (Scalar(k) + offset) / Scalar(n_out);
  return detail::invert_sorted(weights, u);
}

template <typename Scalar>
struct InnerStepResult {
  Scalar log_marginal = 0;  // log (1/M) sum_j l(x_hat_j)
};

/// One bootstrap step of the inner filter, in place on `particles` (row j is
/// x^(j), equally weighted on entry and exit): propagate with `sample`,
/// weight with `loglik`, estimate the marginal likelihood, resample.
template <typename Scalar, typename Sampler, typename LogLik>
InnerStepResult<Scalar> pf_inner_step(Eigen::Ref<RowMatrix<Scalar>> particles, Sampler&& sample, LogLik&& loglik,
                                      Xoshiro256& rng) {
  using std::log;
  const int m = static_cast<int>(particles.rows());
  if (m < 1) throw Error("pf_inner_step: need at least one particle");
  RowMatrix<Scalar> proposed(m, particles.cols());
  Vector<Scalar> l(m);
  for (int j = 0; j < m; ++j) {
    proposed.row(j) = sample(particles.row(j), rng);
    l(j) = loglik(proposed.row(j));
  }
  const Scalar top = l.maxCoeff();
  if (!(top > -std::numeric_limits<Scalar>::infinity()))
    throw WeightDegeneracy("pf_inner_step: every inner particle has zero likelihood");
  if (top == std::numeric_limits<Scalar>::infinity())
    throw WeightDegeneracy("pf_inner_step: an inner log-likelihood is +inf");
  const Vector<Scalar> scaled = (l.array() - top).exp();
  const Scalar total = scaled.sum();
  InnerStepResult<Scalar> out;
  out.log_marginal = top + log(total / Scalar(m));
  const auto idx = resample_multinomial(Vector<Scalar>(scaled / total), m, rng);
  for (int j = 0; j < m; ++j) particles.row(j) = proposed.row(idx[j]);
  return out;
}

}  // namespace kpf
