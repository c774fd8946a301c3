#include "kpf/simkit.hpp"

#include <cmath>
#include <random>

#include "kpf/errors.hpp"

namespace kpf {

double ObservationSeries::max_step() const {
  double m = 0;
  for (int k = 0; k < steps(); ++k) m = std::max(m, step_size(k));
  return m;
}

void ObservationSeries::check() const {
  if (maturities.size() < 1) throw DimensionError("series: need at least one maturity");
  if (y.rows() != times.size() || y.cols() != maturities.size())
    throw DimensionError("series: y must be steps x maturities");
  for (int k = 1; k < steps(); ++k)
    if (!(times(k) > times(k - 1))) throw ConfigError("series: times must be strictly increasing");
  for (int l = 0; l < observations(); ++l)
    if (!(maturities(l) > 0)) throw ConfigError("series: maturities must be positive");
  if (!(h >= 0)) throw ConfigError("series: noise variance must be non-negative");
}

Vector<double> regular_times(int K, double delta, double t0) {
  if (K < 0 || !(delta > 0)) throw ConfigError("regular_times: need K >= 0 and delta > 0");
  Vector<double> t(K);
  for (int k = 0; k < K; ++k) t(k) = t0 + (k + 1) * delta;
  return t;
}

double sample_noncentral_chi2(double dof, double noncentrality, Xoshiro256& rng) {
  if (!(dof >= 0) || !(noncentrality >= 0)) throw ConfigError("noncentral chi2: need dof >= 0, lambda >= 0");
  if (dof > 1) {
    // (Z + sqrt(lambda))^2 + chi^2_{dof - 1}
    std::normal_distribution<double> normal;
    std::gamma_distribution<double> gamma(0.5 * (dof - 1), 2.0);
    const double z = normal(rng) + std::sqrt(noncentrality);
    return z * z + gamma(rng);
  }
  double shape = 0.5 * dof;
  if (noncentrality > 0) {
    std::poisson_distribution<long long> poisson(0.5 * noncentrality);
    shape += static_cast<double>(poisson(rng));
  }
  if (shape == 0) return 0;
  std::gamma_distribution<double> gamma(shape, 2.0);
  return gamma(rng);
}

CirTransition::CirTransition(double alpha, double beta, double sigma, double dt)
    : decay_(std::exp(-alpha * dt)), integral_(detail::decay_integral(alpha, dt)), drift_(alpha * beta * integral_) {
  c_ = sigma * sigma * integral_ / 4;
  if (c_ > 0) {
    dof_ = 4 * alpha * beta / (sigma * sigma);
    if (dof_ > 1) tail_ = std::gamma_distribution<double>(0.5 * (dof_ - 1), 2.0);
  }
}

double CirTransition::operator()(double x, Xoshiro256& rng) {
  const double x_prev = std::max(x, 0.0);
  if (!(c_ > 0)) return x_prev * decay_ + drift_;
  const double lambda = x_prev * decay_ / c_;
  if (dof_ > 1) {
    const double z = normal_(rng) + std::sqrt(lambda);
    return c_ * (z * z + tail_(rng));
  }
  return c_ * sample_noncentral_chi2(dof_, lambda, rng);
}

double cir_transition(double alpha, double beta, double sigma, double x, double dt, Xoshiro256& rng) {
  return CirTransition(alpha, beta, sigma, dt)(x, rng);
}

namespace {

void check_cir(double alpha, double beta, double sigma, double x0) {
  if (!(alpha > 0) || !(sigma > 0) || !(beta > 0) || !(x0 >= 0))
    throw ConfigError("simulate_cir: need alpha, sigma, beta > 0 and x0 >= 0");
}

}  // namespace

Vector<double> simulate_cir(double alpha, double beta, double sigma, double x0, const Vector<double>& times,
                            Xoshiro256& rng, double t0) {
  check_cir(alpha, beta, sigma, x0);
  Vector<double> path(times.size());
  double x = x0;
  double t = t0;
  for (Eigen::Index k = 0; k < times.size(); ++k) {
    x = cir_transition(alpha, beta, sigma, x, times(k) - t, rng);
    t = times(k);
    path(k) = x;
  }
  return path;
}

namespace {

// Draws N(mean, Q) with the PSD square root of Q.
StateVector<double> gaussian_draw(const TransitionMoments<double>& tm, const StateVector<double>& x,
                                  Xoshiro256& rng) {
  std::normal_distribution<double> normal;
  const int d = static_cast<int>(x.size());
  StateVector<double> z(d);
  for (int j = 0; j < d; ++j) z(j) = normal(rng);
  Eigen::SelfAdjointEigenSolver<StateMatrix<double>> eig(symmetrized(tm.Q));
  const StateMatrix<double> root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  StateVector<double> next = tm.F * x + tm.offset;
  next += root * z;
  return next;
}

}  // namespace

RowMatrix<double> simulate_ou(const AffineModelSpec<double>& spec, const StateVector<double>& x0,
                              const Vector<double>& times, Xoshiro256& rng, double t0) {
  spec.check_dimensions();
  if (!spec.gaussian()) throw UnsupportedRegime("simulate_ou: SigmaTilde must vanish");
  if (x0.size() != spec.dim()) throw DimensionError("simulate_ou: x0 has wrong size");
  RowMatrix<double> path(times.size(), spec.dim());
  StateVector<double> x = x0;
  double t = t0;
  double cached_dt = -1;
  TransitionMoments<double> tm;
  for (Eigen::Index k = 0; k < times.size(); ++k) {
    const double dt = times(k) - t;
    if (dt != cached_dt) {
      tm = transition_moments(spec, x, dt);
      cached_dt = dt;
    }
    x = gaussian_draw(tm, x, rng);
    t = times(k);
    path.row(k) = x.transpose();
  }
  return path;
}

RowMatrix<double> simulate_sv(const AffineModelSpec<double>& spec, const StateVector<double>& x0,
                              const Vector<double>& times, int substeps, Xoshiro256& rng, double t0) {
  spec.check_dimensions();
  if (substeps < 1) throw ConfigError("simulate_sv: substeps must be at least 1");
  if (x0.size() != spec.dim()) throw DimensionError("simulate_sv: x0 has wrong size");
  RowMatrix<double> path(times.size(), spec.dim());
  StateVector<double> x = x0;
  double t = t0;
  double cached_dt = -1;
  TransitionKernel<double> kernel;
  for (Eigen::Index k = 0; k < times.size(); ++k) {
    const double dt = (times(k) - t) / substeps;
    if (dt != cached_dt) {
      kernel = make_transition_kernel(spec, dt);
      cached_dt = dt;
    }
    for (int s = 0; s < substeps; ++s) {
      x = gaussian_draw(kernel.moments(x), x, rng);
      x(0) = std::max(x(0), 0.0);
    }
    t = times(k);
    path.row(k) = x.transpose();
  }
  return path;
}

RowMatrix<double> noisy_yields(const ObservationMap<double>& obs, const RowMatrix<double>& latent, double h,
                               Xoshiro256& rng) {
  if (!(h >= 0)) throw ConfigError("noisy_yields: noise variance must be non-negative");
  if (latent.cols() != obs.H.cols()) throw DimensionError("noisy_yields: latent path has wrong width");
  RowMatrix<double> y = latent * obs.H.transpose();
  y.rowwise() += obs.H0.transpose();
  if (h > 0) {
    std::normal_distribution<double> normal(0.0, std::sqrt(h));
    for (Eigen::Index k = 0; k < y.rows(); ++k)
      for (Eigen::Index l = 0; l < y.cols(); ++l) y(k, l) += normal(rng);
  }
  return y;
}

ObservationSeries make_observations(const RowMatrix<double>& latent, const Vector<double>& times,
                                    const AffineModelSpec<double>& spec, const Vector<double>& maturities,
                                    double h, Xoshiro256& rng) {
  if (latent.rows() != times.size()) throw DimensionError("make_observations: one latent row per time");
  // The map needs h > 0; the value only matters for filtering.
  const auto obs = observation_map_for<double>(spec, maturities, h > 0 ? h : 1.0);
  ObservationSeries s;
  s.times = times;
  s.maturities = maturities;
  s.h = h;
  s.y = noisy_yields(obs, latent, h, rng);
  return s;
}

ObservationSeries concatenate(const ObservationSeries& head, const ObservationSeries& tail) {
  if (head.maturities != tail.maturities || head.h != tail.h)
    throw ConfigError("concatenate: maturities and noise variance must match");
  if (head.steps() > 0 && tail.steps() > 0 && !(tail.times(0) > head.times(head.steps() - 1)))
    throw ConfigError("concatenate: times must keep increasing");
  ObservationSeries s;
  s.maturities = head.maturities;
  s.h = head.h;
  s.times.resize(head.steps() + tail.steps());
  s.times << head.times, tail.times;
  s.y.resize(head.steps() + tail.steps(), head.observations());
  if (head.steps() > 0) s.y.topRows(head.steps()) = head.y;
  if (tail.steps() > 0) s.y.bottomRows(tail.steps()) = tail.y;
  return s;
}

}  // namespace kpf
