#include "kpf/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace kpf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct SortedMaturities {
  std::vector<double> tau;
  std::vector<int> order;  // order[s] = original index of the s-th shortest maturity
};

SortedMaturities sort_maturities(const Vector<double>& maturities) {
  SortedMaturities out;
  const int L = static_cast<int>(maturities.size());
  out.order.resize(L);
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](int i, int j) { return maturities(i) < maturities(j); });
  for (int s = 0; s < L; ++s) out.tau.push_back(maturities(out.order[s]));
  return out;
}

RowMatrix<double> draw_prior(const ThetaBounds<double>& bounds, int N, const StreamKey& key) {
  RowMatrix<double> out(N, bounds.dim());
  for (int i = 0; i < N; ++i) {
    auto rng = key.stream(static_cast<std::uint64_t>(i), StreamPurpose::prior);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int j = 0; j < bounds.dim(); ++j) out(i, j) = bounds.lo(j) + (bounds.hi(j) - bounds.lo(j)) * unif(rng);
  }
  return out;
}

std::vector<int> resample(const Vector<double>& w, Resampling kind, const StreamKey& key) {
  auto rng = key.stream(0, StreamPurpose::resample);
  const int n = static_cast<int>(w.size());
  return kind == Resampling::systematic ? resample_systematic(w, n, rng) : resample_multinomial(w, n, rng);
}

void fill_moments(TraceRow& row, const RowMatrix<double>& particles, const Vector<double>& w) {
  ThetaCloud<double> cloud{particles, w};
  const auto m = cloud_moments(cloud);
  row.mean = m.mean;
  row.sd = m.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

Vector<double> particle(const RowMatrix<double>& m, int i) { return m.row(i).transpose(); }

Vector<double> normalized_or_throw(const Vector<double>& ll, std::size_t step) {
  try {
    return normalize_log_weights(ll);
  } catch (const WeightDegeneracy&) {
    throw WeightDegeneracy("every particle has zero likelihood", step);
  }
}

void check_prior_shapes(const ThetaBounds<double>& priors, const GaussianState<double>& x0,
                        const std::optional<RowMatrix<double>>& initial, int N, const ModelLayout& layout) {
  priors.check();
  if (priors.dim() != layout.theta_dim()) throw ConfigError("priors: one interval per estimated parameter");
  if (x0.dim() != layout.state_dim() || x0.cov.rows() != x0.dim() || x0.cov.cols() != x0.dim())
    throw ConfigError("x0 prior: dimension does not match the model state");
  if (initial && (initial->rows() != N || initial->cols() != layout.theta_dim()))
    throw ConfigError("initial particles: expected N rows of estimated parameters");
}

// Data projected through [H H0] for one observation.
ReducedData<double> project(const ParticleModel& m, const Eigen::Ref<const Vector<double>>& z, double ysq) {
  const int d = m.spec.dim();
  ReducedData<double> data;
  data.g = z.head(d) - m.red.HtH0;
  data.s = ysq - 2 * z(d) + m.red.H0sq;
  return data;
}

}  // namespace

std::string to_string(Phase p) { return p == Phase::recursive ? "recursive" : "nonrecursive"; }

double default_switch_level(int N) { return std::pow(static_cast<double>(N), -1.5); }

void KpfConfig::resolve(const ModelLayout& layout) {
  if (N < 1) throw ConfigError("kpf: N must be positive");
  if (jitter.V_N < 0) jitter.V_N = default_switch_level(N);
  if (jitter.V_f < 0) jitter.V_f = jitter.V_N / 100;
  jitter.check();
  if (!(b >= 0 && b <= 1)) throw ConfigError("kpf: b must lie in [0, 1]");
  if (max_replay < 0) throw ConfigError("kpf: max_replay must be non-negative");
  check_prior_shapes(priors, x0_prior, initial_particles, N, layout);
}

void RnpfConfig::resolve(const ModelLayout& layout) {
  if (N < 1 || M < 1) throw ConfigError("rnpf: N and M must be positive");
  if (jitter_variance <= 0) jitter_variance = default_switch_level(N);
  if (sv_substeps < 1) throw ConfigError("rnpf: sv_substeps must be positive");
  check_prior_shapes(priors, x0_prior, initial_particles, N, layout);
}

std::optional<double> common_step(const ObservationSeries& series) {
  if (series.steps() == 0) return std::nullopt;
  const double first = series.step_size(0);
  for (int k = 1; k < series.steps(); ++k)
    if (std::abs(series.step_size(k) - first) > 1e-9 * first) return std::nullopt;
  return first;
}

std::vector<ModelPtr> build_models(const ModelLayout& layout, const std::vector<Vector<double>>& thetas,
                                   const Vector<double>& maturities, double h, std::optional<double> step,
                                   const RiccatiOptions& opts) {
  const int n = static_cast<int>(thetas.size());
  std::vector<ModelPtr> out(n);
  if (n == 0) return out;
  const auto sorted = sort_maturities(maturities);
  const int L = static_cast<int>(sorted.tau.size());
  const int d = layout.state_dim();

  std::vector<AffineModelSpec<double>> specs(n);
  std::vector<RiccatiParams<double>> params(n);
  for (int i = 0; i < n; ++i) {
    specs[i] = layout.spec(thetas[i]);
    params[i] = riccati_params(specs[i]);
  }

  const int groups = (n + kRiccatiLanes - 1) / kRiccatiLanes;
#pragma omp parallel for schedule(dynamic)
  for (int g = 0; g < groups; ++g) {
    const int first = g * kRiccatiLanes;
    const int count = std::min(kRiccatiLanes, n - first);
    std::vector<const RiccatiParams<double>*> ptrs(count);
    for (int l = 0; l < count; ++l) ptrs[l] = &params[first + l];
    const auto solved = riccati_sweep_batch<double>(std::span<const RiccatiParams<double>* const>(ptrs),
                                                    StateVector<double>::Zero(d),
                                                    std::span<const double>(sorted.tau), opts);
    for (int l = 0; l < count; ++l) {
      const int i = first + l;
      auto m = std::make_shared<ParticleModel>();
      m->theta = thetas[i];
      m->spec = specs[i];
      m->ok = solved[l].ok;
      if (m->ok) {
        m->HH0.resize(L, d + 1);
        for (int s = 0; s < L; ++s) {
          const auto& sol = solved[l].at[s];
          const double tau = sorted.tau[s];
          m->HH0.row(sorted.order[s]).head(d) = -sol.psi.transpose() / tau;
          m->HH0(sorted.order[s], d) = -sol.phi / tau;
        }
        m->ok = m->HH0.allFinite();
      }
      if (m->ok) {
        const auto H = m->HH0.leftCols(d);
        const auto H0 = m->HH0.col(d);
        m->red.HtH = H.transpose() * H;
        m->red.HtH0 = H.transpose() * H0;
        m->red.H0sq = H0.squaredNorm();
        m->red.h = h;
        m->red.L = L;
      }
      if (step) m->kernel = make_transition_kernel(m->spec, *step);
      out[i] = std::move(m);
    }
  }
  return out;
}

KalmanParticleFilter::KalmanParticleFilter(const ObservationSeries& series, ModelLayout layout, KpfConfig cfg,
                                           bool track_changes)
    : series_(series), layout_(std::move(layout)), cfg_(std::move(cfg)), track_changes_(track_changes) {
  series_.check();
  if (!(series_.h > 0)) throw ConfigError("kpf: observation noise variance must be positive");
  cfg_.resolve(layout_);
  if (cfg_.canonical_order) layout_.enable_canonical_order(cfg_.priors.lo, cfg_.priors.hi);
  common_step_ = common_step(series_);
  ysq_ = series_.y.rowwise().squaredNorm();

  trace_.estimator = track_changes_ ? "kpf-tv" : "kpf";
  trace_.names = layout_.estimated_names();
  theta_ = cfg_.initial_particles ? *cfg_.initial_particles : draw_prior(cfg_.priors, cfg_.N, StreamKey{cfg_.seed, 0});
  initialize_segment(0);
}

void KalmanParticleFilter::initialize_segment(std::size_t first_index) {
  for (int i = 0; i < theta_.rows(); ++i) {
    Vector<double> th = particle(theta_, i);
    if (layout_.canonicalize(th, nullptr)) theta_.row(i) = th.transpose();
  }
  models_.assign(theta_.rows(), nullptr);
  states_.assign(theta_.rows(), cfg_.x0_prior);
  segment_start_ = first_index;
  previous_max_.reset();
  phase_ = cfg_.start_recursive ? Phase::recursive : Phase::nonrecursive;
  if (cfg_.start_recursive) trace_.switch_steps.push_back(first_index + 1);
}

void KalmanParticleFilter::ensure_models(const std::vector<int>& which) {
  if (which.empty()) return;
  std::vector<Vector<double>> thetas;
  thetas.reserve(which.size());
  for (int i : which) thetas.push_back(particle(theta_, i));
  auto built = build_models(layout_, thetas, series_.maturities, series_.h, common_step_, cfg_.riccati);
  for (std::size_t j = 0; j < which.size(); ++j) models_[which[j]] = std::move(built[j]);
}

TransitionMoments<double> KalmanParticleFilter::moments(const ParticleModel& m, const StateVector<double>& x,
                                                        std::size_t k) const {
  if (common_step_) return m.kernel.moments(x);
  return make_transition_kernel(m.spec, series_.step_size(static_cast<int>(k))).moments(x);
}

double KalmanParticleFilter::replay(int i, std::size_t k) {
  const ParticleModel& m = *models_[i];
  if (!m.ok) return kNegInf;
  std::size_t from = segment_start_;
  if (cfg_.max_replay > 0 && k + 1 - from > static_cast<std::size_t>(cfg_.max_replay))
    from = k + 1 - static_cast<std::size_t>(cfg_.max_replay);
  const Eigen::Index n = static_cast<Eigen::Index>(k + 1 - from);
  const Matrix<double> Z = series_.y.middleRows(static_cast<Eigen::Index>(from), n) * m.HH0;
  GaussianState<double> s = cfg_.x0_prior;
  double ll = kNegInf;
  try {
    for (Eigen::Index j = 0; j < n; ++j) {
      const std::size_t t = from + static_cast<std::size_t>(j);
      const auto prior = kf_predict(s, moments(m, s.mean, t));
      auto upd = kf_update_reduced(prior, m.red, project(m, Z.row(j).transpose(), ysq_(t)));
      s = std::move(upd.posterior);
      ll = upd.loglik;
    }
  } catch (const Error&) {
    return kNegInf;
  }
  states_[i] = std::move(s);
  return std::isnan(ll) ? kNegInf : ll;
}

double KalmanParticleFilter::advance(int i, std::size_t k) {
  const ParticleModel& m = *models_[i];
  if (!m.ok) return kNegInf;
  const Vector<double> z = m.HH0.transpose() * series_.y.row(static_cast<Eigen::Index>(k)).transpose();
  try {
    const auto prior = kf_predict(states_[i], moments(m, states_[i].mean, k));
    auto upd = kf_update_reduced(prior, m.red, project(m, z, ysq_(k)));
    states_[i] = std::move(upd.posterior);
    return std::isnan(upd.loglik) ? kNegInf : upd.loglik;
  } catch (const Error&) {
    return kNegInf;
  }
}

TraceRow KalmanParticleFilter::step(const CloudObserver& observer) {
  if (done()) throw Error("kpf: no observations left");
  const std::size_t k = next_;
  const int N = static_cast<int>(theta_.rows());
  const JitterConfig& jc = cfg_.jitter;

  TraceRow row;
  row.step = k + 1;
  const auto cloud = ThetaCloud<double>::uniform(theta_);
  const auto mom = cloud_moments(cloud);
  row.switch_stat = switching_statistic(mom.cov, jc.a);
  if (phase_ == Phase::nonrecursive && row.switch_stat <= jc.V_N) {
    phase_ = Phase::recursive;
    trace_.switch_steps.push_back(k + 1);
  }
  row.phase = phase_;

  const StreamKey key{cfg_.seed, k + 1};
  RowMatrix<double> proposed;
  if (phase_ == Phase::nonrecursive) {
    proposed = jitter_kernel1(cloud, jc.a, cfg_.priors, key);
    row.jitter_sd = ((1 - jc.a * jc.a) * mom.cov.diagonal()).cwiseMax(0.0).cwiseSqrt();
  } else {
    const Vector<double> variance = kernel2_variance(mom.cov, jc);
    proposed = jitter_kernel2(cloud, variance, cfg_.priors, key);
    row.jitter_sd = variance.cwiseSqrt();
  }

  std::vector<int> stale;
  for (int i = 0; i < N; ++i) {
    Vector<double> th = particle(proposed, i);
    if (layout_.canonicalize(th, phase_ == Phase::recursive ? &states_[i] : nullptr))
      proposed.row(i) = th.transpose();
    const bool same = models_[i] && (models_[i]->theta.array() == th.array()).all();
    if (!same) stale.push_back(i);
  }
  theta_ = std::move(proposed);
  ensure_models(stale);

  Vector<double> ll(N);
  const bool rebuild = phase_ == Phase::nonrecursive;
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < N; ++i) ll(i) = rebuild ? replay(i, k) : advance(i, k);

  row.max_loglik = ll.maxCoeff();
  const Vector<double> w = normalized_or_throw(ll, k + 1);
  fill_moments(row, theta_, w);
  if (cfg_.record_state) {
    StateVector<double> xm = StateVector<double>::Zero(layout_.state_dim());
    for (int i = 0; i < N; ++i) xm += w(i) * states_[i].mean;
    row.state_mean = xm;
  }
  if (observer) observer(k + 1, theta_, w);

  bool reset = false;
  if (track_changes_ && phase_ == Phase::recursive) {
    if (previous_max_ && row.max_loglik < std::log(cfg_.b) + *previous_max_)
      reset = true;
    else
      previous_max_ = row.max_loglik;
  }

  const auto idx = resample(w, cfg_.resampling, key);
  RowMatrix<double> theta(N, theta_.cols());
  std::vector<ModelPtr> models(N);
  std::vector<GaussianState<double>> states(N);
  for (int i = 0; i < N; ++i) {
    theta.row(i) = theta_.row(idx[i]);
    models[i] = models_[idx[i]];
    states[i] = states_[idx[i]];
  }
  theta_ = std::move(theta);
  models_ = std::move(models);
  states_ = std::move(states);

  next_ = k + 1;
  if (reset) {
    row.reset = true;
    trace_.resets.push_back(k + 1);
    theta_ = draw_prior(cfg_.priors, N, key);
    initialize_segment(k + 1);
  }
  trace_.rows.push_back(row);
  return row;
}

PosteriorTrace KalmanParticleFilter::run(const CloudObserver& observer) {
  const auto start = std::chrono::steady_clock::now();
  while (!done()) step(observer);
  trace_.final_particles = theta_;
  trace_.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace_;
}

PosteriorTrace kpf_run(const ObservationSeries& series, const ModelLayout& layout, const KpfConfig& cfg,
                       const CloudObserver& observer) {
  KalmanParticleFilter filter(series, layout, cfg, false);
  return filter.run(observer);
}

PosteriorTrace kpf_tv_run(const ObservationSeries& series, const ModelLayout& layout, const KpfConfig& cfg,
                          const CloudObserver& observer) {
  KalmanParticleFilter filter(series, layout, cfg, true);
  return filter.run(observer);
}

namespace {

// Draws the latent state one observation step ahead for a single parameter set.
class StatePropagator {
 public:
  StatePropagator(const ParticleModel& m, double dt, int sv_substeps) : spec_(m.spec) {
    const int d = spec_.dim();
    cir_ = spec_.dim() == 1 && spec_.p == 1 && !spec_.gaussian();
    substeps_ = spec_.gaussian() ? 1 : sv_substeps;
    const auto k = make_transition_kernel(spec_, dt / substeps_);
    F_ = k.F;
    offset_ = k.offset;
    root_c_ = detail::psd_sqrt<double>(Matrix<double>(k.constant.cwiseProduct(k.decay)));
    root_s_ = detail::psd_sqrt<double>(Matrix<double>(k.scaled.cwiseProduct(k.decay)));
    if (cir_) cir_step_.emplace(spec_.A(0, 0), spec_.beta(0), spec_.SigmaTilde(0, 0), dt);
    z_.resize(d);
  }

  template <typename Row>
  StateVector<double> operator()(const Row& x_row, Xoshiro256& rng) {
    StateVector<double> x = x_row.transpose();
    if (cir_) {
      x(0) = (*cir_step_)(x(0), rng);
      return x;
    }
    std::normal_distribution<double> normal;
    const int d = static_cast<int>(x.size());
    for (int s = 0; s < substeps_; ++s) {
      const double x1 = spec_.p > 0 ? std::max(x(0), 0.0) : 0.0;
      StateVector<double> next = F_ * x + offset_;
      for (int j = 0; j < d; ++j) z_(j) = normal(rng);
      next += root_c_ * z_;
      if (x1 > 0 && spec_.p > 0) {
        for (int j = 0; j < d; ++j) z_(j) = normal(rng);
        next += std::sqrt(x1) * (root_s_ * z_);
      }
      if (spec_.p > 0) next(0) = std::max(next(0), 0.0);
      x = next;
    }
    return x;
  }

 private:
  const AffineModelSpec<double>& spec_;
  bool cir_ = false;
  std::optional<CirTransition> cir_step_;
  int substeps_ = 1;
  StateMatrix<double> F_;
  StateVector<double> offset_;
  Matrix<double> root_c_, root_s_;
  StateVector<double> z_;
};

}  // namespace

PosteriorTrace rnpf_run(const ObservationSeries& series, const ModelLayout& layout_in, const RnpfConfig& cfg_in,
                        const CloudObserver& observer) {
  const auto start = std::chrono::steady_clock::now();
  series.check();
  if (!(series.h > 0)) throw ConfigError("rnpf: observation noise variance must be positive");
  ModelLayout layout = layout_in;
  RnpfConfig cfg = cfg_in;
  cfg.resolve(layout);
  if (cfg.canonical_order) layout.enable_canonical_order(cfg.priors.lo, cfg.priors.hi);

  const int N = cfg.N;
  const int M = cfg.M;
  const int d = layout.state_dim();
  const int p = layout.theta_dim();
  const int L = series.observations();
  const double h = series.h;
  const double log_norm = L * std::log(2 * std::numbers::pi * h);
  const Vector<double> ysq = series.y.rowwise().squaredNorm();

  PosteriorTrace trace;
  trace.estimator = "rnpf";
  trace.names = layout.estimated_names();
  trace.switch_steps.push_back(1);

  RowMatrix<double> theta = cfg.initial_particles ? *cfg.initial_particles : draw_prior(cfg.priors, N, {cfg.seed, 0});
  RowMatrix<double> X(static_cast<Eigen::Index>(N) * M, d);
  {
    const Matrix<double> root = detail::psd_sqrt<double>(Matrix<double>(cfg.x0_prior.cov));
    for (int i = 0; i < N; ++i) {
      auto rng = make_stream(cfg.seed, 0, static_cast<std::uint64_t>(i), StreamPurpose::inner);
      std::normal_distribution<double> normal;
      Vector<double> z(d);
      for (int j = 0; j < M; ++j) {
        for (int c = 0; c < d; ++c) z(c) = normal(rng);
        X.row(static_cast<Eigen::Index>(i) * M + j) = (cfg.x0_prior.mean + root * z).transpose();
      }
    }
  }
  auto canonicalize = [&](RowMatrix<double>& th) {
    for (int i = 0; i < N; ++i) {
      Vector<double> t = particle(th, i);
      if (layout.canonicalize(t, nullptr)) {
        th.row(i) = t.transpose();
        X.middleRows(static_cast<Eigen::Index>(i) * M, M).col(0).swap(
            X.middleRows(static_cast<Eigen::Index>(i) * M, M).col(1));
      }
    }
  };
  canonicalize(theta);

  const Vector<double> variance = Vector<double>::Constant(p, cfg.jitter_variance);
  for (int k = 0; k < series.steps(); ++k) {
    const StreamKey key{cfg.seed, static_cast<std::uint64_t>(k) + 1};
    RowMatrix<double> proposed = jitter_kernel2(ThetaCloud<double>::uniform(theta), variance, cfg.priors, key);
    canonicalize(proposed);

    std::vector<Vector<double>> thetas(N);
    for (int i = 0; i < N; ++i) thetas[i] = particle(proposed, i);
    const double dt = series.step_size(k);
    const auto models = build_models(layout, thetas, series.maturities, h, std::nullopt, cfg.riccati);

    Vector<double> ll(N);
    const Vector<double> yk = series.y.row(k).transpose();
#pragma omp parallel for schedule(dynamic, 4)
    for (int i = 0; i < N; ++i) {
      const ParticleModel& m = *models[i];
      if (!m.ok) {
        ll(i) = kNegInf;
        continue;
      }
      const Vector<double> z = m.HH0.transpose() * yk;
      const auto data = project(m, z, ysq(k));
      const StateMatrix<double> HtH = m.red.HtH;
      auto loglik = [&](const auto& x_row) {
        const StateVector<double> x = x_row.transpose();
        return -0.5 * (log_norm + (data.s - 2 * x.dot(data.g) + x.dot(HtH * x)) / h);
      };
      StatePropagator propagate(m, dt, cfg.sv_substeps);
      auto sample = [&](const auto& x_row, Xoshiro256& rng) {
        return propagate(x_row, rng).transpose().eval();
      };
      auto rng = key.stream(static_cast<std::uint64_t>(i), StreamPurpose::inner);
      try {
        ll(i) = pf_inner_step<double>(X.middleRows(static_cast<Eigen::Index>(i) * M, M), sample, loglik, rng)
                    .log_marginal;
      } catch (const Error&) {
        ll(i) = kNegInf;
      }
    }

    TraceRow row;
    row.step = static_cast<std::size_t>(k) + 1;
    row.phase = Phase::recursive;
    row.max_loglik = ll.maxCoeff();
    row.jitter_sd = variance.cwiseSqrt();
    const Vector<double> w = normalized_or_throw(ll, row.step);
    fill_moments(row, proposed, w);
    StateVector<double> xm = StateVector<double>::Zero(d);
    for (int i = 0; i < N; ++i)
      xm += w(i) * X.middleRows(static_cast<Eigen::Index>(i) * M, M).colwise().mean().transpose();
    row.state_mean = xm;
    if (observer) observer(row.step, proposed, w);
    trace.rows.push_back(std::move(row));

    const auto idx = resample(w, Resampling::multinomial, key);
    RowMatrix<double> next_x(X.rows(), d);
    for (int i = 0; i < N; ++i) {
      theta.row(i) = proposed.row(idx[i]);
      next_x.middleRows(static_cast<Eigen::Index>(i) * M, M) = X.middleRows(static_cast<Eigen::Index>(idx[i]) * M, M);
    }
    X = std::move(next_x);
  }
  trace.final_particles = theta;
  trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

}  // namespace kpf
