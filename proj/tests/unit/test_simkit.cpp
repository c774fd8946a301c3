#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "kpf/models.hpp"
#include "kpf/simkit.hpp"

using namespace kpf;

namespace {

struct Moments {
  double mean = 0, var = 0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= v.size();
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= v.size() - 1;
  return m;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

AffineModelSpec<double> scalar_ou(double alpha, double sigma) {
  AffineModelSpec<double> s;
  s.p = 0;
  s.A = StateMatrix<double>::Constant(1, 1, alpha);
  s.beta = StateVector<double>::Zero(1);
  s.Sigma = StateMatrix<double>::Constant(1, 1, sigma);
  s.SigmaTilde = StateMatrix<double>::Zero(1, 1);
  s.gamma = StateVector<double>::Ones(1);
  return s;
}

}  // namespace

TEST_CASE("noncentral chi-square moments") {
  auto rng = make_stream(1, 0, 0, StreamPurpose::test);
  const int n = 200000;
  for (auto [p, lambda] : {std::pair{0.7, 3.0}, std::pair{4.0, 0.0}, std::pair{0.0, 2.0}}) {
    std::vector<double> v(n);
    for (auto& x : v) x = sample_noncentral_chi2(p, lambda, rng);
    const auto m = moments(v);
    const double var = 2 * p + 4 * lambda;
    CHECK(std::abs(m.mean - (p + lambda)) < 5 * std::sqrt(var / n));
    CHECK(m.var == doctest::Approx(var).epsilon(0.03));
    CHECK(*std::min_element(v.begin(), v.end()) >= 0.0);
  }
}

TEST_CASE("CIR transition matches its scaled noncentral chi-square moments") {
  const double alpha = 0.45, beta = 0.001, sigma = 0.017, x = 0.005, dt = kTradingDay;
  const double decay = std::exp(-alpha * dt);
  const double c = sigma * sigma * (1 - decay) / (4 * alpha);
  const double p = 4 * alpha * beta / (sigma * sigma);
  const double lambda = x * decay / c;
  auto rng = make_stream(2, 0, 0, StreamPurpose::test);
  const int n = 200000;
  std::vector<double> v(n);
  for (auto& y : v) y = cir_transition(alpha, beta, sigma, x, dt, rng);
  const auto m = moments(v);
  const double var = c * c * (2 * p + 4 * lambda);
  CHECK(std::abs(m.mean - c * (p + lambda)) < 5 * std::sqrt(var / n));
  CHECK(m.var == doctest::Approx(var).epsilon(0.03));
}

TEST_CASE("CIR transition degenerates to the ODE when sigma vanishes") {
  Xoshiro256 rng(3);
  const double alpha = 2, beta = 0.05, x = 0.2, dt = 0.5;
  const double expected = x * std::exp(-alpha * dt) + beta * (1 - std::exp(-alpha * dt));
  CHECK(cir_transition(alpha, beta, 0.0, x, dt, rng) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("CIR path is non-negative and rejects invalid parameters") {
  auto rng = make_stream(4, 0, 0, StreamPurpose::test);
  const auto times = regular_times(2000, kTradingDay);
  const auto path = simulate_cir(0.45, 0.001, 0.017, 0.005, times, rng);
  CHECK(path.size() == 2000);
  CHECK(path.minCoeff() >= 0.0);
  CHECK_THROWS(simulate_cir(-0.1, 0.001, 0.017, 0.005, times, rng));
}

TEST_CASE("OU endpoint distribution passes a KS test") {
  const double alpha = 1.5, sigma = 0.3, T = 0.8;
  const auto spec = scalar_ou(alpha, sigma);
  const int n = 4000;
  Vector<double> times(2);
  times << T / 2, T;
  std::vector<double> ends(n);
  for (int i = 0; i < n; ++i) {
    auto rng = make_stream(5, 0, i, StreamPurpose::test);
    ends[i] = simulate_ou(spec, StateVector<double>::Constant(1, 0.4), times, rng)(1, 0);
  }
  std::sort(ends.begin(), ends.end());
  const double mean = 0.4 * std::exp(-alpha * T);
  const double sd = std::sqrt(sigma * sigma * (1 - std::exp(-2 * alpha * T)) / (2 * alpha));
  double ks = 0;
  for (int i = 0; i < n; ++i) {
    const double F = normal_cdf((ends[i] - mean) / sd);
    ks = std::max({ks, F - double(i) / n, double(i + 1) / n - F});
  }
  CHECK(ks < 1.6276 / std::sqrt(double(n)));
}

TEST_CASE("stochastic-volatility path keeps the variance factor non-negative") {
  ModelLayout layout(ModelFamily::hwsv, (Vector<double>(6) << 0.1, 0.3, 0.03, 0.3, 0.07, -0.5).finished(), {});
  const auto spec = layout.spec_from_values(layout.values());
  StateVector<double> x0 = StateVector<double>::Zero(spec.dim());
  x0(0) = layout.sv_level;
  auto rng = make_stream(6, 0, 0, StreamPurpose::test);
  const auto path = simulate_sv(spec, x0, regular_times(500, kTradingDay), kDefaultSvSubsteps, rng);
  CHECK(path.rows() == 500);
  CHECK(path.col(0).minCoeff() >= 0.0);
  CHECK(path.allFinite());
}

TEST_CASE("noise-free observations are exact yields") {
  ModelLayout layout(ModelFamily::hw2, (Vector<double>(5) << 0.03, 0.23, 0.02, 0.02, -0.5).finished(), {});
  const auto spec = layout.spec_from_values(layout.values());
  auto rng = make_stream(7, 0, 0, StreamPurpose::test);
  const auto times = regular_times(20, kTradingDay);
  const auto latent = simulate_ou(spec, StateVector<double>::Zero(2), times, rng);
  Vector<double> mats(3);
  mats << 0.5, 2.0, 10.0;
  const auto series = make_observations(latent, times, spec, mats, 0.0, rng);
  series.check();
  CHECK(series.steps() == 20);
  CHECK(series.observations() == 3);
  CHECK(series.max_step() == doctest::Approx(kTradingDay));
  const auto again = make_observations(latent, times, spec, mats, 0.0, rng);
  CHECK(series.y == again.y);
}

TEST_CASE("simulation is deterministic given the seed") {
  const auto times = regular_times(300, kTradingDay);
  auto a = make_stream(8, 0, 0, StreamPurpose::simulation);
  auto b = make_stream(8, 0, 0, StreamPurpose::simulation);
  CHECK(simulate_cir(0.45, 0.001, 0.017, 0.005, times, a) == simulate_cir(0.45, 0.001, 0.017, 0.005, times, b));
}

TEST_CASE("concatenated series keep increasing times") {
  ObservationSeries head, tail;
  head.times = regular_times(3, 1.0);
  tail.times = regular_times(2, 1.0, 3.0);
  head.maturities = tail.maturities = Vector<double>::Ones(1);
  head.y = RowMatrix<double>::Zero(3, 1);
  tail.y = RowMatrix<double>::Ones(2, 1);
  const auto joined = concatenate(head, tail);
  CHECK(joined.steps() == 5);
  CHECK(joined.times(4) == 5.0);
  CHECK(joined.y(3, 0) == 1.0);
  CHECK_THROWS(concatenate(tail, head));
}
