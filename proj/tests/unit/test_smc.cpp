#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "kpf/kalman.hpp"
#include "kpf/smc.hpp"

using namespace kpf;

namespace {

ThetaCloud<double> random_cloud(int n, int p, std::uint64_t seed) {
  auto rng = make_stream(seed, 0, 0, StreamPurpose::test);
  std::normal_distribution<double> normal;
  RowMatrix<double> x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = (j + 1) * normal(rng) + (j == 1 ? 0.5 * x(i, 0) : 0.0);
  return ThetaCloud<double>::uniform(x);
}

ThetaBounds<double> wide_bounds(int p) {
  return {Vector<double>::Constant(p, -1e6), Vector<double>::Constant(p, 1e6)};
}

}  // namespace

TEST_CASE("shrinkage kernel preserves mean and covariance") {
  const int n = 200000, p = 2;
  const auto cloud = random_cloud(n, p, 1);
  const auto before = cloud_moments(cloud);
  const auto after = cloud_moments(ThetaCloud<double>::uniform(jitter_kernel1(cloud, 0.9, wide_bounds(p), {7, 1})));
  for (int j = 0; j < p; ++j) {
    const double sd = std::sqrt(before.cov(j, j));
    CHECK(std::abs(after.mean(j) - before.mean(j)) < 4 * sd / std::sqrt(double(n)));
    CHECK(after.cov(j, j) == doctest::Approx(before.cov(j, j)).epsilon(0.02));
  }
  CHECK(after.cov(0, 1) == doctest::Approx(before.cov(0, 1)).epsilon(0.05));
}

TEST_CASE("kernel-2 variance is clamped elementwise") {
  JitterConfig jc{0.98, 1e-3, 1e-6, KernelMode::local};
  Matrix<double> cov = Matrix<double>::Zero(3, 3);
  cov.diagonal() << 1.0, 1e-10, 1e-2;
  const auto v = kernel2_variance(cov, jc);
  CHECK(v(0) == 1e-3);
  CHECK(v(1) == 1e-6);
  CHECK(v(2) == doctest::Approx((1 - 0.98 * 0.98) * 1e-2));
}

TEST_CASE("kernel-2 second moment respects the switching level") {
  const int n = 10000, p = 1;
  const double VN = std::pow(n, -1.5);
  JitterConfig jc{0.98, VN, VN / 100, KernelMode::local};
  const auto cloud = random_cloud(n, p, 2);
  const auto out = jitter_kernel2(cloud, jc, wide_bounds(p), {3, 1});
  const double msd = (out - cloud.particles).squaredNorm() / n;
  CHECK(msd <= p * VN * 1.1);
}

TEST_CASE("jitter output stays inside the box") {
  const int n = 5000, p = 2;
  auto cloud = random_cloud(n, p, 3);
  ThetaBounds<double> b{Vector<double>::Constant(p, -0.5), Vector<double>::Constant(p, 0.5)};
  cloud.particles = cloud.particles.cwiseMax(-0.5).cwiseMin(0.5);
  const auto k1 = jitter_kernel1(cloud, 0.5, b, {4, 1});
  const auto k2 = jitter_kernel2(cloud, Vector<double>(Vector<double>::Constant(p, 1.0)), b, {4, 2});
  for (int i = 0; i < n; ++i) {
    CHECK(b.contains(k1.row(i).transpose()));
    CHECK(b.contains(k2.row(i).transpose()));
  }
}

TEST_CASE("jitter is deterministic given the stream key") {
  const auto cloud = random_cloud(100, 2, 5);
  CHECK(jitter_kernel1(cloud, 0.9, wide_bounds(2), {9, 4}) == jitter_kernel1(cloud, 0.9, wide_bounds(2), {9, 4}));
  CHECK(jitter_kernel1(cloud, 0.9, wide_bounds(2), {9, 4}) != jitter_kernel1(cloud, 0.9, wide_bounds(2), {9, 5}));
}

TEST_CASE("invalid shrinkage factor is rejected") {
  const auto cloud = random_cloud(10, 1, 6);
  CHECK_THROWS_AS(jitter_kernel1(cloud, 1.0, wide_bounds(1), {1, 1}), ConfigError);
  CHECK_THROWS_AS(jitter_kernel1(cloud, 0.0, wide_bounds(1), {1, 1}), ConfigError);
}

TEST_CASE("log-weight normalization") {
  Vector<double> l(4);
  l << -1000.0, -1001.0, -std::numeric_limits<double>::infinity(), std::nan("");
  const auto w = normalize_log_weights(l);
  CHECK(w.sum() == doctest::Approx(1.0));
  CHECK(w(2) == 0.0);
  CHECK(w(3) == 0.0);
  CHECK(w(0) / w(1) == doctest::Approx(std::exp(1.0)));
  const auto again = normalize_log_weights(Vector<double>(w.array().log()));
  CHECK((again - w).cwiseAbs().maxCoeff() < 1e-15);
  Vector<double> dead = Vector<double>::Constant(3, -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(normalize_log_weights(dead), WeightDegeneracy);
}

TEST_CASE("log_mean_exp is stable") {
  Vector<double> l = Vector<double>::Constant(5, -2000.0);
  CHECK(log_mean_exp(l) == doctest::Approx(-2000.0));
  CHECK(std::isinf(log_mean_exp(Vector<double>())));
}

TEST_CASE("resampling is unbiased") {
  Vector<double> w(5);
  w << 0.05, 0.4, 0.0, 0.25, 0.3;
  const int n = 200000;
  for (int scheme = 0; scheme < 2; ++scheme) {
    auto rng = make_stream(11, 0, scheme, StreamPurpose::test);
    std::vector<double> counts(5, 0);
    const int reps = scheme == 0 ? 1 : 2000;
    const int size = n / reps;
    for (int r = 0; r < reps; ++r) {
      const auto idx = scheme == 0 ? resample_multinomial(w, size, rng) : resample_systematic(w, size, rng);
      CHECK(idx.size() == std::size_t(size));
      for (int i : idx) counts[i] += 1;
    }
    for (int i = 0; i < 5; ++i) {
      const double se = std::sqrt(w(i) * (1 - w(i)) / n);
      CHECK(std::abs(counts[i] / n - w(i)) <= 4 * se + 1e-12);
    }
  }
}

TEST_CASE("resampling edge cases") {
  Xoshiro256 rng(1);
  Vector<double> one_hot = Vector<double>::Zero(6);
  one_hot(4) = 1;
  for (int i : resample_multinomial(one_hot, 50, rng)) CHECK(i == 4);
  for (int i : resample_systematic(one_hot, 50, rng)) CHECK(i == 4);
  CHECK(resample_multinomial(one_hot, 0, rng).empty());
  Vector<double> bad(2);
  bad << 0.2, 0.2;
  CHECK_THROWS_AS(resample_multinomial(bad, 3, rng), Error);
  CHECK_THROWS_AS(resample_systematic(bad, -1, rng), Error);
}

TEST_CASE("inner bootstrap step estimates the Kalman marginal likelihood") {
  const double F = 0.9, off = 0.05, Q = 0.04, h = 0.1, m0 = 0.2, P0 = 0.3;
  ObservationMap<double> obs{Matrix<double>::Constant(3, 1, 1.0), Vector<double>::Zero(3), h,
                             Vector<double>::Ones(3)};
  obs.H(1, 0) = 0.5;
  obs.H0(2) = 0.1;
  Vector<double> y(3);
  y << 0.4, 0.1, 0.3;

  TransitionMoments<double> tm{StateMatrix<double>::Constant(1, 1, F), StateVector<double>::Constant(1, off),
                               StateMatrix<double>::Constant(1, 1, Q)};
  GaussianState<double> init{StateVector<double>::Constant(1, m0), StateMatrix<double>::Constant(1, 1, P0)};
  const double exact = kf_update(kf_predict(init, tm), obs, y).loglik;

  const int M = 10000;
  auto rng = make_stream(5, 0, 0, StreamPurpose::test);
  std::normal_distribution<double> normal;
  RowMatrix<double> x(M, 1);
  for (int j = 0; j < M; ++j) x(j, 0) = m0 + std::sqrt(P0) * normal(rng);
  std::vector<double> logliks;
  auto sample = [&](const auto& row, Xoshiro256& r) {
    std::normal_distribution<double> n;
    Eigen::RowVectorXd out(1);
    out(0) = F * row(0) + off + std::sqrt(Q) * n(r);
    return out;
  };
  auto loglik = [&](const auto& row) {
    const Vector<double> e = y - obs.H * row(0) - obs.H0;
    const double l = -0.5 * (3 * std::log(2 * std::numbers::pi * h) + e.squaredNorm() / h);
    logliks.push_back(l);
    return l;
  };
  const auto res = pf_inner_step<double>(x, sample, loglik, rng);
  Eigen::Map<Vector<double>> l(logliks.data(), M);
  const Vector<double> w = (l.array() - res.log_marginal).exp();
  const double se = std::sqrt((w.array() - 1).square().sum() / (M - 1) / M);
  CHECK(std::abs(res.log_marginal - exact) <= 3 * se);
}
