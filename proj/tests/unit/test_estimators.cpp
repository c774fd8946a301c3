#include <doctest.h>

#include <cmath>

#include "kpf/estimators.hpp"

using namespace kpf;

namespace {

Vector<double> hw2_values() { return (Vector<double>(5) << 0.03, 0.23, 0.02, 0.02, -0.5).finished(); }

ObservationSeries hw2_series(int K, std::uint64_t seed) {
  ModelLayout layout(ModelFamily::hw2, hw2_values(), {});
  const auto spec = layout.spec_from_values(layout.values());
  auto rng = make_stream(seed, 0, 0, StreamPurpose::simulation);
  const auto times = regular_times(K, kTradingDay);
  const auto latent = simulate_ou(spec, StateVector<double>::Zero(2), times, rng);
  Vector<double> mats(4);
  mats << 1, 3, 7, 10;
  auto noise = make_stream(seed, 0, 0, StreamPurpose::noise);
  return make_observations(latent, times, spec, mats, 1e-6, noise);
}

GaussianState<double> x0_prior() {
  return {StateVector<double>::Zero(2), StateMatrix<double>(StateMatrix<double>::Identity(2, 2) * 0.1)};
}

KpfConfig small_config(int N) {
  KpfConfig cfg;
  cfg.N = N;
  cfg.priors = {(Vector<double>(2) << 0.0, 0.0).finished(), (Vector<double>(2) << 0.4, 0.1).finished()};
  cfg.x0_prior = x0_prior();
  cfg.seed = 3;
  return cfg;
}

ModelLayout layout_alpha_sigma() { return ModelLayout(ModelFamily::hw2, hw2_values(), {"alpha11", "sigma1"}); }

}  // namespace

TEST_CASE("kpf runs end to end and reports one row per step") {
  const auto series = hw2_series(40, 1);
  const auto trace = kpf_run(series, layout_alpha_sigma(), small_config(64));
  REQUIRE(trace.rows.size() == 40);
  CHECK(trace.names == std::vector<std::string>{"alpha11", "sigma1"});
  CHECK(trace.final_particles.rows() == 64);
  for (std::size_t k = 0; k < trace.rows.size(); ++k) {
    CHECK(trace.rows[k].step == k + 1);
    CHECK(trace.rows[k].mean.allFinite());
  }
}

TEST_CASE("kpf is deterministic for a fixed seed") {
  const auto series = hw2_series(30, 2);
  const auto a = kpf_run(series, layout_alpha_sigma(), small_config(32));
  const auto b = kpf_run(series, layout_alpha_sigma(), small_config(32));
  CHECK(a.final_particles == b.final_particles);
  for (std::size_t k = 0; k < a.rows.size(); ++k) CHECK(a.rows[k].mean == b.rows[k].mean);
  auto other = small_config(32);
  other.seed = 4;
  CHECK(kpf_run(series, layout_alpha_sigma(), other).final_particles != a.final_particles);
}

TEST_CASE("a single particle is a valid filter") {
  const auto series = hw2_series(10, 3);
  const auto trace = kpf_run(series, layout_alpha_sigma(), small_config(1));
  CHECK(trace.rows.size() == 10);
  CHECK(trace.rows.back().sd.isZero(0));
}

TEST_CASE("an empty series yields an empty trace") {
  auto series = hw2_series(5, 4);
  series.times.resize(0);
  series.y.resize(0, series.observations());
  const auto trace = kpf_run(series, layout_alpha_sigma(), small_config(8));
  CHECK(trace.rows.empty());
  CHECK(trace.final_particles.rows() == 8);
}

TEST_CASE("particles stay inside the prior box and phases never go back") {
  const auto series = hw2_series(60, 5);
  const auto cfg = small_config(100);
  KalmanParticleFilter filter(series, layout_alpha_sigma(), cfg);
  bool recursive = false;
  while (!filter.done()) {
    const auto row = filter.step([&](std::size_t, const RowMatrix<double>& p, const Vector<double>& w) {
      CHECK(w.sum() == doctest::Approx(1.0));
      for (int i = 0; i < p.rows(); ++i) CHECK(cfg.priors.contains(p.row(i).transpose()));
    });
    if (recursive) CHECK(row.phase == Phase::recursive);
    recursive = row.phase == Phase::recursive;
  }
}

TEST_CASE("b = 0 never resets") {
  const auto series = hw2_series(60, 6);
  auto cfg = small_config(50);
  cfg.b = 0;
  cfg.start_recursive = true;
  const auto trace = kpf_tv_run(series, layout_alpha_sigma(), cfg);
  CHECK(trace.resets.empty());
}

TEST_CASE("invalid configuration is rejected") {
  const auto series = hw2_series(5, 7);
  auto cfg = small_config(10);
  cfg.N = 0;
  CHECK_THROWS_AS(kpf_run(series, layout_alpha_sigma(), cfg), ConfigError);
  cfg = small_config(10);
  cfg.b = 1.5;
  CHECK_THROWS_AS(kpf_run(series, layout_alpha_sigma(), cfg), ConfigError);
  cfg = small_config(10);
  cfg.priors.lo.resize(1);
  CHECK_THROWS(kpf_run(series, layout_alpha_sigma(), cfg));
}

TEST_CASE("grid oracle on a single point is certain") {
  const auto series = hw2_series(20, 8);
  ModelLayout layout(ModelFamily::hw2, hw2_values(), {"alpha11"});
  RowMatrix<double> grid(1, 1);
  grid << 0.03;
  const auto post = grid_posterior_oracle(series, layout, grid, x0_prior());
  CHECK(post.rows() == 20);
  CHECK((post.array() - 1.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("grid oracle concentrates on the truth and rows sum to one") {
  const auto series = hw2_series(150, 9);
  ModelLayout layout(ModelFamily::hw2, hw2_values(), {"sigma1"});
  RowMatrix<double> grid(5, 1);
  grid << 0.005, 0.01, 0.02, 0.04, 0.08;
  const auto post = grid_posterior_oracle(series, layout, grid, x0_prior());
  for (int k = 0; k < post.rows(); ++k) CHECK(post.row(k).sum() == doctest::Approx(1.0));
  Eigen::Index best = 0;
  post.row(post.rows() - 1).maxCoeff(&best);
  CHECK(best == 2);
}

TEST_CASE("grid oracle refuses non-Gaussian models") {
  ModelLayout layout(ModelFamily::hwsv, (Vector<double>(6) << 0.1, 0.3, 0.03, 0.3, 0.07, -0.5).finished(),
                     {"alpha1"});
  auto series = hw2_series(5, 10);
  RowMatrix<double> grid(1, 1);
  grid << 0.1;
  GaussianState<double> prior{StateVector<double>::Constant(2, 0.1),
                              StateMatrix<double>(StateMatrix<double>::Identity(2, 2) * 0.01)};
  CHECK_THROWS_AS(grid_posterior_oracle(series, layout, grid, prior), UnsupportedRegime);
}

TEST_CASE("rnpf runs with one outer and one inner particle") {
  const auto series = hw2_series(15, 11);
  RnpfConfig cfg;
  cfg.N = 1;
  cfg.M = 1;
  cfg.priors = small_config(1).priors;
  cfg.x0_prior = x0_prior();
  const auto trace = rnpf_run(series, layout_alpha_sigma(), cfg);
  CHECK(trace.rows.size() == 15);
  CHECK(trace.final_particles.rows() == 1);
}

TEST_CASE("rnpf is deterministic for a fixed seed") {
  const auto series = hw2_series(15, 12);
  RnpfConfig cfg;
  cfg.N = 20;
  cfg.M = 10;
  cfg.priors = small_config(1).priors;
  cfg.x0_prior = x0_prior();
  CHECK(rnpf_run(series, layout_alpha_sigma(), cfg).final_particles ==
        rnpf_run(series, layout_alpha_sigma(), cfg).final_particles);
}

TEST_CASE("common step detection") {
  auto series = hw2_series(5, 13);
  CHECK(common_step(series).value() == doctest::Approx(kTradingDay));
  series.times(4) += 0.5;
  CHECK(!common_step(series).has_value());
}
