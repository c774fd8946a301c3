#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "kpf/affine_model.hpp"
#include "kpf/models.hpp"

using namespace kpf;
using boost::math::quadrature::gauss_kronrod;

namespace {

ModelLayout hw2_layout() {
  Vector<double> v(5);
  v << 0.03, 0.23, 0.02, 0.02, -0.5;
  return ModelLayout(ModelFamily::hw2, v, {"alpha11", "alpha22", "sigma1", "sigma2", "rho"});
}

ModelLayout cir_layout() {
  Vector<double> v(3);
  v << 0.45, 0.001, 0.017;
  return ModelLayout(ModelFamily::cir, v, {"alpha", "beta", "sigma"});
}

}  // namespace

TEST_CASE("family specs are admissible") {
  CHECK(validate_admissibility(cir_layout().spec_from_values(cir_layout().values())).empty());
  CHECK(validate_admissibility(hw2_layout().spec_from_values(hw2_layout().values())).empty());
  Vector<double> sv(6);
  sv << 0.1, 0.3, 0.03, 0.3, 0.07, -0.5;
  ModelLayout l(ModelFamily::hwsv, sv, {});
  CHECK(validate_admissibility(l.spec_from_values(sv)).empty());
}

TEST_CASE("admissibility violations are reported") {
  auto spec = cir_layout().spec_from_values(cir_layout().values());
  spec.Sigma(0, 0) = 0.01;
  CHECK_FALSE(validate_admissibility(spec).empty());

  auto hw = hw2_layout().spec_from_values(hw2_layout().values());
  hw.A(0, 1) = 0.1;
  CHECK_FALSE(validate_admissibility(hw).empty());

  auto neg = cir_layout().spec_from_values(cir_layout().values());
  neg.beta(0) = -0.01;
  CHECK_FALSE(validate_admissibility(neg).empty());

  auto bad = neg;
  bad.gamma.resize(2);
  CHECK_THROWS_AS(validate_admissibility(bad), DimensionError);
}

TEST_CASE("Gaussian transition covariance equals the integral of the propagated diffusion") {
  const auto spec = hw2_layout().spec_from_values(hw2_layout().values());
  const double delta = 0.75;
  const auto tm = transition_moments<double>(spec, StateVector<double>::Zero(2), delta);
  const Matrix<double> G = spec.Sigma * spec.Sigma.transpose();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double ai = spec.A(i, i), aj = spec.A(j, j);
      const double ref = gauss_kronrod<double, 31>::integrate(
          [&](double s) { return std::exp(-ai * s) * G(i, j) * std::exp(-aj * s); }, 0.0, delta, 0, 1e-14);
      CHECK(tm.Q(i, j) == doctest::Approx(ref).epsilon(1e-12));
    }
  CHECK(tm.F(0, 0) == doctest::Approx(std::exp(-0.03 * delta)));
  CHECK(tm.offset.isZero(0));
}

TEST_CASE("CIR frozen transition variance") {
  const auto spec = cir_layout().spec_from_values(cir_layout().values());
  StateVector<double> x(1);
  x << 0.004;
  const double delta = 1.0 / 252;
  const auto tm = transition_moments<double>(spec, x, delta);
  const double a = 0.45, s = 0.017;
  CHECK(tm.Q(0, 0) == doctest::Approx(s * s * 0.004 * (1 - std::exp(-2 * a * delta)) / (2 * a)).epsilon(1e-12));
  CHECK(tm.offset(0) == doctest::Approx(0.001 * (1 - std::exp(-a * delta))).epsilon(1e-12));
  x << -0.01;  // floored
  CHECK(transition_moments<double>(spec, x, delta).Q(0, 0) == 0.0);
}

TEST_CASE("zero step gives the identity transition") {
  const auto spec = hw2_layout().spec_from_values(hw2_layout().values());
  const auto tm = transition_moments<double>(spec, StateVector<double>::Zero(2), 0.0);
  CHECK(tm.F.isIdentity(0));
  CHECK(tm.Q.isZero(0));
}

TEST_CASE("two-factor Hull-White yields match the closed form") {
  const auto layout = hw2_layout();
  const auto spec = layout.spec_from_values(layout.values());
  Vector<double> mats(4);
  mats << 1, 5, 10, 30;
  const auto obs = observation_map_for<double>(spec, mats, 1e-6);
  const Matrix<double> G = spec.Sigma * spec.Sigma.transpose();
  auto psi = [&](double t) {
    Vector<double> p(2);
    for (int i = 0; i < 2; ++i) p(i) = -(1 - std::exp(-spec.A(i, i) * t)) / spec.A(i, i);
    return p;
  };
  for (int l = 0; l < mats.size(); ++l) {
    const double tau = mats(l);
    const Vector<double> p = psi(tau);
    for (int i = 0; i < 2; ++i) CHECK(obs.H(l, i) == doctest::Approx(-p(i) / tau).epsilon(1e-11));
    const double phi = gauss_kronrod<double, 61>::integrate(
        [&](double s) {
          const Vector<double> q = psi(s);
          return 0.5 * q.dot(G * q);
        },
        0.0, tau, 5, 1e-15);
    CHECK(obs.H0(l) == doctest::Approx(-phi / tau).epsilon(1e-9));
  }
}

TEST_CASE("bond price and zero rate agree") {
  StateVector<double> psi(2), x(2);
  psi << -0.8, -0.3;
  x << 0.02, -0.01;
  const double phi = -0.001, tau = 1.0;
  const double price = bond_price(phi, psi, x);
  CHECK(zero_rate(tau, phi, psi, x) == doctest::Approx(-std::log(price) / tau).epsilon(1e-14));
}

TEST_CASE("maturity order does not matter for the observation map") {
  const auto spec = cir_layout().spec_from_values(cir_layout().values());
  Vector<double> a(3), b(3);
  a << 1, 10, 30;
  b << 30, 1, 10;
  const auto oa = observation_map_for<double>(spec, a, 1e-8);
  const auto ob = observation_map_for<double>(spec, b, 1e-8);
  CHECK(oa.H(0, 0) == ob.H(1, 0));
  CHECK(oa.H0(2) == ob.H0(0));
}

TEST_CASE("hw2 canonicalization swaps factors and state") {
  auto layout = hw2_layout();
  Vector<double> lo(5), hi(5);
  lo << 0, 0, 0, 0, -0.8;
  hi << 0.4, 0.4, 0.1, 0.1, -0.3;
  layout.enable_canonical_order(lo, hi);
  REQUIRE(layout.canonical_order());
  Vector<double> th(5);
  th << 0.3, 0.1, 0.05, 0.01, -0.5;
  GaussianState<double> g{StateVector<double>(2), StateMatrix<double>(2, 2)};
  g.mean << 1, 2;
  g.cov << 1, 0.5, 0.5, 4;
  const auto before = observation_map_for<double>(layout.spec(th), Vector<double>::LinSpaced(3, 1, 3), 1e-6);
  CHECK(layout.canonicalize(th, &g));
  CHECK(th(0) == 0.1);
  CHECK(th(2) == 0.01);
  CHECK(g.mean(0) == 2);
  CHECK(g.cov(0, 0) == 4);
  const auto after = observation_map_for<double>(layout.spec(th), Vector<double>::LinSpaced(3, 1, 3), 1e-6);
  for (int l = 0; l < 3; ++l) CHECK(after.H0(l) == doctest::Approx(before.H0(l)).epsilon(1e-12));
}
