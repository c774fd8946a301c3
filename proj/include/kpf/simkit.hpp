#pragma once

// Synthetic ground truth for the calibration experiments.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kpf/affine_model.hpp"
#include "kpf/dense.hpp"
#include "kpf/rng.hpp"

namespace kpf {

/// Parameter values in force from `first_step` (1-based) onward.
struct TruthSegment {
  std::size_t first_step = 1;
  std::vector<std::string> names;
  Vector<double> values;
};

struct SeriesTruth {
  std::string model;
  std::vector<TruthSegment> segments;
  RowMatrix<double> latent;  // K x d, row k is x at times[k]
  std::uint64_t seed = 0;
};

/// Noisy zero-rate panel; row k of y is observed at times[k].
struct ObservationSeries {
  Vector<double> times;
  Vector<double> maturities;
  RowMatrix<double> y;
  double h = 0;
  std::optional<SeriesTruth> truth;

  int steps() const { return static_cast<int>(times.size()); }
  int observations() const { return static_cast<int>(maturities.size()); }
  /// Step between consecutive observations, with t_0 = 0 before the first.
  double step_size(int k) const { return times(k) - (k == 0 ? 0.0 : times(k - 1)); }
  double max_step() const;
  /// Throws when the invariants (increasing times, L >= 1, y shape) fail.
  void check() const;
};

inline constexpr double kTradingDay = 1.0 / 252.0;

/// t_k = t0 + k * delta for k = 1..K.
Vector<double> regular_times(int K, double delta, double t0 = 0.0);

/// One draw from chi^2_p(lambda): a shifted normal square plus a central
/// chi^2_{p-1} when p > 1, a Poisson mixture of central chi^2 otherwise.
double sample_noncentral_chi2(double dof, double noncentrality, Xoshiro256& rng);

/// Exact CIR transition x_{t+dt} | x_t for fixed parameters and step:
/// c chi^2_p(lambda) with c = sigma^2 (1 - e^{-alpha dt}) / (4 alpha),
/// p = 4 alpha beta / sigma^2, lambda = x e^{-alpha dt} / c.
class CirTransition {
 public:
  CirTransition(double alpha, double beta, double sigma, double dt);
  double operator()(double x, Xoshiro256& rng);

 private:
  double decay_, integral_, drift_;
  double c_ = 0, dof_ = 0;
  std::normal_distribution<double> normal_;
  std::gamma_distribution<double> tail_;
};

/// Exact CIR transition x_{t+dt} | x_t.
double cir_transition(double alpha, double beta, double sigma, double x, double dt, Xoshiro256& rng);

/// Exact CIR path at `times` starting from x0 at t0.
Vector<double> simulate_cir(double alpha, double beta, double sigma, double x0, const Vector<double>& times,
                            Xoshiro256& rng, double t0 = 0.0);

/// Exact Gaussian OU path (SigmaTilde = 0). Row k is x at times[k].
RowMatrix<double> simulate_ou(const AffineModelSpec<double>& spec, const StateVector<double>& x0,
                              const Vector<double>& times, Xoshiro256& rng, double t0 = 0.0);

inline constexpr int kDefaultSvSubsteps = 16;

/// sqrt(x_1)-driven path by frozen-diffusion Gaussian substeps, first
/// coordinate floored at 0 after each substep.
RowMatrix<double> simulate_sv(const AffineModelSpec<double>& spec, const StateVector<double>& x0,
                              const Vector<double>& times, int substeps, Xoshiro256& rng, double t0 = 0.0);

/// Rows of y = H x_k + H0 + v_k with v_k ~ N(0, h I); h = 0 gives exact yields.
RowMatrix<double> noisy_yields(const ObservationMap<double>& obs, const RowMatrix<double>& latent, double h,
                               Xoshiro256& rng);

/// Yields for a whole path under one model, returned as a series.
ObservationSeries make_observations(const RowMatrix<double>& latent, const Vector<double>& times,
                                    const AffineModelSpec<double>& spec, const Vector<double>& maturities,
                                    double h, Xoshiro256& rng);

/// Appends `tail` to `head` (times must continue increasing).
ObservationSeries concatenate(const ObservationSeries& head, const ObservationSeries& tail);

}  // namespace kpf
