#include <cmath>

#include "kpf/estimators.hpp"

namespace kpf {

RowMatrix<double> grid_posterior_oracle(const ObservationSeries& series, const ModelLayout& layout,
                                        const RowMatrix<double>& grid, const GaussianState<double>& x0_prior,
                                        const RiccatiOptions& opts) {
  series.check();
  if (grid.rows() < 1 || grid.cols() != layout.theta_dim())
    throw DimensionError("grid oracle: one row per grid point, one column per estimated parameter");
  const int G = static_cast<int>(grid.rows());
  const int K = series.steps();

  std::vector<AffineModelSpec<double>> specs(G);
  std::vector<ObservationMap<double>> maps(G);
  for (int g = 0; g < G; ++g) {
    specs[g] = layout.spec(grid.row(g).transpose());
    if (!specs[g].gaussian())
      throw UnsupportedRegime("grid oracle: exact likelihoods need a Gaussian transition");
    maps[g] = observation_map_for<double>(specs[g], series.maturities, series.h, opts);
  }

  RowMatrix<double> cumulative(K, G);
  for (int g = 0; g < G; ++g) {
    GaussianState<double> s = x0_prior;
    double total = 0;
    for (int k = 0; k < K; ++k) {
      const auto tm = transition_moments<double>(specs[g], s.mean, series.step_size(k));
      auto upd = kf_update(kf_predict(s, tm), maps[g], Vector<double>(series.y.row(k).transpose()));
      s = std::move(upd.posterior);
      total += upd.loglik;
      cumulative(k, g) = total;
    }
  }

  RowMatrix<double> posterior(K, G);
  for (int k = 0; k < K; ++k) {
    const double top = cumulative.row(k).maxCoeff();
    posterior.row(k) = (cumulative.row(k).array() - top).exp();
    posterior.row(k) /= posterior.row(k).sum();
  }
  return posterior;
}

}  // namespace kpf
