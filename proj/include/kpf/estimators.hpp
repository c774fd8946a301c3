#pragma once

// Online parameter estimators for affine term-structure models:
//   - Kalman particle filter (static parameters and change-point tracking),
//   - recursive nested particle filter (baseline),
//   - exact posterior over a finite parameter grid (reference).

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kpf/kalman.hpp"
#include "kpf/models.hpp"
#include "kpf/riccati.hpp"
#include "kpf/simkit.hpp"
#include "kpf/smc.hpp"

namespace kpf {

enum class Resampling { multinomial, systematic };
enum class Phase { nonrecursive, recursive };

std::string to_string(Phase p);

/// Default switching level N^{-3/2}.
double default_switch_level(int N);

struct KpfConfig {
  int N = 1000;
  JitterConfig jitter{0.98, -1.0, -1.0, KernelMode::shrinkage};  // V_N < 0: N^{-3/2}; V_f < 0: V_N / 100
  ThetaBounds<double> priors;           // uniform priors, also the box D_theta
  GaussianState<double> x0_prior;
  double b = 0.1;                       // change-point threshold (tracking only)
  std::uint64_t seed = 1;
  Resampling resampling = Resampling::multinomial;
  bool start_recursive = false;         // skip the replay phase entirely
  std::optional<RowMatrix<double>> initial_particles;
  int max_replay = 0;                   // 0 = replay from the segment start
  bool record_state = false;
  bool canonical_order = true;
  RiccatiOptions riccati;

  /// Fills the V_N / V_f defaults and validates against the layout.
  void resolve(const ModelLayout& layout);
};

struct RnpfConfig {
  int N = 500;
  int M = 150;
  double jitter_variance = -1;          // <= 0 selects N^{-3/2}
  ThetaBounds<double> priors;
  GaussianState<double> x0_prior;
  std::uint64_t seed = 1;
  int sv_substeps = kDefaultSvSubsteps;
  bool canonical_order = true;
  std::optional<RowMatrix<double>> initial_particles;
  RiccatiOptions riccati;

  void resolve(const ModelLayout& layout);
};

struct TraceRow {
  std::size_t step = 0;                 // 1-based observation index
  Vector<double> mean;                  // weighted posterior mean of theta
  Vector<double> sd;                    // weighted posterior standard deviation
  Vector<double> jitter_sd;             // standard deviation of the kernel used at this step
  double max_loglik = 0;                // max_i log p(y_k | y_{1:k-1}, theta_i)
  double switch_stat = 0;               // max_j (1 - a^2) Var(theta_j) before jittering
  Phase phase = Phase::nonrecursive;
  bool reset = false;
  Vector<double> state_mean;            // filled when record_state is on
};

struct PosteriorTrace {
  std::string estimator;
  std::vector<std::string> names;
  std::vector<TraceRow> rows;
  std::vector<std::size_t> switch_steps;  // first recursive step of each segment
  std::vector<std::size_t> resets;
  RowMatrix<double> final_particles;
  double seconds = 0;

  std::optional<std::size_t> first_switch() const {
    return switch_steps.empty() ? std::nullopt : std::optional<std::size_t>(switch_steps.front());
  }
};

/// Sees the weighted, not yet resampled cloud after every step.
using CloudObserver =
    std::function<void(std::size_t step, const RowMatrix<double>& particles, const Vector<double>& weights)>;

/// Everything a particle needs that depends on theta only.
struct ParticleModel {
  Vector<double> theta;
  AffineModelSpec<double> spec;
  bool ok = false;                      // false: Riccati blew up, likelihood is zero
  Matrix<double> HH0;                   // [H H0], L x (d + 1)
  ReducedObservation<double> red;
  TransitionKernel<double> kernel;      // for the series' common step, when there is one
};

using ModelPtr = std::shared_ptr<const ParticleModel>;

/// Builds models for many parameter vectors with one batched Riccati sweep.
std::vector<ModelPtr> build_models(const ModelLayout& layout, const std::vector<Vector<double>>& thetas,
                                   const Vector<double>& maturities, double h, std::optional<double> common_step,
                                   const RiccatiOptions& opts);

/// Kalman particle filter, one observation per call to step().
class KalmanParticleFilter {
 public:
  KalmanParticleFilter(const ObservationSeries& series, ModelLayout layout, KpfConfig cfg,
                       bool track_changes = false);

  bool done() const { return next_ >= static_cast<std::size_t>(series_.steps()); }
  std::size_t next_step() const { return next_ + 1; }
  Phase phase() const { return phase_; }
  const RowMatrix<double>& particles() const { return theta_; }
  const std::vector<GaussianState<double>>& states() const { return states_; }

  /// Processes the next observation and returns its trace row.
  TraceRow step(const CloudObserver& observer = {});
  PosteriorTrace run(const CloudObserver& observer = {});

 private:
  void initialize_segment(std::size_t first_index);
  void ensure_models(const std::vector<int>& which);
  double replay(int i, std::size_t k);
  double advance(int i, std::size_t k);
  TransitionMoments<double> moments(const ParticleModel& m, const StateVector<double>& x, std::size_t k) const;

  const ObservationSeries& series_;
  ModelLayout layout_;
  KpfConfig cfg_;
  bool track_changes_;
  std::optional<double> common_step_;
  Vector<double> ysq_;

  RowMatrix<double> theta_;
  std::vector<ModelPtr> models_;
  std::vector<GaussianState<double>> states_;
  Phase phase_ = Phase::nonrecursive;
  std::size_t next_ = 0;
  std::size_t segment_start_ = 0;
  std::optional<double> previous_max_;
  PosteriorTrace trace_;
};

PosteriorTrace kpf_run(const ObservationSeries& series, const ModelLayout& layout, const KpfConfig& cfg,
                       const CloudObserver& observer = {});

/// Same as kpf_run plus change-point detection and restart.
PosteriorTrace kpf_tv_run(const ObservationSeries& series, const ModelLayout& layout, const KpfConfig& cfg,
                          const CloudObserver& observer = {});

PosteriorTrace rnpf_run(const ObservationSeries& series, const ModelLayout& layout, const RnpfConfig& cfg,
                        const CloudObserver& observer = {});

/// Row k holds the exact posterior over `grid` (rows are theta values)
/// after observing y_1..y_k, under a uniform prior on the grid.
RowMatrix<double> grid_posterior_oracle(const ObservationSeries& series, const ModelLayout& layout,
                                        const RowMatrix<double>& grid, const GaussianState<double>& x0_prior,
                                        const RiccatiOptions& opts = {});

/// Common step of a series when all steps agree to 1e-12 relative.
std::optional<double> common_step(const ObservationSeries& series);

}  // namespace kpf
