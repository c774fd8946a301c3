#pragma once

// Config-driven experiment harness behind the `kpf` command line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpf/estimators.hpp"
#include "kpf/models.hpp"
#include "kpf/simkit.hpp"

namespace kpf {

enum class EstimatorKind { kpf, kpf_tv, rnpf, oracle };

std::string to_string(EstimatorKind k);

struct ModelBlock {
  ModelFamily family = ModelFamily::cir;
  Vector<double> values;                 // every family parameter, canonical order
  std::vector<std::string> estimate;
  std::optional<Vector<double>> gamma;
  double c = 0;
  double sv_level = 0.1;

  ModelLayout layout() const;
};

struct JumpBlock {
  std::size_t step = 0;                  // first step under the new values (1-based)
  Vector<double> values;
};

struct DataBlock {
  std::optional<std::filesystem::path> path;
  int K = 0;
  double step = kTradingDay;
  Vector<double> maturities;
  double h = 0;
  std::uint64_t seed = 1;
  Vector<double> x0;
  int sv_substeps = kDefaultSvSubsteps;
  std::optional<JumpBlock> jump;
};

struct EstimatorBlock {
  EstimatorKind kind = EstimatorKind::kpf;
  int N = 1000;
  int M = 150;
  JitterConfig jitter{0.98, -1.0, -1.0, KernelMode::shrinkage};
  double b = 0.1;
  ThetaBounds<double> priors;
  GaussianState<double> x0_prior;
  std::uint64_t seed = 1;
  Resampling resampling = Resampling::multinomial;
  bool start_recursive = false;
  int max_replay = 0;
  std::vector<Vector<double>> grid;      // oracle: one value list per estimated parameter
};

struct OutputBlock {
  std::filesystem::path dir = "out";
  bool state_trace = false;
};

struct ExperimentConfig {
  ModelBlock model;
  DataBlock data;
  EstimatorBlock estimator;
  OutputBlock output;
  nlohmann::json source;                 // the parsed document, echoed into summaries
};

/// Parses a config document. Errors name the offending field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Simulated dataset for the model and data blocks, truth attached.
ObservationSeries simulate(const ExperimentConfig& cfg);

/// Dataset named by data.path (with its sidecar), or a fresh simulation.
ObservationSeries load_or_simulate(const ExperimentConfig& cfg);

KpfConfig kpf_config(const ExperimentConfig& cfg);
RnpfConfig rnpf_config(const ExperimentConfig& cfg);

/// Runs the configured estimator on `series`.
PosteriorTrace calibrate(const ExperimentConfig& cfg, const ObservationSeries& series);

/// Parameter values in force at `step` (1-based), projected to `names`.
Vector<double> truth_at(const SeriesTruth& truth, std::size_t step, const std::vector<std::string>& names);

/// sqrt(mean_j ((est_j - true_j) / true_j)^2).
double relative_rmse(const Vector<double>& estimate, const Vector<double>& truth);

nlohmann::json summary_json(const ExperimentConfig& cfg, const ObservationSeries& series, const PosteriorTrace& trace);

/// Writes per-trace error trajectories, an RMSE table and a long-format plot table.
nlohmann::json report(const std::vector<std::pair<std::string, PosteriorTrace>>& traces, const SeriesTruth& truth,
                      const std::filesystem::path& out_dir);

// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

int cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
int cmd_calibrate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
int cmd_report(const std::vector<std::filesystem::path>& traces, const std::filesystem::path& truth_file,
               const std::filesystem::path& out_dir);

/// Maps an exception thrown by the library onto an exit code and prints it.
int exit_code_for(const std::exception& e);

}  // namespace kpf
