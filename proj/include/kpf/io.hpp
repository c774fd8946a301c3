#pragma once

// On-disk formats: dataset CSV, truth sidecar JSON, trace CSV and summary JSON.

#include <filesystem>
#include <string>
#include <vector>

#include "kpf/estimators.hpp"
#include "kpf/simkit.hpp"

namespace kpf {

/// Header `time,tau_<maturity>...`, one row per step, full precision.
void write_series_csv(const ObservationSeries& series, const std::filesystem::path& path);
/// Reads times, maturities and y; h and truth are not part of the CSV.
ObservationSeries read_series_csv(const std::filesystem::path& path);

/// Sidecar holding h, the data seed, the true parameters and the latent path.
void write_truth_json(const ObservationSeries& series, const std::filesystem::path& path);
/// Fills series.h and series.truth from a sidecar.
void read_truth_json(ObservationSeries& series, const std::filesystem::path& path);

/// Sidecar path for a dataset: data.csv -> data.truth.json.
std::filesystem::path truth_path_for(const std::filesystem::path& dataset);

std::string trace_csv(const PosteriorTrace& trace);
void write_trace_csv(const PosteriorTrace& trace, const std::filesystem::path& path);
PosteriorTrace read_trace_csv(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// %.17g, the shortest format that round-trips every double.
std::string format_double(double v);

}  // namespace kpf
