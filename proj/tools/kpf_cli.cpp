// kpf: simulate datasets, calibrate term-structure models online, report
// errors against the truth and run the acceptance suite.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "criteria.hpp"
#include "kpf/experiment.hpp"

namespace fs = std::filesystem;

namespace {

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

kpf::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed, bool data_seed) {
  auto cfg = kpf::load_config(path);
  if (seed) {
    if (data_seed)
      cfg.data.seed = *seed;
    else
      cfg.estimator.seed = *seed;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online calibration of affine term-structure models with the Kalman particle filter"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  auto common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config, "experiment config (JSON)");
    if (needs_config) opt->required();
    cmd->add_option("--out", out, "output directory (default: output.dir of the config)");
    cmd->add_option("--seed", seed, "override the data seed (simulate) or estimator seed (calibrate)");
    cmd->add_option("--threads", threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  };

  auto* simulate = app.add_subcommand("simulate", "simulate a dataset and its truth sidecar");
  common(simulate, true);
  auto* calibrate = app.add_subcommand("calibrate", "run an estimator and write trace.csv and summary.json");
  common(calibrate, true);

  auto* report = app.add_subcommand("report", "score traces against the truth");
  common(report, false);
  std::vector<std::string> traces;
  std::string truth;
  report->add_option("traces", traces, "trace CSV files")->required();
  report->add_option("--truth", truth, "truth sidecar JSON")->required();

  auto* selftest = app.add_subcommand("selftest", "run the acceptance criteria");
  common(selftest, false);
  std::vector<int> only;
  int seeds = 10;
  selftest->add_option("--only", only, "criterion numbers to run (default: all)")->delimiter(',');
  selftest->add_option("--seeds", seeds, "seeded repetitions for the statistical criteria")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  set_threads(threads);

  try {
    if (*simulate) {
      const auto cfg = load(config, seed, true);
      return kpf::cmd_simulate(cfg, out.empty() ? cfg.output.dir : fs::path(out));
    }
    if (*calibrate) {
      const auto cfg = load(config, seed, false);
      return kpf::cmd_calibrate(cfg, out.empty() ? cfg.output.dir : fs::path(out));
    }
    if (*report) {
      std::vector<fs::path> paths(traces.begin(), traces.end());
      return kpf::cmd_report(paths, truth, out.empty() ? fs::path("report") : fs::path(out));
    }
    if (*selftest) {
      kpf::acceptance::Options opts;
      opts.only = only;
      opts.seeds = seeds;
      if (seed) opts.base_seed = *seed;
      opts.log = &std::cerr;
      const auto results = kpf::acceptance::run(opts, std::cout);
      return kpf::acceptance::exit_code(results);
    }
  } catch (const std::exception& e) {
    return kpf::exit_code_for(e);
  }
  return 0;
}
