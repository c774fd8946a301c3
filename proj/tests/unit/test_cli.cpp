#include <doctest.h>

#include <filesystem>
#include <json.hpp>

#include "kpf/experiment.hpp"
#include "kpf/io.hpp"

using namespace kpf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("kpf_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json small_config() {
  return json::parse(R"({
    "model": {"type": "hw2",
              "values": {"alpha11": 0.03, "alpha22": 0.23, "sigma1": 0.02, "sigma2": 0.02, "rho": -0.5},
              "estimate": ["alpha11", "alpha22", "sigma1", "sigma2", "rho"]},
    "data": {"K": 25, "maturities": [1, 5, 10], "h": 1e-6, "seed": 5, "x0": [0, 0]},
    "estimator": {"kind": "kpf", "N": 16, "seed": 9},
    "output": {"dir": "out"}
  })");
}

void check_config_error(json doc, const std::string& field) {
  try {
    parse_config(doc);
    FAIL("expected a config error for " << field);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(field) != std::string::npos);
  }
}

}  // namespace

TEST_CASE("dataset CSV and truth sidecar round-trip") {
  const auto cfg = parse_config(small_config());
  const auto series = simulate(cfg);
  const auto dir = scratch_dir("roundtrip");
  write_series_csv(series, dir / "data.csv");
  write_truth_json(series, truth_path_for(dir / "data.csv"));
  auto back = read_series_csv(dir / "data.csv");
  read_truth_json(back, truth_path_for(dir / "data.csv"));
  CHECK(back.times == series.times);
  CHECK(back.maturities == series.maturities);
  CHECK(back.y == series.y);
  CHECK(back.h == series.h);
  REQUIRE(back.truth.has_value());
  CHECK(back.truth->latent == series.truth->latent);
  CHECK(back.truth->seed == series.truth->seed);
  CHECK(back.truth->segments.front().values == series.truth->segments.front().values);
  CHECK(truth_path_for("a/b/data.csv") == fs::path("a/b/data.truth.json"));
}

TEST_CASE("an empty dataset round-trips") {
  auto doc = small_config();
  doc["data"]["K"] = 0;
  const auto series = simulate(parse_config(doc));
  const auto dir = scratch_dir("empty");
  write_series_csv(series, dir / "data.csv");
  const auto back = read_series_csv(dir / "data.csv");
  CHECK(back.steps() == 0);
  CHECK(back.observations() == 3);
}

TEST_CASE("malformed CSV is an I/O error naming the line") {
  const auto dir = scratch_dir("malformed");
  write_text(dir / "bad.csv", "time,tau_1\n0.1,0.02\n0.2,abc\n");
  try {
    read_series_csv(dir / "bad.csv");
    FAIL("expected an I/O error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  CHECK_THROWS_AS(read_series_csv(dir / "missing.csv"), IoError);
}

TEST_CASE("config errors name the offending field") {
  auto doc = small_config();
  doc["model"]["type"] = "vasicek";
  check_config_error(doc, "model.type");
  doc = small_config();
  doc["estimator"]["N"] = -3;
  check_config_error(doc, "estimator.N");
  doc = small_config();
  doc["data"]["maturities"] = "ten";
  check_config_error(doc, "data.maturities");
  doc = small_config();
  doc["estimator"]["priors"] = {{"alpha11", {0.5, 0.1}}};
  CHECK_THROWS_AS(parse_config(doc), ConfigError);
}

TEST_CASE("exceptions map onto exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
  CHECK(exit_code_for(DimensionError("x")) == kExitConfig);
  CHECK(exit_code_for(IoError("x")) == kExitIo);
  CHECK(exit_code_for(NumericalError("x", 7)) == kExitNumerical);
  CHECK(exit_code_for(WeightDegeneracy("x", 7)) == kExitNumerical);
}

TEST_CASE("simulate output is byte-identical across runs") {
  const auto cfg = parse_config(small_config());
  const auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
  CHECK(cmd_simulate(cfg, a) == kExitOk);
  CHECK(cmd_simulate(cfg, b) == kExitOk);
  CHECK(read_text(a / "data.csv") == read_text(b / "data.csv"));
  CHECK(read_text(a / "data.truth.json") == read_text(b / "data.truth.json"));
}

TEST_CASE("calibrate writes a trace and a replayable summary") {
  const auto cfg = parse_config(small_config());
  const auto dir = scratch_dir("calibrate");
  REQUIRE(cmd_calibrate(cfg, dir) == kExitOk);
  const json summary = json::parse(read_text(dir / "summary.json"));
  CHECK(summary["parameters"].size() == 5);
  CHECK(summary["final_mean"].size() == 5);
  CHECK(summary["data_seed"] == 5);
  CHECK(summary["estimator_seed"] == 9);
  const auto trace = read_trace_csv(dir / "trace.csv");
  CHECK(trace.rows.size() == 25);

  const auto again = parse_config(summary["config"]);
  const auto dir2 = scratch_dir("calibrate_again");
  REQUIRE(cmd_calibrate(again, dir2) == kExitOk);
  CHECK(read_text(dir / "trace.csv") == read_text(dir2 / "trace.csv"));
}

TEST_CASE("trace CSV round-trips") {
  PosteriorTrace t;
  t.estimator = "kpf";
  t.names = {"a", "b"};
  for (std::size_t k = 1; k <= 3; ++k) {
    TraceRow r;
    r.step = k;
    r.mean = (Vector<double>(2) << 0.1 * k, 1.0 / 3).finished();
    r.sd = Vector<double>::Constant(2, 0.01);
    r.jitter_sd = Vector<double>::Constant(2, 1e-4);
    r.max_loglik = -1.5 * k;
    r.switch_stat = 1e-7;
    r.phase = k >= 2 ? Phase::recursive : Phase::nonrecursive;
    r.reset = k == 3;
    t.rows.push_back(r);
  }
  const auto dir = scratch_dir("trace");
  write_trace_csv(t, dir / "trace.csv");
  const auto back = read_trace_csv(dir / "trace.csv");
  REQUIRE(back.rows.size() == 3);
  CHECK(back.names == t.names);
  CHECK(back.rows[0].mean == t.rows[0].mean);
  CHECK(back.rows[2].max_loglik == t.rows[2].max_loglik);
  CHECK(back.switch_steps == std::vector<std::size_t>{2});
  CHECK(back.resets == std::vector<std::size_t>{3});
}

TEST_CASE("report of a perfect trace has zero error") {
  const auto cfg = parse_config(small_config());
  const auto series = simulate(cfg);
  PosteriorTrace t;
  t.names = cfg.model.layout().estimated_names();
  for (std::size_t k = 1; k <= 4; ++k) {
    TraceRow r;
    r.step = k;
    r.mean = truth_at(*series.truth, k, t.names);
    r.sd = Vector<double>::Zero(5);
    t.rows.push_back(r);
  }
  const auto dir = scratch_dir("report");
  const json m = report({{"perfect", t}}, *series.truth, dir);
  CHECK(m["perfect"]["final_relative_rmse"] == 0.0);
  CHECK(fs::exists(dir / "errors.csv"));
  CHECK(fs::exists(dir / "plot.csv"));
  CHECK(fs::exists(dir / "rmse.csv"));
}

TEST_CASE("relative RMSE") {
  CHECK(relative_rmse((Vector<double>(2) << 1.1, 2.0).finished(), (Vector<double>(2) << 1.0, 2.0).finished()) ==
        doctest::Approx(std::sqrt(0.01 / 2)));
  CHECK_THROWS_AS(relative_rmse(Vector<double>(1), Vector<double>(2)), DimensionError);
}
