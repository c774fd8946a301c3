#include "kpf/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>

#include "kpf/io.hpp"

namespace kpf {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
  throw ConfigError("config field '" + path + "': " + why);
}

template <typename T>
T get(const json& obj, const std::string& section, const char* key, std::optional<T> fallback = std::nullopt) {
  const std::string path = section + "." + key;
  if (!obj.contains(key) || obj.at(key).is_null()) {
    if (fallback) return *fallback;
    bad_field(path, "missing");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    bad_field(path, e.what());
  }
}

Vector<double> to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector<double>>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vector<double> get_vector(const json& obj, const std::string& section, const char* key,
                          std::optional<Vector<double>> fallback = std::nullopt) {
  if (!obj.contains(key) || obj.at(key).is_null()) {
    if (fallback) return *fallback;
    bad_field(section + "." + key, "missing");
  }
  return to_vector(get<std::vector<double>>(obj, section, key));
}

const json& section(const json& doc, const char* name) {
  static const json empty = json::object();
  if (!doc.contains(name)) return empty;
  if (!doc.at(name).is_object()) bad_field(name, "expected an object");
  return doc.at(name);
}

int index_of(const std::vector<std::string>& names, const std::string& name, const std::string& path) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) bad_field(path, "unknown parameter '" + name + "'");
  return static_cast<int>(it - names.begin());
}

// Prior boxes used by the experiments of each family.
std::map<std::string, std::pair<double, double>> default_priors(ModelFamily f) {
  switch (f) {
    case ModelFamily::cir:
      return {{"alpha", {0.0, 1.0}}, {"beta", {0.0, 0.01}}, {"sigma", {0.0, 0.1}}};
    case ModelFamily::hw2:
      return {{"alpha11", {0.0, 0.4}}, {"alpha22", {0.0, 0.4}}, {"sigma1", {0.0, 0.1}},
              {"sigma2", {0.0, 0.1}}, {"rho", {-0.8, -0.3}}};
    case ModelFamily::hwsv:
      return {{"alpha1", {0.0, 1.0}}, {"alpha2", {0.0, 1.0}}, {"beta", {0.0, 0.1}},
              {"sigma1", {0.0, 0.8}}, {"sigma2", {0.0, 0.2}}, {"rho", {-1.0, 1.0}}};
  }
  return {};
}

GaussianState<double> default_x0_prior(ModelFamily f, double sv_level) {
  GaussianState<double> g;
  switch (f) {
    case ModelFamily::cir:
      g.mean = StateVector<double>::Constant(1, 0.005);
      g.cov = StateMatrix<double>::Constant(1, 1, 0.01);
      break;
    case ModelFamily::hw2:
      g.mean = StateVector<double>::Zero(2);
      g.cov = StateMatrix<double>::Identity(2, 2) * 0.1;
      break;
    case ModelFamily::hwsv:
      g.mean = StateVector<double>::Zero(2);
      g.mean(0) = sv_level;
      g.cov = StateMatrix<double>::Identity(2, 2) * 0.01;
      break;
  }
  return g;
}

Vector<double> default_x0(ModelFamily f, double sv_level) {
  switch (f) {
    case ModelFamily::cir: return Vector<double>::Constant(1, 0.005);
    case ModelFamily::hw2: return Vector<double>::Zero(2);
    case ModelFamily::hwsv: {
      Vector<double> x = Vector<double>::Zero(2);
      x(0) = sv_level;
      return x;
    }
  }
  return {};
}

Vector<double> parse_values(const json& obj, const std::string& path, const std::vector<std::string>& names,
                            const std::optional<Vector<double>>& base) {
  if (!obj.is_object()) bad_field(path, "expected an object of name: value");
  Vector<double> v = base ? *base : Vector<double>::Constant(static_cast<Eigen::Index>(names.size()), NAN);
  for (const auto& [name, value] : obj.items()) {
    const int i = index_of(names, name, path + "." + name);
    if (!value.is_number()) bad_field(path + "." + name, "expected a number");
    v(i) = value.get<double>();
  }
  return v;
}

json final_block(const std::vector<std::string>& names, const Vector<double>& v) {
  json out = json::object();
  for (std::size_t j = 0; j < names.size(); ++j) out[names[j]] = v(static_cast<Eigen::Index>(j));
  return out;
}

}  // namespace

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kpf: return "kpf";
    case EstimatorKind::kpf_tv: return "kpf_tv";
    case EstimatorKind::rnpf: return "rnpf";
    case EstimatorKind::oracle: return "oracle";
  }
  return "?";
}

ModelLayout ModelBlock::layout() const {
  ModelLayout l(family, values, estimate);
  if (gamma) l.gamma = *gamma;
  l.c = c;
  l.sv_level = sv_level;
  return l;
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  ExperimentConfig cfg;
  cfg.source = doc;

  const json& m = section(doc, "model");
  const auto family = get<std::string>(m, "model", "type");
  try {
    cfg.model.family = parse_family(family);
  } catch (const Error& e) {
    bad_field("model.type", e.what());
  }
  const auto& names = family_parameters(cfg.model.family);
  cfg.model.estimate = get<std::vector<std::string>>(m, "model", "estimate", names);
  for (const auto& n : cfg.model.estimate) index_of(names, n, "model.estimate");
  cfg.model.c = get<double>(m, "model", "c", 0.0);
  cfg.model.sv_level = get<double>(m, "model", "sv_level", 0.1);
  if (m.contains("gamma")) cfg.model.gamma = get_vector(m, "model", "gamma");
  if (!m.contains("values")) bad_field("model.values", "missing");
  cfg.model.values = parse_values(m.at("values"), "model.values", names, std::nullopt);

  const json& e = section(doc, "estimator");
  const std::string kind = get<std::string>(e, "estimator", "kind", std::string("kpf"));
  if (kind == "kpf") cfg.estimator.kind = EstimatorKind::kpf;
  else if (kind == "kpf_tv") cfg.estimator.kind = EstimatorKind::kpf_tv;
  else if (kind == "rnpf") cfg.estimator.kind = EstimatorKind::rnpf;
  else if (kind == "oracle") cfg.estimator.kind = EstimatorKind::oracle;
  else bad_field("estimator.kind", "expected kpf, kpf_tv, rnpf or oracle");
  auto& est = cfg.estimator;
  est.N = get<int>(e, "estimator", "N", 1000);
  est.M = get<int>(e, "estimator", "M", 150);
  est.jitter.a = get<double>(e, "estimator", "a", 0.98);
  est.jitter.V_N = get<double>(e, "estimator", "V_N", -1.0);
  est.jitter.V_f = get<double>(e, "estimator", "V_f", -1.0);
  est.b = get<double>(e, "estimator", "b", 0.1);
  est.seed = get<std::uint64_t>(e, "estimator", "seed", 1);
  est.start_recursive = get<bool>(e, "estimator", "start_recursive", false);
  est.max_replay = get<int>(e, "estimator", "max_replay", 0);
  const std::string rs = get<std::string>(e, "estimator", "resampling", std::string("multinomial"));
  if (rs == "multinomial") est.resampling = Resampling::multinomial;
  else if (rs == "systematic") est.resampling = Resampling::systematic;
  else bad_field("estimator.resampling", "expected multinomial or systematic");
  if (est.N < 1) bad_field("estimator.N", "must be positive");
  if (est.M < 1) bad_field("estimator.M", "must be positive");

  // Estimated parameters without a value get the prior midpoint.
  const auto defaults = default_priors(cfg.model.family);
  const int p = static_cast<int>(cfg.model.estimate.size());
  est.priors.lo.resize(p);
  est.priors.hi.resize(p);
  const json priors = e.contains("priors") ? e.at("priors") : json::object();
  if (!priors.is_object()) bad_field("estimator.priors", "expected an object of name: [lo, hi]");
  for (const auto& [name, box] : priors.items()) index_of(cfg.model.estimate, name, "estimator.priors." + name);
  for (int j = 0; j < p; ++j) {
    const std::string& n = cfg.model.estimate[j];
    std::pair<double, double> box = defaults.at(n);
    if (priors.contains(n)) {
      const auto v = get<std::vector<double>>(priors, "estimator.priors", n.c_str());
      if (v.size() != 2 || !(v[0] <= v[1])) bad_field("estimator.priors." + n, "expected [lo, hi] with lo <= hi");
      box = {v[0], v[1]};
    }
    est.priors.lo(j) = box.first;
    est.priors.hi(j) = box.second;
  }
  for (int j = 0; j < p; ++j) {
    const int full = index_of(names, cfg.model.estimate[j], "model.estimate");
    if (std::isnan(cfg.model.values(full))) cfg.model.values(full) = 0.5 * (est.priors.lo(j) + est.priors.hi(j));
  }
  for (Eigen::Index i = 0; i < cfg.model.values.size(); ++i)
    if (std::isnan(cfg.model.values(i))) bad_field("model.values." + names[static_cast<std::size_t>(i)], "missing");

  est.x0_prior = default_x0_prior(cfg.model.family, cfg.model.sv_level);
  if (e.contains("x0_prior")) {
    const json& x = e.at("x0_prior");
    const Vector<double> mean = get_vector(x, "estimator.x0_prior", "mean");
    est.x0_prior.mean = mean;
    const int d = static_cast<int>(mean.size());
    if (x.contains("cov")) {
      const auto rows = get<std::vector<std::vector<double>>>(x, "estimator.x0_prior", "cov");
      if (static_cast<int>(rows.size()) != d) bad_field("estimator.x0_prior.cov", "must be d x d");
      est.x0_prior.cov.resize(d, d);
      for (int i = 0; i < d; ++i) {
        if (static_cast<int>(rows[i].size()) != d) bad_field("estimator.x0_prior.cov", "must be d x d");
        for (int j = 0; j < d; ++j) est.x0_prior.cov(i, j) = rows[i][j];
      }
    } else {
      const Vector<double> var = get_vector(x, "estimator.x0_prior", "var");
      if (var.size() != d) bad_field("estimator.x0_prior.var", "must have d entries");
      est.x0_prior.cov = var.asDiagonal();
    }
  }
  if (e.contains("grid")) {
    const json& g = e.at("grid");
    for (const auto& n : cfg.model.estimate) {
      if (!g.contains(n)) bad_field("estimator.grid." + n, "missing; the grid needs every estimated parameter");
      est.grid.push_back(get_vector(g, "estimator.grid", n.c_str()));
    }
  }

  const json& d = section(doc, "data");
  auto& data = cfg.data;
  if (d.contains("path")) data.path = fs::path(get<std::string>(d, "data", "path"));
  data.K = get<int>(d, "data", "K", 0);
  data.step = get<double>(d, "data", "step", kTradingDay);
  data.h = get<double>(d, "data", "h", 0.0);
  data.seed = get<std::uint64_t>(d, "data", "seed", 1);
  data.sv_substeps = get<int>(d, "data", "sv_substeps", kDefaultSvSubsteps);
  data.x0 = get_vector(d, "data", "x0", default_x0(cfg.model.family, cfg.model.sv_level));
  if (!data.path) {
    data.maturities = get_vector(d, "data", "maturities");
    if (data.K < 0) bad_field("data.K", "must be non-negative");
    if (!(data.step > 0)) bad_field("data.step", "must be positive");
    if (!(data.h >= 0)) bad_field("data.h", "must be non-negative");
    if (data.sv_substeps < 1) bad_field("data.sv_substeps", "must be positive");
  }
  if (d.contains("jump")) {
    const json& j = d.at("jump");
    JumpBlock jump;
    jump.step = get<std::size_t>(j, "data.jump", "step");
    if (!j.contains("values")) bad_field("data.jump.values", "missing");
    jump.values = parse_values(j.at("values"), "data.jump.values", names, cfg.model.values);
    if (jump.step < 2) bad_field("data.jump.step", "must be at least 2");
    data.jump = jump;
  }

  const json& o = section(doc, "output");
  cfg.output.dir = fs::path(get<std::string>(o, "output", "dir", std::string("out")));
  cfg.output.state_trace = get<bool>(o, "output", "state_trace", false);
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  const std::string text = read_text(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
  try {
    return parse_config(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {

RowMatrix<double> simulate_path(const ModelLayout& layout, const Vector<double>& values, const StateVector<double>& x0,
                                const Vector<double>& times, int substeps, Xoshiro256& rng, double t0) {
  const auto spec = layout.spec_from_values(values);
  switch (layout.family()) {
    case ModelFamily::cir: {
      const Vector<double> path = simulate_cir(values(0), values(1), values(2), x0(0), times, rng, t0);
      return RowMatrix<double>(path);
    }
    case ModelFamily::hw2: return simulate_ou(spec, x0, times, rng, t0);
    case ModelFamily::hwsv: return simulate_sv(spec, x0, times, substeps, rng, t0);
  }
  return {};
}

}  // namespace

ObservationSeries simulate(const ExperimentConfig& cfg) {
  const auto& data = cfg.data;
  const ModelLayout layout = cfg.model.layout();
  const auto& names = layout.names();
  if (data.x0.size() != layout.state_dim()) bad_field("data.x0", "dimension does not match the model state");
  auto path_rng = make_stream(data.seed, 0, 0, StreamPurpose::simulation);
  auto noise_rng = make_stream(data.seed, 0, 0, StreamPurpose::noise);
  const Vector<double> times = regular_times(data.K, data.step);

  struct Piece {
    std::size_t first;
    Vector<double> values;
  };
  std::vector<Piece> pieces{{1, cfg.model.values}};
  if (data.jump && data.jump->step <= static_cast<std::size_t>(data.K)) pieces.push_back({data.jump->step, data.jump->values});

  SeriesTruth truth;
  truth.model = to_string(layout.family());
  truth.seed = data.seed;
  truth.latent.resize(data.K, layout.state_dim());
  ObservationSeries out;
  out.times = times;
  out.maturities = data.maturities;
  out.y.resize(data.K, data.maturities.size());
  out.h = data.h;

  StateVector<double> x = data.x0;
  double t0 = 0;
  for (std::size_t s = 0; s < pieces.size(); ++s) {
    truth.segments.push_back({pieces[s].first, names, pieces[s].values});
    const Eigen::Index first = static_cast<Eigen::Index>(pieces[s].first) - 1;
    const Eigen::Index last = s + 1 < pieces.size() ? static_cast<Eigen::Index>(pieces[s + 1].first) - 1 : data.K;
    const Eigen::Index n = last - first;
    if (n <= 0) continue;
    const Vector<double> seg_times = times.segment(first, n);
    const RowMatrix<double> latent =
        simulate_path(layout, pieces[s].values, x, seg_times, data.sv_substeps, path_rng, t0);
    const auto spec = layout.spec_from_values(pieces[s].values);
    const auto seg = make_observations(latent, seg_times, spec, data.maturities, data.h, noise_rng);
    truth.latent.middleRows(first, n) = latent;
    out.y.middleRows(first, n) = seg.y;
    x = latent.row(n - 1).transpose();
    t0 = seg_times(n - 1);
  }
  out.truth = std::move(truth);
  out.check();
  return out;
}

ObservationSeries load_or_simulate(const ExperimentConfig& cfg) {
  if (!cfg.data.path) return simulate(cfg);
  ObservationSeries s = read_series_csv(*cfg.data.path);
  const fs::path sidecar = truth_path_for(*cfg.data.path);
  if (fs::exists(sidecar)) read_truth_json(s, sidecar);
  if (cfg.data.h > 0) s.h = cfg.data.h;
  if (!(s.h > 0)) bad_field("data.h", "no positive noise variance in the config or the truth sidecar");
  return s;
}

KpfConfig kpf_config(const ExperimentConfig& cfg) {
  const auto& e = cfg.estimator;
  KpfConfig k;
  k.N = e.N;
  k.jitter = e.jitter;
  k.priors = e.priors;
  k.x0_prior = e.x0_prior;
  k.b = e.b;
  k.seed = e.seed;
  k.resampling = e.resampling;
  k.start_recursive = e.start_recursive;
  k.max_replay = e.max_replay;
  k.record_state = cfg.output.state_trace;
  return k;
}

RnpfConfig rnpf_config(const ExperimentConfig& cfg) {
  const auto& e = cfg.estimator;
  RnpfConfig r;
  r.N = e.N;
  r.M = e.M;
  r.jitter_variance = e.jitter.V_N;
  r.priors = e.priors;
  r.x0_prior = e.x0_prior;
  r.seed = e.seed;
  r.sv_substeps = cfg.data.sv_substeps;
  return r;
}

namespace {

PosteriorTrace oracle_trace(const ExperimentConfig& cfg, const ModelLayout& layout, const ObservationSeries& series) {
  const auto& axes = cfg.estimator.grid;
  if (axes.empty()) bad_field("estimator.grid", "the oracle needs a grid");
  Eigen::Index G = 1;
  for (const auto& a : axes) G *= a.size();
  if (G < 1) bad_field("estimator.grid", "empty axis");
  const int p = layout.theta_dim();
  RowMatrix<double> grid(G, p);
  for (Eigen::Index g = 0; g < G; ++g) {
    Eigen::Index rest = g;
    for (int j = p - 1; j >= 0; --j) {
      grid(g, j) = axes[j](rest % axes[j].size());
      rest /= axes[j].size();
    }
  }
  const auto start = std::chrono::steady_clock::now();
  const RowMatrix<double> w = grid_posterior_oracle(series, layout, grid, cfg.estimator.x0_prior);
  PosteriorTrace t;
  t.estimator = "oracle";
  t.names = layout.estimated_names();
  t.switch_steps.push_back(1);
  for (Eigen::Index k = 0; k < w.rows(); ++k) {
    TraceRow r;
    r.step = static_cast<std::size_t>(k) + 1;
    r.phase = Phase::recursive;
    const ThetaCloud<double> cloud{grid, w.row(k).transpose()};
    const auto m = cloud_moments(cloud);
    r.mean = m.mean;
    r.sd = m.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    r.jitter_sd = Vector<double>::Zero(p);
    t.rows.push_back(std::move(r));
  }
  t.final_particles = grid;
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

}  // namespace

PosteriorTrace calibrate(const ExperimentConfig& cfg, const ObservationSeries& series) {
  const ModelLayout layout = cfg.model.layout();
  if (series.truth) {
    const auto names = layout.estimated_names();
    for (const auto& seg : series.truth->segments) {
      const Vector<double> v = truth_at(*series.truth, seg.first_step, names);
      for (Eigen::Index j = 0; j < v.size(); ++j)
        if (v(j) < cfg.estimator.priors.lo(j) || v(j) > cfg.estimator.priors.hi(j))
          std::cerr << "warning: true " << names[static_cast<std::size_t>(j)] << " = " << v(j)
                    << " lies outside its prior\n";
    }
  }
  switch (cfg.estimator.kind) {
    case EstimatorKind::kpf: return kpf_run(series, layout, kpf_config(cfg));
    case EstimatorKind::kpf_tv: return kpf_tv_run(series, layout, kpf_config(cfg));
    case EstimatorKind::rnpf: return rnpf_run(series, layout, rnpf_config(cfg));
    case EstimatorKind::oracle: return oracle_trace(cfg, layout, series);
  }
  throw ConfigError("unknown estimator");
}

Vector<double> truth_at(const SeriesTruth& truth, std::size_t step, const std::vector<std::string>& names) {
  const TruthSegment* seg = nullptr;
  for (const auto& s : truth.segments)
    if (s.first_step <= step) seg = &s;
  if (!seg) throw ConfigError("truth: no parameter segment covers step " + std::to_string(step));
  Vector<double> out(static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto it = std::find(seg->names.begin(), seg->names.end(), names[j]);
    if (it == seg->names.end()) throw ConfigError("truth: no value for parameter '" + names[j] + "'");
    out(static_cast<Eigen::Index>(j)) = seg->values(it - seg->names.begin());
  }
  return out;
}

double relative_rmse(const Vector<double>& estimate, const Vector<double>& truth) {
  if (estimate.size() != truth.size() || truth.size() == 0) throw DimensionError("rmse: size mismatch");
  return std::sqrt(((estimate - truth).array() / truth.array()).square().mean());
}

json summary_json(const ExperimentConfig& cfg, const ObservationSeries& series, const PosteriorTrace& trace) {
  json s;
  s["estimator"] = trace.estimator;
  s["parameters"] = trace.names;
  s["steps"] = trace.rows.size();
  if (!trace.rows.empty()) {
    s["final_mean"] = final_block(trace.names, trace.rows.back().mean);
    s["final_sd"] = final_block(trace.names, trace.rows.back().sd);
  }
  s["switch_steps"] = trace.switch_steps;
  s["switch_step"] = trace.first_switch() ? json(*trace.first_switch()) : json(nullptr);
  s["resets"] = trace.resets;
  s["seconds"] = trace.seconds;
  s["data_seed"] = series.truth ? series.truth->seed : cfg.data.seed;
  s["estimator_seed"] = cfg.estimator.seed;
  if (series.truth && !trace.rows.empty()) {
    const Vector<double> truth = truth_at(*series.truth, trace.rows.back().step, trace.names);
    s["truth"] = final_block(trace.names, truth);
    s["final_relative_rmse"] = relative_rmse(trace.rows.back().mean, truth);
  }
  json echo = cfg.source;
  echo["data"]["seed"] = cfg.data.seed;
  echo["estimator"]["seed"] = cfg.estimator.seed;
  s["config"] = echo;
  return s;
}

json report(const std::vector<std::pair<std::string, PosteriorTrace>>& traces, const SeriesTruth& truth,
            const fs::path& out_dir) {
  if (traces.empty()) throw ConfigError("report: no traces given");
  const auto& names = traces.front().second.names;
  for (const auto& [label, t] : traces)
    if (t.names != names) throw ConfigError("report: trace '" + label + "' has a different parameter layout");

  std::string errors = "step,series,parameter,abs_error\n";
  std::string plot = "step,series,value\n";
  std::string table = "series,final_relative_rmse";
  for (const auto& n : names) table += ",abs_error_" + n;
  table += "\n";
  json metrics = json::object();

  std::size_t longest = 0;
  for (const auto& [label, t] : traces) {
    json m;
    for (const auto& r : t.rows) {
      const Vector<double> v = truth_at(truth, r.step, names);
      const std::string step = std::to_string(r.step);
      for (std::size_t j = 0; j < names.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        errors += step + "," + label + "," + names[j] + "," + format_double(std::abs(r.mean(jj) - v(jj))) + "\n";
        plot += step + "," + label + "/mean_" + names[j] + "," + format_double(r.mean(jj)) + "\n";
        plot += step + "," + label + "/sd_" + names[j] + "," + format_double(r.sd(jj)) + "\n";
      }
      plot += step + "," + label + "/relative_rmse," + format_double(relative_rmse(r.mean, v)) + "\n";
    }
    longest = std::max(longest, t.rows.size());
    if (!t.rows.empty()) {
      const auto& last = t.rows.back();
      const Vector<double> v = truth_at(truth, last.step, names);
      const double rmse = relative_rmse(last.mean, v);
      m["final_relative_rmse"] = rmse;
      m["final_abs_error"] = final_block(names, (last.mean - v).cwiseAbs());
      table += label + "," + format_double(rmse);
      for (Eigen::Index j = 0; j < v.size(); ++j) table += "," + format_double(std::abs(last.mean(j) - v(j)));
      table += "\n";
    }
    m["switch_steps"] = t.switch_steps;
    m["resets"] = t.resets;
    m["steps"] = t.rows.size();
    metrics[label] = m;
  }
  for (std::size_t k = 1; k <= longest; ++k) {
    const Vector<double> v = truth_at(truth, k, names);
    for (std::size_t j = 0; j < names.size(); ++j)
      plot += std::to_string(k) + ",truth/" + names[j] + "," + format_double(v(static_cast<Eigen::Index>(j))) + "\n";
  }
  write_text(out_dir / "errors.csv", errors);
  write_text(out_dir / "plot.csv", plot);
  write_text(out_dir / "rmse.csv", table);
  write_text(out_dir / "metrics.json", metrics.dump(2) + "\n");
  return metrics;
}

int cmd_simulate(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const ObservationSeries series = simulate(cfg);
  write_series_csv(series, out_dir / "data.csv");
  write_truth_json(series, out_dir / "data.truth.json");
  std::cout << "wrote " << (out_dir / "data.csv").string() << " (" << series.steps() << " x "
            << series.observations() << ")\n";
  return kExitOk;
}

int cmd_calibrate(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const ObservationSeries series = load_or_simulate(cfg);
  const PosteriorTrace trace = calibrate(cfg, series);
  write_trace_csv(trace, out_dir / "trace.csv");
  const json summary = summary_json(cfg, series, trace);
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "wrote " << (out_dir / "trace.csv").string() << " (" << trace.rows.size() << " steps, "
            << trace.seconds << " s)\n";
  return kExitOk;
}

int cmd_report(const std::vector<fs::path>& traces, const fs::path& truth_file, const fs::path& out_dir) {
  std::vector<std::pair<std::string, PosteriorTrace>> loaded;
  for (const auto& p : traces) {
    std::string label = p.stem().string();
    if (label == "trace" && p.has_parent_path()) label = p.parent_path().filename().string();
    loaded.emplace_back(label, read_trace_csv(p));
  }
  ObservationSeries holder;
  read_truth_json(holder, truth_file);
  if (!holder.truth) throw IoError(truth_file.string() + ": no true parameter values");
  const json metrics = report(loaded, *holder.truth, out_dir);
  std::cout << metrics.dump(2) << "\n";
  return kExitOk;
}

int exit_code_for(const std::exception& e) {
  int code = kExitNumerical;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
      dynamic_cast<const UnsupportedRegime*>(&e))
    code = kExitConfig;
  else if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e))
    code = kExitIo;
  const char* kind = code == kExitConfig ? "config error" : code == kExitIo ? "i/o error" : "numerical failure";
  std::cerr << "kpf: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace kpf
