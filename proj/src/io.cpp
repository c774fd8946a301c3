#include "kpf/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace kpf {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& text, const fs::path& path, std::size_t line) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw IoError(path.string() + ":" + std::to_string(line) + ": not a number: '" + text + "'");
  }
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

json vector_json(const Vector<double>& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector<double> json_vector(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector<double>>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_series_csv(const ObservationSeries& series, const fs::path& path) {
  std::string text = "time";
  for (Eigen::Index l = 0; l < series.maturities.size(); ++l) text += ",tau_" + format_double(series.maturities(l));
  text += '\n';
  for (Eigen::Index k = 0; k < series.times.size(); ++k) {
    text += format_double(series.times(k));
    for (Eigen::Index l = 0; l < series.y.cols(); ++l) text += "," + format_double(series.y(k, l));
    text += '\n';
  }
  write_text(path, text);
}

ObservationSeries read_series_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  strip_cr(line);
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "time") throw IoError(path.string() + ":1: expected header time,tau_...");
  ObservationSeries s;
  const int L = static_cast<int>(header.size()) - 1;
  s.maturities.resize(L);
  for (int l = 0; l < L; ++l) {
    const std::string& name = header[l + 1];
    if (name.rfind("tau_", 0) != 0) throw IoError(path.string() + ":1: column '" + name + "' is not tau_<maturity>");
    s.maturities(l) = parse_double(name.substr(4), path, 1);
  }
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split(line);
    if (static_cast<int>(cells.size()) != L + 1)
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(L + 1) + " fields");
    std::vector<double> row(L + 1);
    for (int c = 0; c <= L; ++c) row[c] = parse_double(cells[c], path, lineno);
    rows.push_back(std::move(row));
  }
  const int K = static_cast<int>(rows.size());
  s.times.resize(K);
  s.y.resize(K, L);
  for (int k = 0; k < K; ++k) {
    s.times(k) = rows[k][0];
    for (int l = 0; l < L; ++l) s.y(k, l) = rows[k][l + 1];
  }
  try {
    s.check();
  } catch (const Error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return s;
}

fs::path truth_path_for(const fs::path& dataset) {
  fs::path p = dataset;
  p.replace_extension(".truth.json");
  return p;
}

void write_truth_json(const ObservationSeries& series, const fs::path& path) {
  json j;
  j["h"] = series.h;
  if (series.truth) {
    const auto& t = *series.truth;
    j["model"] = t.model;
    j["seed"] = t.seed;
    json segs = json::array();
    for (const auto& seg : t.segments) {
      json s;
      s["first_step"] = seg.first_step;
      json values = json::object();
      for (std::size_t i = 0; i < seg.names.size(); ++i) values[seg.names[i]] = seg.values(static_cast<Eigen::Index>(i));
      s["values"] = values;
      s["names"] = seg.names;
      segs.push_back(s);
    }
    j["segments"] = segs;
    json latent = json::array();
    for (Eigen::Index k = 0; k < t.latent.rows(); ++k) latent.push_back(vector_json(t.latent.row(k).transpose()));
    j["latent"] = latent;
  }
  write_text(path, j.dump(1) + "\n");
}

void read_truth_json(ObservationSeries& series, const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
    series.h = j.at("h").get<double>();
    if (!j.contains("segments")) return;
    SeriesTruth t;
    t.model = j.at("model").get<std::string>();
    t.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("segments")) {
      TruthSegment seg;
      seg.first_step = s.at("first_step").get<std::size_t>();
      seg.names = s.at("names").get<std::vector<std::string>>();
      seg.values.resize(static_cast<Eigen::Index>(seg.names.size()));
      for (std::size_t i = 0; i < seg.names.size(); ++i)
        seg.values(static_cast<Eigen::Index>(i)) = s.at("values").at(seg.names[i]).get<double>();
      t.segments.push_back(std::move(seg));
    }
    const auto& latent = j.at("latent");
    const Eigen::Index K = static_cast<Eigen::Index>(latent.size());
    const Eigen::Index d = K > 0 ? static_cast<Eigen::Index>(latent[0].size()) : 0;
    t.latent.resize(K, d);
    for (Eigen::Index k = 0; k < K; ++k) t.latent.row(k) = json_vector(latent[static_cast<std::size_t>(k)]).transpose();
    series.truth = std::move(t);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string trace_csv(const PosteriorTrace& trace) {
  std::string text = "step,phase,reset,max_loglik,switch_stat";
  for (const auto& n : trace.names) text += ",mean_" + n + ",sd_" + n + ",jitter_sd_" + n;
  const Eigen::Index ds = trace.rows.empty() ? 0 : trace.rows.front().state_mean.size();
  for (Eigen::Index j = 0; j < ds; ++j) text += ",state_mean_" + std::to_string(j + 1);
  text += '\n';
  for (const auto& r : trace.rows) {
    text += std::to_string(r.step) + "," + to_string(r.phase) + "," + (r.reset ? "1" : "0") + "," +
            format_double(r.max_loglik) + "," + format_double(r.switch_stat);
    for (Eigen::Index j = 0; j < r.mean.size(); ++j)
      text += "," + format_double(r.mean(j)) + "," + format_double(r.sd(j)) + "," + format_double(r.jitter_sd(j));
    for (Eigen::Index j = 0; j < ds; ++j) text += "," + format_double(j < r.state_mean.size() ? r.state_mean(j) : NAN);
    text += '\n';
  }
  return text;
}

void write_trace_csv(const PosteriorTrace& trace, const fs::path& path) { write_text(path, trace_csv(trace)); }

PosteriorTrace read_trace_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty trace");
  strip_cr(line);
  const auto header = split(line);
  if (header.size() < 5 || header[0] != "step") throw IoError(path.string() + ":1: not a trace file");
  PosteriorTrace t;
  std::size_t c = 5;
  while (c + 2 < header.size() && header[c].rfind("mean_", 0) == 0) {
    t.names.push_back(header[c].substr(5));
    c += 3;
  }
  const std::size_t ds = header.size() - c;
  const Eigen::Index p = static_cast<Eigen::Index>(t.names.size());
  std::size_t lineno = 1;
  Phase previous = Phase::recursive;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw IoError(path.string() + ":" + std::to_string(lineno) + ": wrong field count");
    TraceRow r;
    r.step = static_cast<std::size_t>(parse_double(cells[0], path, lineno));
    r.phase = cells[1] == "recursive" ? Phase::recursive : Phase::nonrecursive;
    r.reset = cells[2] == "1";
    r.max_loglik = parse_double(cells[3], path, lineno);
    r.switch_stat = parse_double(cells[4], path, lineno);
    r.mean.resize(p);
    r.sd.resize(p);
    r.jitter_sd.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      r.mean(j) = parse_double(cells[5 + 3 * j], path, lineno);
      r.sd(j) = parse_double(cells[6 + 3 * j], path, lineno);
      r.jitter_sd(j) = parse_double(cells[7 + 3 * j], path, lineno);
    }
    r.state_mean.resize(static_cast<Eigen::Index>(ds));
    for (std::size_t j = 0; j < ds; ++j) r.state_mean(static_cast<Eigen::Index>(j)) = parse_double(cells[c + j], path, lineno);
    if (r.phase == Phase::recursive && (previous == Phase::nonrecursive || t.rows.empty())) t.switch_steps.push_back(r.step);
    if (r.reset) t.resets.push_back(r.step);
    previous = r.reset ? Phase::nonrecursive : r.phase;
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace kpf
