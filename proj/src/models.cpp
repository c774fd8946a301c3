#include "kpf/models.hpp"

#include <algorithm>
#include <cmath>

#include "kpf/errors.hpp"

namespace kpf {

std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::cir: return "cir";
    case ModelFamily::hw2: return "hw2";
    case ModelFamily::hwsv: return "hwsv";
  }
  return "?";
}

ModelFamily parse_family(const std::string& name) {
  if (name == "cir") return ModelFamily::cir;
  if (name == "hw2") return ModelFamily::hw2;
  if (name == "hwsv") return ModelFamily::hwsv;
  throw ConfigError("unknown model type '" + name + "' (expected cir, hw2 or hwsv)");
}

const std::vector<std::string>& family_parameters(ModelFamily f) {
  static const std::vector<std::string> cir{"alpha", "beta", "sigma"};
  static const std::vector<std::string> hw2{"alpha11", "alpha22", "sigma1", "sigma2", "rho"};
  static const std::vector<std::string> hwsv{"alpha1", "alpha2", "beta", "sigma1", "sigma2", "rho"};
  switch (f) {
    case ModelFamily::cir: return cir;
    case ModelFamily::hw2: return hw2;
    case ModelFamily::hwsv: return hwsv;
  }
  return cir;
}

ModelLayout::ModelLayout(ModelFamily family, Vector<double> values, std::vector<std::string> estimated)
    : family_(family), values_(std::move(values)) {
  const auto& all = family_parameters(family);
  if (values_.size() != static_cast<Eigen::Index>(all.size()))
    throw ConfigError("model " + to_string(family) + ": expected " + std::to_string(all.size()) + " parameter values");
  for (const auto& name : estimated) {
    const auto it = std::find(all.begin(), all.end(), name);
    if (it == all.end()) throw ConfigError("model " + to_string(family) + " has no parameter '" + name + "'");
    const int idx = static_cast<int>(it - all.begin());
    if (std::find(estimated_.begin(), estimated_.end(), idx) != estimated_.end())
      throw ConfigError("parameter '" + name + "' listed twice");
    estimated_.push_back(idx);
  }
  std::sort(estimated_.begin(), estimated_.end());
  switch (family) {
    case ModelFamily::cir: gamma = Vector<double>::Ones(1); break;
    case ModelFamily::hw2: gamma = Vector<double>::Ones(2); break;
    case ModelFamily::hwsv: gamma = (Vector<double>(2) << 0.0, 1.0).finished(); break;
  }
}

std::vector<std::string> ModelLayout::estimated_names() const {
  std::vector<std::string> out;
  for (int i : estimated_) out.push_back(names()[i]);
  return out;
}

int ModelLayout::state_dim() const { return family_ == ModelFamily::cir ? 1 : 2; }

Vector<double> ModelLayout::expand(const Vector<double>& theta) const {
  if (theta.size() != theta_dim()) throw DimensionError("theta has wrong size for this layout");
  Vector<double> v = values_;
  for (int j = 0; j < theta_dim(); ++j) v(estimated_[j]) = theta(j);
  return v;
}

Vector<double> ModelLayout::project(const Vector<double>& values) const {
  Vector<double> theta(theta_dim());
  for (int j = 0; j < theta_dim(); ++j) theta(j) = values(estimated_[j]);
  return theta;
}

namespace {

// Lower-triangular factor of [[s1^2, rho s1 s2], [rho s1 s2, s2^2]].
StateMatrix<double> correlated_factor(double s1, double s2, double rho) {
  StateMatrix<double> m = StateMatrix<double>::Zero(2, 2);
  m(0, 0) = s1;
  m(1, 0) = s2 * rho;
  m(1, 1) = s2 * std::sqrt(std::max(0.0, 1 - rho * rho));
  return m;
}

}  // namespace

AffineModelSpec<double> ModelLayout::spec_from_values(const Vector<double>& v) const {
  AffineModelSpec<double> s;
  const int d = state_dim();
  s.A = StateMatrix<double>::Zero(d, d);
  s.beta = StateVector<double>::Zero(d);
  s.Sigma = StateMatrix<double>::Zero(d, d);
  s.SigmaTilde = StateMatrix<double>::Zero(d, d);
  s.gamma = gamma;
  s.c = c;
  switch (family_) {
    case ModelFamily::cir:
      s.p = 1;
      s.A(0, 0) = v(0);
      s.beta(0) = v(1);
      s.SigmaTilde(0, 0) = v(2);
      break;
    case ModelFamily::hw2:
      s.p = 0;
      s.A(0, 0) = v(0);
      s.A(1, 1) = v(1);
      s.Sigma = correlated_factor(v(2), v(3), v(4));
      break;
    case ModelFamily::hwsv:
      s.p = 1;
      s.A(0, 0) = v(0);
      s.A(1, 1) = v(1);
      s.beta(0) = sv_level;
      s.beta(1) = v(2);
      s.SigmaTilde = correlated_factor(v(3), v(4), v(5));
      break;
  }
  return s;
}

void ModelLayout::enable_canonical_order(const Vector<double>& lo, const Vector<double>& hi) {
  swap_.reset();
  if (family_ != ModelFamily::hw2) return;
  auto slot = [&](int full) -> int {
    const auto it = std::find(estimated_.begin(), estimated_.end(), full);
    return it == estimated_.end() ? -1 : static_cast<int>(it - estimated_.begin());
  };
  const Swap s{slot(0), slot(1), slot(2), slot(3)};
  if (s.alpha_a < 0 || s.alpha_b < 0 || s.sigma_a < 0 || s.sigma_b < 0) return;
  if (lo(s.alpha_a) != lo(s.alpha_b) || hi(s.alpha_a) != hi(s.alpha_b) || lo(s.sigma_a) != lo(s.sigma_b) ||
      hi(s.sigma_a) != hi(s.sigma_b))
    return;
  swap_ = s;
}

bool ModelLayout::canonicalize(Vector<double>& theta, GaussianState<double>* state) const {
  if (!swap_ || theta(swap_->alpha_a) <= theta(swap_->alpha_b)) return false;
  std::swap(theta(swap_->alpha_a), theta(swap_->alpha_b));
  std::swap(theta(swap_->sigma_a), theta(swap_->sigma_b));
  if (state) {
    std::swap(state->mean(0), state->mean(1));
    state->cov.row(0).swap(state->cov.row(1));
    state->cov.col(0).swap(state->cov.col(1));
  }
  return true;
}

}  // namespace kpf
