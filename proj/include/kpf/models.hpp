#pragma once

// Parameter layouts of the supported model families: which named parameters
// exist, which are estimated, and how a parameter vector becomes an
// AffineModelSpec.

#include <optional>
#include <string>
#include <vector>

#include "kpf/affine_model.hpp"
#include "kpf/dense.hpp"
#include "kpf/kalman.hpp"

namespace kpf {

enum class ModelFamily { cir, hw2, hwsv };

std::string to_string(ModelFamily f);
ModelFamily parse_family(const std::string& name);

/// Canonical parameter names of a family, in storage order.
///   cir:  alpha, beta, sigma
///   hw2:  alpha11, alpha22, sigma1, sigma2, rho
///   hwsv: alpha1, alpha2, beta, sigma1, sigma2, rho   (V reverts to sv_level)
const std::vector<std::string>& family_parameters(ModelFamily f);

class ModelLayout {
 public:
  ModelLayout(ModelFamily family, Vector<double> values, std::vector<std::string> estimated);

  ModelFamily family() const { return family_; }
  const std::vector<std::string>& names() const { return family_parameters(family_); }
  const Vector<double>& values() const { return values_; }
  const std::vector<int>& estimated() const { return estimated_; }
  std::vector<std::string> estimated_names() const;
  int theta_dim() const { return static_cast<int>(estimated_.size()); }
  int state_dim() const;

  /// Short rate r = c + gamma' x; defaults are r = x (cir), x1 + x2 (hw2), X (hwsv).
  Vector<double> gamma;
  double c = 0;
  double sv_level = 0.1;

  /// All parameter values with theta written into the estimated slots.
  Vector<double> expand(const Vector<double>& theta) const;
  /// The estimated slots of a full value vector.
  Vector<double> project(const Vector<double>& values) const;
  AffineModelSpec<double> spec_from_values(const Vector<double>& values) const;
  AffineModelSpec<double> spec(const Vector<double>& theta) const { return spec_from_values(expand(theta)); }

  /// hw2 is invariant under swapping its two factors. When both speeds and
  /// both volatilities are estimated inside identical bounds, particles are
  /// kept in the alpha11 <= alpha22 half; returns true when theta (and the
  /// attached filter state) were swapped.
  bool canonicalize(Vector<double>& theta, GaussianState<double>* state) const;
  void enable_canonical_order(const Vector<double>& lo, const Vector<double>& hi);
  bool canonical_order() const { return swap_.has_value(); }

 private:
  struct Swap {
    int alpha_a, alpha_b, sigma_a, sigma_b;
  };
  ModelFamily family_;
  Vector<double> values_;
  std::vector<int> estimated_;
  std::optional<Swap> swap_;
};

}  // namespace kpf
