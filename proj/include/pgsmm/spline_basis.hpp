#pragma once

#include <optional>
#include <span>

#include "pgsmm/common.hpp"

namespace pgsmm {

enum class KnotPlacement { EquallySpaced, Quantile };

struct TimeDomain {
  double lower = 0.0;
  double upper = 1.0;
};

struct SplineConfig {
  int degree = 3;
  // Unset means round(n^{1/(2r+1)}) with n the number of subjects.
  std::optional<int> interior_knot_count;
  KnotPlacement knot_placement = KnotPlacement::EquallySpaced;
  int smoothness_order = 2;
  // Unset means [min t, max t] of the data.
  std::optional<TimeDomain> time_domain;
};

/// Default interior knot count round(n^{1/(2r+1)}), rounding half up.
int default_knot_count(int n, int r);

/// Interior knots for the resolved configuration. EquallySpaced places
/// t_min + k (t_max - t_min) / (L + 1); Quantile uses the linearly
/// interpolated empirical quantile (R type 7) at k / (L + 1).
Vector make_knots(const SplineConfig& config, std::span<const double> times);

/// Truncated power basis (1, t, ..., t^d, (t - k_1)_+^d, ..., (t - k_L)_+^d).
/// Values of t outside the knot domain extrapolate the same polynomials.
Vector evaluate_basis(int degree, const Vector& knots, double t);

double evaluate_f(const Vector& basis, const Vector& alpha);

// Resolved basis: degree, knots and the domain it was built on.
class SplineBasis {
 public:
  SplineBasis() = default;
  SplineBasis(int degree, Vector knots, TimeDomain domain);

  int degree() const { return degree_; }
  const Vector& knots() const { return knots_; }
  const TimeDomain& domain() const { return domain_; }
  int dimension() const { return degree_ + 1 + static_cast<int>(knots_.size()); }

  Vector evaluate(double t) const { return evaluate_basis(degree_, knots_, t); }
  Matrix evaluate(const Vector& times) const;
  bool extrapolates(double t) const { return t < domain_.lower || t > domain_.upper; }

 private:
  int degree_ = 3;
  Vector knots_;
  TimeDomain domain_;
};

/// Resolves knot count and domain from the data and builds the basis.
SplineBasis build_spline_basis(const SplineConfig& config, std::span<const double> times,
                               int n_subjects);

}  // namespace pgsmm
