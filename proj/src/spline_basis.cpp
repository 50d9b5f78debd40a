#include "pgsmm/spline_basis.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pgsmm {

int default_knot_count(int n, int r) {
  if (n < 1 || r < 1) throw InputError("default_knot_count: n and r must be positive");
  const double raw = std::pow(static_cast<double>(n), 1.0 / (2.0 * r + 1.0));
  return static_cast<int>(std::floor(raw + 0.5));
}

namespace {

double type7_quantile(std::vector<double> sorted, double prob) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

Vector make_knots(const SplineConfig& config, std::span<const double> times) {
  if (times.empty()) throw InputError("make_knots: no observation times");
  if (!config.interior_knot_count) throw InputError("make_knots: knot count not resolved");
  const int count = *config.interior_knot_count;
  if (count < 0) throw InputError("make_knots: negative knot count");

  const auto [tmin_it, tmax_it] = std::minmax_element(times.begin(), times.end());
  TimeDomain domain{*tmin_it, *tmax_it};
  if (config.time_domain) {
    domain = *config.time_domain;
    if (*tmin_it < domain.lower || *tmax_it > domain.upper)
      throw InputError("make_knots: time domain does not cover the observation times");
  }
  Vector knots(count);
  if (count == 0) return knots;
  if (!(domain.upper > domain.lower)) throw InputError("degenerate time domain");

  if (config.knot_placement == KnotPlacement::EquallySpaced) {
    const double step = (domain.upper - domain.lower) / (count + 1);
    for (int k = 0; k < count; ++k) knots[k] = domain.lower + (k + 1) * step;
  } else {
    std::vector<double> sorted(times.begin(), times.end());
    std::sort(sorted.begin(), sorted.end());
    for (int k = 0; k < count; ++k)
      knots[k] = type7_quantile(sorted, static_cast<double>(k + 1) / (count + 1));
    for (int k = 1; k < count; ++k) {
      if (!(knots[k] > knots[k - 1]))
        throw InputError("make_knots: quantile knots are tied; use fewer knots");
    }
    if (!(knots[0] > domain.lower) || !(knots[count - 1] < domain.upper))
      throw InputError("make_knots: quantile knots fall on the domain boundary");
  }
  return knots;
}

Vector evaluate_basis(int degree, const Vector& knots, double t) {
  Vector out(degree + 1 + knots.size());
  double power = 1.0;
  for (int k = 0; k <= degree; ++k) {
    out[k] = power;
    power *= t;
  }
  for (Eigen::Index l = 0; l < knots.size(); ++l) {
    const double gap = t - knots[l];
    // (a)_+^0 is the step function I(a > 0).
    out[degree + 1 + l] = gap > 0.0 ? std::pow(gap, degree) : 0.0;
  }
  return out;
}

double evaluate_f(const Vector& basis, const Vector& alpha) {
  if (basis.size() != alpha.size())
    throw InputError("evaluate_f: basis and coefficient lengths differ");
  return basis.dot(alpha);
}

SplineBasis::SplineBasis(int degree, Vector knots, TimeDomain domain)
    : degree_(degree), knots_(std::move(knots)), domain_(domain) {
  if (degree_ < 0) throw InputError("spline degree must be nonnegative");
}

Matrix SplineBasis::evaluate(const Vector& times) const {
  Matrix out(times.size(), dimension());
  for (Eigen::Index j = 0; j < times.size(); ++j) out.row(j) = evaluate(times[j]).transpose();
  return out;
}

SplineBasis build_spline_basis(const SplineConfig& config, std::span<const double> times,
                               int n_subjects) {
  if (times.empty()) throw InputError("build_spline_basis: no observation times");
  SplineConfig resolved = config;
  if (!resolved.interior_knot_count)
    resolved.interior_knot_count = default_knot_count(n_subjects, config.smoothness_order);
  const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
  const TimeDomain domain = config.time_domain.value_or(TimeDomain{*lo, *hi});
  return SplineBasis(config.degree, make_knots(resolved, times), domain);
}

}  // namespace pgsmm
