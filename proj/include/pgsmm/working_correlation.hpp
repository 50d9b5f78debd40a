#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>

#include "pgsmm/common.hpp"

namespace pgsmm {

enum class CorrelationKind { Independence, Exchangeable, AR1 };

struct CorrelationSpec {
  CorrelationKind kind = CorrelationKind::Independence;
  double rho = 0.0;
};

// Gap kept between an estimated rho and the edge of its validity range.
inline constexpr double kRhoMargin = 1e-6;

/// Open interval of admissible rho for a cluster of size m.
std::pair<double, double> rho_validity_range(CorrelationKind kind, int m);

/// R(rho), m x m. Throws InputError when rho is outside the validity range.
Matrix build_correlation(const CorrelationSpec& spec, int m);

/// A^{1/2} R(rho) A^{1/2} for A = diag(variances).
Matrix build_V(const CorrelationSpec& spec, const Vector& variances);

// Moment sums behind the rho estimator. Subjects (or posterior draws of a
// subject) are added one residual vector at a time; the reduction is a plain
// sum so the order of addition only matters up to rounding.
class RhoMoments {
 public:
  void add(const Vector& standardized_residuals, double weight = 1.0);
  void merge(const RhoMoments& other);

  double square_sum() const { return square_sum_; }
  double square_count() const { return square_count_; }
  double exchangeable_sum() const { return exch_sum_; }
  double exchangeable_count() const { return exch_count_; }
  double lag1_sum() const { return lag1_sum_; }
  double lag1_count() const { return lag1_count_; }
  int max_cluster_size() const { return max_m_; }

 private:
  double square_sum_ = 0.0, square_count_ = 0.0;
  double exch_sum_ = 0.0, exch_count_ = 0.0;
  double lag1_sum_ = 0.0, lag1_count_ = 0.0;
  int max_m_ = 0;
};

struct RhoEstimate {
  double rho = 0.0;
  bool degenerate = false;  // no within-subject pairs were available
  bool clamped = false;
};

/// Exchangeable: mean of within-subject pairwise products over the mean
/// squared residual. AR1: the same with lag-1 pairs only. No correction for
/// the number of estimated parameters. Clamped kRhoMargin inside the range.
RhoEstimate estimate_rho(CorrelationKind kind, const RhoMoments& moments);
RhoEstimate estimate_rho(CorrelationKind kind, std::span<const Vector> residuals);

// Inverse working correlations keyed by cluster size, for one fixed rho.
class CorrelationInverseCache {
 public:
  explicit CorrelationInverseCache(CorrelationSpec spec) : spec_(spec) {}
  const CorrelationSpec& spec() const { return spec_; }
  bool independence() const { return spec_.kind == CorrelationKind::Independence; }
  // Throws NumericalError with the condition number when R is singular.
  const Matrix& inverse(int m);

 private:
  CorrelationSpec spec_;
  std::map<int, Matrix> cache_;
};

std::string to_string(CorrelationKind kind);
CorrelationKind correlation_from_string(const std::string& name);

}  // namespace pgsmm
