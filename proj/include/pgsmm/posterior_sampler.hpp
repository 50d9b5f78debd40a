#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pgsmm/common.hpp"
#include "pgsmm/dataset.hpp"
#include "pgsmm/exponential_family.hpp"
#include "pgsmm/rng.hpp"

namespace pgsmm {

// Gaussian random effects u_i ~ N(0, covariance), q per subject.
struct RandomEffectsModel {
  Matrix covariance;

  int dimension() const { return static_cast<int>(covariance.rows()); }
  // Throws InputError unless symmetric with eigenvalues >= kCovarianceFloor.
  void validate() const;
};

inline constexpr double kCovarianceFloor = 1e-10;

/// Symmetrizes and lifts eigenvalues below `floor` up to `floor`.
Matrix floor_eigenvalues(const Matrix& m, double floor = kCovarianceFloor);

struct SamplerConfig {
  int draws = 500;  // retained draws N
  int burn_in = 200;
  int thinning = 1;
  std::uint64_t seed = 20240601;
};

// N retained draws of U = (u_1, ..., u_n), stored one draw per column.
class DrawBank {
 public:
  DrawBank() = default;
  DrawBank(int subjects, int dimension, int draws);

  int draw_count() const { return static_cast<int>(values_.cols()); }
  int subject_count() const { return subjects_; }
  int dimension() const { return dimension_; }
  bool empty() const { return values_.cols() == 0; }

  auto draw(int k) const { return values_.col(k); }
  auto subject_draw(int k, int i) const { return values_.col(k).segment(i * dimension_, dimension_); }
  void set_draw(int k, const Vector& u) { values_.col(k) = u; }
  const Matrix& values() const { return values_; }

  Vector acceptance_rates;  // per subject, over every sweep including burn-in
  int burn_in = 0;
  int thinning = 1;
  std::uint64_t seed = 0;
  long nonfinite_ratios = 0;  // proposals rejected because the ratio was not finite

 private:
  int subjects_ = 0;
  int dimension_ = 0;
  Matrix values_;
};

// log p(y | U, theta) for one fixed theta. The fixed part of the linear
// predictor D_i theta is computed once at construction.
class ConditionalLikelihood {
 public:
  ConditionalLikelihood(const ModelDesign& design, const Vector& theta, Family family,
                        LinkSpec link);

  int subject_count() const { return static_cast<int>(fixed_eta_.size()); }
  int dimension() const { return design_->random_dim; }
  const Vector& fixed_predictor(int i) const { return fixed_eta_[i]; }

  double subject_log_likelihood(int i, const Eigen::Ref<const Vector>& u) const;
  double log_likelihood(const Vector& all_u) const;

  /// Log acceptance ratio for replacing `current` with `proposal`, as the
  /// ratio of the two full products over subjects.
  double log_ratio_full(const Vector& current, const Vector& proposal) const;
  /// Same ratio computed from subject i's factor only; valid when the two
  /// states differ in subject i's block alone.
  double log_ratio_subject(int i, const Eigen::Ref<const Vector>& current,
                           const Eigen::Ref<const Vector>& proposal) const;

 private:
  const ModelDesign* design_;
  Family family_;
  LinkSpec link_;
  std::vector<Vector> fixed_eta_;
};

/// Accepts with probability min(1, exp(log_ratio)); a non-finite ratio is a
/// rejection and sets `nonfinite`.
template <class Generator>
bool metropolis_accept(double log_ratio, Generator& rng, bool& nonfinite) {
  nonfinite = !std::isfinite(log_ratio) && !(log_ratio == -HUGE_VAL);
  if (nonfinite) return false;
  if (log_ratio >= 0.0) return true;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return std::log(unif(rng)) < log_ratio;
}

struct SweepStats {
  std::vector<int> accepted;  // per subject
  long nonfinite = 0;
};

// Componentwise Metropolis over the n*q random-effect components. Each
// component is proposed from its prior conditional given the subject's other
// components, so the prior cancels and the acceptance ratio is the
// conditional likelihood ratio of that one subject.
class MetropolisSampler {
 public:
  MetropolisSampler(const RandomEffectsModel& model, const ConditionalLikelihood& likelihood);

  /// One sweep over every component, updating `state` in place.
  SweepStats sweep(Vector& state, Rng& rng) const;

 private:
  const ConditionalLikelihood* likelihood_;
  int q_;
  Matrix precision_;
  Vector conditional_sd_;
};

/// Returns the state after one sweep started from `state`.
Vector metropolis_sweep(const Vector& state, const RandomEffectsModel& model,
                        const ConditionalLikelihood& likelihood, Rng& rng);

/// Runs burn_in sweeps, then keeps every thinning-th state until N are stored.
/// Starts from `initial` when given (size n*q), otherwise from zero.
DrawBank run_chain(const RandomEffectsModel& model, const ConditionalLikelihood& likelihood,
                   const SamplerConfig& config, const Vector* initial = nullptr);

/// Mean of g(draw) over the retained draws. g receives the full draw vector
/// and may return a scalar, vector or matrix.
template <class Evaluator>
auto posterior_expectation(const DrawBank& bank, Evaluator&& g) {
  if (bank.empty()) throw InputError("posterior_expectation: empty draw bank");
  using Result = std::decay_t<decltype(g(Vector(bank.draw(0))))>;
  Result sum = g(Vector(bank.draw(0)));
  for (int k = 1; k < bank.draw_count(); ++k) sum = sum + g(Vector(bank.draw(k)));
  return Result(sum / static_cast<double>(bank.draw_count()));
}

/// Zero-mean Gaussian ML step: average of u_i u_i^T over draws and subjects,
/// eigenvalue-floored at kCovarianceFloor.
Matrix update_sigma(const DrawBank& bank);

/// Monte Carlo integrated log-likelihood sum_i log mean_k p(y_i | u_k) with
/// u_k drawn from the prior N(0, Sigma), computed by log-mean-exp.
double integrated_log_likelihood(const ConditionalLikelihood& likelihood,
                                 const RandomEffectsModel& model, int draws,
                                 std::uint64_t seed);

}  // namespace pgsmm
