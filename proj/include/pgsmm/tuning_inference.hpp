#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "pgsmm/penalized_gee.hpp"

namespace pgsmm {

/// Per-subject marginal covariance of y_i at the fit:
///   W_i = mean_k V_i(theta, u^(k)) + [mean_k mu mu' - mean mu mean mu'],
/// with V_i = A^{1/2} R A^{1/2}. Symmetrized and eigenvalue-floored at 1e-10.
std::vector<Matrix> compute_W(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                              const GeeModel& model, const CorrelationSpec& correlation);

/// (1/N) sum_k sum_i (y_i - mu_i^(k))' W_i^{-1} (y_i - mu_i^(k)).
double weighted_rss(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                    const GeeModel& model, const std::vector<Matrix>& w);

/// tr[(H + nE)^{-1} H], n being the penalty multiplier.
double effective_parameters(const Matrix& hessian, const Vector& e_diag, int n);

/// (rss / observations) / (1 - d / n)^2 with n the number of subjects;
/// throws InputError ("saturated effective dimension") when d >= n.
double gcv_value(double rss, double d, int observations, int n);

struct GcvResult {
  double rss = 0.0;
  double d = 0.0;
  double gcv = 0.0;
};

/// GCV at a converged fit, using the fit's final draw bank. `model` carries
/// the family and correlation kind; the fitted rho and dispersion are taken
/// from the fit. A non-null `reference_w` replaces the fit's own W in the RSS.
GcvResult gcv_score(const ModelDesign& design, const FitResult& fit, const GeeModel& model,
                    const ScadPenalty& penalty, const std::vector<Matrix>* reference_w = nullptr);

/// Ascending, log-spaced.
std::vector<double> log_grid(double lo, double hi, int points);
std::vector<double> default_lambda_grid();

struct TuningReport {
  std::vector<double> lambda_grid;  // ascending
  std::vector<double> gcv_values;   // +inf where the point is saturated or failed
  std::vector<double> rss_values;
  std::vector<double> effective_params;
  std::vector<int> active_counts;
  std::vector<bool> converged;
  double lambda_opt = 0.0;
};

struct TuningResult {
  TuningReport report;
  FitResult best;
};

// Which W the RSS of each grid point is weighted by: its own fit's, or the
// one of the smallest-lambda fit shared across the grid.
enum class GcvWeights { PerFit, Reference };

using TuningProgress = std::function<void(double lambda, const FitResult&, const GcvResult&)>;

/// Fits every grid point from the largest lambda down. Each fit starts theta
/// from the unpenalized estimate and the variance components (Sigma, rho,
/// phi) from the previous grid point. Picks the smallest GCV among converged
/// fits, ties going to the smaller lambda. Throws NumericalError when no fit
/// converged. The progress callback runs once per point after all fits.
TuningResult select_lambda(const ModelDesign& design, const GeeModel& model,
                           const SamplerConfig& sampler, const SolverConfig& solver,
                           const ScadPenalty& penalty, const std::vector<double>& grid,
                           const TuningProgress& progress = {},
                           GcvWeights weights = GcvWeights::Reference);

struct WaldInterval {
  double lower = 0.0;
  double upper = 0.0;
};

struct InferenceReport {
  Matrix covariance;  // over (beta, alpha)
  Vector standard_errors;
  std::vector<WaldInterval> intervals;
  double level = 0.95;
  // The Louis bread was not positive definite and H + nE was used instead.
  bool bread_fallback = false;
};

// Curvature used as the sandwich bread.
enum class BreadMode {
  // H + nE: expected curvature with the random effects treated as known.
  Complete,
  // H + nE minus the within-subject draw covariance of the subject score
  // (Louis' missing-information correction), i.e. the observed curvature of
  // the integrated equation. Falls back to Complete when not positive definite.
  Louis,
};

double normal_quantile(double p);

/// B^{-1} M B^{-1} at the fit, on the active coefficients (nonzero beta and
/// all of alpha), B per `bread_mode`. Rows and columns of excluded beta are 0.
/// Throws NumericalError when the bread is singular.
InferenceReport sandwich_covariance(const ModelDesign& design, const FitResult& fit,
                                    const GeeModel& model, const ScadPenalty& penalty,
                                    double level = 0.95,
                                    MeatMode meat_mode = MeatMode::PosteriorMeanScore,
                                    BreadMode bread_mode = BreadMode::Louis);

/// Nonzero beta + spline dimension + free entries of Sigma, plus one for rho
/// under a non-independence working correlation and one for a Gaussian phi.
int free_parameter_count(const FitResult& fit, const ModelDesign& design, const GeeModel& model);

struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
};

InformationCriteria aic_bic(double ell_max, int m_free, int n);

}  // namespace pgsmm
