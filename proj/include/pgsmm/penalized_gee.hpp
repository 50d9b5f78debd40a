#pragma once

#include <string>
#include <vector>

#include "pgsmm/common.hpp"
#include "pgsmm/dataset.hpp"
#include "pgsmm/exponential_family.hpp"
#include "pgsmm/posterior_sampler.hpp"
#include "pgsmm/working_correlation.hpp"

namespace pgsmm {

// Count that multiplies E in the Newton system, the penalized equation and
// the effective-parameter trace.
enum class PenaltyWeight {
  Subjects,      // n
  Observations,  // sum_i n_i
};

// SCAD penalty on the fixed effects; spline coefficients are never penalized.
struct ScadPenalty {
  double lambda = 0.0;
  double a = 3.7;
  double epsilon = 1e-6;
  PenaltyWeight weight = PenaltyWeight::Observations;

  void validate() const;
};

int penalty_multiplier(const ModelDesign& design, const ScadPenalty& penalty);

/// q_lambda(|beta|) = lambda { I(|b| <= lambda) + (a lambda - |b|)_+ / ((a-1) lambda) I(|b| > lambda) }
double scad_derivative(double beta_abs, const ScadPenalty& penalty);

struct SolverConfig {
  int max_outer_iterations = 50;
  int max_newton_steps = 10;
  double tolerance = 1e-4;  // on ||theta^(m+1) - theta^(m)||_inf
  // Alternative stop: largest change in units of the model-based standard
  // error sqrt(diag (H + nE)^{-1}). Monte Carlo noise keeps the absolute
  // change from ever reaching `tolerance` once random effects are present.
  double se_tolerance = 0.25;
  // Also required: relative change of Sigma between outer iterations. The
  // EM-style Sigma update moves slowly and theta can settle before it does.
  double sigma_tolerance = 0.02;
  double zero_threshold = 1e-3;
  int step_halving_limit = 8;

  void validate() const;
};

// Response distribution and working correlation family of the GEE.
struct GeeModel {
  Family family = Family::poisson();
  LinkSpec link = {LinkKind::Log};
  CorrelationKind correlation = CorrelationKind::Independence;
};

// Which residual outer product enters the sandwich meat.
enum class MeatMode {
  // Per-subject score averaged over the draws, then its outer product.
  PosteriorMeanScore,
  // Outer product of the per-draw subject score, averaged over the draws.
  PerDraw,
};

struct GeeMoments {
  Vector score;    // S_n
  Matrix hessian;  // H_n
  Matrix meat;     // M_n
};

struct AssemblyRequest {
  bool hessian = true;
  bool meat = false;
  MeatMode meat_mode = MeatMode::PosteriorMeanScore;
};

/// Monte Carlo averages over the bank of
///   S = sum_i D_i' Delta_i V_i^{-1} (y_i - mu_i),
///   H = sum_i D_i' Delta_i V_i^{-1} Delta_i D_i,
///   M = sum_i g_i g_i' with g_i the subject's term of S,
/// where Delta_i = diag(d mu / d eta) and V_i = A_i^{1/2} R A_i^{1/2}. Under a
/// canonical link with phi = 1 these are D' A^{1/2} R^{-1} A^{-1/2} (y - mu)
/// and D' A^{1/2} R^{-1} A^{1/2} D. Sums are unnormalized. Per-draw quantities
/// are averaged inside each subject before the D_i products, which is the same
/// average reassociated.
GeeMoments assemble_moments(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                            const GeeModel& model, CorrelationInverseCache& correlation,
                            const AssemblyRequest& request = {});

Vector assemble_score(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                      const GeeModel& model, CorrelationInverseCache& correlation);
Matrix assemble_H(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                  const GeeModel& model, CorrelationInverseCache& correlation);
Matrix assemble_meat(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                     const GeeModel& model, CorrelationInverseCache& correlation,
                     MeatMode mode = MeatMode::PosteriorMeanScore);

/// Diagonal of E_n: q(|beta_k|) / (epsilon + |beta_k|) on the first
/// `fixed_dim` entries, zero on the spline block.
Vector assemble_E(const Vector& theta, int fixed_dim, const ScadPenalty& penalty);

/// U_n = S - n E theta, i.e. S_k - n q(|b_k|) b_k / (eps + |b_k|) on the beta
/// block and S_k on the spline block.
Vector penalized_u(const Vector& theta, const Vector& score, int fixed_dim, int n,
                   const ScadPenalty& penalty);

/// theta + (H + nE)^{-1} (S - nE theta). A failed factorization is retried
/// once with 1e-8 added to the diagonal (reported through `jittered`); a
/// second failure throws NumericalError.
Vector newton_step(const Vector& theta, const Vector& score, const Matrix& hessian,
                   const Vector& e_diag, int n, bool* jittered = nullptr);

// Evolving estimate of one fit.
struct FitState {
  Vector theta;  // (beta, alpha)
  Matrix sigma;
  double rho = 0.0;
  double phi = 1.0;
};

struct NewtonRecord {
  int outer = 0;
  // Euclidean LQA residual with E frozen at the step origin
  double u_norm_before = 0.0;
  double u_norm_after = 0.0;
  int halvings = 0;
};

struct FitDiagnostics {
  bool converged = false;
  int outer_iterations = 0;
  std::vector<double> theta_change;  // per outer iteration
  std::vector<double> scaled_change;  // theta_change in standard-error units
  std::vector<double> sigma_change;   // relative Frobenius change of Sigma
  std::vector<double> u_norm;        // ||U_n||_inf after each outer iteration
  std::vector<NewtonRecord> newton_steps;  // accepted steps only
  int rejected_newton_steps = 0;
  int jitter_events = 0;
  long nonfinite_ratios = 0;
  bool eta_clamped = false;
  bool more_parameters_than_observations = false;
  std::vector<std::string> warnings;
};

struct FitResult {
  FitState state;
  double lambda = 0.0;
  int fixed_dim = 0;
  int subjects = 0;
  DrawBank bank;  // regenerated at the final estimate
  Vector score;   // S_n at the final estimate
  Vector u;       // U_n at the final estimate
  double ell_max = 0.0;
  FitDiagnostics diagnostics;

  Vector beta() const { return state.theta.head(fixed_dim); }
  Vector alpha() const { return state.theta.tail(state.theta.size() - fixed_dim); }
  int active_count() const;
};

/// Unpenalized GLM fit on the stacked design with random effects at zero,
/// independence working correlation. Falls back to a small ridge when the
/// system is singular or has at least as many coefficients as observations.
Vector initial_estimate(const ModelDesign& design, const GeeModel& model, bool* ridged = nullptr);

FitState initial_state(const ModelDesign& design, const GeeModel& model);

/// Monte Carlo Newton-Raphson for the SCAD-penalized estimating equation.
/// Each outer iteration: Metropolis draws at the current (theta, Sigma) from
/// the same seed, rho re-estimated from those draws, Sigma updated from them,
/// then up to max_newton_steps damped Newton steps on the fixed bank. Stops
/// once an outer iteration (the second or later) moves theta by less than the
/// tolerance, either absolutely or in standard-error units. After
/// convergence (or the iteration cap) fixed effects below the zero threshold
/// are set to exactly 0 when lambda > 0, and a fresh bank is drawn at the
/// final estimate for inference.
FitResult fit(const ModelDesign& design, const GeeModel& model, const SamplerConfig& sampler,
              const SolverConfig& solver, const ScadPenalty& penalty,
              const FitState* warm_start = nullptr);

/// Standardized residual vectors (y - mu) / sqrt(nu) for every subject and
/// draw, reduced into rho moment sums (each draw weighted 1/N).
RhoMoments residual_moments(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                            const GeeModel& model);

/// Method-of-moments dispersion for the Gaussian family.
double estimate_dispersion(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                           const GeeModel& model);

}  // namespace pgsmm
