#include "pgsmm/tuning_inference.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>

namespace pgsmm {

namespace {

Vector subject_mean(const SubjectDesign& subject, const Vector& fixed_eta,
                    const Eigen::Ref<const Vector>& u, const GeeModel& model) {
  Vector mu(fixed_eta.size());
  for (Eigen::Index j = 0; j < mu.size(); ++j)
    mu[j] = mean_from_linear_predictor(model.family, model.link,
                                       fixed_eta[j] + subject.random.row(j).dot(u));
  return mu;
}

GeeModel fitted_model(const GeeModel& model, const FitResult& fit) {
  GeeModel out = model;
  if (out.family.kind == FamilyKind::Gaussian) out.family.dispersion = fit.state.phi;
  return out;
}

}  // namespace

std::vector<Matrix> compute_W(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                              const GeeModel& model, const CorrelationSpec& correlation) {
  if (bank.empty()) throw InputError("compute_W: empty draw bank");
  const double inv_draws = 1.0 / bank.draw_count();
  std::vector<Matrix> out;
  out.reserve(design.subject_count());
  for (int i = 0; i < design.subject_count(); ++i) {
    const auto& subject = design.subjects[i];
    const Eigen::Index m = subject.response.size();
    const Matrix r = build_correlation(correlation, static_cast<int>(m));
    const Vector fixed_eta = subject.design * theta;
    Matrix v_mean = Matrix::Zero(m, m);
    Matrix second = Matrix::Zero(m, m);
    Vector mu_mean = Vector::Zero(m);
    for (int k = 0; k < bank.draw_count(); ++k) {
      const Vector mu = subject_mean(subject, fixed_eta, bank.subject_draw(k, i), model);
      Vector root(m);
      for (Eigen::Index j = 0; j < m; ++j)
        root[j] = std::sqrt(conditional_variance(model.family, mu[j]));
      v_mean += root.asDiagonal() * r * root.asDiagonal();
      second.noalias() += mu * mu.transpose();
      mu_mean += mu;
    }
    v_mean *= inv_draws;
    mu_mean *= inv_draws;
    Matrix w = v_mean + second * inv_draws - mu_mean * mu_mean.transpose();
    out.push_back(floor_eigenvalues(0.5 * (w + w.transpose())));
  }
  return out;
}

double weighted_rss(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                    const GeeModel& model, const std::vector<Matrix>& w) {
  if (bank.empty()) throw InputError("weighted_rss: empty draw bank");
  if (static_cast<int>(w.size()) != design.subject_count())
    throw InputError("weighted_rss: one W per subject required");
  double total = 0.0;
  for (int i = 0; i < design.subject_count(); ++i) {
    const auto& subject = design.subjects[i];
    const Eigen::LDLT<Matrix> ldlt(w[i]);
    const Vector fixed_eta = subject.design * theta;
    for (int k = 0; k < bank.draw_count(); ++k) {
      const Vector res = subject.response - subject_mean(subject, fixed_eta, bank.subject_draw(k, i), model);
      total += res.dot(ldlt.solve(res));
    }
  }
  return total / bank.draw_count();
}

double effective_parameters(const Matrix& hessian, const Vector& e_diag, int n) {
  Matrix lhs = hessian;
  lhs.diagonal() += static_cast<double>(n) * e_diag;
  const Eigen::LDLT<Matrix> ldlt(lhs);
  if (ldlt.info() != Eigen::Success) throw NumericalError("effective_parameters: singular H + nE");
  return ldlt.solve(hessian).trace();
}

double gcv_value(double rss, double d, int observations, int n) {
  const double ratio = 1.0 - d / n;
  if (!(d < n) || !(ratio * ratio > 0.0)) throw InputError("saturated effective dimension");
  return rss / observations / (ratio * ratio);
}

GcvResult gcv_score(const ModelDesign& design, const FitResult& fit, const GeeModel& model,
                    const ScadPenalty& penalty, const std::vector<Matrix>* reference_w) {
  const GeeModel m = fitted_model(model, fit);
  const CorrelationSpec spec{model.correlation, fit.state.rho};
  CorrelationInverseCache cache(spec);
  const Matrix h = assemble_H(design, fit.state.theta, fit.bank, m, cache);
  ScadPenalty pen = penalty;
  pen.lambda = fit.lambda;
  const Vector e = assemble_E(fit.state.theta, design.fixed_dim, pen);

  GcvResult out;
  out.rss = reference_w
                ? weighted_rss(design, fit.state.theta, fit.bank, m, *reference_w)
                : weighted_rss(design, fit.state.theta, fit.bank, m,
                               compute_W(design, fit.state.theta, fit.bank, m, spec));
  out.d = effective_parameters(h, e, penalty_multiplier(design, pen));
  out.gcv = gcv_value(out.rss, out.d, design.observations, design.subject_count());
  return out;
}

std::vector<double> log_grid(double lo, double hi, int points) {
  if (!(lo > 0.0) || !(hi >= lo) || points < 1) throw InputError("invalid lambda grid bounds");
  std::vector<double> grid(points);
  if (points == 1) {
    grid[0] = lo;
    return grid;
  }
  const double step = std::log(hi / lo) / (points - 1);
  for (int k = 0; k < points; ++k) grid[k] = lo * std::exp(step * k);
  grid.back() = hi;
  return grid;
}

std::vector<double> default_lambda_grid() { return log_grid(0.01, 2.0, 30); }

TuningResult select_lambda(const ModelDesign& design, const GeeModel& model,
                           const SamplerConfig& sampler, const SolverConfig& solver,
                           const ScadPenalty& penalty, const std::vector<double>& grid,
                           const TuningProgress& progress, GcvWeights weights) {
  if (grid.empty()) throw InputError("lambda grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0)) throw InputError("lambda grid values must be positive");
    if (k > 0 && !(grid[k] > grid[k - 1])) throw InputError("lambda grid must be strictly increasing");
  }

  const std::size_t points = grid.size();
  TuningResult result;
  TuningReport& rep = result.report;
  rep.lambda_grid = grid;
  const double inf = std::numeric_limits<double>::infinity();
  rep.gcv_values.assign(points, inf);
  rep.rss_values.assign(points, inf);
  rep.effective_params.assign(points, inf);
  rep.active_counts.assign(points, 0);
  rep.converged.assign(points, false);

  FitState warm = initial_state(design, model);
  std::vector<FitResult> fits(points);
  std::vector<bool> failed(points, false);
  for (std::size_t idx = points; idx-- > 0;) {
    ScadPenalty pen = penalty;
    pen.lambda = grid[idx];
    try {
      fits[idx] = fit(design, model, sampler, solver, pen, &warm);
    } catch (const NumericalError&) {
      // an unsolvable grid point is skipped, not fatal
      failed[idx] = true;
      continue;
    }
    warm.sigma = fits[idx].state.sigma;
    warm.rho = fits[idx].state.rho;
    warm.phi = fits[idx].state.phi;
  }

  // Every grid point is scored against the W of the least penalized fit.
  // With W taken per fit, an over-shrunk beta pushes the misfit into Sigma,
  // W grows and the weighted RSS drops, which biases GCV toward large lambda.
  std::vector<Matrix> reference_w;
  if (std::all_of(failed.begin(), failed.end(), [](bool f) { return f; }))
    throw NumericalError("every lambda grid point failed with a singular system");
  // Reference: the least penalized fit that is not saturated (d < subjects).
  // With p near or above the sample size the smallest lambda interpolates and
  // its W says nothing about the noise level.
  std::size_t ref_idx = points;
  if (weights == GcvWeights::Reference) {
    for (std::size_t idx = 0; idx < points && ref_idx == points; ++idx) {
      if (failed[idx]) continue;
      ScadPenalty pen = penalty;
      pen.lambda = grid[idx];
      try {
        if (std::isfinite(gcv_score(design, fits[idx], model, pen).gcv)) ref_idx = idx;
      } catch (const InputError&) {
      }
    }
  }
  if (ref_idx < points) {
    const FitResult& ref = fits[ref_idx];
    reference_w = compute_W(design, ref.state.theta, ref.bank, fitted_model(model, ref),
                            {model.correlation, ref.state.rho});
  }

  int best = -1;
  for (std::size_t idx = points; idx-- > 0;) {
    ScadPenalty pen = penalty;
    pen.lambda = grid[idx];
    if (failed[idx]) continue;
    const FitResult& fitted = fits[idx];
    GcvResult g{inf, inf, inf};
    try {
      g = gcv_score(design, fitted, model, pen, reference_w.empty() ? nullptr : &reference_w);
    } catch (const InputError&) {
      // saturated: leave the point at +inf
    }
    rep.gcv_values[idx] = g.gcv;
    rep.rss_values[idx] = g.rss;
    rep.effective_params[idx] = g.d;
    rep.active_counts[idx] = fitted.active_count();
    rep.converged[idx] = fitted.diagnostics.converged;
    if (progress) progress(grid[idx], fitted, g);

    // Descending traversal: "<=" hands ties to the smaller lambda.
    if (fitted.diagnostics.converged && std::isfinite(g.gcv) &&
        (best < 0 || g.gcv <= rep.gcv_values[best]))
      best = static_cast<int>(idx);
  }
  if (best < 0) {
    std::string msg = "no grid point produced a converged fit with finite GCV; converged flags:";
    for (std::size_t k = 0; k < points; ++k)
      msg += " " + std::to_string(grid[k]) + (rep.converged[k] ? "=yes" : "=no");
    throw NumericalError(msg);
  }
  result.best = std::move(fits[best]);
  rep.lambda_opt = grid[best];
  return result;
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

InferenceReport sandwich_covariance(const ModelDesign& design, const FitResult& fit,
                                    const GeeModel& model, const ScadPenalty& penalty,
                                    double level, MeatMode meat_mode, BreadMode bread_mode) {
  if (!(level > 0.0 && level < 1.0)) throw InputError("interval level must lie in (0, 1)");
  const GeeModel m = fitted_model(model, fit);
  const Vector& theta = fit.state.theta;
  ScadPenalty pen = penalty;
  pen.lambda = fit.lambda;
  const int P = static_cast<int>(theta.size());
  const int n = penalty_multiplier(design, pen);
  CorrelationInverseCache cache({model.correlation, fit.state.rho});
  const GeeMoments mom = assemble_moments(design, theta, fit.bank, m, cache,
                                          {.hessian = true, .meat = true, .meat_mode = meat_mode});
  const Vector e = assemble_E(theta, design.fixed_dim, pen);
  Matrix missing;
  if (bread_mode == BreadMode::Louis) {
    // sum_i Cov_k(g_ik) = per-draw meat minus posterior-mean-score meat
    const Matrix per_draw = meat_mode == MeatMode::PerDraw
                                ? mom.meat
                                : assemble_meat(design, theta, fit.bank, m, cache, MeatMode::PerDraw);
    const Matrix mean_score = meat_mode == MeatMode::PosteriorMeanScore
                                  ? mom.meat
                                  : assemble_meat(design, theta, fit.bank, m, cache);
    missing = per_draw - mean_score;
  }

  std::vector<int> active;
  for (int k = 0; k < P; ++k)
    if (k >= design.fixed_dim || fit.lambda <= 0.0 || theta[k] != 0.0) active.push_back(k);
  const int a = static_cast<int>(active.size());
  Matrix bread(a, a), meat(a, a);
  for (int r = 0; r < a; ++r)
    for (int c = 0; c < a; ++c) {
      bread(r, c) = mom.hessian(active[r], active[c]);
      meat(r, c) = mom.meat(active[r], active[c]);
    }
  for (int r = 0; r < a; ++r) bread(r, r) += static_cast<double>(n) * e[active[r]];

  InferenceReport out;
  if (bread_mode == BreadMode::Louis) {
    Matrix observed = bread;
    for (int r = 0; r < a; ++r)
      for (int c = 0; c < a; ++c) observed(r, c) -= missing(active[r], active[c]);
    observed = 0.5 * (observed + observed.transpose()).eval();
    if (Eigen::LLT<Matrix>(observed).info() == Eigen::Success)
      bread = observed;
    else
      out.bread_fallback = true;
  }

  const Eigen::FullPivLU<Matrix> lu(bread);
  if (!lu.isInvertible()) throw NumericalError("sandwich bread H + nE is singular");
  const Matrix inv = lu.inverse();
  Matrix reduced = inv * meat * inv.transpose();
  reduced = 0.5 * (reduced + reduced.transpose()).eval();

  out.level = level;
  out.covariance = Matrix::Zero(P, P);
  for (int r = 0; r < a; ++r)
    for (int c = 0; c < a; ++c) out.covariance(active[r], active[c]) = reduced(r, c);
  out.standard_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  const double z = normal_quantile(0.5 + 0.5 * level);
  out.intervals.resize(P);
  for (int k = 0; k < P; ++k)
    out.intervals[k] = {theta[k] - z * out.standard_errors[k], theta[k] + z * out.standard_errors[k]};
  return out;
}

int free_parameter_count(const FitResult& fit, const ModelDesign& design, const GeeModel& model) {
  const int q = design.random_dim;
  int m = fit.active_count() + design.spline_dim + q * (q + 1) / 2;
  if (model.correlation != CorrelationKind::Independence) ++m;
  if (model.family.kind == FamilyKind::Gaussian) ++m;
  return m;
}

InformationCriteria aic_bic(double ell_max, int m_free, int n) {
  if (n < 1) throw InputError("aic_bic: n must be positive");
  return {2.0 * m_free - 2.0 * ell_max, m_free * std::log(static_cast<double>(n)) - 2.0 * ell_max};
}

}  // namespace pgsmm
