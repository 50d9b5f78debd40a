#include "pgsmm/penalized_gee.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pgsmm {

namespace {

constexpr double kVarianceFloor = 1e-10;

// Per-draw building blocks for one subject:
//   scale  = (d mu / d eta) / sqrt(nu)
//   pearson = (y - mu) / sqrt(nu)
struct DrawTerms {
  Vector scale;
  Vector pearson;
  Vector mu;
  bool clamped = false;
};

void draw_terms(const SubjectDesign& subject, const Vector& fixed_eta,
                const Eigen::Ref<const Vector>& u, const GeeModel& model, DrawTerms& out) {
  const auto m = fixed_eta.size();
  out.scale.resize(m);
  out.pearson.resize(m);
  out.mu.resize(m);
  out.clamped = false;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double eta = fixed_eta[j] + subject.random.row(j).dot(u);
    bool clamped = false;
    const double mu = mean_from_linear_predictor(model.family, model.link, eta, &clamped);
    out.clamped = out.clamped || clamped;
    const double nu = std::max(conditional_variance(model.family, mu), kVarianceFloor);
    const double root = std::sqrt(nu);
    out.mu[j] = mu;
    out.scale[j] = mean_derivative(model.link, eta) / root;
    out.pearson[j] = (subject.response[j] - mu) / root;
  }
}

double sup_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// max_k |delta_k| / sqrt([bread^{-1}]_kk); +inf when the bread is unusable.
double scaled_change(const Vector& delta, const Matrix& bread) {
  const double inf = std::numeric_limits<double>::infinity();
  if (bread.size() == 0) return inf;
  const Eigen::LDLT<Matrix> ldlt(bread);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return inf;
  const Matrix inv = ldlt.solve(Matrix::Identity(bread.rows(), bread.cols()));
  double worst = 0.0;
  for (Eigen::Index k = 0; k < delta.size(); ++k) {
    if (!(inv(k, k) > 0.0)) return inf;
    worst = std::max(worst, std::abs(delta[k]) / std::sqrt(inv(k, k)));
  }
  return worst;
}

}  // namespace

void ScadPenalty::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be >= 0");
  if (!(a > 2.0)) throw InputError("SCAD parameter a must exceed 2");
  if (!(epsilon > 0.0)) throw InputError("SCAD epsilon must be positive");
}

double scad_derivative(double beta_abs, const ScadPenalty& penalty) {
  const double lambda = penalty.lambda;
  if (lambda <= 0.0) return 0.0;
  if (beta_abs <= lambda) return lambda;
  return std::max(penalty.a * lambda - beta_abs, 0.0) / (penalty.a - 1.0);
}

int penalty_multiplier(const ModelDesign& design, const ScadPenalty& penalty) {
  return penalty.weight == PenaltyWeight::Subjects ? design.subject_count() : design.observations;
}

void SolverConfig::validate() const {
  if (max_outer_iterations < 1 || max_newton_steps < 1)
    throw InputError("solver iteration limits must be positive");
  if (!(tolerance > 0.0) || !(se_tolerance >= 0.0) || !(sigma_tolerance > 0.0) || !(zero_threshold > 0.0))
    throw InputError("solver tolerances must be positive");
  if (step_halving_limit < 0) throw InputError("step_halving_limit must be >= 0");
}

GeeMoments assemble_moments(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                            const GeeModel& model, CorrelationInverseCache& correlation,
                            const AssemblyRequest& request) {
  if (bank.empty()) throw InputError("assemble_moments: empty draw bank");
  if (theta.size() != design.coefficient_count())
    throw InputError("assemble_moments: coefficient length mismatch");
  if (bank.subject_count() != design.subject_count() || bank.dimension() != design.random_dim)
    throw InputError("assemble_moments: draw bank does not match the design");

  const auto P = theta.size();
  const bool independence = correlation.independence();
  const bool per_draw_meat = request.meat && request.meat_mode == MeatMode::PerDraw;
  const double inv_draws = 1.0 / bank.draw_count();

  GeeMoments out;
  out.score = Vector::Zero(P);
  if (request.hessian) out.hessian = Matrix::Zero(P, P);
  if (request.meat) out.meat = Matrix::Zero(P, P);

  DrawTerms terms;
  for (int i = 0; i < design.subject_count(); ++i) {
    const SubjectDesign& subject = design.subjects[i];
    const Eigen::Index m = subject.response.size();
    const Matrix* r_inv = independence ? nullptr : &correlation.inverse(static_cast<int>(m));
    const Vector fixed_eta = subject.design * theta;

    Vector w_mean = Vector::Zero(m);
    Vector weight_diag = Vector::Zero(m);
    Matrix weight_full;
    if (!independence && request.hessian) weight_full = Matrix::Zero(m, m);
    Matrix ww;
    if (per_draw_meat) ww = Matrix::Zero(m, m);

    for (int k = 0; k < bank.draw_count(); ++k) {
      draw_terms(subject, fixed_eta, bank.subject_draw(k, i), model, terms);
      Vector w = independence ? Vector(terms.scale.cwiseProduct(terms.pearson))
                              : Vector(terms.scale.cwiseProduct(*r_inv * terms.pearson));
      w_mean += w;
      if (request.hessian) {
        if (independence)
          weight_diag += terms.scale.cwiseAbs2();
        else
          weight_full += terms.scale.asDiagonal() * *r_inv * terms.scale.asDiagonal();
      }
      if (per_draw_meat) ww.noalias() += w * w.transpose();
    }
    w_mean *= inv_draws;
    const Vector g = subject.design.transpose() * w_mean;
    out.score += g;
    if (request.hessian) {
      if (independence) {
        weight_diag *= inv_draws;
        out.hessian.noalias() +=
            subject.design.transpose() * (weight_diag.asDiagonal() * subject.design);
      } else {
        weight_full *= inv_draws;
        out.hessian.noalias() += subject.design.transpose() * weight_full * subject.design;
      }
    }
    if (request.meat) {
      if (per_draw_meat)
        out.meat.noalias() += subject.design.transpose() * (ww * inv_draws) * subject.design;
      else
        out.meat.noalias() += g * g.transpose();
    }
  }
  if (request.hessian) out.hessian = 0.5 * (out.hessian + out.hessian.transpose()).eval();
  if (request.meat) out.meat = 0.5 * (out.meat + out.meat.transpose()).eval();
  return out;
}

Vector assemble_score(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                      const GeeModel& model, CorrelationInverseCache& correlation) {
  return assemble_moments(design, theta, bank, model, correlation, {.hessian = false}).score;
}

Matrix assemble_H(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                  const GeeModel& model, CorrelationInverseCache& correlation) {
  return assemble_moments(design, theta, bank, model, correlation).hessian;
}

Matrix assemble_meat(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                     const GeeModel& model, CorrelationInverseCache& correlation, MeatMode mode) {
  return assemble_moments(design, theta, bank, model, correlation,
                          {.hessian = false, .meat = true, .meat_mode = mode})
      .meat;
}

Vector assemble_E(const Vector& theta, int fixed_dim, const ScadPenalty& penalty) {
  Vector e = Vector::Zero(theta.size());
  for (int k = 0; k < fixed_dim; ++k) {
    const double b = std::abs(theta[k]);
    e[k] = scad_derivative(b, penalty) / (penalty.epsilon + b);
  }
  return e;
}

Vector penalized_u(const Vector& theta, const Vector& score, int fixed_dim, int n,
                   const ScadPenalty& penalty) {
  const Vector e = assemble_E(theta, fixed_dim, penalty);
  return score - static_cast<double>(n) * e.cwiseProduct(theta);
}

Vector newton_step(const Vector& theta, const Vector& score, const Matrix& hessian,
                   const Vector& e_diag, int n, bool* jittered) {
  if (jittered) *jittered = false;
  const double nd = static_cast<double>(n);
  Matrix lhs = hessian;
  lhs.diagonal() += nd * e_diag;
  const Vector rhs = score - nd * e_diag.cwiseProduct(theta);

  auto solve = [&](const Matrix& a, Vector& x) {
    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    const Vector d = ldlt.vectorD();
    if (!(d.minCoeff() > 1e-13 * std::max(d.maxCoeff(), 1e-300))) return false;
    x = ldlt.solve(rhs);
    return x.allFinite();
  };

  Vector delta;
  if (!solve(lhs, delta)) {
    if (jittered) *jittered = true;
    // ridge relative to the mean diagonal, escalated until LDLT succeeds
    const double scale = std::max(lhs.diagonal().cwiseAbs().mean(), 1e-300);
    bool ok = false;
    for (double rel = 1e-10; rel <= 1e-2 && !ok; rel *= 100.0) {
      Matrix ridged = lhs;
      ridged.diagonal().array() += rel * scale;
      ok = solve(ridged, delta);
    }
    if (!ok)
      throw NumericalError(
          "H + nE is singular even after ridge jitter; use a larger lambda or fewer covariates");
  }
  return theta + delta;
}

int FitResult::active_count() const {
  int count = 0;
  for (int k = 0; k < fixed_dim; ++k) count += state.theta[k] != 0.0;
  return count;
}

Vector initial_estimate(const ModelDesign& design, const GeeModel& model, bool* ridged) {
  const int P = design.coefficient_count();
  GeeModel glm = model;
  glm.correlation = CorrelationKind::Independence;
  CorrelationInverseCache indep({CorrelationKind::Independence, 0.0});
  DrawBank zero_bank(design.subject_count(), design.random_dim, 1);

  Vector theta = Vector::Zero(P);
  double ybar = 0.0;
  for (const auto& s : design.subjects) ybar += s.response.sum();
  ybar /= design.observations;
  if (model.link.kind == LinkKind::Log) ybar = std::max(ybar, 1e-3);
  if (model.link.kind == LinkKind::Logit) ybar = std::clamp(ybar, 1e-3, 1.0 - 1e-3);
  theta[design.fixed_dim] = link_function(model.link, ybar);

  const Vector zeros = Vector::Zero(static_cast<Eigen::Index>(design.subject_count()) *
                                    design.random_dim);
  double ridge = 0.0;
  bool use_ridge = P >= design.observations;
  auto objective = [&](const Vector& t) {
    ConditionalLikelihood lik(design, t, glm.family, glm.link);
    return lik.log_likelihood(zeros) - 0.5 * ridge * t.squaredNorm();
  };

  for (int it = 0; it < 100; ++it) {
    const GeeMoments mom = assemble_moments(design, theta, zero_bank, glm, indep);
    if (use_ridge && ridge == 0.0)
      ridge = 1e-3 * std::max(mom.hessian.diagonal().mean(), 1e-8);
    Matrix lhs = mom.hessian;
    lhs.diagonal().array() += ridge;
    Eigen::LDLT<Matrix> ldlt(lhs);
    const Vector d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * std::max(d.maxCoeff(), 1e-300))) {
      if (use_ridge && ridge > 0.0) ridge *= 10.0;
      use_ridge = true;
      if (ridge == 0.0) ridge = 1e-6 * std::max(mom.hessian.diagonal().mean(), 1e-8);
      continue;
    }
    const Vector delta = ldlt.solve(mom.score - ridge * theta);
    const double before = objective(theta);
    double scale = 1.0;
    Vector trial = theta + delta;
    for (int h = 0; h < 30; ++h) {
      const double after = objective(trial);
      if (std::isfinite(after) && after >= before - 1e-10 * std::abs(before)) break;
      scale *= 0.5;
      trial = theta + scale * delta;
    }
    const double change = sup_norm(trial - theta);
    theta = trial;
    if (change < 1e-10 * std::max(1.0, sup_norm(theta))) break;
  }
  if (ridged) *ridged = ridge > 0.0;
  if (!theta.allFinite()) throw NumericalError("initial GLM fit produced non-finite estimates");
  return theta;
}

FitState initial_state(const ModelDesign& design, const GeeModel& model) {
  FitState st;
  st.theta = initial_estimate(design, model);
  st.sigma = 0.1 * Matrix::Identity(design.random_dim, design.random_dim);
  st.rho = 0.0;
  st.phi = model.family.kind == FamilyKind::Gaussian ? model.family.dispersion : 1.0;
  return st;
}

RhoMoments residual_moments(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                            const GeeModel& model) {
  RhoMoments mom;
  DrawTerms terms;
  const double w = 1.0 / bank.draw_count();
  for (int i = 0; i < design.subject_count(); ++i) {
    const Vector fixed_eta = design.subjects[i].design * theta;
    for (int k = 0; k < bank.draw_count(); ++k) {
      draw_terms(design.subjects[i], fixed_eta, bank.subject_draw(k, i), model, terms);
      mom.add(terms.pearson, w);
    }
  }
  return mom;
}

double estimate_dispersion(const ModelDesign& design, const Vector& theta, const DrawBank& bank,
                           const GeeModel& model) {
  double rss = 0.0;
  DrawTerms terms;
  for (int i = 0; i < design.subject_count(); ++i) {
    const auto& s = design.subjects[i];
    const Vector fixed_eta = s.design * theta;
    for (int k = 0; k < bank.draw_count(); ++k) {
      draw_terms(s, fixed_eta, bank.subject_draw(k, i), model, terms);
      rss += (s.response - terms.mu).squaredNorm();
    }
  }
  rss /= bank.draw_count();
  const int dof = design.observations - design.coefficient_count();
  return std::max(rss / std::max(dof, 1), kVarianceFloor);
}

FitResult fit(const ModelDesign& design, const GeeModel& model, const SamplerConfig& sampler,
              const SolverConfig& solver, const ScadPenalty& penalty, const FitState* warm_start) {
  penalty.validate();
  solver.validate();
  validate_family(model.family, model.link);
  const int n = penalty_multiplier(design, penalty);
  const int p = design.fixed_dim;
  const int P = design.coefficient_count();

  FitResult out;
  out.lambda = penalty.lambda;
  out.fixed_dim = p;
  out.subjects = design.subject_count();
  FitDiagnostics& diag = out.diagnostics;
  if (P > design.observations) {
    diag.more_parameters_than_observations = true;
    diag.warnings.push_back("more coefficients than observations");
  }

  FitState st = warm_start ? *warm_start : initial_state(design, model);
  if (st.theta.size() != P) throw InputError("warm start has the wrong coefficient length");
  GeeModel current = model;
  if (current.family.kind == FamilyKind::Gaussian) current.family.dispersion = st.phi;

  for (int outer = 1; outer <= solver.max_outer_iterations; ++outer) {
    diag.outer_iterations = outer;
    const ConditionalLikelihood lik(design, st.theta, current.family, current.link);
    const DrawBank bank = run_chain({st.sigma}, lik, sampler);
    diag.nonfinite_ratios += bank.nonfinite_ratios;

    if (model.correlation != CorrelationKind::Independence)
      st.rho = estimate_rho(model.correlation, residual_moments(design, st.theta, bank, current)).rho;
    if (current.family.kind == FamilyKind::Gaussian) {
      st.phi = estimate_dispersion(design, st.theta, bank, current);
      current.family.dispersion = st.phi;
    }
    const Matrix sigma_before = st.sigma;
    st.sigma = update_sigma(bank);
    const double sigma_change =
        (st.sigma - sigma_before).norm() / std::max(sigma_before.norm(), kVarianceFloor);
    CorrelationInverseCache cache({model.correlation, st.rho});

    const Vector theta_start = st.theta;
    Matrix bread;
    for (int step = 0; step < solver.max_newton_steps; ++step) {
      const GeeMoments mom = assemble_moments(design, st.theta, bank, current, cache);
      const Vector e = assemble_E(st.theta, p, penalty);
      bread = mom.hessian;
      bread.diagonal() += static_cast<double>(n) * e;
      // Merit for step acceptance: the LQA equation with E frozen at the
      // current iterate. The true SCAD U is not monotone along LQA steps
      // (it jumps as coefficients cross lambda), which stalls shrinkage.
      const double nd = static_cast<double>(n);
      const double before = (mom.score - nd * e.cwiseProduct(st.theta)).norm();
      bool jittered = false;
      const Vector delta = newton_step(st.theta, mom.score, mom.hessian, e, n, &jittered) - st.theta;
      diag.jitter_events += jittered;

      bool accepted = false;
      Vector trial;
      double after = 0.0;
      int halvings = 0;
      for (double scale = 1.0; halvings <= solver.step_halving_limit; ++halvings, scale *= 0.5) {
        trial = st.theta + scale * delta;
        const Vector s_trial = assemble_score(design, trial, bank, current, cache);
        after = (s_trial - nd * e.cwiseProduct(trial)).norm();
        if (std::isfinite(after) && after <= before) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        ++diag.rejected_newton_steps;
        break;
      }
      diag.newton_steps.push_back({outer, before, after, halvings});
      const double change = sup_norm(trial - st.theta);
      st.theta = trial;
      if (change < solver.tolerance) break;
    }
    if (!st.theta.allFinite()) throw NumericalError("MCNR iterate became non-finite");
    const double u_norm =
        sup_norm(penalized_u(st.theta, assemble_score(design, st.theta, bank, current, cache), p, n, penalty));

    const double change = sup_norm(st.theta - theta_start);
    const double scaled = scaled_change(st.theta - theta_start, bread);
    diag.theta_change.push_back(change);
    diag.scaled_change.push_back(scaled);
    diag.sigma_change.push_back(sigma_change);
    diag.u_norm.push_back(u_norm);
    if (outer >= 2 && (change < solver.tolerance || scaled < solver.se_tolerance) &&
        sigma_change < solver.sigma_tolerance) {
      diag.converged = true;
      break;
    }
  }
  if (!diag.converged) diag.warnings.push_back("MCNR did not converge; returning the last iterate");

  if (penalty.lambda > 0.0) {
    const double threshold = std::max(solver.zero_threshold, penalty.epsilon * penalty.lambda);
    for (int k = 0; k < p; ++k)
      if (std::abs(st.theta[k]) < threshold) st.theta[k] = 0.0;
  }

  const ConditionalLikelihood lik(design, st.theta, current.family, current.link);
  out.bank = run_chain({st.sigma}, lik, sampler);
  diag.nonfinite_ratios += out.bank.nonfinite_ratios;
  CorrelationInverseCache cache({model.correlation, st.rho});
  out.score = assemble_score(design, st.theta, out.bank, current, cache);
  out.u = penalized_u(st.theta, out.score, p, n, penalty);
  out.ell_max = integrated_log_likelihood(lik, {st.sigma}, sampler.draws,
                                          derive_seed(sampler.seed, 0x11ull));
  for (const auto& s : design.subjects) {
    const Vector eta = s.design * st.theta;
    if ((eta.cwiseAbs().array() > kLogLinkEtaBound).any() && model.link.kind == LinkKind::Log)
      diag.eta_clamped = true;
  }
  out.state = std::move(st);
  return out;
}

}  // namespace pgsmm
