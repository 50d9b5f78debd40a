#include "pgsmm/posterior_sampler.hpp"

#include <algorithm>
#include <limits>

namespace pgsmm {

void RandomEffectsModel::validate() const {
  if (covariance.rows() < 1 || covariance.rows() != covariance.cols())
    throw InputError("random-effects covariance must be a nonempty square matrix");
  if (!covariance.isApprox(covariance.transpose(), 1e-12))
    throw InputError("random-effects covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance);
  if (eig.eigenvalues().minCoeff() < kCovarianceFloor * (1.0 - 1e-9))
    throw InputError("random-effects covariance is not positive definite");
}

Matrix floor_eigenvalues(const Matrix& m, double floor) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const Vector values = eig.eigenvalues().cwiseMax(floor);
  Matrix out = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

DrawBank::DrawBank(int subjects, int dimension, int draws)
    : acceptance_rates(Vector::Zero(subjects)),
      subjects_(subjects),
      dimension_(dimension),
      values_(Matrix::Zero(static_cast<Eigen::Index>(subjects) * dimension, draws)) {}

ConditionalLikelihood::ConditionalLikelihood(const ModelDesign& design, const Vector& theta,
                                             Family family, LinkSpec link)
    : design_(&design), family_(family), link_(link) {
  if (theta.size() != design.coefficient_count())
    throw InputError("ConditionalLikelihood: coefficient length mismatch");
  fixed_eta_.reserve(design.subjects.size());
  for (const auto& s : design.subjects) fixed_eta_.push_back(s.design * theta);
}

double ConditionalLikelihood::subject_log_likelihood(int i,
                                                     const Eigen::Ref<const Vector>& u) const {
  const auto& s = design_->subjects[i];
  const Vector& base = fixed_eta_[i];
  double total = 0.0;
  for (Eigen::Index j = 0; j < base.size(); ++j) {
    const double eta = base[j] + s.random.row(j).dot(u);
    total += log_density(family_, s.response[j], mean_from_linear_predictor(family_, link_, eta));
  }
  return total;
}

double ConditionalLikelihood::log_likelihood(const Vector& all_u) const {
  const int q = dimension();
  double total = 0.0;
  for (int i = 0; i < subject_count(); ++i)
    total += subject_log_likelihood(i, all_u.segment(i * q, q));
  return total;
}

double ConditionalLikelihood::log_ratio_full(const Vector& current, const Vector& proposal) const {
  return log_likelihood(proposal) - log_likelihood(current);
}

double ConditionalLikelihood::log_ratio_subject(int i, const Eigen::Ref<const Vector>& current,
                                                const Eigen::Ref<const Vector>& proposal) const {
  return subject_log_likelihood(i, proposal) - subject_log_likelihood(i, current);
}

MetropolisSampler::MetropolisSampler(const RandomEffectsModel& model,
                                     const ConditionalLikelihood& likelihood)
    : likelihood_(&likelihood), q_(model.dimension()) {
  model.validate();
  if (q_ != likelihood.dimension())
    throw InputError("random-effects dimension does not match the design");
  precision_ = model.covariance.inverse();
  conditional_sd_ = precision_.diagonal().cwiseInverse().cwiseSqrt();
}

SweepStats MetropolisSampler::sweep(Vector& state, Rng& rng) const {
  const int n = likelihood_->subject_count();
  SweepStats stats;
  stats.accepted.assign(n, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    Vector u = state.segment(i * q_, q_);
    double current = likelihood_->subject_log_likelihood(i, u);
    for (int c = 0; c < q_; ++c) {
      // Prior conditional of u_c given the rest of u_i.
      const double mean = u[c] - precision_.row(c).dot(u) / precision_(c, c);
      Vector proposal = u;
      proposal[c] = mean + conditional_sd_[c] * normal(rng);
      const double candidate = likelihood_->subject_log_likelihood(i, proposal);
      bool nonfinite = false;
      if (metropolis_accept(candidate - current, rng, nonfinite)) {
        u = proposal;
        current = candidate;
        ++stats.accepted[i];
      }
      if (nonfinite) ++stats.nonfinite;
    }
    state.segment(i * q_, q_) = u;
  }
  return stats;
}

Vector metropolis_sweep(const Vector& state, const RandomEffectsModel& model,
                        const ConditionalLikelihood& likelihood, Rng& rng) {
  Vector next = state;
  MetropolisSampler(model, likelihood).sweep(next, rng);
  return next;
}

DrawBank run_chain(const RandomEffectsModel& model, const ConditionalLikelihood& likelihood,
                   const SamplerConfig& config, const Vector* initial) {
  if (config.draws < 1) throw InputError("sampler needs at least one retained draw");
  if (config.burn_in < 0 || config.thinning < 1)
    throw InputError("sampler burn-in must be >= 0 and thinning >= 1");
  const int n = likelihood.subject_count();
  const int q = model.dimension();
  MetropolisSampler sampler(model, likelihood);
  Rng rng = make_rng(config.seed);

  Vector state = Vector::Zero(static_cast<Eigen::Index>(n) * q);
  if (initial) {
    if (initial->size() != state.size()) throw InputError("run_chain: initial state size mismatch");
    state = *initial;
  }
  DrawBank bank(n, q, config.draws);
  bank.burn_in = config.burn_in;
  bank.thinning = config.thinning;
  bank.seed = config.seed;

  std::vector<long> accepted(n, 0);
  const long sweeps = config.burn_in + static_cast<long>(config.draws) * config.thinning;
  int stored = 0;
  for (long s = 1; s <= sweeps; ++s) {
    const SweepStats stats = sampler.sweep(state, rng);
    for (int i = 0; i < n; ++i) accepted[i] += stats.accepted[i];
    bank.nonfinite_ratios += stats.nonfinite;
    if (s > config.burn_in && (s - config.burn_in) % config.thinning == 0)
      bank.set_draw(stored++, state);
  }
  for (int i = 0; i < n; ++i)
    bank.acceptance_rates[i] = static_cast<double>(accepted[i]) / (static_cast<double>(sweeps) * q);
  return bank;
}

Matrix update_sigma(const DrawBank& bank) {
  if (bank.empty()) throw InputError("update_sigma: empty draw bank");
  const int q = bank.dimension();
  Matrix sum = Matrix::Zero(q, q);
  for (int k = 0; k < bank.draw_count(); ++k) {
    for (int i = 0; i < bank.subject_count(); ++i) {
      const Vector u = bank.subject_draw(k, i);
      sum.noalias() += u * u.transpose();
    }
  }
  sum /= static_cast<double>(bank.draw_count()) * bank.subject_count();
  return floor_eigenvalues(sum);
}

double integrated_log_likelihood(const ConditionalLikelihood& likelihood,
                                 const RandomEffectsModel& model, int draws,
                                 std::uint64_t seed) {
  if (draws < 1) throw InputError("integrated_log_likelihood: draws must be positive");
  model.validate();
  const int q = model.dimension();
  const Matrix chol = Eigen::LLT<Matrix>(model.covariance).matrixL();
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> terms(draws);
  double total = 0.0;
  Vector z(q);
  for (int i = 0; i < likelihood.subject_count(); ++i) {
    for (int k = 0; k < draws; ++k) {
      for (int c = 0; c < q; ++c) z[c] = normal(rng);
      terms[k] = likelihood.subject_log_likelihood(i, chol * z);
    }
    const double top = *std::max_element(terms.begin(), terms.end());
    if (!std::isfinite(top)) return -std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - top);
    total += top + std::log(acc / draws);
  }
  return total;
}

}  // namespace pgsmm
