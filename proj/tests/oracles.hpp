#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Nothing here calls the library's assembly code.

#include <cmath>
#include <random>
#include <vector>

#include "pgsmm/dataset.hpp"
#include "pgsmm/exponential_family.hpp"
#include "pgsmm/penalized_gee.hpp"
#include "pgsmm/posterior_sampler.hpp"

namespace oracle {

using pgsmm::Matrix;
using pgsmm::Vector;

struct Moments {
  Vector score;
  Matrix hessian;
  Matrix meat_mean_score;
  Matrix meat_per_draw;
};

inline double inverse_link(pgsmm::LinkKind link, double eta) {
  switch (link) {
    case pgsmm::LinkKind::Log: return std::exp(eta);
    case pgsmm::LinkKind::Logit: return 1.0 / (1.0 + std::exp(-eta));
    case pgsmm::LinkKind::Identity: return eta;
  }
  return eta;
}

inline double inverse_link_slope(pgsmm::LinkKind link, double eta) {
  switch (link) {
    case pgsmm::LinkKind::Log: return std::exp(eta);
    case pgsmm::LinkKind::Logit: {
      const double p = 1.0 / (1.0 + std::exp(-eta));
      return p * (1.0 - p);
    }
    case pgsmm::LinkKind::Identity: return 1.0;
  }
  return 1.0;
}

inline double variance_function(const pgsmm::Family& f, double mu) {
  switch (f.kind) {
    case pgsmm::FamilyKind::Poisson: return mu;
    case pgsmm::FamilyKind::Bernoulli: return mu * (1.0 - mu);
    case pgsmm::FamilyKind::Gaussian: return f.dispersion;
  }
  return 1.0;
}

inline double working_corr(pgsmm::CorrelationKind kind, double rho, int j, int k) {
  if (j == k) return 1.0;
  switch (kind) {
    case pgsmm::CorrelationKind::Independence: return 0.0;
    case pgsmm::CorrelationKind::Exchangeable: return rho;
    case pgsmm::CorrelationKind::AR1: return std::pow(rho, std::abs(j - k));
  }
  return 0.0;
}

// Draw by draw, subject by subject, element by element:
//   g_ik = D_i' Delta V^{-1} (y - mu),  H_ik = D_i' Delta V^{-1} Delta D_i.
inline Moments naive_moments(const pgsmm::ModelDesign& d, const Vector& theta,
                             const pgsmm::DrawBank& bank, const pgsmm::GeeModel& model,
                             double rho) {
  const int P = static_cast<int>(theta.size());
  const int N = bank.draw_count();
  Moments out;
  out.score = Vector::Zero(P);
  out.hessian = Matrix::Zero(P, P);
  out.meat_mean_score = Matrix::Zero(P, P);
  out.meat_per_draw = Matrix::Zero(P, P);
  for (int i = 0; i < d.subject_count(); ++i) {
    const auto& s = d.subjects[i];
    const int m = static_cast<int>(s.response.size());
    std::vector<double> g_mean(P, 0.0);
    for (int k = 0; k < N; ++k) {
      std::vector<double> mu(m), slope(m), nu(m);
      for (int j = 0; j < m; ++j) {
        double eta = 0.0;
        for (int c = 0; c < P; ++c) eta += s.design(j, c) * theta[c];
        for (int c = 0; c < d.random_dim; ++c) eta += s.random(j, c) * bank.subject_draw(k, i)[c];
        mu[j] = inverse_link(model.link.kind, eta);
        slope[j] = inverse_link_slope(model.link.kind, eta);
        nu[j] = variance_function(model.family, mu[j]);
      }
      Matrix v(m, m);
      for (int j = 0; j < m; ++j)
        for (int l = 0; l < m; ++l)
          v(j, l) = std::sqrt(nu[j]) * working_corr(model.correlation, rho, j, l) * std::sqrt(nu[l]);
      const Matrix vinv = v.inverse();
      std::vector<double> g(P, 0.0);
      for (int a = 0; a < P; ++a) {
        for (int j = 0; j < m; ++j)
          for (int l = 0; l < m; ++l)
            g[a] += s.design(j, a) * slope[j] * vinv(j, l) * (s.response[l] - mu[l]);
        for (int b = 0; b < P; ++b) {
          double h = 0.0;
          for (int j = 0; j < m; ++j)
            for (int l = 0; l < m; ++l)
              h += s.design(j, a) * slope[j] * vinv(j, l) * slope[l] * s.design(l, b);
          out.hessian(a, b) += h / N;
        }
      }
      for (int a = 0; a < P; ++a) {
        out.score[a] += g[a] / N;
        g_mean[a] += g[a] / N;
        for (int b = 0; b < P; ++b) out.meat_per_draw(a, b) += g[a] * g[b] / N;
      }
    }
    for (int a = 0; a < P; ++a)
      for (int b = 0; b < P; ++b) out.meat_mean_score(a, b) += g_mean[a] * g_mean[b];
  }
  return out;
}

// Random ModelDesign with a dense random design and a Poisson-ish response.
inline pgsmm::ModelDesign random_design(std::uint64_t seed, int n, int m, int p, int h, int q) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  std::poisson_distribution<int> count(1.5);
  pgsmm::ModelDesign d;
  d.fixed_dim = p;
  d.spline_dim = h;
  d.random_dim = q;
  for (int i = 0; i < n; ++i) {
    pgsmm::SubjectDesign s;
    s.design.resize(m, p + h);
    s.random.resize(m, q);
    s.response.resize(m);
    for (int j = 0; j < m; ++j) {
      for (int c = 0; c < p + h; ++c) s.design(j, c) = 0.5 * z(gen);
      for (int c = 0; c < q; ++c) s.random(j, c) = c == 0 ? 1.0 : z(gen);
      s.response[j] = count(gen);
    }
    d.subjects.push_back(s);
    d.observations += m;
  }
  return d;
}

inline pgsmm::DrawBank random_bank(std::uint64_t seed, int n, int q, int draws, double sd = 0.4) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, sd);
  pgsmm::DrawBank bank(n, q, draws);
  for (int k = 0; k < draws; ++k) {
    Vector u(n * q);
    for (auto& x : u) x = z(gen);
    bank.set_draw(k, u);
  }
  return bank;
}

// Ordinary least squares on the stacked design via QR.
inline Vector stacked_least_squares(const pgsmm::ModelDesign& d) {
  Matrix x(d.observations, d.coefficient_count());
  Vector y(d.observations);
  int row = 0;
  for (const auto& s : d.subjects) {
    x.middleRows(row, s.design.rows()) = s.design;
    y.segment(row, s.response.size()) = s.response;
    row += static_cast<int>(s.design.rows());
  }
  return x.colPivHouseholderQr().solve(y);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace oracle
