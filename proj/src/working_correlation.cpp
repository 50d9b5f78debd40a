#include "pgsmm/working_correlation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pgsmm {

std::pair<double, double> rho_validity_range(CorrelationKind kind, int m) {
  const double inf = std::numeric_limits<double>::infinity();
  switch (kind) {
    case CorrelationKind::Independence: return {-inf, inf};
    case CorrelationKind::Exchangeable:
      return {m > 1 ? -1.0 / (m - 1) : -inf, 1.0};
    case CorrelationKind::AR1: return {-1.0, 1.0};
  }
  return {-inf, inf};
}

Matrix build_correlation(const CorrelationSpec& spec, int m) {
  if (m < 1) throw InputError("build_correlation: cluster size must be positive");
  Matrix r = Matrix::Identity(m, m);
  if (spec.kind == CorrelationKind::Independence) return r;
  const auto [lo, hi] = rho_validity_range(spec.kind, m);
  if (!(spec.rho > lo && spec.rho < hi)) {
    std::ostringstream msg;
    msg << "correlation parameter " << spec.rho << " outside (" << lo << ", " << hi
        << ") for cluster size " << m;
    throw InputError(msg.str());
  }
  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < m; ++k) {
      if (j == k) continue;
      r(j, k) = spec.kind == CorrelationKind::Exchangeable ? spec.rho
                                                          : std::pow(spec.rho, std::abs(j - k));
    }
  }
  return r;
}

Matrix build_V(const CorrelationSpec& spec, const Vector& variances) {
  if ((variances.array() <= 0.0).any()) throw InputError("build_V: nonpositive variance");
  const Vector root = variances.array().sqrt();
  return root.asDiagonal() * build_correlation(spec, static_cast<int>(variances.size())) *
         root.asDiagonal();
}

void RhoMoments::add(const Vector& r, double weight) {
  const auto m = r.size();
  max_m_ = std::max(max_m_, static_cast<int>(m));
  square_sum_ += weight * r.squaredNorm();
  square_count_ += weight * static_cast<double>(m);
  if (m < 2) return;
  // sum_{j<k} r_j r_k = ((sum r)^2 - sum r^2) / 2
  const double total = r.sum();
  exch_sum_ += weight * 0.5 * (total * total - r.squaredNorm());
  exch_count_ += weight * 0.5 * static_cast<double>(m * (m - 1));
  lag1_sum_ += weight * r.head(m - 1).dot(r.tail(m - 1));
  lag1_count_ += weight * static_cast<double>(m - 1);
}

void RhoMoments::merge(const RhoMoments& o) {
  square_sum_ += o.square_sum_;
  square_count_ += o.square_count_;
  exch_sum_ += o.exch_sum_;
  exch_count_ += o.exch_count_;
  lag1_sum_ += o.lag1_sum_;
  lag1_count_ += o.lag1_count_;
  max_m_ = std::max(max_m_, o.max_m_);
}

RhoEstimate estimate_rho(CorrelationKind kind, const RhoMoments& mom) {
  RhoEstimate out;
  if (kind == CorrelationKind::Independence) return out;
  const double pair_count =
      kind == CorrelationKind::Exchangeable ? mom.exchangeable_count() : mom.lag1_count();
  const double second = mom.square_count() > 0 ? mom.square_sum() / mom.square_count() : 0.0;
  if (pair_count <= 0.0 || !(second > 0.0)) {
    out.degenerate = true;
    return out;
  }
  const double pair_sum =
      kind == CorrelationKind::Exchangeable ? mom.exchangeable_sum() : mom.lag1_sum();
  const double raw = (pair_sum / pair_count) / second;
  const auto [lo, hi] = rho_validity_range(kind, mom.max_cluster_size());
  out.rho = std::clamp(raw, lo + kRhoMargin, hi - kRhoMargin);
  out.clamped = out.rho != raw;
  return out;
}

RhoEstimate estimate_rho(CorrelationKind kind, std::span<const Vector> residuals) {
  RhoMoments mom;
  for (const auto& r : residuals) mom.add(r);
  return estimate_rho(kind, mom);
}

const Matrix& CorrelationInverseCache::inverse(int m) {
  auto it = cache_.find(m);
  if (it != cache_.end()) return it->second;
  const Matrix r = build_correlation(spec_, m);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(r);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-12 * hi)) {
    std::ostringstream msg;
    msg << "working correlation is singular (condition number " << (lo > 0 ? hi / lo : INFINITY)
        << ", size " << m << ")";
    throw NumericalError(msg.str());
  }
  Matrix inv = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
               eig.eigenvectors().transpose();
  inv = 0.5 * (inv + inv.transpose()).eval();
  return cache_.emplace(m, std::move(inv)).first->second;
}

std::string to_string(CorrelationKind kind) {
  switch (kind) {
    case CorrelationKind::Independence: return "independence";
    case CorrelationKind::Exchangeable: return "exchangeable";
    case CorrelationKind::AR1: return "ar1";
  }
  return "?";
}

CorrelationKind correlation_from_string(const std::string& name) {
  if (name == "independence") return CorrelationKind::Independence;
  if (name == "exchangeable") return CorrelationKind::Exchangeable;
  if (name == "ar1") return CorrelationKind::AR1;
  throw InputError("unknown correlation structure '" + name + "'");
}

}  // namespace pgsmm
