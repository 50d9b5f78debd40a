#include "pgsmm/exponential_family.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pgsmm {

Family Family::gaussian(double phi) {
  if (!(phi > 0.0)) throw InputError("Gaussian dispersion must be positive");
  return {FamilyKind::Gaussian, phi};
}

LinkSpec canonical_link(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Poisson: return {LinkKind::Log};
    case FamilyKind::Bernoulli: return {LinkKind::Logit};
    case FamilyKind::Gaussian: return {LinkKind::Identity};
  }
  return {LinkKind::Identity};
}

bool is_canonical(const Family& family, const LinkSpec& link) {
  return canonical_link(family.kind).kind == link.kind;
}

void validate_family(const Family& family, const LinkSpec& link) {
  if (link.kind == LinkKind::Logit && family.kind != FamilyKind::Bernoulli)
    throw InputError("logit link is only available for the Bernoulli family");
  if (family.kind != FamilyKind::Gaussian && family.dispersion != 1.0)
    throw InputError("dispersion is fixed at 1 for Poisson and Bernoulli families");
  if (!(family.dispersion > 0.0)) throw InputError("dispersion must be positive");
}

namespace {

double clamp_eta(double eta, bool* clamped) {
  const double c = std::clamp(eta, -kLogLinkEtaBound, kLogLinkEtaBound);
  if (clamped) *clamped = (c != eta);
  return c;
}

double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace

double mean_from_linear_predictor(const Family&, const LinkSpec& link, double eta,
                                  bool* clamped) {
  if (clamped) *clamped = false;
  switch (link.kind) {
    case LinkKind::Log: return std::exp(clamp_eta(eta, clamped));
    case LinkKind::Logit: return logistic(eta);
    case LinkKind::Identity: return eta;
  }
  return eta;
}

double mean_derivative(const LinkSpec& link, double eta) {
  switch (link.kind) {
    case LinkKind::Log: return std::exp(clamp_eta(eta, nullptr));
    case LinkKind::Logit: {
      const double p = logistic(eta);
      return p * (1.0 - p);
    }
    case LinkKind::Identity: return 1.0;
  }
  return 1.0;
}

double link_function(const LinkSpec& link, double mu) {
  switch (link.kind) {
    case LinkKind::Log: return std::log(mu);
    case LinkKind::Logit: return std::log(mu / (1.0 - mu));
    case LinkKind::Identity: return mu;
  }
  return mu;
}

double conditional_variance(const Family& family, double mu) {
  switch (family.kind) {
    case FamilyKind::Poisson:
      if (!(mu >= 0.0)) throw InputError("Poisson mean must be nonnegative");
      return mu;
    case FamilyKind::Bernoulli:
      if (!(mu >= 0.0 && mu <= 1.0)) throw InputError("Bernoulli mean must lie in [0, 1]");
      return mu * (1.0 - mu);
    case FamilyKind::Gaussian:
      return family.dispersion;
  }
  return family.dispersion;
}

double log_density(const Family& family, double y, double mu) {
  switch (family.kind) {
    case FamilyKind::Poisson: {
      if (!(y >= 0.0) || y != std::floor(y))
        throw InputError("Poisson response must be a nonnegative integer");
      if (!(mu >= 0.0)) throw InputError("Poisson mean must be nonnegative");
      if (mu == 0.0) return y == 0.0 ? 0.0 : -HUGE_VAL;
      return y * std::log(mu) - mu - std::lgamma(y + 1.0);
    }
    case FamilyKind::Bernoulli: {
      if (y != 0.0 && y != 1.0) throw InputError("Bernoulli response must be 0 or 1");
      if (!(mu >= 0.0 && mu <= 1.0)) throw InputError("Bernoulli mean must lie in [0, 1]");
      return y == 1.0 ? std::log(mu) : std::log1p(-mu);
    }
    case FamilyKind::Gaussian: {
      const double phi = family.dispersion;
      const double r = y - mu;
      return -0.5 * (r * r / phi + std::log(2.0 * std::numbers::pi * phi));
    }
  }
  return 0.0;
}

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Poisson: return "poisson";
    case FamilyKind::Bernoulli: return "bernoulli";
    case FamilyKind::Gaussian: return "gaussian";
  }
  return "?";
}

std::string to_string(LinkKind kind) {
  switch (kind) {
    case LinkKind::Log: return "log";
    case LinkKind::Logit: return "logit";
    case LinkKind::Identity: return "identity";
  }
  return "?";
}

FamilyKind family_from_string(const std::string& name) {
  if (name == "poisson") return FamilyKind::Poisson;
  if (name == "bernoulli" || name == "binomial") return FamilyKind::Bernoulli;
  if (name == "gaussian" || name == "normal") return FamilyKind::Gaussian;
  throw InputError("unknown family '" + name + "'");
}

LinkKind link_from_string(const std::string& name) {
  if (name == "log") return LinkKind::Log;
  if (name == "logit") return LinkKind::Logit;
  if (name == "identity") return LinkKind::Identity;
  throw InputError("unknown link '" + name + "'");
}

}  // namespace pgsmm
