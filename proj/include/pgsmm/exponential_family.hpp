#pragma once

#include <string>

#include "pgsmm/common.hpp"

namespace pgsmm {

enum class FamilyKind { Poisson, Bernoulli, Gaussian };
enum class LinkKind { Log, Logit, Identity };

struct Family {
  FamilyKind kind = FamilyKind::Poisson;
  // phi. Fixed at 1 for Poisson and Bernoulli.
  double dispersion = 1.0;

  static Family poisson() { return {FamilyKind::Poisson, 1.0}; }
  static Family bernoulli() { return {FamilyKind::Bernoulli, 1.0}; }
  static Family gaussian(double phi = 1.0);
};

struct LinkSpec {
  LinkKind kind = LinkKind::Log;
};

LinkSpec canonical_link(FamilyKind kind);
bool is_canonical(const Family& family, const LinkSpec& link);
// Throws InputError for pairings the library does not support
// (Logit outside Bernoulli, dispersion != 1 for Poisson/Bernoulli).
void validate_family(const Family& family, const LinkSpec& link);

// Largest |eta| passed to exp() under the log link.
inline constexpr double kLogLinkEtaBound = 350.0;

/// g^{-1}(eta). Under the log link eta is clamped to +-kLogLinkEtaBound;
/// `clamped` (when given) is set when that happened.
double mean_from_linear_predictor(const Family& family, const LinkSpec& link, double eta,
                                  bool* clamped = nullptr);
/// d mu / d eta, evaluated with the same clamp.
double mean_derivative(const LinkSpec& link, double eta);
double link_function(const LinkSpec& link, double mu);

/// var(y | u) = phi * b''(theta) expressed through mu.
double conditional_variance(const Family& family, double mu);

/// Exact log density / mass including the c(y, phi) normalizer.
double log_density(const Family& family, double y, double mu);

std::string to_string(FamilyKind kind);
std::string to_string(LinkKind kind);
FamilyKind family_from_string(const std::string& name);
LinkKind link_from_string(const std::string& name);

}  // namespace pgsmm
