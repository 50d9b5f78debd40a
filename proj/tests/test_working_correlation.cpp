#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pgsmm/working_correlation.hpp"

using namespace pgsmm;

TEST(BuildCorrelation, Examples) {
  EXPECT_TRUE(build_correlation({CorrelationKind::Independence, 0.9}, 3).isApprox(Matrix::Identity(3, 3)));
  Matrix ex(2, 2);
  ex << 1, 0.5, 0.5, 1;
  EXPECT_TRUE(build_correlation({CorrelationKind::Exchangeable, 0.5}, 2).isApprox(ex));
  const Matrix ar = build_correlation({CorrelationKind::AR1, 0.5}, 3);
  EXPECT_DOUBLE_EQ(ar(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(ar(1, 2), 0.5);
  EXPECT_DOUBLE_EQ(ar(0, 2), 0.25);
  EXPECT_DOUBLE_EQ(ar(2, 0), 0.25);
}

TEST(BuildCorrelation, RejectsOutOfRange) {
  EXPECT_THROW(build_correlation({CorrelationKind::Exchangeable, 1.0}, 3), InputError);
  EXPECT_THROW(build_correlation({CorrelationKind::Exchangeable, -0.5}, 3), InputError);
  EXPECT_NO_THROW(build_correlation({CorrelationKind::Exchangeable, -0.49}, 3));
  EXPECT_THROW(build_correlation({CorrelationKind::AR1, -1.0}, 4), InputError);
  EXPECT_THROW(build_correlation({CorrelationKind::AR1, 0.5}, 0), InputError);
}

TEST(BuildCorrelation, PositiveDefiniteAcrossRange) {
  for (CorrelationKind kind : {CorrelationKind::Exchangeable, CorrelationKind::AR1}) {
    for (int m : {2, 3, 5, 8}) {
      const auto [lo, hi] = rho_validity_range(kind, m);
      for (int g = 1; g < 40; ++g) {
        const double rho = lo + (hi - lo) * g / 40.0;
        const Matrix r = build_correlation({kind, rho}, m);
        EXPECT_TRUE(r.isApprox(r.transpose(), 0.0));
        EXPECT_TRUE(r.diagonal().isOnes());
        Eigen::SelfAdjointEigenSolver<Matrix> eig(r);
        EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0) << "rho " << rho << " m " << m;
      }
    }
  }
}

TEST(BuildV, Examples) {
  Vector a(2);
  a << 2, 3;
  EXPECT_TRUE(build_V({CorrelationKind::Independence, 0.0}, a).isApprox(Matrix(a.asDiagonal())));
  Matrix expect(2, 2);
  expect << 1, 0.5, 0.5, 1;
  EXPECT_TRUE(build_V({CorrelationKind::Exchangeable, 0.5}, Vector::Ones(2)).isApprox(expect));
  a << 4, 1;
  expect << 4, 1, 1, 1;
  EXPECT_TRUE(build_V({CorrelationKind::Exchangeable, 0.5}, a).isApprox(expect));
  a << 1, 0;
  EXPECT_THROW(build_V({CorrelationKind::Independence, 0.0}, a), InputError);
}

TEST(EstimateRho, IndependentNoiseIsNearZero) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> z;
  std::vector<Vector> res;
  for (int i = 0; i < 4000; ++i) {
    Vector r(4);
    for (int j = 0; j < 4; ++j) r[j] = z(gen);
    res.push_back(r);
  }
  const double pairs_ex = 4000 * 6.0, pairs_ar = 4000 * 3.0;
  EXPECT_LT(std::abs(estimate_rho(CorrelationKind::Exchangeable, res).rho), 3 / std::sqrt(pairs_ex));
  EXPECT_LT(std::abs(estimate_rho(CorrelationKind::AR1, res).rho), 3 / std::sqrt(pairs_ar));
}

TEST(EstimateRho, IdenticalWithinSubjectHitsUpperClamp) {
  std::vector<Vector> res;
  for (double v : {0.3, -1.2, 2.0}) res.push_back(Vector::Constant(3, v));
  const RhoEstimate est = estimate_rho(CorrelationKind::Exchangeable, res);
  EXPECT_TRUE(est.clamped);
  EXPECT_DOUBLE_EQ(est.rho, 1.0 - kRhoMargin);
}

TEST(EstimateRho, OppositePairClampsToLowerBound) {
  Vector r(2);
  r << 1, -1;
  const std::vector<Vector> res{r};
  const RhoEstimate est = estimate_rho(CorrelationKind::Exchangeable, res);
  EXPECT_TRUE(est.clamped);
  EXPECT_DOUBLE_EQ(est.rho, -1.0 + kRhoMargin);
}

TEST(EstimateRho, SingletonsAreDegenerate) {
  std::vector<Vector> res(5, Vector::Ones(1));
  const RhoEstimate est = estimate_rho(CorrelationKind::AR1, res);
  EXPECT_TRUE(est.degenerate);
  EXPECT_EQ(est.rho, 0.0);
}

TEST(EstimateRho, HandComputedLag1) {
  Vector r(3);
  r << 1, 2, 3;
  const std::vector<Vector> res{r};
  // lag-1 mean (2+6)/2 = 4; second moment 14/3
  EXPECT_NEAR(estimate_rho(CorrelationKind::AR1, res).rho, 6.0 / 7.0, 1e-14);
  r << 1, 0, -1;
  const std::vector<Vector> res2{r};
  // pairs: 0, -1, 0 -> mean -1/3 over 2/3
  EXPECT_NEAR(estimate_rho(CorrelationKind::Exchangeable, res2).rho, -0.5 + kRhoMargin, 1e-12);
}

TEST(RhoMoments, MergeIsOrderInsensitive) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z;
  std::vector<Vector> res;
  for (int i = 0; i < 50; ++i) {
    Vector r(1 + i % 5);
    for (auto& x : r) x = z(gen) + (i % 2 ? 0.5 : -0.5);
    res.push_back(r);
  }
  RhoMoments forward, a, b;
  for (const auto& r : res) forward.add(r);
  for (std::size_t i = 0; i < res.size(); ++i) (i % 3 ? a : b).add(res[res.size() - 1 - i]);
  b.merge(a);
  EXPECT_NEAR(estimate_rho(CorrelationKind::Exchangeable, forward).rho,
              estimate_rho(CorrelationKind::Exchangeable, b).rho, 1e-12);
  EXPECT_NEAR(estimate_rho(CorrelationKind::AR1, forward).rho,
              estimate_rho(CorrelationKind::AR1, b).rho, 1e-12);
}

TEST(InverseCache, MatchesExplicitInverse) {
  CorrelationInverseCache cache({CorrelationKind::Exchangeable, 0.3});
  const Matrix inv = cache.inverse(4);
  EXPECT_TRUE((inv * build_correlation({CorrelationKind::Exchangeable, 0.3}, 4))
                  .isApprox(Matrix::Identity(4, 4), 1e-12));
  EXPECT_EQ(&cache.inverse(4), &cache.inverse(4));
}

TEST(InverseCache, Ar1InverseIsTridiagonal) {
  CorrelationInverseCache cache({CorrelationKind::AR1, 0.7});
  const Matrix inv = cache.inverse(6);
  double offband = 0.0;
  for (int j = 0; j < 6; ++j)
    for (int k = 0; k < 6; ++k)
      if (std::abs(j - k) > 1) offband = std::max(offband, std::abs(inv(j, k)));
  EXPECT_LT(offband, 1e-10);
}

TEST(InverseCache, IndependenceIsIdentity) {
  CorrelationInverseCache cache({CorrelationKind::Independence, 0.0});
  EXPECT_TRUE(cache.independence());
  EXPECT_TRUE(cache.inverse(3).isApprox(Matrix::Identity(3, 3)));
}

TEST(Names, RoundTrip) {
  for (auto k : {CorrelationKind::Independence, CorrelationKind::Exchangeable, CorrelationKind::AR1})
    EXPECT_EQ(correlation_from_string(to_string(k)), k);
  EXPECT_THROW(correlation_from_string("unstructured"), InputError);
}
