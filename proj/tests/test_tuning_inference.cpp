#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pgsmm/sim_bench.hpp"
#include "pgsmm/tuning_inference.hpp"

using namespace pgsmm;

namespace {

ScadPenalty scad(double lambda) {
  ScadPenalty p;
  p.lambda = lambda;
  return p;
}

LongitudinalDataset gaussian_data(std::uint64_t seed, int n, int m, bool with_random) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  LongitudinalDataset data;
  data.fixed_names = {"x1", "x2", "x3"};
  data.random_names = {"intercept"};
  for (int i = 0; i < n; ++i) {
    Subject s;
    s.id = std::to_string(i + 1);
    std::vector<double> t(m);
    for (auto& v : t) v = unif(gen);
    std::sort(t.begin(), t.end());
    s.time = Eigen::Map<Vector>(t.data(), m);
    s.fixed.resize(m, 3);
    s.random = with_random ? Matrix::Ones(m, 1) : Matrix::Zero(m, 1);
    s.response.resize(m);
    const double b = with_random ? 0.5 * z(gen) : 0.0;
    for (int j = 0; j < m; ++j) {
      for (int k = 0; k < 3; ++k) s.fixed(j, k) = z(gen);
      // heteroskedastic noise so the robust and model-based covariances differ
      s.response[j] = s.fixed(j, 0) - 0.5 * s.fixed(j, 1) + std::cos(3 * t[j]) + b +
                      (0.3 + std::abs(s.fixed(j, 2))) * z(gen);
    }
    data.subjects.push_back(s);
  }
  return data;
}

SamplerConfig small_sampler(int draws = 100) {
  SamplerConfig s;
  s.draws = draws;
  s.burn_in = 30;
  return s;
}

}  // namespace

TEST(EffectiveParameters, IdentityAtZeroAndLimit) {
  const ModelDesign d = build_design(generate_replicate(make_sim_design(30, 5), 0), {});
  const GeeModel model;
  const FitResult f = fit(d, model, small_sampler(), {}, scad(0.0));
  CorrelationInverseCache cache({model.correlation, 0.0});
  const Matrix h = assemble_H(d, f.state.theta, f.bank, model, cache);
  const int P = d.coefficient_count();
  const int n = penalty_multiplier(d, scad(0.0));
  EXPECT_NEAR(effective_parameters(h, assemble_E(f.state.theta, d.fixed_dim, scad(0.0)), n), P, 1e-8);
  EXPECT_NEAR(effective_parameters(h, assemble_E(f.state.theta, d.fixed_dim, scad(1e6)), n),
              d.spline_dim, 1e-4);

  double prev = P + 1.0;
  for (double lambda : log_grid(1e-3, 10.0, 60)) {
    const double dl = effective_parameters(h, assemble_E(f.state.theta, d.fixed_dim, scad(lambda)), n);
    EXPECT_LE(dl, prev + 1e-8) << lambda;
    EXPECT_GE(dl, d.spline_dim - 1e-6);
    EXPECT_LE(dl, P + 1e-8);
    prev = dl;
  }
}

TEST(GcvValue, Definition) {
  EXPECT_DOUBLE_EQ(gcv_value(100.0, 5.0, 50, 10), 100.0 / 50 / 0.25);
  EXPECT_DOUBLE_EQ(gcv_value(0.0, 3.0, 50, 10), 0.0);
  EXPECT_THROW(gcv_value(1.0, 10.0, 50, 10), InputError);
  EXPECT_THROW(gcv_value(1.0, 12.0, 50, 10), InputError);
}

TEST(GcvScore, ZeroAtPerfectFit) {
  ModelDesign d = build_design(gaussian_data(2, 10, 4, false), {});
  const Vector theta = Vector::LinSpaced(d.coefficient_count(), -0.3, 0.3);
  for (auto& s : d.subjects) s.response = s.design * theta;
  FitResult f;
  f.state.theta = theta;
  f.state.phi = 1.0;
  f.fixed_dim = d.fixed_dim;
  f.bank = DrawBank(10, 1, 3);
  const GeeModel model{Family::gaussian(), {LinkKind::Identity}, CorrelationKind::Independence};
  const GcvResult g = gcv_score(d, f, model, scad(0.0));
  EXPECT_NEAR(g.rss, 0.0, 1e-20);
  EXPECT_NEAR(g.gcv, 0.0, 1e-20);
  EXPECT_NEAR(g.d, d.coefficient_count(), 1e-8);
}

TEST(ComputeW, NoRandomEffectsGivesV) {
  const ModelDesign d = oracle::random_design(3, 4, 3, 2, 1, 1);
  ModelDesign z0 = d;
  for (auto& s : z0.subjects) s.random.setZero();
  const DrawBank bank = oracle::random_bank(4, 4, 1, 20);
  const Vector theta = Vector::Constant(3, 0.2);
  const GeeModel model{Family::poisson(), {LinkKind::Log}, CorrelationKind::Exchangeable};
  const CorrelationSpec spec{CorrelationKind::Exchangeable, 0.3};
  const auto w = compute_W(z0, theta, bank, model, spec);
  for (int i = 0; i < 4; ++i) {
    const Vector mu = (z0.subjects[i].design * theta).array().exp();
    EXPECT_LT(oracle::max_abs_diff(w[i], build_V(spec, mu)), 1e-12);
  }
  // one draw: no spread term either
  const DrawBank single = oracle::random_bank(5, 4, 1, 1);
  const auto w1 = compute_W(d, theta, single, model, spec);
  for (int i = 0; i < 4; ++i) {
    Vector mu = d.subjects[i].design * theta;
    mu = (mu.array() + single.subject_draw(0, i)[0]).exp();
    EXPECT_LT(oracle::max_abs_diff(w1[i], build_V(spec, mu)), 1e-12);
  }
}

TEST(ComputeW, GaussianMarginalCovariance) {
  // Prior draws of u: W = phi I + sigma^2 1 1' up to Monte Carlo error.
  const double sigma2 = 0.4, phi = 1.3;
  const ModelDesign d = build_design(gaussian_data(6, 3, 4, true), {});
  const int draws = 200000;
  const DrawBank bank = oracle::random_bank(7, 3, 1, draws, std::sqrt(sigma2));
  const GeeModel model{Family::gaussian(phi), {LinkKind::Identity}, CorrelationKind::Independence};
  const auto w = compute_W(d, Vector::Zero(d.coefficient_count()), bank, model,
                           {CorrelationKind::Independence, 0.0});
  const Matrix expect = phi * Matrix::Identity(4, 4) + sigma2 * Matrix::Ones(4, 4);
  // sd of a sample variance: sigma2 sqrt(2 / N)
  const double tol = 4 * sigma2 * std::sqrt(2.0 / draws);
  for (const auto& wi : w) EXPECT_LT(oracle::max_abs_diff(wi, expect), tol);
}

TEST(Sandwich, ReducesToClusterRobustLeastSquares) {
  // Linear spline without interior knots keeps the alpha block well
  // conditioned, so the comparison can be absolute; the default cubic basis
  // is checked relative to the largest entry.
  SplineConfig linear;
  linear.degree = 1;
  linear.interior_knot_count = 0;
  for (const auto& [spline, relative] : {std::pair{linear, false}, std::pair{SplineConfig{}, true}}) {
    const ModelDesign d = build_design(gaussian_data(9, 40, 4, false), spline);
    const GeeModel model{Family::gaussian(), {LinkKind::Identity}, CorrelationKind::Independence};
    const FitResult f = fit(d, model, small_sampler(50), {}, scad(0.0));
    ASSERT_TRUE(f.diagnostics.converged);
    const int P = d.coefficient_count();
    Matrix xtx = Matrix::Zero(P, P), meat = Matrix::Zero(P, P);
    for (const auto& s : d.subjects) {
      xtx += s.design.transpose() * s.design;
      const Vector g = s.design.transpose() * (s.response - s.design * f.state.theta);
      meat += g * g.transpose();
    }
    const Matrix inv = xtx.inverse();
    const Matrix robust = inv * meat * inv;
    const double scale = relative ? robust.cwiseAbs().maxCoeff() : 1.0;
    for (BreadMode bread : {BreadMode::Complete, BreadMode::Louis}) {
      const InferenceReport rep = sandwich_covariance(d, f, model, scad(0.0), 0.95,
                                                      MeatMode::PosteriorMeanScore, bread);
      EXPECT_LT(oracle::max_abs_diff(rep.covariance, robust), 1e-8 * scale);
      EXPECT_LT(oracle::max_abs_diff(rep.covariance.topLeftCorner(3, 3), robust.topLeftCorner(3, 3)),
                1e-8);
      EXPECT_FALSE(rep.bread_fallback);
    }
  }
}

TEST(Sandwich, SymmetricPsdAndZeroForExcluded) {
  const ModelDesign d = build_design(generate_replicate(make_sim_design(50, 11), 2), {});
  const GeeModel model;
  const ScadPenalty pen = scad(0.2);
  const FitResult f = fit(d, model, small_sampler(200), {}, pen);
  const InferenceReport rep = sandwich_covariance(d, f, model, pen);
  EXPECT_LT(oracle::max_abs_diff(rep.covariance, rep.covariance.transpose()), 1e-10);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(rep.covariance);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
  for (int k = 0; k < d.fixed_dim; ++k) {
    if (f.state.theta[k] == 0.0) {
      EXPECT_EQ(rep.standard_errors[k], 0.0);
      EXPECT_TRUE(rep.covariance.row(k).isZero());
    } else {
      EXPECT_GT(rep.standard_errors[k], 0.0);
    }
  }
  const double z = normal_quantile(0.975);
  EXPECT_NEAR(rep.intervals[0].upper - rep.intervals[0].lower, 2 * z * rep.standard_errors[0], 1e-12);
}

TEST(Sandwich, LouisBreadWidensIntervals) {
  const ModelDesign d = build_design(generate_replicate(make_sim_design(50, 11), 4), {});
  const GeeModel model;
  const ScadPenalty pen = scad(0.15);
  const FitResult f = fit(d, model, small_sampler(300), {}, pen);
  const auto complete = sandwich_covariance(d, f, model, pen, 0.95, MeatMode::PosteriorMeanScore,
                                            BreadMode::Complete);
  const auto louis = sandwich_covariance(d, f, model, pen);
  for (int k = 0; k < 3; ++k) EXPECT_GT(louis.standard_errors[k], complete.standard_errors[k]);
}

TEST(Sandwich, StandardErrorTracksEmpiricalSpread) {
  // lambda fixed at 0 on a small Poisson design; SD1 within 35% of SD2
  SimDesign design = make_sim_design(30, 3);
  design.replicates = 100;
  design.seed = 123;
  StudyFitConfig cfg = default_study_fit_config();
  cfg.lambda_grid.clear();
  cfg.penalty.lambda = 0.0;
  cfg.sampler.draws = 150;
  cfg.sampler.burn_in = 50;
  const SimReport rep = run_study(design, make_gsmm_fitter(cfg, 99), 1);
  ASSERT_EQ(rep.failures, 0);
  for (int k = 0; k < 3; ++k) {
    const auto& c = rep.coefficients[k];
    EXPECT_GT(c.sd1 / c.sd2, 0.65) << "beta" << k + 1;
    EXPECT_LT(c.sd1 / c.sd2, 1.35) << "beta" << k + 1;
  }
}

TEST(NormalQuantile, KnownValues) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
}

TEST(AicBic, Examples) {
  auto c = aic_bic(0.0, 1, 1);
  EXPECT_DOUBLE_EQ(c.aic, 2.0);
  EXPECT_DOUBLE_EQ(c.bic, 0.0);
  c = aic_bic(-10.0, 3, 100);
  EXPECT_DOUBLE_EQ(c.aic, 26.0);
  EXPECT_DOUBLE_EQ(c.bic, 3 * std::log(100.0) + 20.0);
  c = aic_bic(5.0, 0, 7);
  EXPECT_DOUBLE_EQ(c.aic, -10.0);
  EXPECT_DOUBLE_EQ(c.bic, -10.0);
}

TEST(FreeParameters, Convention) {
  ModelDesign d;
  d.fixed_dim = 4;
  d.spline_dim = 5;
  d.random_dim = 2;
  FitResult f;
  f.fixed_dim = 4;
  f.state.theta = Vector::Zero(9);
  f.state.theta[1] = 0.5;
  f.state.theta[3] = -1.0;
  EXPECT_EQ(free_parameter_count(f, d, GeeModel{}), 2 + 5 + 3);
  const GeeModel gauss{Family::gaussian(), {LinkKind::Identity}, CorrelationKind::AR1};
  EXPECT_EQ(free_parameter_count(f, d, gauss), 2 + 5 + 3 + 2);
}

TEST(LogGrid, Shape) {
  const auto g = default_lambda_grid();
  ASSERT_EQ(g.size(), 30u);
  EXPECT_DOUBLE_EQ(g.front(), 0.01);
  EXPECT_DOUBLE_EQ(g.back(), 2.0);
  for (std::size_t k = 1; k < g.size(); ++k) {
    EXPECT_GT(g[k], g[k - 1]);
    EXPECT_NEAR(g[k] / g[k - 1], g[1] / g[0], 1e-12);
  }
  EXPECT_THROW(log_grid(0.0, 1.0, 3), InputError);
}

TEST(SelectLambda, SinglePointAndValidation) {
  const ModelDesign d = build_design(generate_replicate(make_sim_design(30, 4), 1), {});
  const auto res = select_lambda(d, GeeModel{}, small_sampler(), {}, scad(0.0), {0.3});
  EXPECT_DOUBLE_EQ(res.report.lambda_opt, 0.3);
  EXPECT_DOUBLE_EQ(res.best.lambda, 0.3);
  EXPECT_THROW(select_lambda(d, GeeModel{}, small_sampler(), {}, scad(0.0), {}), InputError);
  EXPECT_THROW(select_lambda(d, GeeModel{}, small_sampler(), {}, scad(0.0), {0.3, 0.2}), InputError);
}

TEST(SelectLambda, ArgminOfReportedGcv) {
  const ModelDesign d = build_design(generate_replicate(make_sim_design(50, 11), 5), {});
  const auto res = select_lambda(d, GeeModel{}, SamplerConfig{}, {}, scad(0.0), default_lambda_grid());
  const auto& rep = res.report;
  EXPECT_GE(rep.lambda_opt, 0.05);
  EXPECT_LE(rep.lambda_opt, 2.0);
  double best = HUGE_VAL;
  for (std::size_t k = 0; k < rep.lambda_grid.size(); ++k)
    if (rep.converged[k]) best = std::min(best, rep.gcv_values[k]);
  for (std::size_t k = 0; k < rep.lambda_grid.size(); ++k) {
    if (rep.gcv_values[k] == best && rep.converged[k]) {
      EXPECT_DOUBLE_EQ(rep.lambda_opt, rep.lambda_grid[k]);  // smallest argmin
      break;
    }
  }
  EXPECT_EQ(res.best.lambda, rep.lambda_opt);
}

TEST(SelectLambda, PureNoiseSelectsEmptyModel) {
  SimDesign design = make_sim_design(50, 5);
  design.true_beta.setZero();
  int empty = 0;
  SamplerConfig sampler = small_sampler(150);
  const std::vector<double> grid = log_grid(0.02, 2.0, 10);
  for (int r = 0; r < 20; ++r) {
    const ModelDesign d = build_design(generate_replicate(design, r), {});
    sampler.seed = 1000 + r;
    const auto res = select_lambda(d, GeeModel{}, sampler, {}, scad(0.0), grid);
    if (res.best.active_count() == 0) ++empty;
  }
  EXPECT_GT(empty, 10);
}
