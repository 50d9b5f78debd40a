#include "pgsmm/report.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

#include "pgsmm/csv_io.hpp"

namespace pgsmm {

using nlohmann::json;

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json numbers(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

std::vector<double> numbers_from(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(number_from(x));
  return out;
}

std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : std::string("NA"); }

}  // namespace

FitReport build_fit_report(const LongitudinalDataset& data, const ModelDesign& design,
                           const ModelSpec& spec, const FitResult& fit,
                           const InferenceReport& inference, const TuningReport* tuning) {
  FitReport r;
  r.family = to_string(spec.model.family.kind);
  r.link = to_string(spec.model.link.kind);
  r.correlation = to_string(spec.model.correlation);
  r.subjects = design.subject_count();
  r.observations = design.observations;
  r.seed = spec.sampler.seed;
  r.lambda = fit.lambda;
  r.level = inference.level;

  const Vector& theta = fit.state.theta;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    CoefficientRow row;
    const bool fixed = k < design.fixed_dim;
    row.name = fixed ? data.fixed_names[k] : "spline_" + std::to_string(k - design.fixed_dim);
    row.block = fixed ? "fixed" : "spline";
    row.estimate = theta[k];
    row.standard_error = inference.standard_errors[k];
    row.lower = inference.intervals[k].lower;
    row.upper = inference.intervals[k].upper;
    row.active = !fixed || fit.lambda <= 0.0 || theta[k] != 0.0;
    if (fixed && row.active) r.active_set.push_back(row.name);
    r.coefficients.push_back(row);
  }

  if (tuning) {
    TuningTrace t;
    t.lambda_grid = tuning->lambda_grid;
    t.gcv = tuning->gcv_values;
    t.rss = tuning->rss_values;
    t.effective_params = tuning->effective_params;
    t.active_counts = tuning->active_counts;
    t.converged = tuning->converged;
    t.lambda_opt = tuning->lambda_opt;
    r.tuning = t;
  }

  r.ell_max = fit.ell_max;
  r.free_parameters = free_parameter_count(fit, design, spec.model);
  const InformationCriteria ic = aic_bic(fit.ell_max, r.free_parameters, design.subject_count());
  r.aic = ic.aic;
  r.bic = ic.bic;
  for (Eigen::Index i = 0; i < fit.state.sigma.rows(); ++i) {
    std::vector<double> row(fit.state.sigma.cols());
    for (Eigen::Index c = 0; c < fit.state.sigma.cols(); ++c) row[c] = fit.state.sigma(i, c);
    r.sigma.push_back(row);
  }
  r.rho = fit.state.rho;
  r.phi = fit.state.phi;

  const FitDiagnostics& d = fit.diagnostics;
  r.converged = d.converged;
  r.outer_iterations = d.outer_iterations;
  r.theta_change = d.theta_change;
  r.sigma_change = d.sigma_change;
  r.newton_steps = static_cast<int>(d.newton_steps.size());
  r.rejected_newton_steps = d.rejected_newton_steps;
  r.jitter_events = d.jitter_events;
  r.nonfinite_ratios = d.nonfinite_ratios;
  if (fit.bank.acceptance_rates.size() > 0) {
    r.mean_acceptance = fit.bank.acceptance_rates.mean();
    r.min_acceptance = fit.bank.acceptance_rates.minCoeff();
  }
  r.warnings = d.warnings;

  const Vector& knots = design.basis.knots();
  r.knots.assign(knots.data(), knots.data() + knots.size());
  const TimeDomain dom = design.basis.domain();
  const int p = design.fixed_dim, h = design.spline_dim;
  const Matrix cov_alpha = inference.covariance.block(p, p, h, h);
  const Vector alpha = fit.alpha();
  constexpr int kCurvePoints = 101;
  for (int k = 0; k < kCurvePoints; ++k) {
    const double t = dom.lower + (dom.upper - dom.lower) * k / (kCurvePoints - 1);
    const Vector b = design.basis.evaluate(t);
    r.f_curve.push_back({t, b.dot(alpha), std::sqrt(std::max(b.dot(cov_alpha * b), 0.0))});
  }
  return r;
}

json to_json(const FitReport& r) {
  json coefs = json::array();
  for (const auto& c : r.coefficients)
    coefs.push_back({{"name", c.name},
                     {"block", c.block},
                     {"estimate", c.estimate},
                     {"se", c.standard_error},
                     {"lower", c.lower},
                     {"upper", c.upper},
                     {"active", c.active}});
  json curve = json::array();
  for (const auto& c : r.f_curve) curve.push_back({c.t, c.fit, c.standard_error});

  json j = {{"schema_version", r.schema_version},
            {"family", r.family},
            {"link", r.link},
            {"correlation", r.correlation},
            {"subjects", r.subjects},
            {"observations", r.observations},
            {"seed", r.seed},
            {"lambda", r.lambda},
            {"level", r.level},
            {"coefficients", coefs},
            {"active_set", r.active_set},
            {"ell_max", number(r.ell_max)},
            {"free_parameters", r.free_parameters},
            {"aic", number(r.aic)},
            {"bic", number(r.bic)},
            {"sigma", r.sigma},
            {"rho", r.rho},
            {"phi", r.phi},
            {"diagnostics",
             {{"converged", r.converged},
              {"outer_iterations", r.outer_iterations},
              {"theta_change", numbers(r.theta_change)},
              {"sigma_change", numbers(r.sigma_change)},
              {"newton_steps", r.newton_steps},
              {"rejected_newton_steps", r.rejected_newton_steps},
              {"jitter_events", r.jitter_events},
              {"nonfinite_ratios", r.nonfinite_ratios},
              {"mean_acceptance", r.mean_acceptance},
              {"min_acceptance", r.min_acceptance},
              {"warnings", r.warnings}}},
            {"knots", r.knots},
            {"f_curve", curve}};
  if (r.tuning) {
    const TuningTrace& t = *r.tuning;
    j["tuning"] = {{"lambda_grid", t.lambda_grid},
                   {"gcv", numbers(t.gcv)},
                   {"rss", numbers(t.rss)},
                   {"effective_params", numbers(t.effective_params)},
                   {"active_counts", t.active_counts},
                   {"converged", t.converged},
                   {"lambda_opt", t.lambda_opt}};
  } else {
    j["tuning"] = nullptr;
  }
  return j;
}

FitReport fit_report_from_json(const json& j) {
  try {
    FitReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kFitReportSchemaVersion)
      throw InputError("unsupported report schema version " + std::to_string(r.schema_version));
    r.family = j.at("family").get<std::string>();
    r.link = j.at("link").get<std::string>();
    r.correlation = j.at("correlation").get<std::string>();
    r.subjects = j.at("subjects").get<int>();
    r.observations = j.at("observations").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.lambda = j.at("lambda").get<double>();
    r.level = j.at("level").get<double>();
    for (const auto& c : j.at("coefficients"))
      r.coefficients.push_back({c.at("name").get<std::string>(), c.at("block").get<std::string>(),
                                c.at("estimate").get<double>(), c.at("se").get<double>(),
                                c.at("lower").get<double>(), c.at("upper").get<double>(),
                                c.at("active").get<bool>()});
    r.active_set = j.at("active_set").get<std::vector<std::string>>();
    r.ell_max = number_from(j.at("ell_max"));
    r.free_parameters = j.at("free_parameters").get<int>();
    r.aic = number_from(j.at("aic"));
    r.bic = number_from(j.at("bic"));
    r.sigma = j.at("sigma").get<std::vector<std::vector<double>>>();
    r.rho = j.at("rho").get<double>();
    r.phi = j.at("phi").get<double>();
    const json& d = j.at("diagnostics");
    r.converged = d.at("converged").get<bool>();
    r.outer_iterations = d.at("outer_iterations").get<int>();
    r.theta_change = numbers_from(d.at("theta_change"));
    r.sigma_change = numbers_from(d.at("sigma_change"));
    r.newton_steps = d.at("newton_steps").get<int>();
    r.rejected_newton_steps = d.at("rejected_newton_steps").get<int>();
    r.jitter_events = d.at("jitter_events").get<int>();
    r.nonfinite_ratios = d.at("nonfinite_ratios").get<long>();
    r.mean_acceptance = d.at("mean_acceptance").get<double>();
    r.min_acceptance = d.at("min_acceptance").get<double>();
    r.warnings = d.at("warnings").get<std::vector<std::string>>();
    r.knots = j.at("knots").get<std::vector<double>>();
    for (const auto& c : j.at("f_curve"))
      r.f_curve.push_back({c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()});
    if (!j.at("tuning").is_null()) {
      const json& t = j.at("tuning");
      TuningTrace tr;
      tr.lambda_grid = t.at("lambda_grid").get<std::vector<double>>();
      tr.gcv = numbers_from(t.at("gcv"));
      tr.rss = numbers_from(t.at("rss"));
      tr.effective_params = numbers_from(t.at("effective_params"));
      tr.active_counts = t.at("active_counts").get<std::vector<int>>();
      tr.converged = t.at("converged").get<std::vector<bool>>();
      tr.lambda_opt = t.at("lambda_opt").get<double>();
      r.tuning = tr;
    }
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed fit report: ") + e.what());
  }
}

std::string coefficient_csv(const FitReport& r) {
  std::ostringstream out;
  out << "name,block,estimate,se,lower,upper,active\n";
  for (const auto& c : r.coefficients)
    out << c.name << ',' << c.block << ',' << csv_number(c.estimate) << ','
        << csv_number(c.standard_error) << ',' << csv_number(c.lower) << ',' << csv_number(c.upper)
        << ',' << (c.active ? 1 : 0) << '\n';
  return out.str();
}

json to_json(const SimReport& r) {
  json coefs = json::array();
  for (const auto& c : r.coefficients)
    coefs.push_back({{"truth", c.truth},
                     {"mean", c.mean},
                     {"bias", c.bias},
                     {"sd1", c.sd1},
                     {"sd2", c.sd2},
                     {"cp", c.cp}});
  json curve = json::array();
  for (const auto& c : r.f_curve)
    curve.push_back({{"t", c.t},
                     {"mean_fit", c.mean_fit},
                     {"bias", c.bias},
                     {"sd", c.sd},
                     {"sd_empirical", c.sd_empirical},
                     {"coverage", c.coverage}});
  return {{"design", r.design_name},
          {"subjects", r.subjects},
          {"p", r.p},
          {"replicates", r.replicates},
          {"failures", r.failures},
          {"non_converged", r.non_converged},
          {"mse", r.mse},
          {"C", r.correct_zeros},
          {"I", r.incorrect_zeros},
          {"under_fit", r.under_fit},
          {"correct_fit", r.correct_fit},
          {"over_fit", r.over_fit},
          {"f_mise", r.f_mise},
          {"coverage_level", r.coverage_level},
          {"coefficients", coefs},
          {"f_curve", curve},
          {"replicate_index", r.replicate_index},
          {"error_norms", r.error_norms},
          {"incorrect_zero_counts", r.incorrect_zero_counts},
          {"correct_zero_counts", r.correct_zero_counts},
          {"lambdas", r.lambdas}};
}

std::string table1_csv(const SimReport& r) {
  std::ostringstream out;
  out << "design,n,p,replicates,failures,mse,C,I,under_fit,correct_fit,over_fit\n";
  out << r.design_name << ',' << r.subjects << ',' << r.p << ',' << r.replicates << ','
      << r.failures << ',' << format_double(r.mse) << ',' << format_double(r.correct_zeros) << ','
      << format_double(r.incorrect_zeros) << ',' << format_double(r.under_fit) << ','
      << format_double(r.correct_fit) << ',' << format_double(r.over_fit) << '\n';
  return out.str();
}

std::string table2_csv(const SimReport& r) {
  std::ostringstream out;
  out << "coefficient,truth,bias,sd1,sd2,cp\n";
  for (std::size_t k = 0; k < r.coefficients.size(); ++k) {
    const auto& c = r.coefficients[k];
    out << "beta" << k + 1 << ',' << format_double(c.truth) << ',' << format_double(c.bias) << ','
        << format_double(c.sd1) << ',' << format_double(c.sd2) << ',' << format_double(c.cp) << '\n';
  }
  return out.str();
}

std::string fcurve_csv(const SimReport& r) {
  std::ostringstream out;
  out << "t,mean_fit,bias,sd,sd_empirical,coverage\n";
  for (const auto& c : r.f_curve)
    out << format_double(c.t) << ',' << format_double(c.mean_fit) << ',' << format_double(c.bias)
        << ',' << format_double(c.sd) << ',' << format_double(c.sd_empirical) << ','
        << format_double(c.coverage) << '\n';
  return out.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InputError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace pgsmm
