#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgsmm/config.hpp"
#include "pgsmm/sim_bench.hpp"
#include "pgsmm/tuning_inference.hpp"

namespace pgsmm {

inline constexpr int kFitReportSchemaVersion = 1;

struct CoefficientRow {
  std::string name;
  std::string block;  // "fixed" or "spline"
  double estimate = 0.0;
  double standard_error = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool active = true;

  bool operator==(const CoefficientRow&) const = default;
};

struct CurveRow {
  double t = 0.0;
  double fit = 0.0;
  double standard_error = 0.0;

  bool operator==(const CurveRow&) const = default;
};

struct TuningTrace {
  std::vector<double> lambda_grid;
  std::vector<double> gcv;  // +inf for saturated points
  std::vector<double> rss;
  std::vector<double> effective_params;
  std::vector<int> active_counts;
  std::vector<bool> converged;
  double lambda_opt = 0.0;

  bool operator==(const TuningTrace&) const = default;
};

struct FitReport {
  int schema_version = kFitReportSchemaVersion;
  std::string family;
  std::string link;
  std::string correlation;
  int subjects = 0;
  int observations = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double level = 0.95;
  std::vector<CoefficientRow> coefficients;
  std::vector<std::string> active_set;
  std::optional<TuningTrace> tuning;
  double ell_max = 0.0;
  int free_parameters = 0;
  double aic = 0.0;
  double bic = 0.0;
  std::vector<std::vector<double>> sigma;
  double rho = 0.0;
  double phi = 1.0;
  bool converged = false;
  int outer_iterations = 0;
  std::vector<double> theta_change;
  std::vector<double> sigma_change;
  int newton_steps = 0;
  int rejected_newton_steps = 0;
  int jitter_events = 0;
  long nonfinite_ratios = 0;
  double mean_acceptance = 0.0;
  double min_acceptance = 0.0;
  std::vector<std::string> warnings;
  std::vector<double> knots;
  std::vector<CurveRow> f_curve;

  bool operator==(const FitReport&) const = default;
};

FitReport build_fit_report(const LongitudinalDataset& data, const ModelDesign& design,
                           const ModelSpec& spec, const FitResult& fit,
                           const InferenceReport& inference, const TuningReport* tuning = nullptr);

nlohmann::json to_json(const FitReport& report);
FitReport fit_report_from_json(const nlohmann::json& j);

/// name,block,estimate,se,lower,upper,active
std::string coefficient_csv(const FitReport& report);

nlohmann::json to_json(const SimReport& report);
std::string table1_csv(const SimReport& report);
std::string table2_csv(const SimReport& report);
std::string fcurve_csv(const SimReport& report);

/// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace pgsmm
