#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "pgsmm/csv_io.hpp"
#include "pgsmm/penalized_gee.hpp"
#include "pgsmm/spline_basis.hpp"
#include "pgsmm/tuning_inference.hpp"

namespace pgsmm {

// Everything a fit or tune run needs besides the data.
struct ModelSpec {
  GeeModel model;
  SplineConfig spline;
  ScadPenalty penalty;
  std::vector<double> lambda_grid;  // used by `tune`; ascending
  SamplerConfig sampler;
  SolverConfig solver;
  CsvSchema data;
  double level = 0.95;
  MeatMode meat_mode = MeatMode::PosteriorMeanScore;
  BreadMode bread_mode = BreadMode::Louis;

  void validate() const;
};

ModelSpec default_model_spec();

nlohmann::json to_json(const ModelSpec& spec);
/// Missing keys take the defaults; unknown keys are an InputError.
ModelSpec model_spec_from_json(const nlohmann::json& j);
ModelSpec load_model_spec(const std::filesystem::path& path);

}  // namespace pgsmm
