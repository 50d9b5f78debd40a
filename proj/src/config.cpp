#include "pgsmm/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>

#include "pgsmm/tuning_inference.hpp"

namespace pgsmm {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw InputError("config: '" + where + "' must be an object");
  for (const auto& item : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; }))
      throw InputError("config: unknown key '" + item.key() + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

std::string placement_name(KnotPlacement k) {
  return k == KnotPlacement::Quantile ? "quantile" : "equally_spaced";
}

KnotPlacement placement_from(const std::string& s) {
  if (s == "quantile") return KnotPlacement::Quantile;
  if (s == "equally_spaced") return KnotPlacement::EquallySpaced;
  throw InputError("config: unknown knot placement '" + s + "'");
}

std::string meat_name(MeatMode m) {
  return m == MeatMode::PerDraw ? "per_draw" : "posterior_mean_score";
}

std::string weight_name(PenaltyWeight w) {
  return w == PenaltyWeight::Subjects ? "subjects" : "observations";
}

PenaltyWeight weight_from(const std::string& s) {
  if (s == "subjects") return PenaltyWeight::Subjects;
  if (s == "observations") return PenaltyWeight::Observations;
  throw InputError("config: unknown penalty weight '" + s + "'");
}

std::string bread_name(BreadMode b) { return b == BreadMode::Complete ? "complete" : "louis"; }

BreadMode bread_from(const std::string& s) {
  if (s == "louis") return BreadMode::Louis;
  if (s == "complete") return BreadMode::Complete;
  throw InputError("config: unknown bread mode '" + s + "'");
}

MeatMode meat_from(const std::string& s) {
  if (s == "per_draw") return MeatMode::PerDraw;
  if (s == "posterior_mean_score") return MeatMode::PosteriorMeanScore;
  throw InputError("config: unknown meat mode '" + s + "'");
}

}  // namespace

void ModelSpec::validate() const {
  validate_family(model.family, model.link);
  penalty.validate();
  solver.validate();
  if (spline.degree < 0) throw InputError("spline degree must be >= 0");
  if (spline.interior_knot_count && *spline.interior_knot_count < 0)
    throw InputError("interior knot count must be >= 0");
  if (sampler.draws < 1 || sampler.burn_in < 0 || sampler.thinning < 1)
    throw InputError("sampler needs draws >= 1, burn_in >= 0, thinning >= 1");
  if (!(level > 0.0 && level < 1.0)) throw InputError("interval level must lie in (0, 1)");
  for (std::size_t k = 0; k < lambda_grid.size(); ++k) {
    if (!(lambda_grid[k] > 0.0)) throw InputError("lambda grid values must be positive");
    if (k > 0 && !(lambda_grid[k] > lambda_grid[k - 1]))
      throw InputError("lambda grid must be strictly increasing");
  }
}

ModelSpec default_model_spec() {
  ModelSpec spec;
  spec.lambda_grid = default_lambda_grid();
  return spec;
}

json to_json(const ModelSpec& s) {
  json j;
  j["family"] = to_string(s.model.family.kind);
  j["link"] = to_string(s.model.link.kind);
  j["dispersion"] = s.model.family.dispersion;
  j["correlation"] = to_string(s.model.correlation);
  j["spline"] = {
      {"degree", s.spline.degree},
      {"interior_knots", s.spline.interior_knot_count ? json(*s.spline.interior_knot_count) : json()},
      {"knot_placement", placement_name(s.spline.knot_placement)},
      {"smoothness_order", s.spline.smoothness_order},
      {"time_domain", s.spline.time_domain
                          ? json::array({s.spline.time_domain->lower, s.spline.time_domain->upper})
                          : json()},
  };
  j["penalty"] = {{"lambda", s.penalty.lambda},
                  {"a", s.penalty.a},
                  {"epsilon", s.penalty.epsilon},
                  {"weight", weight_name(s.penalty.weight)}};
  j["lambda_grid"] = s.lambda_grid;
  j["sampler"] = {{"draws", s.sampler.draws},
                  {"burn_in", s.sampler.burn_in},
                  {"thinning", s.sampler.thinning},
                  {"seed", s.sampler.seed}};
  j["solver"] = {{"max_outer_iterations", s.solver.max_outer_iterations},
                 {"max_newton_steps", s.solver.max_newton_steps},
                 {"tolerance", s.solver.tolerance},
                 {"se_tolerance", s.solver.se_tolerance},
                 {"sigma_tolerance", s.solver.sigma_tolerance},
                 {"zero_threshold", s.solver.zero_threshold},
                 {"step_halving_limit", s.solver.step_halving_limit}};
  json inter = json::array();
  for (const auto& [a, b] : s.data.interactions) inter.push_back({a, b});
  j["data"] = {{"subject", s.data.subject},
               {"time", s.data.time},
               {"response", s.data.response},
               {"fixed", s.data.fixed},
               {"random", s.data.random},
               {"random_intercept", s.data.random_intercept},
               {"interactions", inter},
               {"standardize", s.data.standardize}};
  j["inference"] = {
      {"level", s.level}, {"meat", meat_name(s.meat_mode)}, {"bread", bread_name(s.bread_mode)}};
  return j;
}

ModelSpec model_spec_from_json(const json& j) {
  reject_unknown(j, "config", {"family", "link", "dispersion", "correlation", "spline", "penalty",
                               "lambda_grid", "sampler", "solver", "data", "inference"});
  ModelSpec s = default_model_spec();
  std::string name;
  if (j.contains("family")) {
    read(j, "family", name);
    s.model.family.kind = family_from_string(name);
  }
  s.model.link = canonical_link(s.model.family.kind);
  if (j.contains("link")) {
    read(j, "link", name);
    s.model.link.kind = link_from_string(name);
  }
  read(j, "dispersion", s.model.family.dispersion);
  if (j.contains("correlation")) {
    read(j, "correlation", name);
    s.model.correlation = correlation_from_string(name);
  }
  if (j.contains("spline")) {
    const json& sp = j.at("spline");
    reject_unknown(sp, "spline",
                   {"degree", "interior_knots", "knot_placement", "smoothness_order", "time_domain"});
    read(sp, "degree", s.spline.degree);
    if (sp.contains("interior_knots") && !sp.at("interior_knots").is_null()) {
      int k = 0;
      read(sp, "interior_knots", k);
      s.spline.interior_knot_count = k;
    }
    if (sp.contains("knot_placement")) {
      read(sp, "knot_placement", name);
      s.spline.knot_placement = placement_from(name);
    }
    read(sp, "smoothness_order", s.spline.smoothness_order);
    if (sp.contains("time_domain") && !sp.at("time_domain").is_null()) {
      std::vector<double> dom;
      read(sp, "time_domain", dom);
      if (dom.size() != 2) throw InputError("config: time_domain must be [lower, upper]");
      s.spline.time_domain = TimeDomain{dom[0], dom[1]};
    }
  }
  if (j.contains("penalty")) {
    const json& pj = j.at("penalty");
    reject_unknown(pj, "penalty", {"lambda", "a", "epsilon", "weight"});
    read(pj, "lambda", s.penalty.lambda);
    read(pj, "a", s.penalty.a);
    read(pj, "epsilon", s.penalty.epsilon);
    if (pj.contains("weight")) {
      read(pj, "weight", name);
      s.penalty.weight = weight_from(name);
    }
  }
  read(j, "lambda_grid", s.lambda_grid);
  if (j.contains("sampler")) {
    const json& sj = j.at("sampler");
    reject_unknown(sj, "sampler", {"draws", "burn_in", "thinning", "seed"});
    read(sj, "draws", s.sampler.draws);
    read(sj, "burn_in", s.sampler.burn_in);
    read(sj, "thinning", s.sampler.thinning);
    read(sj, "seed", s.sampler.seed);
  }
  if (j.contains("solver")) {
    const json& sj = j.at("solver");
    reject_unknown(sj, "solver", {"max_outer_iterations", "max_newton_steps", "tolerance",
                                  "se_tolerance", "sigma_tolerance", "zero_threshold", "step_halving_limit"});
    read(sj, "max_outer_iterations", s.solver.max_outer_iterations);
    read(sj, "max_newton_steps", s.solver.max_newton_steps);
    read(sj, "tolerance", s.solver.tolerance);
    read(sj, "se_tolerance", s.solver.se_tolerance);
    read(sj, "sigma_tolerance", s.solver.sigma_tolerance);
    read(sj, "zero_threshold", s.solver.zero_threshold);
    read(sj, "step_halving_limit", s.solver.step_halving_limit);
  }
  if (j.contains("data")) {
    const json& dj = j.at("data");
    reject_unknown(dj, "data", {"subject", "time", "response", "fixed", "random", "random_intercept",
                                "interactions", "standardize"});
    read(dj, "subject", s.data.subject);
    read(dj, "time", s.data.time);
    read(dj, "response", s.data.response);
    read(dj, "fixed", s.data.fixed);
    read(dj, "random", s.data.random);
    read(dj, "random_intercept", s.data.random_intercept);
    read(dj, "standardize", s.data.standardize);
    std::vector<std::vector<std::string>> inter;
    read(dj, "interactions", inter);
    s.data.interactions.clear();
    for (const auto& pair : inter) {
      if (pair.size() != 2) throw InputError("config: each interaction must name two columns");
      s.data.interactions.emplace_back(pair[0], pair[1]);
    }
  }
  if (j.contains("inference")) {
    const json& ij = j.at("inference");
    reject_unknown(ij, "inference", {"level", "meat", "bread"});
    read(ij, "level", s.level);
    if (ij.contains("meat")) {
      read(ij, "meat", name);
      s.meat_mode = meat_from(name);
    }
    if (ij.contains("bread")) {
      read(ij, "bread", name);
      s.bread_mode = bread_from(name);
    }
  }
  s.validate();
  return s;
}

ModelSpec load_model_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("config " + path.string() + ": " + e.what());
  }
  return model_spec_from_json(j);
}

}  // namespace pgsmm
