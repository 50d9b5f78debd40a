#include "pgsmm/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pgsmm/config.hpp"
#include "pgsmm/csv_io.hpp"
#include "pgsmm/report.hpp"
#include "pgsmm/sim_bench.hpp"

namespace pgsmm {

namespace {

int thread_count(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("PGSMM_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    throw InputError(std::string("PGSMM_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

struct FitArgs {
  std::string config;
  std::string data;
  std::string out = "fit_report.json";
  std::string coef_csv;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
};

int run_fit(const FitArgs& args, bool tune) {
  ModelSpec spec = args.config.empty() ? default_model_spec() : load_model_spec(args.config);
  if (args.seed) spec.sampler.seed = *args.seed;
  if (args.lambda) spec.penalty.lambda = *args.lambda;
  spec.validate();
  const LongitudinalDataset data = load_csv(args.data, spec.data);
  const ModelDesign design = build_design(data, spec.spline);

  FitResult fitted;
  std::optional<TuningReport> tuning;
  if (tune) {
    TuningResult t = select_lambda(design, spec.model, spec.sampler, spec.solver, spec.penalty,
                                   spec.lambda_grid.empty() ? default_lambda_grid() : spec.lambda_grid);
    tuning = std::move(t.report);
    fitted = std::move(t.best);
  } else {
    fitted = fit(design, spec.model, spec.sampler, spec.solver, spec.penalty);
  }
  ScadPenalty pen = spec.penalty;
  pen.lambda = fitted.lambda;
  const InferenceReport inf = sandwich_covariance(design, fitted, spec.model, pen, spec.level,
                                                 spec.meat_mode, spec.bread_mode);
  const FitReport report = build_fit_report(data, design, spec, fitted, inf, tuning ? &*tuning : nullptr);

  write_atomic(args.out, to_json(report).dump(2) + "\n");
  std::string coef = args.coef_csv;
  if (coef.empty()) coef = std::filesystem::path(args.out).replace_extension(".coefficients.csv").string();
  write_atomic(coef, coefficient_csv(report));

  std::cout << "lambda " << fitted.lambda << ", active " << fitted.active_count() << "/"
            << design.fixed_dim << ", outer iterations " << fitted.diagnostics.outer_iterations
            << (fitted.diagnostics.converged ? "" : " (not converged)") << "\n"
            << "wrote " << args.out << " and " << coef << "\n";
  return fitted.diagnostics.converged ? kExitOk : kExitNotConverged;
}

struct SimArgs {
  std::string preset;
  bool list = false;
  int replicates = 0;
  std::uint64_t seed = 1;
  std::string out_dir = "sim_out";
  std::string config;
  std::optional<double> lambda;
  int threads = 0;
  bool quiet = false;
};

int run_simulate(const SimArgs& args, CLI::App& app) {
  if (args.list) {
    for (const auto& d : sim_presets())
      std::cout << d.name << "  n=" << d.subjects << " p=" << d.p()
                << (d.long_running ? "  (long-running)" : "") << "\n";
    return kExitOk;
  }
  if (args.preset.empty()) throw InputError("simulate needs --preset or --list-presets");
  SimDesign design = find_preset(args.preset);
  if (app.get_subcommand("simulate")->count("--replicates")) {
    if (args.replicates < 1) throw InputError("replicates must be >= 1");
    design.replicates = args.replicates;
  }
  design.seed = args.seed;

  StudyFitConfig cfg = default_study_fit_config();
  if (!args.config.empty()) {
    const ModelSpec spec = load_model_spec(args.config);
    cfg.model = spec.model;
    cfg.spline = spec.spline;
    cfg.sampler = spec.sampler;
    cfg.solver = spec.solver;
    cfg.penalty = spec.penalty;
    cfg.lambda_grid = spec.lambda_grid;
    cfg.level = spec.level;
    cfg.meat_mode = spec.meat_mode;
    cfg.bread_mode = spec.bread_mode;
  }
  if (args.lambda) {
    cfg.penalty.lambda = *args.lambda;
    cfg.lambda_grid.clear();
  }
  const int threads = thread_count(args.threads);
  const SimReport report = run_study(
      design, make_gsmm_fitter(cfg, derive_seed(design.seed, 0x5eedull)), threads, cfg.level,
      [&](int r, const ReplicateFit& f) {
        if (args.quiet) return;
        std::cerr << "replicate " << r << (f.ok ? "" : " failed: " + f.error) << "\n";
      });

  const std::filesystem::path dir(args.out_dir);
  write_atomic(dir / "sim_report.json", to_json(report).dump(2) + "\n");
  write_atomic(dir / "table1.csv", table1_csv(report));
  write_atomic(dir / "table2.csv", table2_csv(report));
  write_atomic(dir / "fcurve.csv", fcurve_csv(report));
  std::cout << table1_csv(report) << "wrote " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Penalized semiparametric mixed model fitting"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto add_fit_options = [&](CLI::App* sub) {
    sub->add_option("--config", fit_args.config, "JSON model configuration");
    sub->add_option("--data", fit_args.data, "long-format CSV")->required();
    sub->add_option("--out", fit_args.out, "report JSON path");
    sub->add_option("--coef-csv", fit_args.coef_csv, "coefficient CSV path");
    sub->add_option("--seed", fit_args.seed, "sampler seed");
  };
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit at a fixed lambda");
  add_fit_options(fit_cmd);
  fit_cmd->add_option("--lambda", fit_args.lambda, "penalty level");
  CLI::App* tune_cmd = app.add_subcommand("tune", "choose lambda by GCV, then report that fit");
  add_fit_options(tune_cmd);

  SimArgs sim_args;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "run a simulation study");
  sim_cmd->add_option("--preset", sim_args.preset, "design preset");
  sim_cmd->add_flag("--list-presets", sim_args.list, "print the presets");
  sim_cmd->add_option("--replicates", sim_args.replicates, "override the replicate count");
  sim_cmd->add_option("--seed", sim_args.seed, "master seed");
  sim_cmd->add_option("--out-dir", sim_args.out_dir, "output directory");
  sim_cmd->add_option("--config", sim_args.config, "JSON model configuration for the fits");
  sim_cmd->add_option("--lambda", sim_args.lambda, "fixed lambda instead of GCV tuning");
  sim_cmd->add_option("--threads", sim_args.threads, "worker threads (default PGSMM_THREADS or 1)");
  sim_cmd->add_flag("--quiet", sim_args.quiet, "no per-replicate progress");

  CLI::App* print_cmd = app.add_subcommand("print-config", "print the default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (*print_cmd) {
      std::cout << to_json(default_model_spec()).dump(2) << "\n";
      return kExitOk;
    }
    if (*fit_cmd) return run_fit(fit_args, false);
    if (*tune_cmd) return run_fit(fit_args, true);
    if (*sim_cmd) return run_simulate(sim_args, app);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace pgsmm
