#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

using namespace rsclust;
using namespace rsclust::cli;

int main(int argc, char** argv) {
  CLI::App app{"Bayesian clustering over set partitions with regenerative diagnostics"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  fs::path out_dir;
  int threads = 1;

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit hyperparameters by empirical Bayes");
  fit_cmd->add_option("data", fit.data, "Data CSV")->required();
  fit_cmd->add_option("-o,--out", fit.out, "Hyperparameter output file")->required();
  fit_cmd->add_option("--init", fit.init, "Starting hyperparameter file");
  fit_cmd->add_option("--starts", fit.starts, "Number of optimizer starts")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit.seed, "Seed for the extra starts");

  RunManifest run;
  ChainSpec chain;
  std::string manifest_path;
  std::vector<std::string> kernels;
  std::vector<std::uint64_t> seeds;
  std::string data_path;
  double epsilon = -1.0;
  auto* run_cmd = app.add_subcommand("run", "Run chains and write traces, diagnostics and consensus");
  run_cmd->add_option("manifest", manifest_path, "Run manifest (JSON)");
  run_cmd->add_option("--data", data_path, "Data CSV (instead of a manifest)");
  run_cmd->add_option("--fixture-epsilon", epsilon,
                      "Data-free mode on the two-island fixture with this minor-island mass");
  run_cmd->add_option("--hyper", run.hyper, "Hyperparameter file, or 'fit'");
  run_cmd->add_option("--kernel", kernels, "gibbs and/or split-merge")->delimiter(',');
  run_cmd->add_option("--iters", chain.iters, "Iterations per chain")->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", seeds, "One chain per seed and kernel")->delimiter(',');
  run_cmd->add_option("--gibbs-per-sm", chain.gibbs_per_sm, "Gibbs sweeps per split-merge update")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--init", chain.init, "singletons, one-cluster or random");
  run_cmd->add_option("--check-every", run.check_every, "Diagnostic cadence in recorded states")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--K", run.K, "Scheme sizes")->delimiter(',');
  run_cmd->add_option("--delta", run.delta, "Return state: most-visited or a state key");
  run_cmd->add_option("--rho-min", run.rho_min, "Threshold for reported consensus pairs");
  run_cmd->add_option("--out-dir", out_dir, "Output directory");
  run_cmd->add_option("--threads", threads, "Chains run in parallel")->check(CLI::PositiveNumber);

  ValidateArgs validate;
  auto* validate_cmd = app.add_subcommand("validate", "Check a long chain against the exact oracle");
  validate_cmd->add_option("--n", validate.n, "Number of observations")->required();
  validate_cmd->add_option("--seed", validate.seed, "Data and chain seed");
  validate_cmd->add_option("--iters", validate.iters, "Gibbs sweeps")->check(CLI::PositiveNumber);
  validate_cmd->add_flag("--allow-long", validate.allow_long, "Raise the enumeration cap to 14");
  validate_cmd->add_option("--threads", validate.threads, "Enumeration workers")
      ->check(CLI::PositiveNumber);
  validate_cmd->add_option("--out-dir", validate.out_dir, "Write validate.json here");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Diagnostics and consensus for an existing trace");
  report_cmd->add_option("trace", report.trace, "Trace CSV")->required();
  report_cmd->add_option("--K", report.K, "Scheme sizes")->delimiter(',');
  report_cmd->add_option("--delta", report.delta, "Return state: most-visited or a state key");
  report_cmd->add_option("--mass-table", report.mass_table, "Exact mass table for comparison");
  report_cmd->add_option("--out-dir", report.out_dir, "Output directory");
  report_cmd->add_option("--rho-min", report.rho_min, "Threshold for reported consensus pairs");

  SimulateArgs simulate;
  auto* simulate_cmd = app.add_subcommand("simulate", "Draw synthetic data from the model");
  simulate_cmd->add_option("--truth", simulate.truth, "Cluster labels, e.g. 1,1,2,3")
      ->delimiter(',')
      ->required();
  simulate_cmd->add_option("--hyper", simulate.hyper, "Hyperparameter file");
  simulate_cmd->add_option("--vars", simulate.vars, "Variables")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--reps", simulate.reps, "Replicates per observation")
      ->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--seed", simulate.seed, "Seed");
  simulate_cmd->add_option("-o,--out", simulate.out, "Data CSV")->required();

  EnumerateArgs enumerate;
  auto* enumerate_cmd = app.add_subcommand("enumerate", "Write the exact posterior mass table");
  enumerate_cmd->add_option("data", enumerate.data, "Data CSV")->required();
  enumerate_cmd->add_option("--hyper", enumerate.hyper, "Hyperparameter file")->required();
  enumerate_cmd->add_option("-o,--out", enumerate.out, "Mass table output")->required();
  enumerate_cmd->add_flag("--allow-long", enumerate.allow_long, "Raise the enumeration cap to 14");
  enumerate_cmd->add_option("--threads", enumerate.threads, "Workers")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit, std::cout);
    if (*run_cmd) {
      if (!manifest_path.empty()) {
        if (!data_path.empty() || epsilon >= 0.0) {
          fail(ErrorKind::invalid_input, "give a manifest or --data/--fixture-epsilon, not both");
        }
        run = read_manifest(manifest_path);
        if (run_cmd->count("--threads")) run.threads = threads;
        if (run_cmd->count("--out-dir")) run.out_dir = out_dir;
      } else {
        if (!data_path.empty()) run.data = data_path;
        if (epsilon >= 0.0) run.fixture = FixtureSpec{.epsilon = epsilon};
        if (kernels.empty()) kernels = {"gibbs"};
        if (seeds.empty()) seeds = {seed};
        for (const auto& k : kernels) {
          for (auto s : seeds) {
            ChainSpec c = chain;
            c.kernel = k;
            c.seed = s;
            c.name = k + "_seed" + std::to_string(s);
            run.chains.push_back(c);
          }
        }
        run.threads = threads;
        if (!out_dir.empty()) run.out_dir = out_dir;
      }
      return cmd_run(run, std::cout);
    }
    if (*validate_cmd) return cmd_validate(validate, std::cout);
    if (*report_cmd) return cmd_report(report, std::cout);
    if (*simulate_cmd) return cmd_simulate(simulate, std::cout);
    if (*enumerate_cmd) return cmd_enumerate(enumerate, std::cout);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}
