// lmirt: fit, compare, test and simulate latent Markov item-response models.
#include <iostream>

#include "CLI11.hpp"
#include "lmirt/cli.hpp"

int main(int argc, char** argv) {
  using lmirt::cli::RunConfig;
  CLI::App app{"Multidimensional latent Markov item-response models"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto common = [&cfg](CLI::App* sub) {
    sub->add_option("--out", cfg.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    sub->add_flag("--quiet", cfg.quiet, "No report on stdout");
  };
  auto data_opts = [&cfg](CLI::App* sub) {
    sub->add_option("--data", cfg.data, "Long-format trial file");
    sub->add_option("--covariates", cfg.covariates, "Per-subject covariate file");
  };
  auto fit_opts = [&cfg](CLI::App* sub) {
    sub->add_option("--starts", cfg.starts, "Random starts")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--tol", cfg.tol, "Relative log-likelihood tolerance")->capture_default_str();
    sub->add_option("--max-iter", cfg.max_iter, "EM iteration cap")->capture_default_str();
    sub->add_option("--workers", cfg.workers, "Parallel starts")->capture_default_str()->check(CLI::PositiveNumber);
  };

  auto* fit = app.add_subcommand("fit", "Estimate one model");
  fit->add_option("--model", cfg.model, "Model config")->required();
  data_opts(fit);
  fit_opts(fit);
  common(fit);

  auto* compare = app.add_subcommand("compare", "BIC / BIC* table over fits or a k sweep");
  compare->add_option("--fits", cfg.fits, "fit.json files from `fit`");
  compare->add_option("--model", cfg.model, "Model config for a sweep");
  compare->add_option("--k", cfg.k_values, "State counts to sweep");
  data_opts(compare);
  fit_opts(compare);
  common(compare);

  auto* test = app.add_subcommand("test", "Likelihood-ratio test of nested models");
  test->add_option("--null", cfg.null_model, "Null model config")->required();
  test->add_option("--alt", cfg.alt_model, "Alternative model config")->required();
  test->add_option("--bootstrap", cfg.bootstrap, "Bootstrap replicates for boundary nulls")->capture_default_str();
  data_opts(test);
  fit_opts(test);
  common(test);

  auto* sim = app.add_subcommand("simulate", "Simulate a dataset");
  sim->add_option("--n", cfg.n, "Subjects (fixture)")->capture_default_str();
  sim->add_option("--model", cfg.model, "Model config (with --params)");
  sim->add_option("--params", cfg.params, "Truth parameters; responses are redrawn on the --data design");
  data_opts(sim);
  common(sim);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : lmirt::cli::kValidation;
  }

  if (fit->parsed()) return lmirt::cli::cmd_fit(cfg, std::cout, std::cerr);
  if (compare->parsed()) return lmirt::cli::cmd_compare(cfg, std::cout, std::cerr);
  if (test->parsed()) return lmirt::cli::cmd_test(cfg, std::cout, std::cerr);
  return lmirt::cli::cmd_simulate(cfg, std::cout, std::cerr);
}
