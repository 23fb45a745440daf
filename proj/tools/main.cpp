#include <iostream>

#include "CLI11.hpp"

#include "commands.hpp"

namespace {

using namespace mediation;
using namespace mediation::cli;

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--input", o.input, "CSV file with a header row")->required()->check(CLI::ExistingFile);
  sub->add_option("--treatment", o.treatment, "binary treatment column")->required();
  sub->add_option("--mediator", o.mediator, "mediator column")->required();
  sub->add_option("--outcome", o.outcome, "outcome column")->required();
  sub->add_option("--covariates", o.covariates, "pre-treatment covariate columns")->delimiter(',');
  sub->add_flag("--drop-missing", o.drop_missing, "drop rows with missing mapped cells instead of failing");
  sub->add_option("--level", o.level, "confidence level")->capture_default_str();
  sub->add_option("--seed", o.seed, "seed for all random draws")->capture_default_str();
  sub->add_option("--threads", o.threads, "worker threads (default: MEDIATION_THREADS or all cores)");
  sub->add_option("--out-prefix", o.out_prefix, "write JSON/CSV outputs to <prefix>_*.json/csv");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal mediation analysis: effect estimates, sensitivity analysis and bounds"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MEDIATION_VERSION);

  MediateOptions med;
  auto* mediate = app.add_subcommand("mediate", "ACME, direct and total effects under sequential ignorability");
  add_common(mediate, med.common);
  mediate->add_flag("--interaction", med.interaction, "also fit the treatment x mediator interaction model");
  mediate->add_flag("--nonparametric", med.nonparametric, "cell plug-in estimator (discrete mediator)");
  mediate->add_option("--bootstrap", med.bootstrap, "percentile bootstrap with B replicates (B >= 100)");

  SensitivityOptions sens;
  auto* sensitivity = app.add_subcommand("sensitivity", "sensitivity of the ACME to error correlation");
  add_common(sensitivity, sens.common);
  sensitivity->add_flag("--rho", sens.rho_mode, "sweep the error correlation rho");
  sensitivity->add_flag("--r2", sens.r2_mode, "grid over confounder R^2 values");
  sensitivity->add_flag("--interaction", sens.interaction, "not supported; rejected");
  sensitivity->add_option("--rho-min", sens.rho_min)->capture_default_str();
  sensitivity->add_option("--rho-max", sens.rho_max)->capture_default_str();
  sensitivity->add_option("--rho-count", sens.rho_count)->capture_default_str();
  sensitivity->add_option("--kind", sens.r2_kind, "unexplained | original")->capture_default_str();
  sensitivity->add_option("--resolution", sens.resolution, "grid points per R^2 axis")->capture_default_str();
  sensitivity->add_option("--sign", sens.sign, "+1 | -1 | both")->capture_default_str();

  BoundsOptions bnd;
  auto* bounds = app.add_subcommand("bounds", "sharp ACME bounds for binary mediator and outcome");
  add_common(bounds, bnd.common);
  bounds->add_flag("--dichotomize-mediator", bnd.dichotomize_mediator, "median split of the mediator");
  bounds->add_flag("--dichotomize-outcome", bnd.dichotomize_outcome, "median split of the outcome");
  bounds->add_option("--upsilon-grid", bnd.upsilon_grid, "start:stop:count or a comma list")->capture_default_str();
  bounds->add_option("--t", bnd.arm, "0 | 1 | both")->capture_default_str();

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of the ACME estimators");
  simulate->add_option("--params", sim.params_file, "key=value parameter file")->check(CLI::ExistingFile);
  simulate->add_option("--param", sim.param_overrides, "single key=value override (repeatable)");
  simulate->add_option("--n-list", sim.n_list, "sample sizes")->delimiter(',')->capture_default_str();
  simulate->add_option("--replicates", sim.replicates)->capture_default_str();
  simulate->add_option("--estimators", sim.estimators, "parametric,nonparametric")->delimiter(',')->capture_default_str();
  simulate->add_option("--level", sim.level)->capture_default_str();
  simulate->add_option("--seed", sim.seed)->capture_default_str();
  simulate->add_option("--threads", sim.threads);
  simulate->add_option("--out-prefix", sim.out_prefix);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto* active = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << active->help();
    return 2;
  }

  try {
    if (*mediate) return cmd_mediate(med, std::cout);
    if (*sensitivity) return cmd_sensitivity(sens, std::cout);
    if (*bounds) return cmd_bounds(bnd, std::cout);
    if (*simulate) return cmd_simulate(sim, std::cout);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const EstimationError& e) {
    std::cerr << "estimation failed: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
