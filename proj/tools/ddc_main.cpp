// Command-line front end: dataset generation, weight tuning, closed-loop
// evaluation, and the four-way policy comparison.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ddc/ddc.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::string out_dir;
  std::string grad_mode;
  std::uint64_t seed = 0;
  bool print_config = false;
};

void add_common(CLI::App* sc, CommonArgs& args, CLI::Option*& seed_opt) {
  sc->add_option("--config", args.config, "JSON configuration file (defaults apply when omitted)");
  seed_opt = sc->add_option("--seed", args.seed, "override the configured seed");
  sc->add_option("--out", args.out_dir, "override the configured output directory");
  sc->add_option("--grad-mode", args.grad_mode, "gradient mode for tuning")
      ->check(CLI::IsMember({"analytic", "fd"}));
  sc->add_flag("--print-effective-config", args.print_config,
               "print the fully-resolved configuration as JSON and exit");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"data-driven predictive control toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  CLI::Option* seed_opts[4] = {nullptr, nullptr, nullptr, nullptr};
  CLI::App* gen = app.add_subcommand("generate-data", "collect a PRBS dataset from the plant");
  CLI::App* tune = app.add_subcommand("tune", "tune regularization weights in closed loop");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a policy over seeded spawns");
  CLI::App* cmp = app.add_subcommand("compare", "compare MPC baselines and tuned policies");
  add_common(gen, args, seed_opts[0]);
  add_common(tune, args, seed_opts[1]);
  add_common(eval, args, seed_opts[2]);
  add_common(cmp, args, seed_opts[3]);
  std::string model;
  eval->add_option("--model", model,
                   "A or B for the MPC baseline with that preset, or a tuning-report path "
                   "whose lambda_final should be evaluated");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ddc::kExitOk : ddc::kExitConfigError;
  }

  try {
    ddc::RunConfig cfg =
        args.config.empty() ? ddc::RunConfig{} : ddc::load_run_config(args.config);
    for (CLI::Option* opt : seed_opts)
      if (opt != nullptr && opt->count() > 0) cfg.seed = args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (!args.grad_mode.empty())
      cfg.hunt.grad_mode = args.grad_mode == "analytic" ? ddc::GradMode::analytic_forward
                                                        : ddc::GradMode::finite_difference;
    if (args.print_config) {
      std::cout << ddc::run_config_to_json(cfg).dump(2) << "\n";
      return ddc::kExitOk;
    }
    if (gen->parsed()) return ddc::cmd_generate_data(cfg);
    if (tune->parsed()) return ddc::cmd_tune(cfg);
    if (eval->parsed()) return ddc::cmd_eval(cfg, model);
    if (cmp->parsed()) return ddc::cmd_compare(cfg);
    std::cerr << "no subcommand selected\n";
    return ddc::kExitConfigError;
  } catch (const ddc::PersistencyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ddc::kExitPeFailure;
  } catch (const ddc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ddc::kExitConfigError;
  } catch (const ddc::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ddc::kExitConfigError;
  } catch (const ddc::Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ddc::kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ddc::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ddc::kExitSolverError;
  }
}
