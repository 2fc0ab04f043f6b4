// Acceptance gate: behaviour under plant/model mismatch.
//
//   8. The true plant burns fuel and has the heavy airframe; preset B halves
//      the dry mass and reshapes the rod.  Over 50 seeded spawns in the
//      benchmark box, the linearized controller built from preset B must land
//      less often than the one built from preset A, and the data-driven policy
//      tuned against surrogate B must land more often than that mismatched
//      linearized controller.

#include "acceptance.hpp"

#include <ddc/app.hpp>

#include <cstdio>
#include <filesystem>
#include <sstream>

using ddc::Vec;

namespace {

ddc::RunConfig mismatch_config() {
  ddc::RunConfig cfg;  // defaults are the landing benchmark (plant preset A, fuel burn on)
  cfg.seed = 31;
  cfg.out_dir = (std::filesystem::temp_directory_path() / "ddc_acceptance_mismatch").string();
  cfg.data.path = "plant_data.csv";
  cfg.data.length = 120;
  cfg.hunt.heldout_fraction = 0.1;
  cfg.hunt.parallel = false;
  // Shortened tuning run: the directional claim needs a usable lambda, not a
  // fully polished one, and one desk core has to fit three 50-spawn sweeps too.
  cfg.hunt.n_iter = 40;
  cfg.eval.write_traces = false;
  return cfg;
}

std::string pct(const ddc::EvalSummary& s, int runs) {
  return acceptance::fmt("%d/%d (%.0f%%)", s.success_count, runs, 100.0 * s.success_rate);
}

}  // namespace

int main() {
  acceptance::Gate gate;
  acceptance::Stopwatch clock;
  const ddc::RunConfig cfg = mismatch_config();

  std::ostringstream log;
  const int rc = ddc::cmd_generate_data(cfg, log);
  if (rc != ddc::kExitOk) {
    gate.report(8, false, acceptance::fmt("data generation failed (exit %d)", rc));
    return gate.exit_code();
  }

  // Tune the data-driven policy against the wrong airframe (surrogate B); the
  // Hankel data itself comes from the true plant.
  Vec lambda_b;
  try {
    ddc::RunConfig cfg_b = cfg;
    cfg_b.surrogate.preset = "B";
    ddc::HankelPartition part = ddc::detail::load_partition(cfg_b);
    const ddc::DeepcPolicyConfig pc = ddc::detail::build_policy_config(cfg_b, std::move(part));
    const auto surrogate = ddc::detail::build_surrogate(cfg_b);
    ddc::HuntConfig hunt = cfg_b.hunt;
    hunt.seed = cfg_b.seed;
    const ddc::HuntReport report = ddc::tune(hunt, pc, *surrogate);
    lambda_b = report.lambda_final;
  } catch (const std::exception& e) {
    gate.report(8, false, acceptance::fmt("tuning against surrogate B threw: %s", e.what()));
    return gate.exit_code();
  }

  try {
    const ddc::MpcConfig mc_a = ddc::detail::build_mpc_config(cfg, "A");
    const ddc::MpcConfig mc_b = ddc::detail::build_mpc_config(cfg, "B");
    const ddc::DeepcPolicyConfig pc =
        ddc::detail::build_policy_config(cfg, ddc::detail::load_partition(cfg))
            .with_lambda(lambda_b);

    ddc::PolicyFn mpc_a = [&](const ddc::InitialWindow& w) {
      return ddc::mpc_policy(mc_a, w.y_ini.tail(6));
    };
    ddc::PolicyFn mpc_b = [&](const ddc::InitialWindow& w) {
      return ddc::mpc_policy(mc_b, w.y_ini.tail(6));
    };
    ddc::PolicyFn deepc_b = [&](const ddc::InitialWindow& w) {
      return ddc::solve_policy(pc, w, cfg.hunt.qp_tol, cfg.hunt.qp_max_iters).u0;
    };

    const ddc::EvalSummary a =
        ddc::detail::evaluate_policy(cfg, "mpc_A", mpc_a, cfg.horizon.t_ini, {});
    const ddc::EvalSummary b =
        ddc::detail::evaluate_policy(cfg, "mpc_B", mpc_b, cfg.horizon.t_ini, {});
    const ddc::EvalSummary d =
        ddc::detail::evaluate_policy(cfg, "deepc_B", deepc_b, cfg.horizon.t_ini, {});

    const bool mismatch_hurts_mpc = b.success_count < a.success_count;
    const bool deepc_beats_mismatched_mpc = d.success_count > b.success_count;
    const bool pass = mismatch_hurts_mpc && deepc_beats_mismatched_mpc;
    gate.report(8, pass,
                acceptance::fmt("landings: mpc_A %s, mpc_B %s, deepc_B %s; "
                                "lambda_B = (%.4g, %.4g, %.4g); %.0fs",
                                pct(a, cfg.eval.runs).c_str(), pct(b, cfg.eval.runs).c_str(),
                                pct(d, cfg.eval.runs).c_str(), lambda_b(0), lambda_b(1),
                                lambda_b(2), clock.seconds()));
  } catch (const std::exception& e) {
    gate.report(8, false, acceptance::fmt("evaluation threw: %s", e.what()));
  }
  return gate.exit_code();
}
