#pragma once

#include <algorithm>
#include <chrono>
#include <future>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "ddc/deepc.hpp"
#include "ddc/rollout.hpp"
#include "ddc/rprop.hpp"

namespace ddc {

enum class GradMode { analytic_forward, finite_difference };

/// Tuning-loop failure with per-rollout diagnostics in the message.
class TuningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HuntConfig {
  int n_iter = 100;       // outer iterations
  Index n_steps = 20;     // rollout length N
  int batch = 1;          // Monte Carlo samples per iteration
  RpropParams rprop;
  Box lambda_box = Box{Vec::Constant(3, 1e-5), Vec::Constant(3, 1e5)};
  Vec lambda_init = Vec::Constant(3, 1.0);
  GradMode grad_mode = GradMode::analytic_forward;
  std::uint64_t seed = 0;
  double heldout_fraction = 0.2;
  double failure_penalty = 1e6;  // cost charged to a failed rollout
  double qp_tol = 1e-8;
  int qp_max_iters = 100;
  double sc_margin = 1e-7;  // strict-complementarity margin for analytic Jacobians
  bool parallel = true;

  void validate() const {
    require(n_iter >= 1 && n_steps >= 1 && batch >= 1, "n_iter, n_steps, batch must be >= 1");
    rprop.validate();
    lambda_box.validate(3, "lambda");
    require(lambda_init.size() == 3, "lambda_init must have 3 entries");
    require((lambda_init.array() >= lambda_box.lower.array()).all() &&
                (lambda_init.array() <= lambda_box.upper.array()).all(),
            "lambda_init must lie inside the lambda box");
    require(heldout_fraction >= 0.0 && heldout_fraction < 1.0,
            "heldout_fraction must lie in [0, 1)");
    require(failure_penalty > 0.0, "failure penalty must be positive");
  }
};

struct BatchResult {
  double cost = 0.0;
  Vec grad = Vec::Zero(3);
  std::vector<Index> window_indices;
  std::vector<double> sample_costs;
  int degenerate_fallbacks = 0;  // samples that lost the analytic Jacobian
  int failed_rollouts = 0;
};

struct HuntIteration {
  Vec lambda;  // iterate the batch was evaluated at
  std::vector<Index> window_indices;
  double cost = 0.0;
  double cost_variance = 0.0;  // unbiased across the batch; 0 when batch == 1
  Vec grad;
  Vec eta;  // per-coordinate steps used for the update out of this iterate
  double wall_ms = 0.0;
  int degenerate_fallbacks = 0;
  int failed_rollouts = 0;
};

struct HuntReport {
  std::vector<HuntIteration> iterations;
  Vec lambda_final;
  double heldout_cost_initial = 0.0;
  double heldout_cost_final = 0.0;
  std::vector<Index> train_indices;
  std::vector<Index> heldout_indices;
  int total_degenerate_fallbacks = 0;
  int total_failed_rollouts = 0;
};

namespace detail {

struct SampleResult {
  double cost = 0.0;
  Vec grad = Vec::Zero(3);
  bool degenerate = false;
  bool failed = false;
  std::string message;
};

// One rollout with three forward tangents (d/dlambda_j of state, window, and
// accumulated cost). Mirrors rollout() exactly in operation order so primal
// costs match the evaluation path bit for bit.
inline SampleResult rollout_with_tangents(const DeepcPolicyConfig& cfg,
                                          const SurrogateModel& model,
                                          const InitialWindow& wini, Index n_steps,
                                          const HuntConfig& hunt, bool with_tangents) {
  const Index m = model.input_dim();
  const Index p = model.output_dim();
  const Index t_f = cfg.part.horizon.t_f;
  const Vec u_ref = cfg.w_ref.head(m);
  const Vec y_ref = cfg.w_ref.segment(m * t_f, p);
  const Index n_win = wini.u_ini.size() + wini.y_ini.size();
  const Index mt = wini.u_ini.size();

  SampleResult res;
  try {
    Vec x = model.init_state(wini);
    InitialWindow window = wini;
    Mat dx = Mat::Zero(model.state_dim(), 3);
    Mat dwin = Mat::Zero(n_win, 3);
    bool tangents_ok = with_tangents;
    for (Index i = 0; i < n_steps; ++i) {
      const PolicyOutput out = solve_policy(cfg, window, hunt.qp_tol, hunt.qp_max_iters);
      Mat du = Mat::Zero(m, 3);
      if (tangents_ok) {
        try {
          const PolicyJacobians jac = policy_jacobians(cfg, window, out, hunt.sc_margin);
          du = jac.du0_dlambda + jac.du0_dwini * dwin;
        } catch (const DegeneratePointError&) {
          res.degenerate = true;
          tangents_ok = false;
        }
      }
      const Vec u = out.u0;
      const Vec y = model.output(x, u);
      const Vec dy_ref = y - y_ref;
      const Vec du_ref = u - u_ref;
      const double stage = dy_ref.dot(cfg.q_cost * dy_ref) + du_ref.dot(cfg.r_cost * du_ref);
      res.cost += stage;
      if (tangents_ok) {
        const auto [c_jac, d_jac] = model.jac_output(x, u);
        const Mat dy = c_jac * dx + d_jac * du;
        res.grad += 2.0 * (dy.transpose() * (cfg.q_cost * dy_ref) +
                           du.transpose() * (cfg.r_cost * du_ref));
        const auto [a_jac, b_jac] = model.jac_step(x, u);
        dx = a_jac * dx + b_jac * du;
        // Window shift in tangent space: drop the oldest step per block.
        Mat next = Mat::Zero(n_win, 3);
        next.topRows(mt - m) = dwin.middleRows(m, mt - m);
        next.middleRows(mt - m, m) = du;
        next.middleRows(mt, n_win - mt - p) = dwin.middleRows(mt + p, n_win - mt - p);
        next.bottomRows(p) = dy;
        dwin = next;
      }
      x = model.step(x, u);
      window = window_update(window, u, y);
    }
    if (res.degenerate) res.grad.setZero();
  } catch (const PolicyError& e) {
    res.failed = true;
    res.message = e.what();
  } catch (const SolverError& e) {
    res.failed = true;
    res.message = e.what();
  } catch (const std::runtime_error& e) {
    res.failed = true;
    res.message = e.what();
  }
  if (res.failed) {
    res.cost = hunt.failure_penalty;
    res.grad.setZero();
  }
  return res;
}

inline std::vector<SampleResult> run_batch(const Vec& lambda, const HuntConfig& hunt,
                                           const DeepcPolicyConfig& policy_cfg,
                                           const SurrogateModel& model,
                                           const std::vector<Index>& windows,
                                           bool with_tangents) {
  const DeepcPolicyConfig cfg = policy_cfg.with_lambda(lambda);
  std::vector<SampleResult> results(windows.size());
  auto work = [&](std::size_t j) {
    results[j] = rollout_with_tangents(cfg, model, policy_cfg.part.window_at(windows[j]),
                                       hunt.n_steps, hunt, with_tangents);
  };
  if (hunt.parallel && windows.size() > 1) {
    std::vector<std::future<void>> futs;
    futs.reserve(windows.size());
    for (std::size_t j = 0; j < windows.size(); ++j)
      futs.push_back(std::async(std::launch::async, work, j));
    for (auto& f : futs) f.get();
  } else {
    for (std::size_t j = 0; j < windows.size(); ++j) work(j);
  }
  return results;
}

// Batch-mean cost only (used for finite differences and held-out evaluation).
inline double batch_mean_cost(const Vec& lambda, const HuntConfig& hunt,
                              const DeepcPolicyConfig& policy_cfg, const SurrogateModel& model,
                              const std::vector<Index>& windows) {
  const auto results = run_batch(lambda, hunt, policy_cfg, model, windows, false);
  double sum = 0.0;
  for (const auto& r : results) sum += r.cost;
  return sum / static_cast<double>(results.size());
}

}  // namespace detail

/// Monte Carlo estimate of the closed-loop cost and its lambda-gradient over
/// the given candidate windows. Sampling happens here (uniform over the
/// candidates) so callers control the train/held-out split. The analytic
/// gradient propagates three tangents through every rollout; if any policy
/// call sits on an active-set boundary, the whole batch falls back to central
/// finite differences (step 1e-3 * max(1, |lambda_i|), clamped at zero).
inline BatchResult batch_cost_and_grad(const Vec& lambda, const HuntConfig& hunt,
                                       const DeepcPolicyConfig& policy_cfg,
                                       const SurrogateModel& model, SplitMix64& rng,
                                       const std::vector<Index>& candidates) {
  hunt.validate();
  require(lambda.size() == 3, "lambda must have 3 entries");
  require(!candidates.empty(), "no candidate windows to sample from");

  BatchResult out;
  out.window_indices.reserve(hunt.batch);
  for (int j = 0; j < hunt.batch; ++j)
    out.window_indices.push_back(
        candidates[rng.uniform_int(static_cast<std::uint64_t>(candidates.size()))]);

  const bool analytic = hunt.grad_mode == GradMode::analytic_forward;
  const auto results =
      detail::run_batch(lambda, hunt, policy_cfg, model, out.window_indices, analytic);

  int degenerate = 0;
  for (const auto& r : results) {
    out.sample_costs.push_back(r.cost);
    out.cost += r.cost;
    if (r.degenerate) ++degenerate;
    if (r.failed) ++out.failed_rollouts;
  }
  const double b = static_cast<double>(hunt.batch);
  out.cost /= b;
  out.degenerate_fallbacks = degenerate;

  if (out.failed_rollouts == hunt.batch) {
    std::string diag = "all " + std::to_string(hunt.batch) + " rollouts failed:";
    for (std::size_t j = 0; j < results.size(); ++j)
      diag += "\n  window " + std::to_string(out.window_indices[j]) + ": " + results[j].message;
    throw TuningError(diag);
  }

  if (analytic && degenerate == 0) {
    for (const auto& r : results) out.grad += r.grad;  // failed samples added as zero
    out.grad /= b;
    return out;
  }

  for (Index i = 0; i < 3; ++i) {
    const double step = 1e-3 * std::max(1.0, std::abs(lambda(i)));
    Vec lp = lambda, lm = lambda;
    lp(i) += step;
    lm(i) = std::max(lambda(i) - step, 0.0);
    const double jp = detail::batch_mean_cost(lp, hunt, policy_cfg, model, out.window_indices);
    const double jm = detail::batch_mean_cost(lm, hunt, policy_cfg, model, out.window_indices);
    out.grad(i) = (jp - jm) / (lp(i) - lm(i));
  }
  return out;
}

/// Splits column indices into train/held-out sets with a seeded shuffle.
inline void split_train_heldout(Index n_cols, double fraction, std::uint64_t seed,
                                std::vector<Index>& train, std::vector<Index>& heldout) {
  std::vector<Index> order(static_cast<std::size_t>(n_cols));
  std::iota(order.begin(), order.end(), Index{0});
  SplitMix64 rng(derive_seed(seed, 0xC01553ED));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(i)]);
  Index n_held = static_cast<Index>(std::llround(fraction * static_cast<double>(n_cols)));
  n_held = std::clamp<Index>(n_held, 0, n_cols - 1);
  heldout.assign(order.begin(), order.begin() + n_held);
  train.assign(order.begin() + n_held, order.end());
  std::sort(train.begin(), train.end());
  std::sort(heldout.begin(), heldout.end());
}

/// The full tuning loop: batch estimate at the current lambda, then one
/// projected sign-based update, for n_iter iterations. Deterministic given
/// the seed. Held-out windows (never sampled for gradients) provide the
/// initial/final expected-cost estimates.
inline HuntReport tune(const HuntConfig& hunt, const DeepcPolicyConfig& policy_cfg,
                       const SurrogateModel& model) {
  hunt.validate();
  policy_cfg.validate();

  HuntReport report;
  split_train_heldout(policy_cfg.part.cols(), hunt.heldout_fraction, hunt.seed,
                      report.train_indices, report.heldout_indices);
  const std::vector<Index>& eval_set =
      report.heldout_indices.empty() ? report.train_indices : report.heldout_indices;

  RpropState state = rprop_init(hunt.lambda_init, hunt.lambda_box, hunt.rprop);
  report.heldout_cost_initial =
      detail::batch_mean_cost(state.lambda, hunt, policy_cfg, model, eval_set);

  for (int k = 0; k < hunt.n_iter; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    SplitMix64 rng(derive_seed(hunt.seed, 0x17E4 + static_cast<std::uint64_t>(k)));
    HuntIteration rec;
    rec.lambda = state.lambda;
    BatchResult batch;
    try {
      batch = batch_cost_and_grad(state.lambda, hunt, policy_cfg, model, rng,
                                  report.train_indices);
    } catch (const TuningError& e) {
      throw TuningError("iteration " + std::to_string(k) + ": " + e.what());
    }
    state = rprop_step(state, batch.grad, hunt.rprop);
    rec.window_indices = batch.window_indices;
    rec.cost = batch.cost;
    if (hunt.batch > 1) {
      double ss = 0.0;
      for (double c : batch.sample_costs) ss += (c - batch.cost) * (c - batch.cost);
      rec.cost_variance = ss / static_cast<double>(hunt.batch - 1);
    }
    rec.grad = batch.grad;
    rec.eta = state.eta;
    rec.degenerate_fallbacks = batch.degenerate_fallbacks;
    rec.failed_rollouts = batch.failed_rollouts;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    report.total_degenerate_fallbacks += batch.degenerate_fallbacks;
    report.total_failed_rollouts += batch.failed_rollouts;
    report.iterations.push_back(std::move(rec));
  }

  report.lambda_final = state.lambda;
  report.heldout_cost_final =
      detail::batch_mean_cost(state.lambda, hunt, policy_cfg, model, eval_set);
  return report;
}

}  // namespace ddc
