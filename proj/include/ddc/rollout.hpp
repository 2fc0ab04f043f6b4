#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ddc/model.hpp"
#include "ddc/qp.hpp"

namespace ddc {

/// Drops the oldest (u, y) pair from the window and appends the new one.
/// Channel counts are taken from the appended vectors.
inline InitialWindow window_update(const InitialWindow& w, const Vec& u_new, const Vec& y_new) {
  const Index m = u_new.size();
  const Index p = y_new.size();
  require(m > 0 && p > 0, "window update needs nonempty signals");
  require(w.u_ini.size() % m == 0 && w.y_ini.size() % p == 0,
          "window length not a multiple of the new sample sizes");
  require(w.u_ini.size() / m == w.y_ini.size() / p, "window input/output step counts differ");
  InitialWindow out;
  out.u_ini.resize(w.u_ini.size());
  out.y_ini.resize(w.y_ini.size());
  out.u_ini << w.u_ini.tail(w.u_ini.size() - m), u_new;
  out.y_ini << w.y_ini.tail(w.y_ini.size() - p), y_new;
  return out;
}

enum class Termination { completed, landed, crashed, diverged, policy_failure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::completed: return "completed";
    case Termination::landed: return "landed";
    case Termination::crashed: return "crashed";
    case Termination::diverged: return "diverged";
    case Termination::policy_failure: return "policy_failure";
  }
  return "unknown";
}

/// Touchdown detection and the quantitative landing-success definition.
/// A run succeeds when, at touchdown (altitude within touchdown_tol of the
/// pad), the lateral offset, attitude, and sink rate are all within bounds.
struct LandingSpec {
  double pad_x = 16.665;
  double pad_y = 2.0;
  double touchdown_tol = 0.5;
  double x_tol = 1.0;
  double theta_tol = 0.2;
  double vy_tol = 1.0;
  double divergence_bound = 1e4;  // any |state entry| beyond this is a blow-up

  Termination check(const Vec& state) const {
    if (!state.allFinite() || state.cwiseAbs().maxCoeff() > divergence_bound)
      return Termination::diverged;
    if (state(2) <= pad_y + touchdown_tol) {
      const bool ok = std::abs(state(0) - pad_x) <= x_tol && std::abs(state(4)) <= theta_tol &&
                      std::abs(state(3)) <= vy_tol;
      return ok ? Termination::landed : Termination::crashed;
    }
    return Termination::completed;  // still airborne
  }
};

struct TraceStep {
  Vec x;  // state the input was applied at
  Vec u;
  Vec y;
  double stage_cost = 0.0;
};

struct ClosedLoopTrace {
  std::vector<TraceStep> steps;
  double realized_cost = 0.0;  // stage costs accumulated in step order
  bool success = false;
  bool policy_failed = false;
  Termination termination = Termination::completed;
  std::string failure_message;
};

using PolicyFn = std::function<Vec(const InitialWindow&)>;

struct RolloutOptions {
  bool record_trace = true;
  const LandingSpec* landing = nullptr;  // when set, rollout ends at touchdown
  const Vec* initial_state = nullptr;    // overrides model.init_state(wini)
};

/// Closed-loop evaluation: seed the state from the window, then repeat
/// (policy, output, stage cost, step, window shift) for n_steps. The stage
/// reference is the first-step block of w_ref. Policy failures truncate the
/// trace, keep the partial cost, and are flagged for the tuner.
inline ClosedLoopTrace rollout(const PolicyFn& policy, const Model& model,
                               const InitialWindow& wini, const Vec& w_ref, Index n_steps,
                               const Mat& q_cost, const Mat& r_cost,
                               const RolloutOptions& opts = RolloutOptions{}) {
  const Index m = model.input_dim();
  const Index p = model.output_dim();
  require(q_cost.rows() == p && q_cost.cols() == p, "stage Q must be p x p");
  require(r_cost.rows() == m && r_cost.cols() == m, "stage R must be m x m");
  require(w_ref.size() % (m + p) == 0, "w_ref length not a multiple of m + p");
  const Index t_f = w_ref.size() / (m + p);
  require(t_f >= 1, "w_ref must cover at least one step");
  const Vec u_ref = w_ref.head(m);
  const Vec y_ref = w_ref.segment(m * t_f, p);

  ClosedLoopTrace trace;
  Vec x = opts.initial_state ? *opts.initial_state : model.init_state(wini);
  InitialWindow window = wini;
  for (Index i = 0; i < n_steps; ++i) {
    Vec u;
    try {
      u = policy(window);
    } catch (const PolicyError& e) {
      trace.policy_failed = true;
      trace.termination = Termination::policy_failure;
      trace.failure_message = e.what();
      break;
    } catch (const SolverError& e) {
      trace.policy_failed = true;
      trace.termination = Termination::policy_failure;
      trace.failure_message = e.what();
      break;
    }
    const Vec y = model.output(x, u);
    const Vec dy = y - y_ref;
    const Vec du = u - u_ref;
    const double stage = dy.dot(q_cost * dy) + du.dot(r_cost * du);
    trace.realized_cost += stage;
    if (opts.record_trace) trace.steps.push_back(TraceStep{x, u, y, stage});
    x = model.step(x, u);
    if (opts.landing) {
      const Termination t = opts.landing->check(x.head(6));
      if (t != Termination::completed) {
        trace.termination = t;
        trace.success = t == Termination::landed;
        return trace;
      }
    }
    window = window_update(window, u, y);
  }
  if (!trace.policy_failed && opts.landing == nullptr) {
    trace.termination = Termination::completed;
    trace.success = true;
  }
  // With a landing spec, running out of steps while airborne is a failure.
  return trace;
}

}  // namespace ddc
