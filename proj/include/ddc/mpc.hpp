#pragma once

#include <string>
#include <utility>

#include "ddc/model.hpp"
#include "ddc/qp.hpp"

namespace ddc {

/// Receding-horizon LQ tracking around a linearization equilibrium. The
/// stored model propagates deviations from (x_eq, u_eq); reference and state
/// bounds are given in absolute coordinates and shifted internally.
struct MpcConfig {
  LtiModel model;
  Mat q_cost;  // n x n PSD
  Mat r_cost;  // m x m PD
  Index t_f = 10;
  Vec reference;  // absolute state reference, length n
  Box x_box;      // absolute per-channel state bounds
  Box u_box;      // absolute per-channel input bounds
  Vec x_eq;
  Vec u_eq;

  void validate() const {
    const Index n = model.state_dim();
    const Index m = model.input_dim();
    require(t_f >= 1, "horizon must be >= 1");
    require(q_cost.rows() == n && q_cost.cols() == n, "Q must be n x n");
    require(r_cost.rows() == m && r_cost.cols() == m, "R must be m x m");
    Eigen::LDLT<Mat> qldlt(q_cost);
    require(qldlt.info() == Eigen::Success && qldlt.isPositive(),
            "Q must be positive semidefinite");
    Eigen::LLT<Mat> rllt(r_cost);
    require(rllt.info() == Eigen::Success, "R must be positive definite");
    require(reference.size() == n, "reference must have n entries");
    x_box.validate(n, "state");
    u_box.validate(m, "input");
    require(x_eq.size() == n && u_eq.size() == m, "equilibrium point has wrong dimensions");
  }
};

struct AssembledMpcQp {
  QuadraticProgram qp;
  Index n = 0, m = 0, t_f = 0;
  Index u_off = 0;  // inputs first: du_0 .. du_{t_f-1}, then dx_1 .. dx_{t_f}
  Index x_off = 0;
};

/// Decision vector (du_0..du_{t_f-1}, dx_1..dx_{t_f}) in deviation
/// coordinates. Cost sums |dx_i - r_dev|_Q^2 + |du_i|_R^2; dynamics are
/// equalities; finite box bounds become inequalities (shifted by the
/// equilibrium).
inline AssembledMpcQp assemble_mpc(const MpcConfig& cfg, const Vec& x_hat) {
  cfg.validate();
  const Index n = cfg.model.state_dim();
  const Index m = cfg.model.input_dim();
  require(x_hat.size() == n, "state estimate must have n entries");
  const Index t_f = cfg.t_f;
  const Vec r_dev = cfg.reference - cfg.x_eq;
  const Vec dx0 = x_hat - cfg.x_eq;

  AssembledMpcQp out;
  out.n = n;
  out.m = m;
  out.t_f = t_f;
  out.u_off = 0;
  out.x_off = m * t_f;
  const Index nv = (m + n) * t_f;

  Mat p_mat = Mat::Zero(nv, nv);
  Vec q_vec = Vec::Zero(nv);
  for (Index k = 0; k < t_f; ++k) {
    p_mat.block(out.u_off + k * m, out.u_off + k * m, m, m) = 2.0 * cfg.r_cost;
    p_mat.block(out.x_off + k * n, out.x_off + k * n, n, n) = 2.0 * cfg.q_cost;
    q_vec.segment(out.x_off + k * n, n) = -2.0 * cfg.q_cost * r_dev;
  }

  // Row block k encodes dx_{k+1} - A dx_k - B du_k = 0 with dx_0 known.
  Mat a = Mat::Zero(n * t_f, nv);
  Vec b = Vec::Zero(n * t_f);
  for (Index k = 0; k < t_f; ++k) {
    a.block(k * n, out.x_off + k * n, n, n) = Mat::Identity(n, n);
    a.block(k * n, out.u_off + k * m, n, m) = -cfg.model.B;
    if (k == 0)
      b.segment(0, n) = cfg.model.A * dx0;
    else
      a.block(k * n, out.x_off + (k - 1) * n, n, n) = -cfg.model.A;
  }

  Index mi = 0;
  for (Index c = 0; c < m; ++c) {
    if (std::isfinite(cfg.u_box.upper(c))) mi += t_f;
    if (std::isfinite(cfg.u_box.lower(c))) mi += t_f;
  }
  for (Index c = 0; c < n; ++c) {
    if (std::isfinite(cfg.x_box.upper(c))) mi += t_f;
    if (std::isfinite(cfg.x_box.lower(c))) mi += t_f;
  }
  Mat g = Mat::Zero(mi, nv);
  Vec h = Vec::Zero(mi);
  Index row = 0;
  auto emit = [&](Index offset, Index channels, const Box& box, const Vec& shift) {
    for (Index k = 0; k < t_f; ++k)
      for (Index c = 0; c < channels; ++c) {
        if (std::isfinite(box.upper(c))) {
          g(row, offset + k * channels + c) = 1.0;
          h(row) = box.upper(c) - shift(c);
          ++row;
        }
        if (std::isfinite(box.lower(c))) {
          g(row, offset + k * channels + c) = -1.0;
          h(row) = shift(c) - box.lower(c);
          ++row;
        }
      }
  };
  emit(out.u_off, m, cfg.u_box, cfg.u_eq);
  emit(out.x_off, n, cfg.x_box, cfg.x_eq);

  out.qp = QuadraticProgram(std::move(p_mat), std::move(q_vec), std::move(a), std::move(b),
                            std::move(g), std::move(h));
  return out;
}

/// Solves the horizon QP and returns the first input in absolute
/// coordinates. Non-optimal termination raises PolicyError.
inline Vec mpc_policy(const MpcConfig& cfg, const Vec& x_hat, double tol = 1e-8,
                      int max_iters = 100) {
  const AssembledMpcQp asm_qp = assemble_mpc(cfg, x_hat);
  QpSolution sol = solve_qp(asm_qp.qp, tol, max_iters);
  if (sol.status != QpStatus::optimal)
    throw PolicyError(std::string("mpc QP terminated with status ") + to_string(sol.status) +
                          " after " + std::to_string(sol.iterations) + " iterations",
                      std::move(sol));
  return cfg.u_eq + sol.z.segment(asm_qp.u_off, asm_qp.m);
}

}  // namespace ddc
