#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ddc/hankel.hpp"
#include "ddc/qp.hpp"

namespace ddc {

/// Data-driven receding-horizon policy definition. The reference w_ref stacks
/// the input references for all t_f future steps, then the output references.
struct DeepcPolicyConfig {
  HankelPartition part;
  Mat q_cost;  // p x p, symmetric PSD
  Mat r_cost;  // m x m, symmetric PD
  Vec w_ref;   // (m + p) * t_f
  Box u_box;
  Box y_box;
  Vec lambda;  // (l0, l1, l2) >= 0: projection, g one-norm, slack one-norm

  void validate() const {
    const Index m = part.input_dim;
    const Index p = part.output_dim;
    require(part.cols() > 0, "Hankel partition is empty");
    require(q_cost.rows() == p && q_cost.cols() == p,
            "Q must be " + std::to_string(p) + "x" + std::to_string(p));
    require(r_cost.rows() == m && r_cost.cols() == m,
            "R must be " + std::to_string(m) + "x" + std::to_string(m));
    require((q_cost - q_cost.transpose()).cwiseAbs().maxCoeff() <=
                1e-9 * (1.0 + q_cost.cwiseAbs().maxCoeff()),
            "Q must be symmetric");
    Eigen::LDLT<Mat> qldlt(q_cost);
    require(qldlt.info() == Eigen::Success && qldlt.isPositive(),
            "Q must be positive semidefinite");
    Eigen::LLT<Mat> rllt(r_cost);
    require(rllt.info() == Eigen::Success, "R must be positive definite");
    require(w_ref.size() == (m + p) * part.horizon.t_f,
            "w_ref must have length " + std::to_string((m + p) * part.horizon.t_f));
    u_box.validate(m, "input");
    y_box.validate(p, "output");
    require(lambda.size() == 3, "lambda must have 3 entries");
    require(lambda.minCoeff() >= 0.0, "lambda must be nonnegative");
  }

  DeepcPolicyConfig with_lambda(const Vec& l) const {
    DeepcPolicyConfig c = *this;
    c.lambda = l;
    return c;
  }

  Vec u_ref() const { return w_ref.head(part.input_dim * part.horizon.t_f); }
  Vec y_ref() const { return w_ref.tail(part.output_dim * part.horizon.t_f); }
};

/// Variable layout of the assembled QP. Decision vector order:
/// [u (m*t_f), y (p*t_f), g (cols), sigma (p*t_ini), t_g, t_sigma].
/// Epigraph blocks t_g / t_sigma are present only when the corresponding
/// one-norm weight is strictly positive.
struct DeepcIndexMap {
  Index m = 0, p = 0, t_ini = 0, t_f = 0, g_dim = 0;
  Index u_off = 0, y_off = 0, g_off = 0, sig_off = 0, tg_off = -1, tsig_off = -1;
  Index num_vars = 0;
  Index eq_uini_row = 0, eq_yini_row = 0, eq_u_row = 0, eq_y_row = 0, num_eq = 0;
  Index ineq_tg_row = -1, ineq_tsig_row = -1, ineq_u_row = 0, ineq_y_row = 0, num_ineq = 0;
  bool has_tg = false, has_tsig = false;
  double dropped_constant = 0.0;  // reference-tracking constant omitted from the QP
};

struct AssembledDeepcQp {
  QuadraticProgram qp;
  DeepcIndexMap map;
};

namespace detail {

inline Index count_finite_bounds(const Box& box) {
  Index n = 0;
  for (Index i = 0; i < box.lower.size(); ++i) {
    if (std::isfinite(box.upper(i))) ++n;
    if (std::isfinite(box.lower(i))) ++n;
  }
  return n;
}

// Emits rows  z_block <= upper  and  -z_block <= -lower  for the finite
// bounds of each step of a stacked signal block. Upper rows come first,
// step-major, channel-minor; then lower rows in the same order.
inline Index emit_box_rows(Mat& g, Vec& h, Index row, Index offset, Index channels,
                           Index steps, const Box& box, double sgn) {
  for (Index k = 0; k < steps; ++k)
    for (Index c = 0; c < channels; ++c) {
      const double bound = sgn > 0 ? box.upper(c) : box.lower(c);
      if (!std::isfinite(bound)) continue;
      g(row, offset + k * channels + c) = sgn;
      h(row) = sgn * bound;
      ++row;
    }
  return row;
}

}  // namespace detail

/// Builds the tracking QP for one control step given the most recent window.
/// Objective: sum_k |y_k - y_ref_k|_Q^2 + |u_k - u_ref_k|_R^2
///            + l0 * g'(I - Pi)g + l1 * |g|_1 + l2 * |sigma|_1,
/// subject to [Up; Yp; Uf; Yf] g = [u_ini; y_ini + sigma; u; y] and channel
/// boxes on u and y. One-norms are epigraphs over t variables; the constant
/// reference term is dropped from the QP and tracked in the index map.
inline AssembledDeepcQp assemble_deepc(const DeepcPolicyConfig& cfg, const InitialWindow& wini) {
  cfg.validate();
  const Index m = cfg.part.input_dim;
  const Index p = cfg.part.output_dim;
  const Index t_ini = cfg.part.horizon.t_ini;
  const Index t_f = cfg.part.horizon.t_f;
  const Index l = cfg.part.cols();
  require(wini.u_ini.size() == m * t_ini,
          "u_ini must have length " + std::to_string(m * t_ini));
  require(wini.y_ini.size() == p * t_ini,
          "y_ini must have length " + std::to_string(p * t_ini));

  DeepcIndexMap map;
  map.m = m;
  map.p = p;
  map.t_ini = t_ini;
  map.t_f = t_f;
  map.g_dim = l;
  map.has_tg = cfg.lambda(1) > 0.0;
  map.has_tsig = cfg.lambda(2) > 0.0;

  const Index nu = m * t_f;
  const Index ny = p * t_f;
  const Index nsig = p * t_ini;
  map.u_off = 0;
  map.y_off = nu;
  map.g_off = nu + ny;
  map.sig_off = nu + ny + l;
  Index n = nu + ny + l + nsig;
  if (map.has_tg) {
    map.tg_off = n;
    n += l;
  }
  if (map.has_tsig) {
    map.tsig_off = n;
    n += nsig;
  }
  map.num_vars = n;

  Mat p_mat = Mat::Zero(n, n);
  Vec q_vec = Vec::Zero(n);
  const Vec u_ref = cfg.u_ref();
  const Vec y_ref = cfg.y_ref();
  for (Index k = 0; k < t_f; ++k) {
    p_mat.block(map.u_off + k * m, map.u_off + k * m, m, m) = 2.0 * cfg.r_cost;
    p_mat.block(map.y_off + k * p, map.y_off + k * p, p, p) = 2.0 * cfg.q_cost;
    q_vec.segment(map.u_off + k * m, m) = -2.0 * cfg.r_cost * u_ref.segment(k * m, m);
    q_vec.segment(map.y_off + k * p, p) = -2.0 * cfg.q_cost * y_ref.segment(k * p, p);
    map.dropped_constant += u_ref.segment(k * m, m).dot(cfg.r_cost * u_ref.segment(k * m, m)) +
                            y_ref.segment(k * p, p).dot(cfg.q_cost * y_ref.segment(k * p, p));
  }
  if (cfg.lambda(0) > 0.0) {
    // (I - Pi) is an orthogonal projector, so it equals its own Gram matrix.
    p_mat.block(map.g_off, map.g_off, l, l) =
        2.0 * cfg.lambda(0) * (Mat::Identity(l, l) - cfg.part.pi);
  }
  if (map.has_tg) q_vec.segment(map.tg_off, l).setConstant(cfg.lambda(1));
  if (map.has_tsig) q_vec.segment(map.tsig_off, nsig).setConstant(cfg.lambda(2));

  map.eq_uini_row = 0;
  map.eq_yini_row = m * t_ini;
  map.eq_u_row = map.eq_yini_row + nsig;
  map.eq_y_row = map.eq_u_row + nu;
  map.num_eq = map.eq_y_row + ny;
  Mat a = Mat::Zero(map.num_eq, n);
  Vec b = Vec::Zero(map.num_eq);
  a.block(map.eq_uini_row, map.g_off, m * t_ini, l) = cfg.part.up;
  b.segment(map.eq_uini_row, m * t_ini) = wini.u_ini;
  a.block(map.eq_yini_row, map.g_off, nsig, l) = cfg.part.yp;
  a.block(map.eq_yini_row, map.sig_off, nsig, nsig) = -Mat::Identity(nsig, nsig);
  b.segment(map.eq_yini_row, nsig) = wini.y_ini;
  a.block(map.eq_u_row, map.g_off, nu, l) = cfg.part.uf;
  a.block(map.eq_u_row, map.u_off, nu, nu) = -Mat::Identity(nu, nu);
  a.block(map.eq_y_row, map.g_off, ny, l) = cfg.part.yf;
  a.block(map.eq_y_row, map.y_off, ny, ny) = -Mat::Identity(ny, ny);

  Index mi = 0;
  if (map.has_tg) mi += 2 * l;
  if (map.has_tsig) mi += 2 * nsig;
  mi += t_f * detail::count_finite_bounds(cfg.u_box);
  mi += t_f * detail::count_finite_bounds(cfg.y_box);
  Mat g_mat = Mat::Zero(mi, n);
  Vec h_vec = Vec::Zero(mi);
  Index row = 0;
  if (map.has_tg) {
    map.ineq_tg_row = row;
    g_mat.block(row, map.g_off, l, l).setIdentity();
    g_mat.block(row, map.tg_off, l, l) = -Mat::Identity(l, l);
    row += l;
    g_mat.block(row, map.g_off, l, l) = -Mat::Identity(l, l);
    g_mat.block(row, map.tg_off, l, l) = -Mat::Identity(l, l);
    row += l;
  }
  if (map.has_tsig) {
    map.ineq_tsig_row = row;
    g_mat.block(row, map.sig_off, nsig, nsig).setIdentity();
    g_mat.block(row, map.tsig_off, nsig, nsig) = -Mat::Identity(nsig, nsig);
    row += nsig;
    g_mat.block(row, map.sig_off, nsig, nsig) = -Mat::Identity(nsig, nsig);
    g_mat.block(row, map.tsig_off, nsig, nsig) = -Mat::Identity(nsig, nsig);
    row += nsig;
  }
  map.ineq_u_row = row;
  row = detail::emit_box_rows(g_mat, h_vec, row, map.u_off, m, t_f, cfg.u_box, 1.0);
  row = detail::emit_box_rows(g_mat, h_vec, row, map.u_off, m, t_f, cfg.u_box, -1.0);
  map.ineq_y_row = row;
  row = detail::emit_box_rows(g_mat, h_vec, row, map.y_off, p, t_f, cfg.y_box, 1.0);
  row = detail::emit_box_rows(g_mat, h_vec, row, map.y_off, p, t_f, cfg.y_box, -1.0);
  map.num_ineq = row;

  return AssembledDeepcQp{
      QuadraticProgram(std::move(p_mat), std::move(q_vec), std::move(a), std::move(b),
                       std::move(g_mat), std::move(h_vec)),
      map};
}

struct PolicyOutput {
  Vec u0;       // first planned input, the applied action
  Vec u;        // planned inputs, m * t_f
  Vec y;        // predicted outputs, p * t_f
  Vec g;        // Hankel combination weights
  Vec sigma_y;  // past-output slack
  double objective = 0.0;  // full tracking objective including the constant term
  QpSolution qp;
};

/// Solves the one-step policy QP. Throws PolicyError (carrying the solver
/// state) when the QP does not reach optimality.
inline PolicyOutput solve_policy(const DeepcPolicyConfig& cfg, const InitialWindow& wini,
                                 double tol = 1e-8, int max_iters = 100) {
  const AssembledDeepcQp asm_qp = assemble_deepc(cfg, wini);
  QpSolution sol = solve_qp(asm_qp.qp, tol, max_iters);
  if (sol.status != QpStatus::optimal)
    throw PolicyError(std::string("policy QP terminated with status ") + to_string(sol.status) +
                          " after " + std::to_string(sol.iterations) + " iterations",
                      std::move(sol));
  const DeepcIndexMap& map = asm_qp.map;
  PolicyOutput out;
  out.u = sol.z.segment(map.u_off, map.m * map.t_f);
  out.y = sol.z.segment(map.y_off, map.p * map.t_f);
  out.g = sol.z.segment(map.g_off, map.g_dim);
  out.sigma_y = sol.z.segment(map.sig_off, map.p * map.t_ini);
  out.u0 = out.u.head(map.m);
  out.objective = sol.objective + map.dropped_constant;
  out.qp = std::move(sol);
  return out;
}

/// Raised when the policy solution is not strictly complementary, so the KKT
/// system is singular and implicit differentiation is not defined.
class DegeneratePointError : public std::runtime_error {
 public:
  DegeneratePointError(const std::string& what, double margin)
      : std::runtime_error(what), margin_(margin) {}
  double margin() const { return margin_; }

 private:
  double margin_ = 0.0;
};

struct PolicyJacobians {
  Mat du0_dlambda;  // m x 3
  Mat du0_dwini;    // m x (m + p) * t_ini, columns ordered [u_ini; y_ini]
};

/// Differentiates the applied action through the optimality conditions at the
/// fixed active set: binding inequalities act as equalities, the rest drop out
/// (their multipliers stay at zero), and the reduced system K d = -dF/dtheta
/// is solved for the sensitivities. The one-norm terms make dependent active
/// gradients routine (every pinned coordinate binds an epigraph pair), so the
/// multipliers need not be unique; the applied input still is, because the
/// input block of the Hessian is positive definite, and a rank-revealing
/// minimum-norm solve recovers it from any consistent right-hand side.
/// Requires strict complementarity (margin below `sc_margin` raises
/// DegeneratePointError) and strictly positive one-norm weights, since the
/// epigraph blocks vanish at 0.
inline PolicyJacobians policy_jacobians(const DeepcPolicyConfig& cfg, const InitialWindow& wini,
                                        const PolicyOutput& out, double sc_margin = 1e-7) {
  require(cfg.lambda(1) > 0.0 && cfg.lambda(2) > 0.0,
          "policy jacobians need strictly positive one-norm weights");
  const AssembledDeepcQp asm_qp = assemble_deepc(cfg, wini);
  const DeepcIndexMap& map = asm_qp.map;
  const Index n = map.num_vars;
  const Index me = map.num_eq;
  const Index mi = map.num_ineq;

  double margin = kInf;
  std::vector<Index> active;
  for (Index i = 0; i < mi; ++i) {
    margin = std::min(margin, std::max(out.qp.mu(i), out.qp.slack(i)));
    if (out.qp.slack(i) < out.qp.mu(i)) active.push_back(i);
  }
  if (margin < sc_margin)
    throw DegeneratePointError(
        "active set not strictly complementary (margin " + std::to_string(margin) + ")", margin);

  const Index ma = static_cast<Index>(active.size());
  Mat k = Mat::Zero(n + me + ma, n + me + ma);
  k.topLeftCorner(n, n) = asm_qp.qp.P;
  if (me > 0) {
    k.block(0, n, n, me) = asm_qp.qp.A.transpose();
    k.block(n, 0, me, n) = asm_qp.qp.A;
  }
  for (Index r = 0; r < ma; ++r) {
    k.block(0, n + me + r, n, 1) = asm_qp.qp.G.row(active[r]).transpose();
    k.block(n + me + r, 0, 1, n) = asm_qp.qp.G.row(active[r]);
  }

  const Index n_wini = (map.m + map.p) * map.t_ini;
  Mat rhs = Mat::Zero(n + me + ma, 3 + n_wini);
  // d/dl0 of the stationarity residual: dP/dl0 * z with dP = 2 (I - Pi) on g.
  rhs.block(map.g_off, 0, map.g_dim, 1) =
      -2.0 * ((Mat::Identity(map.g_dim, map.g_dim) - cfg.part.pi) * out.g);
  rhs.block(map.tg_off, 1, map.g_dim, 1).setConstant(-1.0);
  rhs.block(map.tsig_off, 2, map.p * map.t_ini, 1).setConstant(-1.0);
  // d/d(wini) enters through b; dF/db = -I on the matching equality rows.
  // Active inequalities keep fixed bounds, so their rows stay zero.
  for (Index j = 0; j < n_wini; ++j) rhs(n + j, 3 + j) = 1.0;

  Eigen::CompleteOrthogonalDecomposition<Mat> cod(k);
  const Mat d = cod.solve(rhs);
  const double rel_err =
      (k * d - rhs).cwiseAbs().maxCoeff() / (1.0 + rhs.cwiseAbs().maxCoeff());
  if (!d.allFinite() || rel_err > 1e-6)
    throw DegeneratePointError(
        "perturbation is inconsistent with the active set (residual " +
            std::to_string(rel_err) + ")",
        margin);

  PolicyJacobians jac;
  jac.du0_dlambda = d.block(map.u_off, 0, map.m, 3);
  jac.du0_dwini = d.block(map.u_off, 3, map.m, n_wini);
  return jac;
}

}  // namespace ddc
