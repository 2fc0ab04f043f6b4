#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "ddc/common.hpp"

namespace ddc {

/// Convex QP: minimize 0.5 z'Pz + q'z  s.t.  Az = b, Gz <= h.
/// P must be symmetric positive semidefinite; A and G may have zero rows.
struct QuadraticProgram {
  Mat P;
  Vec q;
  Mat A;
  Vec b;
  Mat G;
  Vec h;

  QuadraticProgram() = default;
  QuadraticProgram(Mat p_in, Vec q_in, Mat a_in, Vec b_in, Mat g_in, Vec h_in)
      : P(std::move(p_in)),
        q(std::move(q_in)),
        A(std::move(a_in)),
        b(std::move(b_in)),
        G(std::move(g_in)),
        h(std::move(h_in)) {
    const Index n = P.rows();
    require(P.cols() == n, "P must be square, got " + std::to_string(P.rows()) + "x" +
                               std::to_string(P.cols()));
    require(q.size() == n, "q has length " + std::to_string(q.size()) + " but P is " +
                               std::to_string(n) + "x" + std::to_string(n));
    if (A.size() == 0 && A.cols() != n) A.resize(0, n);
    if (G.size() == 0 && G.cols() != n) G.resize(0, n);
    require(A.cols() == n, "A has " + std::to_string(A.cols()) + " columns, expected " +
                               std::to_string(n));
    require(G.cols() == n, "G has " + std::to_string(G.cols()) + " columns, expected " +
                               std::to_string(n));
    require(b.size() == A.rows(), "b has length " + std::to_string(b.size()) + " but A has " +
                                      std::to_string(A.rows()) + " rows");
    require(h.size() == G.rows(), "h has length " + std::to_string(h.size()) + " but G has " +
                                      std::to_string(G.rows()) + " rows");
    const double asym = n > 0 ? (P - P.transpose()).cwiseAbs().maxCoeff() : 0.0;
    require(asym <= 1e-9 * (1.0 + P.cwiseAbs().maxCoeff()),
            "P is not symmetric (max asymmetry " + std::to_string(asym) + ")");
    P = (0.5 * (P + P.transpose())).eval();
  }

  Index num_vars() const { return P.rows(); }
  Index num_eq() const { return A.rows(); }
  Index num_ineq() const { return G.rows(); }

  double objective(const Vec& z) const { return 0.5 * z.dot(P * z) + q.dot(z); }
};

enum class QpStatus { optimal, max_iters, infeasible };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::max_iters: return "max_iters";
    case QpStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

/// Scaled KKT residuals. Each entry is normalized so that tolerances are
/// meaningful across problem scales: stationarity by the largest dual term,
/// primal residuals by 1+|rhs|, complementarity by 1+|objective|.
struct KktResiduals {
  double stationarity = 0.0;
  double primal_eq = 0.0;
  double primal_ineq = 0.0;
  double complementarity = 0.0;

  double max() const {
    return std::max(std::max(stationarity, primal_eq), std::max(primal_ineq, complementarity));
  }
};

struct QpSolution {
  Vec z;      // primal
  Vec nu;     // equality multipliers
  Vec mu;     // inequality multipliers, >= 0
  Vec slack;  // h - Gz at the returned iterate
  QpStatus status = QpStatus::max_iters;
  KktResiduals residuals;
  int iterations = 0;
  double objective = 0.0;
};

/// Thrown by receding-horizon policies when the underlying QP did not reach
/// optimality; carries the solver state for diagnostics.
class PolicyError : public std::runtime_error {
 public:
  PolicyError(const std::string& what, QpSolution sol)
      : std::runtime_error(what), solution_(std::move(sol)) {}
  const QpSolution& solution() const { return solution_; }

 private:
  QpSolution solution_;
};

namespace detail {

// Static Tikhonov term added to the P block inside Newton systems only; the
// reported residuals always use the exact problem data.
inline constexpr double kNewtonReg = 1e-9;

inline double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline KktResiduals kkt_residuals(const QuadraticProgram& qp, const Vec& z, const Vec& nu,
                                  const Vec& mu) {
  KktResiduals r;
  const Vec pz = qp.P * z;
  Vec rd = pz + qp.q;
  double scale = std::max(inf_norm(pz), inf_norm(qp.q));
  if (qp.num_eq() > 0) {
    const Vec atnu = qp.A.transpose() * nu;
    rd += atnu;
    scale = std::max(scale, inf_norm(atnu));
  }
  if (qp.num_ineq() > 0) {
    const Vec gtmu = qp.G.transpose() * mu;
    rd += gtmu;
    scale = std::max(scale, inf_norm(gtmu));
  }
  r.stationarity = inf_norm(rd) / (1.0 + scale);
  if (qp.num_eq() > 0) r.primal_eq = inf_norm(qp.A * z - qp.b) / (1.0 + inf_norm(qp.b));
  if (qp.num_ineq() > 0) {
    const Vec s = qp.h - qp.G * z;
    r.primal_ineq = (-s).cwiseMax(0.0).maxCoeff() / (1.0 + inf_norm(qp.h));
    r.complementarity =
        mu.cwiseProduct(s).cwiseAbs().maxCoeff() / (1.0 + std::abs(qp.objective(z)));
  }
  return r;
}

// Largest step a in [0, cap] keeping v + a*dv >= 0 elementwise (v > 0).
inline double max_step(const Vec& v, const Vec& dv, double cap = 1.0) {
  double a = cap;
  for (Index i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
  return a;
}

// Factorized saddle system [H A'; A 0] with iterative refinement. The fast
// path eliminates through H; redundant equality rows make the Schur complement
// singular, in which case a rank-revealing solve of the full saddle matrix
// takes over (still finite for consistent systems).
struct SaddleSolver {
  const Mat* H = nullptr;  // exact H block, used for refinement residuals
  const Mat* A = nullptr;
  Eigen::LDLT<Mat> ldlt_h;
  Mat hinv_at;  // H^{-1} A'
  Eigen::LDLT<Mat> ldlt_s;
  Eigen::FullPivLU<Mat> lu;
  Vec scale;
  bool use_lu = false;

  // Factors the (regularized) h_mat; refinement residuals are taken against
  // h_exact so the Tikhonov term steers the solve without entering the
  // returned point. force_lu skips the Schur elimination, which loses the
  // equality rows when the barrier scaling spans too many orders of magnitude.
  void factor(const Mat& h_mat, const Mat& a_mat, const Mat* h_exact = nullptr,
              bool force_lu = false) {
    H = h_exact != nullptr ? h_exact : &h_mat;
    A = &a_mat;
    use_lu = false;
    bool ok = false;
    if (!force_lu) {
      ldlt_h.compute(h_mat);
      ok = ldlt_h.info() == Eigen::Success;
      if (ok && A->rows() > 0) {
        hinv_at = ldlt_h.solve(A->transpose());
        ok = hinv_at.allFinite();
        if (ok) {
          ldlt_s.compute(*A * hinv_at);
          ok = ldlt_s.info() == Eigen::Success;
        }
      }
    }
    if (!ok) {
      const Index nh = h_mat.rows();
      const Index me = a_mat.rows();
      const Index dim = nh + me;
      Mat k = Mat::Zero(dim, dim);
      k.topLeftCorner(nh, nh) = h_mat;
      if (me > 0) {
        k.topRightCorner(nh, me) = a_mat.transpose();
        k.bottomLeftCorner(me, nh) = a_mat;
      }
      // Symmetric (Ruiz-style) equilibration tames the dynamic range before
      // the rank-revealing factorization.
      scale = Vec::Ones(dim);
      for (int pass = 0; pass < 3; ++pass) {
        for (Index i = 0; i < dim; ++i) {
          const double r = k.row(i).cwiseAbs().maxCoeff();
          if (r > 0.0 && std::isfinite(r)) {
            const double f = 1.0 / std::sqrt(r);
            k.row(i) *= f;
            k.col(i) *= f;
            scale(i) *= f;
          }
        }
      }
      lu.compute(k);
      use_lu = true;
    }
  }

  // Solves H x + A' y = r1, A x = r2.
  void solve_once(const Vec& r1, const Vec& r2, Vec& x, Vec& y) const {
    if (use_lu) {
      Vec rhs(r1.size() + r2.size());
      rhs << r1, r2;
      const Vec xy = scale.cwiseProduct(lu.solve(scale.cwiseProduct(rhs)));
      x = xy.head(r1.size());
      y = xy.tail(r2.size());
      return;
    }
    if (A->rows() > 0) {
      const Vec hinv_r1 = ldlt_h.solve(r1);
      y = ldlt_s.solve(*A * hinv_r1 - r2);
      x = hinv_r1 - hinv_at * y;
    } else {
      y.resize(0);
      x = ldlt_h.solve(r1);
    }
  }

  void solve(const Vec& r1, const Vec& r2, Vec& x, Vec& y) const {
    solve_once(r1, r2, x, y);
    // Refine against the exact H so the Tikhonov bias is removed whenever the
    // iteration contracts; corrections that fail to shrink the residual are
    // rejected (near-singular exact systems), leaving the regularized solve.
    const double ref = 1.0 + std::max(inf_norm(r1), inf_norm(r2));
    auto residual = [&](const Vec& xx, const Vec& yy, Vec& e1, Vec& e2) {
      e1 = r1 - *H * xx;
      if (A->rows() > 0) e1 -= A->transpose() * yy;
      e2 = A->rows() > 0 ? Vec(r2 - *A * xx) : Vec();
      return std::max(inf_norm(e1), inf_norm(e2));
    };
    Vec e1, e2;
    double err = residual(x, y, e1, e2);
    for (int pass = 0; pass < 3; ++pass) {
      if (!(err > 1e-14 * ref)) break;
      Vec cx, cy;
      solve_once(e1, e2, cx, cy);
      if (!cx.allFinite() || (cy.size() > 0 && !cy.allFinite())) break;
      Vec x2 = x + cx;
      Vec y2 = y;
      if (A->rows() > 0) y2 += cy;
      Vec f1, f2;
      const double err2 = residual(x2, y2, f1, f2);
      if (!(err2 < err)) break;
      x = std::move(x2);
      y = std::move(y2);
      e1 = std::move(f1);
      e2 = std::move(f2);
      err = err2;
    }
  }
};

}  // namespace detail

/// Dense primal-dual interior-point solver (Mehrotra predictor-corrector).
/// Declares infeasibility when the scaled residuals stagnate for 20 iterations
/// while the dual iterates diverge. Throws SolverError on numerical breakdown.
inline QpSolution solve_qp(const QuadraticProgram& qp, double tol = 1e-8, int max_iters = 100) {
  require(tol > 0.0, "solver tolerance must be positive");
  require(max_iters >= 1, "max_iters must be >= 1");
  const Index n = qp.num_vars();
  const Index me = qp.num_eq();
  const Index mi = qp.num_ineq();

  QpSolution sol;
  Mat p_reg = qp.P;
  p_reg.diagonal().array() += detail::kNewtonReg;

  // No inequalities: the KKT system is linear, one (refined) solve suffices.
  if (mi == 0) {
    detail::SaddleSolver sd;
    sd.factor(p_reg, qp.A, &qp.P);
    Vec z, nu;
    sd.solve(-qp.q, qp.b, z, nu);
    if (!z.allFinite() || !nu.allFinite())
      throw SolverError("non-finite iterate at iteration 0", 0);
    sol.z = z;
    sol.nu = nu;
    sol.mu.resize(0);
    sol.slack.resize(0);
    sol.iterations = 1;
    sol.residuals = detail::kkt_residuals(qp, sol.z, sol.nu, sol.mu);
    sol.objective = qp.objective(sol.z);
    // An inconsistent equality system leaves a large primal residual even
    // though the least-squares-like solve itself succeeded.
    sol.status = sol.residuals.max() <= tol
                     ? QpStatus::optimal
                     : (sol.residuals.primal_eq > std::sqrt(tol) ? QpStatus::infeasible
                                                                 : QpStatus::max_iters);
    return sol;
  }

  // Initial point: solve the relaxed KKT system with unit slack weights, then
  // shift slack/multiplier estimates into the positive orthant (Mehrotra).
  Vec z, nu, s, mu;
  {
    detail::SaddleSolver sd;
    const Mat h0 = p_reg + qp.G.transpose() * qp.G;
    sd.factor(h0, qp.A);
    sd.solve(-qp.q + qp.G.transpose() * qp.h, qp.b, z, nu);
    if (!z.allFinite()) throw SolverError("non-finite initial point", 0);
    const Vec s_raw = qp.h - qp.G * z;
    Vec mu_raw = s_raw;
    const double ds = std::max(0.0, -1.5 * s_raw.minCoeff());
    const double dm = std::max(0.0, -1.5 * mu_raw.minCoeff());
    Vec s1 = s_raw.array() + ds;
    Vec mu1 = mu_raw.array() + dm;
    const double dot = s1.dot(mu1);
    const double sum_s = s1.sum();
    const double sum_mu = mu1.sum();
    if (dot > 0.0 && sum_s > 0.0 && sum_mu > 0.0) {
      s = s1.array() + 0.5 * dot / sum_mu;
      mu = mu1.array() + 0.5 * dot / sum_s;
    }
    if (s.size() == 0 || s.minCoeff() <= 0.0 || mu.minCoeff() <= 0.0 || !s.allFinite() ||
        !mu.allFinite()) {
      s = Vec::Ones(mi);
      mu = Vec::Ones(mi);
    }
  }
  if (me == 0) nu.resize(0);

  const double tau = 0.995;
  double best_merit = kInf;
  int best_iter = 0;
  bool lu_mode = false;

  for (int iter = 0; iter < max_iters; ++iter) {
    sol.residuals = detail::kkt_residuals(qp, z, nu, mu);
    const double merit = sol.residuals.max();
    sol.iterations = iter;
    if (merit <= tol) {
      sol.status = QpStatus::optimal;
      break;
    }
    if (merit < 0.9 * best_merit) {
      best_merit = merit;
      best_iter = iter;
    }
    const double dual_scale = std::max(detail::inf_norm(nu), detail::inf_norm(mu));
    if (iter - best_iter >= 20 && dual_scale > 1e6 * (1.0 + detail::inf_norm(z))) {
      sol.status = QpStatus::infeasible;
      break;
    }
    // The Schur path stalls when the complementarity part collapses while
    // primal/stationarity residuals survive the eliminated solve; switch to
    // the dense equilibrated factorization for the remaining iterations.
    if (!lu_mode &&
        (iter - best_iter >= 8 ||
         (iter >= 5 && sol.residuals.complementarity <= 1e-6 * merit)))
      lu_mode = true;

    Vec r_d = qp.P * z + qp.q + qp.G.transpose() * mu;
    if (me > 0) r_d += qp.A.transpose() * nu;
    const Vec r_p = me > 0 ? Vec(qp.A * z - qp.b) : Vec();
    const Vec r_g = qp.G * z + s - qp.h;
    const double gap = s.dot(mu) / static_cast<double>(mi);

    const Vec w = mu.cwiseQuotient(s);
    const Mat h_exact = qp.P + qp.G.transpose() * w.asDiagonal() * qp.G;
    Mat h_mat = h_exact;
    h_mat.diagonal().array() += detail::kNewtonReg;
    detail::SaddleSolver sd;
    sd.factor(h_mat, qp.A, &h_exact, lu_mode);

    auto newton = [&](const Vec& rc, Vec& dz, Vec& dnu, Vec& dss, Vec& dmu) {
      const Vec rhs_z = -r_d + qp.G.transpose() * ((rc - mu.cwiseProduct(r_g)).cwiseQuotient(s));
      sd.solve(rhs_z, me > 0 ? Vec(-r_p) : Vec(), dz, dnu);
      dss = -r_g - qp.G * dz;
      dmu = (-rc - mu.cwiseProduct(dss)).cwiseQuotient(s);
    };

    Vec dz_a, dnu_a, ds_a, dmu_a;
    newton(mu.cwiseProduct(s), dz_a, dnu_a, ds_a, dmu_a);
    const double alpha_a =
        std::min(detail::max_step(s, ds_a), detail::max_step(mu, dmu_a));
    const double gap_a =
        (s + alpha_a * ds_a).dot(mu + alpha_a * dmu_a) / static_cast<double>(mi);
    const double ratio = gap > 0.0 ? gap_a / gap : 0.0;
    const double sigma = std::clamp(ratio * ratio * ratio, 0.0, 1.0);
    // Keep the barrier coupled to the lagging residuals: letting the products
    // collapse while stationarity is unfinished degenerates the Newton system
    // (the complementarity rows vanish), after which the duals cannot move.
    const double resid_lag = std::max(
        sol.residuals.stationarity, std::max(sol.residuals.primal_eq, sol.residuals.primal_ineq));
    const double gap_floor =
        std::min(gap, 0.01 * resid_lag * (1.0 + std::abs(qp.objective(z))));
    const double gap_target = std::max(sigma * gap, gap_floor);

    Vec dz, dnu, dss, dmu;
    const Vec rc = (mu.cwiseProduct(s) + dmu_a.cwiseProduct(ds_a)).array() - gap_target;
    newton(rc, dz, dnu, dss, dmu);

    const double alpha =
        std::min(1.0, tau * std::min(detail::max_step(s, dss, kInf),
                                     detail::max_step(mu, dmu, kInf)));
    const Vec z_n = z + alpha * dz;
    const Vec s_n = s + alpha * dss;
    const Vec mu_n = mu + alpha * dmu;
    Vec nu_n = nu;
    if (me > 0) nu_n += alpha * dnu;
    const bool healthy = z_n.allFinite() && s_n.allFinite() && mu_n.allFinite() &&
                         nu_n.allFinite() && s_n.minCoeff() > 0.0 && mu_n.minCoeff() >= 0.0;
    if (!healthy) {
      // Primal-infeasible problems blow the iterates up long before the
      // stagnation test fires; classify by the residual at the last good point.
      if (sol.residuals.primal_ineq > std::sqrt(tol) || sol.residuals.primal_eq > std::sqrt(tol)) {
        sol.status = QpStatus::infeasible;
        break;
      }
      throw SolverError("non-finite iterate at iteration " + std::to_string(iter), iter);
    }
    z = z_n;
    s = s_n;
    mu = mu_n;
    if (me > 0) nu = nu_n;
    sol.iterations = iter + 1;
  }

  if (sol.status == QpStatus::max_iters || sol.iterations == max_iters)
    sol.residuals = detail::kkt_residuals(qp, z, nu, mu);
  sol.z = z;
  sol.nu = nu;
  sol.mu = mu;
  sol.slack = qp.h - qp.G * z;
  sol.objective = qp.objective(z);
  return sol;
}

/// Jacobian of the KKT map at a primal-dual point, using the exact problem
/// data (no regularization):
///   [ P          A'  G'            ]
///   [ A          0   0             ]
///   [ diag(mu)G  0   diag(Gz - h)  ]
inline Mat kkt_matrix(const QuadraticProgram& qp, const QpSolution& sol) {
  const Index n = qp.num_vars();
  const Index me = qp.num_eq();
  const Index mi = qp.num_ineq();
  require(sol.z.size() == n, "solution primal size mismatch");
  require(sol.mu.size() == mi, "solution multiplier size mismatch");
  Mat k = Mat::Zero(n + me + mi, n + me + mi);
  k.topLeftCorner(n, n) = qp.P;
  if (me > 0) {
    k.block(0, n, n, me) = qp.A.transpose();
    k.block(n, 0, me, n) = qp.A;
  }
  if (mi > 0) {
    k.block(0, n + me, n, mi) = qp.G.transpose();
    k.block(n + me, 0, mi, n) = sol.mu.asDiagonal() * qp.G;
    k.block(n + me, n + me, mi, mi) = Vec(qp.G * sol.z - qp.h).asDiagonal();
  }
  return k;
}

}  // namespace ddc
