#include <gtest/gtest.h>

#include "ddc/ddc.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ddc;

namespace {

// Full objective recomputed from first principles at a solution.
double direct_objective(const DeepcPolicyConfig& cfg, const PolicyOutput& out) {
  const Index m = cfg.part.input_dim;
  const Index p = cfg.part.output_dim;
  const Index t_f = cfg.part.horizon.t_f;
  double obj = 0.0;
  for (Index k = 0; k < t_f; ++k) {
    const Vec du = out.u.segment(k * m, m) - cfg.u_ref().segment(k * m, m);
    const Vec dy = out.y.segment(k * p, p) - cfg.y_ref().segment(k * p, p);
    obj += dy.dot(cfg.q_cost * dy) + du.dot(cfg.r_cost * du);
  }
  const Mat ipi = Mat::Identity(out.g.size(), out.g.size()) - cfg.part.pi;
  obj += cfg.lambda(0) * (ipi * out.g).squaredNorm();
  obj += cfg.lambda(1) * out.g.cwiseAbs().sum();
  obj += cfg.lambda(2) * out.sigma_y.cwiseAbs().sum();
  return obj;
}

}  // namespace

TEST(Deepc, SingleColumnReplayIsExact) {
  // One stored window (T = t_ini + t_f): the only behavior the data spans is
  // that window itself, so the policy must replay it with g = 1.
  SplitMix64 rng(2);
  auto sys = testutil::random_stable_lti(rng, 2, 1, 2);
  HorizonSpec hz{2, 4};
  auto data = testutil::collect_lti_data(sys, rng, hz.depth());
  const auto part = partition(data, hz);
  ASSERT_EQ(part.cols(), 1);

  DeepcPolicyConfig cfg;
  cfg.part = part;
  cfg.q_cost = Mat::Identity(2, 2);
  cfg.r_cost = Mat::Identity(1, 1);
  cfg.w_ref.resize(3 * hz.t_f);
  cfg.w_ref << part.uf.col(0), part.yf.col(0);
  cfg.u_box = Box::unbounded(1);
  cfg.y_box = Box::unbounded(2);
  cfg.lambda = Vec::Zero(3);
  cfg.lambda(0) = 1e-6;

  const PolicyOutput out = solve_policy(cfg, part.window_at(0));
  ASSERT_EQ(out.g.size(), 1);
  EXPECT_NEAR(out.g(0), 1.0, 1e-6);
  EXPECT_LE((out.u - Vec(part.uf.col(0))).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((out.y - Vec(part.yf.col(0))).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(out.sigma_y.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Deepc, NoiselessPredictionSatisfiesTrueRecursion) {
  // Data-consistency check on a noiseless LTI: with all weights zero the
  // prediction must still be a genuine system trajectory, the slack must
  // vanish, and an exactly reachable reference is reproduced.
  auto s = testutil::make_lti_setup(13, 2, 1, 2, 2, 6, 50);
  SplitMix64 rng(14);
  const auto cont = testutil::simulate_continuation(s.sys, rng, 2, 6);
  DeepcPolicyConfig cfg = s.policy;
  cfg.w_ref.resize(cont.u_future.size() + cont.y_future.size());
  cfg.w_ref << cont.u_future, cont.y_future;
  cfg.lambda = Vec::Zero(3);

  const PolicyOutput out = solve_policy(cfg, cont.wini);
  EXPECT_LE((out.u - cont.u_future).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((out.y - cont.y_future).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(out.sigma_y.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(oracle::lti_window_residual(s.sys.A, s.sys.B, s.sys.C, s.sys.D, out.u, out.y),
            1e-6);
}

TEST(Deepc, SlackShrinksMonotonicallyWithItsWeight) {
  auto s = testutil::make_lti_setup(21);
  SplitMix64 rng(22);
  InitialWindow wini = s.part.window_at(3);
  for (Index i = 0; i < wini.y_ini.size(); ++i) wini.y_ini(i) += 0.3 * rng.normal();

  // The perturbed y_ini sits off the reachable set, so the slack cannot
  // vanish: a heavy weight drives it down to the smallest value consistent
  // with the data, while a cheap slack absorbs far more of the mismatch.
  double first = std::numeric_limits<double>::quiet_NaN();
  double prev = std::numeric_limits<double>::infinity();
  for (double l2 : {1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e3}) {
    DeepcPolicyConfig cfg = s.policy;
    cfg.lambda << 0.01, 0.01, l2;
    const PolicyOutput out = solve_policy(cfg, wini);
    const double norm1 = out.sigma_y.cwiseAbs().sum();
    if (!std::isfinite(first)) first = norm1;
    // Successive solves at the floor agree only to solver accuracy.
    EXPECT_LE(norm1, prev + 1e-6 * (1.0 + prev));
    prev = norm1;
  }
  EXPECT_LE(prev, 0.1 * first);
}

TEST(Deepc, ObjectiveIncludesDroppedConstant) {
  auto s = testutil::make_lti_setup(33);
  DeepcPolicyConfig cfg = s.policy;
  cfg.lambda << 2.0, 0.5, 10.0;
  SplitMix64 rng(34);
  cfg.w_ref = testutil::random_vec(rng, cfg.w_ref.size());
  const PolicyOutput out = solve_policy(cfg, s.part.window_at(1));
  EXPECT_NEAR(out.objective, direct_objective(cfg, out),
              1e-6 * (1.0 + std::abs(out.objective)));
}

TEST(Deepc, EpigraphVariablesAreTightAtOptimum) {
  auto s = testutil::make_lti_setup(44);
  DeepcPolicyConfig cfg = s.policy;
  cfg.lambda << 1.0, 5.0, 50.0;
  const InitialWindow wini = s.part.window_at(2);
  const auto assembled = assemble_deepc(cfg, wini);
  const PolicyOutput out = solve_policy(cfg, wini);
  const auto& map = assembled.map;
  ASSERT_TRUE(map.has_tg);
  ASSERT_TRUE(map.has_tsig);
  const Vec tg = out.qp.z.segment(map.tg_off, map.g_dim);
  const Vec tsig = out.qp.z.segment(map.tsig_off, out.sigma_y.size());
  EXPECT_LE((tg - out.g.cwiseAbs()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((tsig - out.sigma_y.cwiseAbs()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Deepc, EpigraphBlocksOmittedAtZeroWeight) {
  auto s = testutil::make_lti_setup(45);
  DeepcPolicyConfig cfg = s.policy;
  cfg.lambda << 1.0, 0.0, 0.0;
  const auto assembled = assemble_deepc(cfg, s.part.window_at(0));
  EXPECT_FALSE(assembled.map.has_tg);
  EXPECT_FALSE(assembled.map.has_tsig);
  const Index m = s.part.input_dim, p = s.part.output_dim;
  EXPECT_EQ(assembled.map.num_vars,
            m * s.part.horizon.t_f + p * s.part.horizon.t_f + s.part.cols() +
                p * s.part.horizon.t_ini);
}

TEST(Deepc, EqualityCouplingHoldsAtSolution) {
  auto s = testutil::make_lti_setup(55);
  DeepcPolicyConfig cfg = s.policy;
  cfg.lambda << 1.0, 1.0, 100.0;
  const InitialWindow wini = s.part.window_at(4);
  const PolicyOutput out = solve_policy(cfg, wini);
  EXPECT_LE((s.part.up * out.g - wini.u_ini).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((s.part.yp * out.g - out.sigma_y - wini.y_ini).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((s.part.uf * out.g - out.u).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((s.part.yf * out.g - out.y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Deepc, BoxConstraintsRespected) {
  auto s = testutil::make_lti_setup(66);
  DeepcPolicyConfig cfg = s.policy;
  cfg.lambda << 1.0, 0.1, 100.0;
  cfg.u_box.lower = Vec::Constant(1, -0.05);
  cfg.u_box.upper = Vec::Constant(1, 0.05);
  cfg.w_ref.tail(cfg.part.output_dim * cfg.part.horizon.t_f).setConstant(3.0);
  const PolicyOutput out = solve_policy(cfg, s.part.window_at(0));
  EXPECT_LE(out.u.maxCoeff(), 0.05 + 1e-7);
  EXPECT_GE(out.u.minCoeff(), -0.05 - 1e-7);
}

TEST(Deepc, JacobiansMatchFiniteDifferences) {
  auto s = testutil::make_lti_setup(77, 2, 1, 2, 2, 5, 40);
  DeepcPolicyConfig cfg = s.policy;
  cfg.lambda << 5.0, 0.7, 30.0;
  SplitMix64 rng(78);
  InitialWindow wini = s.part.window_at(6);
  for (Index i = 0; i < wini.y_ini.size(); ++i) wini.y_ini(i) += 0.05 * rng.normal();

  const PolicyOutput out = solve_policy(cfg, wini, 1e-10);
  const PolicyJacobians jac = policy_jacobians(cfg, wini, out);

  auto u0_of_lambda = [&](const Vec& l) {
    return solve_policy(cfg.with_lambda(l), wini, 1e-10).u0;
  };
  const Mat fd_lambda = oracle::fd_jacobian(u0_of_lambda, cfg.lambda, 1e-5);
  EXPECT_LE((jac.du0_dlambda - fd_lambda).cwiseAbs().maxCoeff(),
            1e-3 * (1.0 + fd_lambda.cwiseAbs().maxCoeff()));

  auto u0_of_wini = [&](const Vec& w) {
    InitialWindow win;
    win.u_ini = w.head(wini.u_ini.size());
    win.y_ini = w.tail(wini.y_ini.size());
    return solve_policy(cfg, win, 1e-10).u0;
  };
  const Mat fd_wini = oracle::fd_jacobian(u0_of_wini, wini.stacked(), 1e-6);
  EXPECT_LE((jac.du0_dwini - fd_wini).cwiseAbs().maxCoeff(),
            1e-3 * (1.0 + fd_wini.cwiseAbs().maxCoeff()));
}

TEST(Deepc, JacobiansRequirePositiveOneNormWeights) {
  auto s = testutil::make_lti_setup(88);
  DeepcPolicyConfig cfg = s.policy;
  cfg.lambda << 1.0, 0.0, 1.0;
  const InitialWindow wini = s.part.window_at(0);
  const PolicyOutput out = solve_policy(cfg, wini);
  EXPECT_THROW(policy_jacobians(cfg, wini, out), ConfigError);
}

TEST(Deepc, HugeMarginTriggersDegeneracyGuard) {
  auto s = testutil::make_lti_setup(99);
  DeepcPolicyConfig cfg = s.policy;
  cfg.lambda << 1.0, 1.0, 10.0;
  const InitialWindow wini = s.part.window_at(1);
  const PolicyOutput out = solve_policy(cfg, wini);
  EXPECT_THROW(policy_jacobians(cfg, wini, out, /*sc_margin=*/1e9), DegeneratePointError);
}

TEST(Deepc, ValidateCatchesBadShapes) {
  auto s = testutil::make_lti_setup(12);
  DeepcPolicyConfig cfg = s.policy;
  cfg.lambda = Vec::Zero(2);
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = s.policy;
  cfg.lambda << -1.0, 0.0, 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = s.policy;
  cfg.q_cost = -Mat::Identity(2, 2);
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = s.policy;
  cfg.w_ref = Vec::Zero(1);
  EXPECT_THROW(cfg.validate(), ConfigError);
}
