#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "ddc/model.hpp"

namespace ddc {

enum class MassMode { constant, fuel_burn };
enum class IntegratorKind { rk4, euler };

/// Planar rocket parameters. State (x, xdot, y, ydot, theta, thetadot),
/// input (F_E main thrust, F_s side thrust, phi gimbal angle). l1 is the
/// lever arm below the center of gravity, l2 above.
struct VtvlParams {
  double m0 = 1000.0;
  double l1 = 5.0;
  double l2 = 5.0;
  double inertia = 1000.0 * 10.0 * 10.0 / 12.0;  // uniform-rod default, m0 (l1+l2)^2 / 12
  double gravity = 9.81;
  double dt = 0.1;
  MassMode mass_mode = MassMode::constant;
  double burn_rate = 1e-3;  // mass loss per unit main-engine thrust-time
  IntegratorKind integrator = IntegratorKind::rk4;

  void validate() const {
    require(m0 > 0.0 && l1 > 0.0 && l2 > 0.0 && inertia > 0.0 && dt > 0.0,
            "mass, lengths, inertia, and dt must be positive");
    require(gravity >= 0.0, "gravity must be nonnegative");
    require(burn_rate >= 0.0, "burn rate must be nonnegative");
  }

  /// Recomputes the uniform-rod inertia from the current mass and lengths.
  VtvlParams& with_rod_inertia() {
    inertia = m0 * (l1 + l2) * (l1 + l2) / 12.0;
    return *this;
  }
};

/// Exact-model preset used for tuning rollouts.
inline VtvlParams vtvl_model_a(VtvlParams base = VtvlParams{}) { return base; }

/// Mismatched preset: l1 +33%, l2 -25%, half the mass, rod inertia refit.
inline VtvlParams vtvl_model_b(VtvlParams base = VtvlParams{}) {
  base.l1 *= 1.33;
  base.l2 *= 0.75;
  base.m0 *= 0.5;
  base.with_rod_inertia();
  return base;
}

/// Input holding the rocket still upright: main engine cancels gravity.
inline Vec vtvl_hover_input(const VtvlParams& p) {
  Vec u(3);
  u << p.m0 * p.gravity, 0.0, 0.0;
  return u;
}

namespace detail {

// Continuous-time state derivative for a fixed mass:
//   m xdd = Fs cos(th) - FE sin(phi + th)
//   m ydd = Fs sin(th) + FE cos(phi + th) - m g
//   J thdd = -FE sin(phi) l1 - Fs l2
inline Vec vtvl_deriv(const VtvlParams& p, const Vec& x, const Vec& u, double mass) {
  const double fe = u(0), fs = u(1), phi = u(2);
  const double th = x(4);
  Vec d(6);
  d(0) = x(1);
  d(1) = (fs * std::cos(th) - fe * std::sin(phi + th)) / mass;
  d(2) = x(3);
  d(3) = (fs * std::sin(th) + fe * std::cos(phi + th)) / mass - p.gravity;
  d(4) = x(5);
  d(5) = (-fe * std::sin(phi) * p.l1 - fs * p.l2) / p.inertia;
  return d;
}

inline void vtvl_deriv_jac(const VtvlParams& p, const Vec& x, const Vec& u, double mass,
                           Mat& jx, Mat& ju) {
  const double fe = u(0), fs = u(1), phi = u(2);
  const double th = x(4);
  const double s1 = std::sin(th), c1 = std::cos(th);
  const double s2 = std::sin(phi + th), c2 = std::cos(phi + th);
  jx = Mat::Zero(6, 6);
  ju = Mat::Zero(6, 3);
  jx(0, 1) = 1.0;
  jx(2, 3) = 1.0;
  jx(4, 5) = 1.0;
  jx(1, 4) = (-fs * s1 - fe * c2) / mass;
  jx(3, 4) = (fs * c1 - fe * s2) / mass;
  ju(1, 0) = -s2 / mass;
  ju(1, 1) = c1 / mass;
  ju(1, 2) = -fe * c2 / mass;
  ju(3, 0) = c2 / mass;
  ju(3, 1) = s1 / mass;
  ju(3, 2) = -fe * s2 / mass;
  ju(5, 0) = -std::sin(phi) * p.l1 / p.inertia;
  ju(5, 1) = -p.l2 / p.inertia;
  ju(5, 2) = -fe * std::cos(phi) * p.l1 / p.inertia;
}

}  // namespace detail

/// One integrator step of length dt at fixed mass. Throws on non-finite
/// states so rollouts fail loudly instead of propagating NaNs.
inline Vec vtvl_step_at_mass(const VtvlParams& p, const Vec& x, const Vec& u, double mass) {
  require(x.size() == 6, "state must have 6 entries");
  require(u.size() == 3, "input must have 3 entries");
  if (!x.allFinite() || !u.allFinite())
    throw std::runtime_error("vtvl step called with non-finite state or input");
  Vec next(6);
  if (p.integrator == IntegratorKind::euler) {
    next = x + p.dt * detail::vtvl_deriv(p, x, u, mass);
  } else {
    const Vec k1 = detail::vtvl_deriv(p, x, u, mass);
    const Vec k2 = detail::vtvl_deriv(p, x + 0.5 * p.dt * k1, u, mass);
    const Vec k3 = detail::vtvl_deriv(p, x + 0.5 * p.dt * k2, u, mass);
    const Vec k4 = detail::vtvl_deriv(p, x + p.dt * k3, u, mass);
    next = x + (p.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (!next.allFinite()) throw std::runtime_error("vtvl integrator step produced a non-finite state");
  return next;
}

/// Discrete-step Jacobians by exact tangent propagation through the
/// integrator stages (same scheme as the step itself).
inline std::pair<Mat, Mat> vtvl_step_jacobians_at_mass(const VtvlParams& p, const Vec& x,
                                                       const Vec& u, double mass) {
  Mat jx, ju;
  if (p.integrator == IntegratorKind::euler) {
    detail::vtvl_deriv_jac(p, x, u, mass, jx, ju);
    return {Mat::Identity(6, 6) + p.dt * jx, p.dt * ju};
  }
  const double h = p.dt;
  const Mat eye = Mat::Identity(6, 6);
  const Vec k1 = detail::vtvl_deriv(p, x, u, mass);
  Mat a1, b1;
  detail::vtvl_deriv_jac(p, x, u, mass, a1, b1);
  const Vec x2 = x + 0.5 * h * k1;
  const Vec k2 = detail::vtvl_deriv(p, x2, u, mass);
  Mat a2r, b2r;
  detail::vtvl_deriv_jac(p, x2, u, mass, a2r, b2r);
  const Mat a2 = a2r * (eye + 0.5 * h * a1);
  const Mat b2 = b2r + a2r * (0.5 * h * b1);
  const Vec x3 = x + 0.5 * h * k2;
  const Vec k3 = detail::vtvl_deriv(p, x3, u, mass);
  Mat a3r, b3r;
  detail::vtvl_deriv_jac(p, x3, u, mass, a3r, b3r);
  const Mat a3 = a3r * (eye + 0.5 * h * a2);
  const Mat b3 = b3r + a3r * (0.5 * h * b2);
  const Vec x4 = x + h * k3;
  Mat a4r, b4r;
  detail::vtvl_deriv_jac(p, x4, u, mass, a4r, b4r);
  const Mat a4 = a4r * (eye + h * a3);
  const Mat b4 = b4r + a4r * (h * b3);
  return {eye + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
          (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)};
}

/// Constant-mass rocket used as the tuning surrogate. Output is the full
/// 6-dimensional state, so window seeding is a selection.
class VtvlModel final : public SurrogateModel {
 public:
  explicit VtvlModel(VtvlParams params) : params_(params) {
    params_.validate();
    params_.mass_mode = MassMode::constant;
  }

  const VtvlParams& params() const { return params_; }
  Index state_dim() const override { return 6; }
  Index input_dim() const override { return 3; }
  Index output_dim() const override { return 6; }
  bool full_state_output() const override { return true; }

  Vec step(const Vec& x, const Vec& u) const override {
    return vtvl_step_at_mass(params_, x, u, params_.m0);
  }
  Vec output(const Vec& x, const Vec&) const override { return x; }
  std::pair<Mat, Mat> jac_step(const Vec& x, const Vec& u) const override {
    return vtvl_step_jacobians_at_mass(params_, x, u, params_.m0);
  }
  std::pair<Mat, Mat> jac_output(const Vec&, const Vec&) const override {
    return {Mat::Identity(6, 6), Mat::Zero(6, 3)};
  }

 private:
  VtvlParams params_;
};

/// Evaluation plant: the 6 physical states plus mass as a seventh state.
/// Mass is held constant within each integrator step, then reduced by
/// burn_rate * F_E * dt (fuel_burn mode), floored at 1% of m0 so the
/// dynamics stay defined. Output exposes only the physical states.
class VtvlPlant final : public Model {
 public:
  explicit VtvlPlant(VtvlParams params) : params_(params) { params_.validate(); }

  const VtvlParams& params() const { return params_; }
  Index state_dim() const override { return 7; }
  Index input_dim() const override { return 3; }
  Index output_dim() const override { return 6; }

  Vec initial_state(const Vec& physical) const {
    require(physical.size() == 6, "physical state must have 6 entries");
    Vec x(7);
    x << physical, params_.m0;
    return x;
  }

  Vec step(const Vec& x, const Vec& u) const override {
    require(x.size() == 7, "plant state must have 7 entries");
    const double mass = x(6);
    Vec next(7);
    next.head(6) = vtvl_step_at_mass(params_, x.head(6), u, mass);
    next(6) = params_.mass_mode == MassMode::fuel_burn
                  ? std::max(mass - params_.burn_rate * u(0) * params_.dt, 0.01 * params_.m0)
                  : mass;
    return next;
  }

  Vec output(const Vec& x, const Vec&) const override { return x.head(6); }

 private:
  VtvlParams params_;
};

struct LinearizedModel {
  LtiModel model;
  double equilibrium_residual = 0.0;  // |f(x_eq, u_eq)|_inf before linearizing
};

/// Jacobian linearization at (x_eq, u_eq) followed by exact ZOH sampling.
/// A non-equilibrium point is accepted; the residual is reported so callers
/// can decide whether the affine error matters.
inline LinearizedModel linearize_discretize(const VtvlParams& params, const Vec& x_eq,
                                            const Vec& u_eq, double dt) {
  params.validate();
  require(x_eq.size() == 6 && u_eq.size() == 3, "equilibrium point has wrong dimensions");
  Mat jx, ju;
  detail::vtvl_deriv_jac(params, x_eq, u_eq, params.m0, jx, ju);
  const auto [ad, bd] = zoh_discretize(jx, ju, dt);
  LinearizedModel out;
  out.model = LtiModel(ad, bd, Mat::Identity(6, 6), Mat::Zero(6, 3));
  out.equilibrium_residual =
      detail::vtvl_deriv(params, x_eq, u_eq, params.m0).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace ddc
