#pragma once

#include <algorithm>
#include <string>

#include "ddc/common.hpp"

namespace ddc {

/// Sign-based step-size adaptation constants. Steps grow after two gradients
/// of equal sign, shrink after a sign flip, and always stay in
/// [eta_min, eta_max]. No weight backtracking is performed.
struct RpropParams {
  double eta0 = 1.0;
  double eta_min = 1e-3;
  double eta_max = 100.0;
  double grow = 1.2;
  double shrink = 0.5;

  void validate() const {
    require(eta_min > 0.0 && eta_max >= eta_min, "step bounds must satisfy 0 < eta_min <= eta_max");
    require(eta0 >= eta_min && eta0 <= eta_max, "eta0 must lie in [eta_min, eta_max]");
    require(grow > 1.0, "grow factor must exceed 1");
    require(shrink > 0.0 && shrink < 1.0, "shrink factor must lie in (0, 1)");
  }
};

inline Vec project_box(const Vec& v, const Box& box) {
  box.validate(v.size(), "projection");
  return box.clamp(v);
}

/// The unprojected iterate gamma carries the optimizer's memory; the
/// projected point lambda = clamp(gamma) is what callers evaluate. Projection
/// never overwrites gamma, so the iterate can re-enter the box later.
/// prev_grad holds the previous gradient's sign pattern: only signs feed the
/// update, and storing them keeps states identical under gradient rescaling.
struct RpropState {
  Vec gamma;
  Vec lambda;
  Vec eta;
  Vec prev_grad;
  Box box;
};

inline RpropState rprop_init(const Vec& init, const Box& box, const RpropParams& params) {
  params.validate();
  box.validate(init.size(), "rprop");
  RpropState s;
  s.gamma = init;
  s.box = box;
  s.lambda = box.clamp(init);
  s.eta = Vec::Constant(init.size(), params.eta0);
  s.prev_grad = Vec::Zero(init.size());
  return s;
}

/// One projected step. Per coordinate: adapt the step size from the sign
/// agreement of the new gradient with the stored one, then move gamma by
/// -eta * sign(grad). A zero gradient leaves both eta and gamma unchanged.
inline RpropState rprop_step(const RpropState& state, const Vec& grad,
                             const RpropParams& params) {
  params.validate();
  require(grad.size() == state.gamma.size(),
          "gradient has length " + std::to_string(grad.size()) + ", expected " +
              std::to_string(state.gamma.size()));
  require(grad.allFinite(), "gradient contains non-finite entries");

  RpropState s = state;
  for (Index i = 0; i < grad.size(); ++i) {
    const double agreement = grad(i) * s.prev_grad(i);
    if (agreement > 0.0)
      s.eta(i) = std::min(s.eta(i) * params.grow, params.eta_max);
    else if (agreement < 0.0)
      s.eta(i) = std::max(s.eta(i) * params.shrink, params.eta_min);
    s.gamma(i) -= s.eta(i) * sign(grad(i));
    s.prev_grad(i) = sign(grad(i));
  }
  s.lambda = s.box.clamp(s.gamma);
  return s;
}

}  // namespace ddc
