#pragma once

// Umbrella header: data-driven predictive control with differentiable QP
// policies, closed-loop hyperparameter tuning, and a linearized MPC baseline.

#include "ddc/common.hpp"
#include "ddc/hankel.hpp"
#include "ddc/qp.hpp"
#include "ddc/deepc.hpp"
#include "ddc/rprop.hpp"
#include "ddc/model.hpp"
#include "ddc/vtvl.hpp"
#include "ddc/rollout.hpp"
#include "ddc/hunt.hpp"
#include "ddc/mpc.hpp"
#include "ddc/io.hpp"
#include "ddc/app.hpp"
