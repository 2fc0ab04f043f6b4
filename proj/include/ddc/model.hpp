#pragma once

#include <unsupported/Eigen/MatrixFunctions>

#include <string>
#include <utility>

#include "ddc/hankel.hpp"

namespace ddc {

/// Discrete-time dynamics x+ = f(x, u), y = h(x, u).
class Model {
 public:
  virtual ~Model() = default;
  virtual Index state_dim() const = 0;
  virtual Index input_dim() const = 0;
  virtual Index output_dim() const = 0;
  virtual Vec step(const Vec& x, const Vec& u) const = 0;
  virtual Vec output(const Vec& x, const Vec& u) const = 0;

  /// Maps the most recent measurement window to a state estimate. The base
  /// contract only supports models that declare a full-state output; models
  /// with richer structure override this.
  virtual Vec init_state(const InitialWindow& wini) const {
    if (full_state_output()) {
      require(wini.y_ini.size() >= state_dim(), "window output block shorter than the state");
      return wini.y_ini.tail(state_dim());
    }
    throw EstimationError(
        "model does not expose a full-state output; supply an explicit initial state");
  }

  /// True when y = x exactly, making window seeding a selection.
  virtual bool full_state_output() const { return false; }
};

/// Differentiable model: exposes Jacobians of both maps for sensitivity
/// propagation through closed-loop rollouts.
class SurrogateModel : public Model {
 public:
  /// (df/dx: n x n, df/du: n x m)
  virtual std::pair<Mat, Mat> jac_step(const Vec& x, const Vec& u) const = 0;
  /// (dh/dx: p x n, dh/du: p x m)
  virtual std::pair<Mat, Mat> jac_output(const Vec& x, const Vec& u) const = 0;
};

/// Exact zero-order-hold discretization via the matrix exponential of the
/// augmented block matrix [[Ac, Bc], [0, 0]] * dt.
inline std::pair<Mat, Mat> zoh_discretize(const Mat& ac, const Mat& bc, double dt) {
  const Index n = ac.rows();
  const Index m = bc.cols();
  require(ac.cols() == n, "Ac must be square");
  require(bc.rows() == n, "Bc must have as many rows as Ac");
  require(dt >= 0.0, "sample time must be nonnegative");
  Mat aug = Mat::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = ac;
  aug.topRightCorner(n, m) = bc;
  const Mat e = (aug * dt).exp();
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

/// Stationary predicted error covariance of the Kalman filter, by fixed-point
/// iteration of the Riccati update. Needs (A, C) detectable and V invertible.
inline Mat steady_state_covariance(const Mat& a, const Mat& c, const Mat& w, const Mat& v,
                                   int max_iters = 20000, double tol = 1e-13) {
  const Index n = a.rows();
  Mat p = Mat::Identity(n, n);
  for (int k = 0; k < max_iters; ++k) {
    const Mat s = c * p * c.transpose() + v;
    Eigen::LLT<Mat> llt(s);
    if (llt.info() != Eigen::Success)
      throw EstimationError("innovation covariance not positive definite");
    const Mat gain = llt.solve(c * p).transpose();  // P C' S^-1
    const Mat next = a * (p - gain * c * p) * a.transpose() + w;
    const double diff = (next - p).cwiseAbs().maxCoeff();
    p = 0.5 * (next + next.transpose());
    if (diff <= tol * (1.0 + p.cwiseAbs().maxCoeff())) return p;
  }
  throw EstimationError("steady-state filter covariance iteration did not converge");
}

/// Discrete-time LTI model with optional noise covariances used only by the
/// window-seeding filter. Empty covariances default to identity.
class LtiModel final : public SurrogateModel {
 public:
  Mat A, B, C, D;
  Mat w_cov;  // process noise, n x n PSD
  Mat v_cov;  // measurement noise, p x p PD

  LtiModel() = default;
  LtiModel(Mat a, Mat b, Mat c, Mat d, Mat w = Mat(), Mat v = Mat())
      : A(std::move(a)), B(std::move(b)), C(std::move(c)), D(std::move(d)),
        w_cov(std::move(w)), v_cov(std::move(v)) {
    const Index n = A.rows();
    require(A.cols() == n, "A must be square");
    require(B.rows() == n, "B must have " + std::to_string(n) + " rows");
    require(C.cols() == n, "C must have " + std::to_string(n) + " columns");
    require(D.rows() == C.rows() && D.cols() == B.cols(),
            "D must be " + std::to_string(C.rows()) + "x" + std::to_string(B.cols()));
    if (w_cov.size() == 0) w_cov = Mat::Identity(n, n);
    if (v_cov.size() == 0) v_cov = Mat::Identity(C.rows(), C.rows());
    require(w_cov.rows() == n && w_cov.cols() == n, "process covariance must be n x n");
    require(v_cov.rows() == C.rows() && v_cov.cols() == C.rows(),
            "measurement covariance must be p x p");
    full_state_ = C.rows() == n && C.isApprox(Mat::Identity(n, n), 1e-12) &&
                  (D.size() == 0 || D.isZero(1e-12));
  }

  Index state_dim() const override { return A.rows(); }
  Index input_dim() const override { return B.cols(); }
  Index output_dim() const override { return C.rows(); }
  bool full_state_output() const override { return full_state_; }

  Vec step(const Vec& x, const Vec& u) const override { return A * x + B * u; }
  Vec output(const Vec& x, const Vec& u) const override { return C * x + D * u; }
  std::pair<Mat, Mat> jac_step(const Vec&, const Vec&) const override { return {A, B}; }
  std::pair<Mat, Mat> jac_output(const Vec&, const Vec&) const override { return {C, D}; }

  /// Full-state models select the last output block; otherwise a steady-state
  /// Kalman filter sweeps the window and the posterior at the final
  /// measurement is returned (the window's last step is "now").
  Vec init_state(const InitialWindow& wini) const override {
    const Index n = state_dim();
    const Index m = input_dim();
    const Index p = output_dim();
    require(wini.u_ini.size() % m == 0 && wini.y_ini.size() % p == 0,
            "window length not a multiple of the channel counts");
    const Index t_ini = wini.y_ini.size() / p;
    require(t_ini >= 1 && wini.u_ini.size() / m == t_ini,
            "window input/output step counts differ");
    if (full_state_) return wini.y_ini.tail(n);

    const Mat p_pred = steady_state_covariance(A, C, w_cov, v_cov);
    const Mat s = C * p_pred * C.transpose() + v_cov;
    const Mat gain = Eigen::LLT<Mat>(s).solve(C * p_pred).transpose();
    Vec x_hat = Vec::Zero(n);
    for (Index i = 0; i < t_ini; ++i) {
      const Vec u_i = wini.u_ini.segment(i * m, m);
      const Vec y_i = wini.y_ini.segment(i * p, p);
      x_hat += gain * (y_i - C * x_hat - D * u_i);
      if (i + 1 < t_ini) x_hat = A * x_hat + B * u_i;
    }
    if (!x_hat.allFinite()) throw EstimationError("window filter produced a non-finite state");
    return x_hat;
  }

 private:
  bool full_state_ = false;
};

}  // namespace ddc
