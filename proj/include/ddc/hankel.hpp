#pragma once

#include <string>
#include <utility>

#include "ddc/common.hpp"

namespace ddc {

/// Raw input/output trajectory, one column per time step.
struct RawTrajectory {
  Mat u;  // m x T
  Mat y;  // p x T

  RawTrajectory() = default;
  RawTrajectory(Mat u_in, Mat y_in) : u(std::move(u_in)), y(std::move(y_in)) {
    require(u.cols() == y.cols(),
            "trajectory input/output lengths differ: u has " + std::to_string(u.cols()) +
                " steps, y has " + std::to_string(y.cols()));
    require(u.cols() > 0, "trajectory is empty");
  }

  Index input_dim() const { return u.rows(); }
  Index output_dim() const { return y.rows(); }
  Index length() const { return u.cols(); }
};

struct HorizonSpec {
  Index t_ini = 1;
  Index t_f = 1;

  void validate() const {
    require(t_ini >= 1, "t_ini must be >= 1, got " + std::to_string(t_ini));
    require(t_f >= 1, "t_f must be >= 1, got " + std::to_string(t_f));
  }
  Index depth() const { return t_ini + t_f; }
};

/// Most recent t_ini input/output pairs, stacked step-major:
/// u_ini = col(u_{-t_ini+1}, ..., u_0), same for y_ini.
struct InitialWindow {
  Vec u_ini;
  Vec y_ini;

  Vec stacked() const {
    Vec w(u_ini.size() + y_ini.size());
    w << u_ini, y_ini;
    return w;
  }
};

/// Block-Hankel matrix of depth L: column j stacks w_j, ..., w_{j+L-1}.
inline Mat build_hankel(const Mat& w, Index depth) {
  require(depth >= 1, "Hankel depth must be >= 1, got " + std::to_string(depth));
  const Index t = w.cols();
  require(depth <= t, "Hankel depth " + std::to_string(depth) +
                          " exceeds trajectory length " + std::to_string(t));
  const Index q = w.rows();
  const Index cols = t - depth + 1;
  Mat h(q * depth, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < depth; ++i) h.block(i * q, j, q, 1) = w.col(j + i);
  return h;
}

/// Orthogonal projector onto the row space of m (pi = m^+ m), computed by SVD.
/// Singular values below rel_tol * sigma_max are treated as zero.
inline Mat range_projector(const Mat& m, double rel_tol = 1e-10) {
  Eigen::BDCSVD<Mat> svd(m, Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rel_tol * sv(0) : 0.0;
  Index rank = 0;
  while (rank < sv.size() && sv(rank) > cutoff) ++rank;
  const Mat vr = svd.matrixV().leftCols(rank);
  return vr * vr.transpose();
}

/// Hankel data split into past/future blocks plus the regularizer projector.
struct HankelPartition {
  Mat up, yp, uf, yf;
  Mat pi;  // projector onto row space of (Up; Yp; Yf)
  Index input_dim = 0, output_dim = 0;
  HorizonSpec horizon;

  Index cols() const { return up.cols(); }

  /// Past window stored in column j (used to seed closed-loop rollouts).
  InitialWindow window_at(Index j) const {
    require(j >= 0 && j < cols(), "window index " + std::to_string(j) +
                                      " out of range [0, " + std::to_string(cols()) + ")");
    return InitialWindow{up.col(j), yp.col(j)};
  }
};

inline HankelPartition partition(const RawTrajectory& traj, const HorizonSpec& horizon) {
  horizon.validate();
  const Index depth = horizon.depth();
  const Index min_len = depth;  // at least one Hankel column
  require(traj.length() >= min_len,
          "trajectory length " + std::to_string(traj.length()) +
              " too short for t_ini + t_f = " + std::to_string(depth));
  const Index m = traj.input_dim();
  const Index p = traj.output_dim();
  const Mat hu = build_hankel(traj.u, depth);
  const Mat hy = build_hankel(traj.y, depth);

  HankelPartition part;
  part.input_dim = m;
  part.output_dim = p;
  part.horizon = horizon;
  part.up = hu.topRows(m * horizon.t_ini);
  part.uf = hu.bottomRows(m * horizon.t_f);
  part.yp = hy.topRows(p * horizon.t_ini);
  part.yf = hy.bottomRows(p * horizon.t_f);

  Mat stacked(part.up.rows() + part.yp.rows() + part.yf.rows(), part.up.cols());
  stacked << part.up, part.yp, part.yf;
  part.pi = range_projector(stacked);
  return part;
}

struct PersistencyReport {
  bool persistently_exciting = false;
  Index required_rank = 0;
  Index rank = 0;
  Vec singular_values;
};

/// Raised when a dataset fails the excitation rank check.
class PersistencyError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

/// An input u is persistently exciting of order L when H_L(u) has full row rank.
/// Rank uses the same relative singular-value cutoff as the projector.
inline PersistencyReport check_persistent_excitation(const Mat& u, Index order,
                                                     double rel_tol = 1e-10) {
  require(order >= 1, "persistency order must be >= 1");
  PersistencyReport rep;
  rep.required_rank = u.rows() * order;
  const Mat h = build_hankel(u, order);
  Eigen::BDCSVD<Mat> svd(h);
  rep.singular_values = svd.singularValues();
  const double cutoff =
      rep.singular_values.size() > 0 ? rel_tol * rep.singular_values(0) : 0.0;
  rep.rank = 0;
  while (rep.rank < rep.singular_values.size() && rep.singular_values(rep.rank) > cutoff)
    ++rep.rank;
  rep.persistently_exciting = rep.rank == rep.required_rank;
  return rep;
}

/// Uniformly samples one stored past window (Monte Carlo initial condition).
inline Index sample_window_index(const HankelPartition& part, SplitMix64& rng) {
  return static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(part.cols())));
}

inline InitialWindow sample_initial_window(const HankelPartition& part, SplitMix64& rng) {
  return part.window_at(sample_window_index(part, rng));
}

}  // namespace ddc
