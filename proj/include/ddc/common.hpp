#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace ddc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Configuration or dimension mismatch detected before any numerics run.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical breakdown inside a solver (singular Newton system, non-finite iterate).
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, int iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_ = -1;
};

/// State estimation failure (filter divergence, missing full-state output).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Counter-based splitmix64. Deterministic across platforms; used everywhere
/// randomness is needed so identical seeds give bitwise-identical runs.
struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
  std::uint64_t uniform_int(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

  /// Standard normal via Box-Muller (uses two draws, no cached spare).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
};

/// Mixes a stream id into a seed so derived generators are decorrelated.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
  return rng.next();
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

/// Per-channel bounds; entries may be +-inf for unconstrained channels.
struct Box {
  Vec lower;
  Vec upper;

  static Box unbounded(Index dim) {
    return Box{Vec::Constant(dim, -kInf), Vec::Constant(dim, kInf)};
  }

  void validate(Index dim, const std::string& name) const {
    require(lower.size() == dim && upper.size() == dim,
            name + " box must have " + std::to_string(dim) + " channels");
    for (Index i = 0; i < dim; ++i) {
      require(!std::isnan(lower(i)) && !std::isnan(upper(i)), name + " box contains NaN");
      require(lower(i) <= upper(i),
              name + " box has lower > upper on channel " + std::to_string(i));
    }
  }

  Vec clamp(const Vec& v) const {
    return v.cwiseMax(lower).cwiseMin(upper);
  }
};

}  // namespace ddc
