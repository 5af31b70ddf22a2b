#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "imeq/expr.hpp"

namespace imeq {

using Point = std::array<double, kDMax>;
using PointMatrix = std::vector<Point>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Contribution of a NotFinite evaluation to a residual sum.
inline constexpr double kNotFinitePenalty = 1e9;

struct ClfemConfig {
  double tau = 1e-4;
  double L = -1.0;
  double U = 1.0;
  // Residual magnitude exponent: 1 -> mean |f|, 2 -> mean f^2.
  int norm_ell = 1;
  // When true, the stochastic datasets D^j are drawn from stochastic_seed
  // on every call instead of the caller's stream, so repeated evaluations
  // (BFGS restarts, competing candidates) see identical perturbations.
  bool pin_stochastic = false;
  uint64_t stochastic_seed = 0;
};

struct FitnessResult {
  double value = 0.0;
  std::map<int, double> d;       // per-dimension distance d_j, valid dims only
  std::set<int> degenerate_dims;
  // Set when more than half of the data points evaluate NotFinite; value is
  // NegInfinity then even with no degenerate dimension.
  bool domain_failure = false;

  bool degenerate() const { return value == kNegInf; }
};

// -(1/N) * sum ||f(x_n)||_ell ; NotFinite points add kNotFinitePenalty to
// the sum. 0 is the maximum (attained on exact roots -- and by the
// degenerate zero function, which is what CL-FEM exists to reject).
double vanilla_fitness(const Expr& f, const PointMatrix& data, int ell = 1);

// Dimensions j (1-based) whose data column is not identically zero. These
// are the "valid (non-padding) dimensions" that CL-FEM probes.
std::set<int> valid_dims(const PointMatrix& data);

// Copy of data with column j resampled uniformly in (L, U).
PointMatrix make_stochastic_dataset(const PointMatrix& data, int j,
                                    const ClfemConfig& cfg, Rng& rng);

// CL-FEM: for every valid dimension j of the data, d_j = mean over points
// of (f(x_n) - f(x_n^j))^2. Any d_j <= tau marks the candidate degenerate
// (value = NegInfinity); otherwise the value is the vanilla residual term.
// d_j is averaged over the point pairs where both evaluations are finite,
// so a candidate structurally independent of dimension j yields d_j = 0
// exactly no matter how its domain interacts with the perturbation; a
// dimension with no finite pair reports d_j = +inf (no degeneracy
// evidence, and such candidates drown in residual penalties anyway).
FitnessResult clfem_fitness(const Expr& f, const PointMatrix& data,
                            const ClfemConfig& cfg, Rng& rng);

}  // namespace imeq
