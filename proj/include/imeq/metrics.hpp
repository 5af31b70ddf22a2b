#pragma once

// Solver-based evaluation: sample points on the predicted zero set, score
// them against the ground truth, and normalize to a [0, 1] fitness.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "imeq/common.hpp"
#include "imeq/expr.hpp"
#include "imeq/fitness.hpp"
#include "imeq/numopt.hpp"

namespace imeq {

struct MetricConfig {
  int M = 200;           // solution samples drawn on the predicted zero set
  int norm_samples = 10;  // ambient draws for the normalization term
  double solver_tol = 1e-6;
  // Minimum fraction of the M solver runs that must converge for the report
  // to score the prediction; below it the report falls back to the
  // solver-failure outcome (nmse = +inf, fitness = 0). 0 scores any nonempty
  // solution set.
  double min_accepted_fraction = 0.0;
  std::vector<double> taus = {0.5, 0.7, 0.8, 0.9, 0.99};
  std::uint64_t rng_seed = 0;
  BfgsConfig solver;  // minimizes f_hat(x)^2 from each initial point
};

struct EvalReport {
  double mse = 0.0;
  double nmse = 0.0;     // +infinity when no point could be scored
  double fitness = 0.0;  // 1 / (1 + sqrt(nmse))
  std::map<double, int> acc;  // tau -> indicator fitness >= tau
  int accepted_points = 0;
};

// Draws M initial points from N(0, I) over `dims` (all other coordinates
// zero), minimizes f_hat(x)^2 with BFGS from each, and keeps the points
// where |f_hat| <= solver_tol. An empty `dims` means the full ambient
// space. The rng consumption is independent of f_hat, so two calls with
// equal seeds visit identical initial points.
PointMatrix sample_solutions(const Expr& f_hat, const std::set<int>& dims,
                             const MetricConfig& cfg, Rng& rng);

// Convenience form: samples over f_hat's own used dimensions.
PointMatrix sample_solutions(const Expr& f_hat, int M, Rng& rng);

// Scores f_hat against f_true: MSE of |f_true|^2 over solutions of
// f_hat = 0, normalized by the ambient mean of |f_true|^2, mapped through
// fitness = 1/(1 + sqrt(NMSE)). The sampling space is the set of
// dimensions f_true uses. Throws DegenerateTruth when the normalization
// term is below 1e-12 (the truth vanishes almost everywhere).
EvalReport fitness_metric(const Expr& f_hat, const Expr& f_true,
                          const MetricConfig& cfg, Rng& rng);

std::string report_to_json(const EvalReport& report);

}  // namespace imeq
