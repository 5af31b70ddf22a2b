#pragma once

#include <functional>
#include <span>
#include <vector>

#include "imeq/fitness.hpp"

namespace imeq {

struct BfgsConfig {
  int max_iters = 200;
  double grad_tol = 1e-8;
  double fd_step = 1e-6;  // central-difference step
  double c1 = 1e-4;       // Armijo (sufficient decrease)
  double c2 = 0.9;        // curvature
  // Number of independently initialized fitting attempts in
  // fit_constants, each starting from c ~ N(0,1). 0 and 1 both mean a
  // single attempt (no restarting).
  int restarts = 4;
};

struct OptResult {
  std::vector<double> x;
  double fx = 0.0;
  int iters = 0;
  bool converged = false;  // gradient tolerance reached
};

using Objective = std::function<double(std::span<const double>)>;
using IterateCallback = std::function<void(std::span<const double>, double)>;

// BFGS with inverse-Hessian updates and a strong-Wolfe line search;
// gradients by central finite differences. Non-finite objective values
// away from the current iterate are treated as +inf (the trial step is
// rejected), so the method never leaves the feasible region it started
// in. Throws NonFiniteObjective when objective(x0) is not finite.
OptResult bfgs_minimize(const Objective& objective, std::vector<double> x0,
                        const BfgsConfig& cfg = {},
                        const IterateCallback& on_accept = nullptr);

// Central-difference gradient (one-sided at infeasible samples).
std::vector<double> finite_diff_gradient(const Objective& objective,
                                         std::vector<double> x, double h = 1e-6);

enum class FitnessKind { clfem, vanilla };

// How the degeneracy gate interacts with the optimizer: by default the
// smooth residual is minimized and CL-FEM is applied to the final
// constants of each attempt; gated_objective instead adds a large penalty
// inside the objective whenever the current constants are degenerate.
enum class FitGate { smooth_then_gate, gated_objective };

struct FitResult {
  std::vector<double> constants;
  FitnessResult fitness;
  double residual = 0.0;  // final smooth objective value
};

// Fits the skeleton's constants by minimizing (1/N) sum ||f_c(x_n)||_ell
// (NotFinite points contribute kNotFinitePenalty each), one BFGS run per
// restart with fresh c ~ N(0,1), then ranks the attempts by fitness --
// CL-FEM by default, plain vanilla fitness when kind==vanilla. Degenerate
// (NegInfinity) attempts rank below every finite one; if every attempt is
// degenerate, throws AllRestartsDegenerate.
FitResult fit_constants(const Skeleton& s, const PointMatrix& data,
                        const ClfemConfig& clfem_cfg, const BfgsConfig& bfgs_cfg,
                        Rng& rng, FitnessKind kind = FitnessKind::clfem,
                        FitGate gate = FitGate::smooth_then_gate);

}  // namespace imeq
