#pragma once

// Genetic-programming baseline for implicit equation discovery: tree-based
// individuals with literal constants, tournament selection, subtree
// crossover/mutation, and best-so-far elitism, under either the vanilla
// residual fitness or the anti-degeneracy CL-FEM fitness.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "imeq/common.hpp"
#include "imeq/expr.hpp"
#include "imeq/fitness.hpp"
#include "imeq/numopt.hpp"

namespace imeq {

struct Individual {
  Expr expr;
  double fitness = kNegInf;
};

// Optional per-generation observer, invoked after each generation's
// population is scored (structural property checks, logging).
using GenerationCallback =
    std::function<void(int generation, const std::vector<Individual>&)>;

struct GpConfig {
  int population = 2000;
  int generations = 20;
  int tournament = 20;
  double p_crossover = 0.9;
  double p_subtree_mutation = 0.01;  // remainder is plain reproduction
  int max_depth = 8;
  FitnessKind fitness_mode = FitnessKind::clfem;
  std::uint64_t rng_seed = 0;

  // Ramped half-and-half initialization depths (inclusive).
  int init_depth_min = 2;
  int init_depth_max = 6;
  // Variation retries before falling back to reproducing the parent when
  // the offspring would exceed max_depth.
  int max_retries = 10;
  // When true, each individual's constants are refit with BFGS before
  // scoring (expensive; off by default like the reference baseline).
  bool refit_constants = false;
  // CL-FEM settings; the stochastic perturbations are pinned to a seed
  // derived from rng_seed unless already pinned, so fitness values are
  // comparable across the whole run.
  ClfemConfig clfem;
  BfgsConfig bfgs;  // used only when refit_constants is set
  GenerationCallback on_generation;
};

struct GenStats {
  int generation = 0;  // 0 is the initial population
  double best_fitness = kNegInf;
  // Mean over individuals with finite fitness (NegInfinity if none).
  double mean_fitness = kNegInf;
};

struct GpResult {
  Individual best;
  std::vector<GenStats> stats;  // generations + 1 rows
};

// Uniformly chosen subtree index (prefix order) — the shared selection
// primitive of crossover and mutation.
int uniform_subtree_index(const Expr& e, Rng& rng);

// Returns `a` with a uniformly chosen subtree replaced by a uniformly
// chosen subtree of `b`. Offspring deeper than max_depth are rejected and
// redrawn up to max_retries times, then `a` is returned unchanged.
Expr crossover(const Expr& a, const Expr& b, int max_depth, int max_retries,
               Rng& rng);

// Replaces a uniformly chosen subtree of `a` with a fresh random tree. A
// chosen constant leaf is instead perturbed in place by N(0, 0.1) noise
// (point mutation of constants). Depth bound handled like crossover.
Expr mutate(const Expr& a, const std::vector<int>& dims, int max_depth,
            int max_retries, Rng& rng);

// Random tree over variables `dims` and N(0,1) constants. `full` places
// operators until the depth budget is exhausted; otherwise each position
// chooses uniformly from the combined operator/terminal alphabet.
Expr random_tree(const std::vector<int>& dims, int depth_budget, bool full,
                 Rng& rng);

// Index of the tournament winner: `tournament` contenders drawn uniformly
// with replacement, the highest fitness wins (earliest draw on ties).
int tournament_select(const std::vector<Individual>& pop, int tournament,
                      Rng& rng);

// Runs the evolutionary loop on one point set and returns the best-so-far
// individual plus per-generation statistics. Throws std::invalid_argument
// on a malformed config and IoError on empty data.
GpResult gp_run(const PointMatrix& data, const GpConfig& cfg);

// "generation,best_fitness,mean_fitness" rows for the stats file.
std::string gp_stats_csv(const std::vector<GenStats>& stats);

}  // namespace imeq
