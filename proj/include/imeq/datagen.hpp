#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "imeq/common.hpp"
#include "imeq/expr.hpp"
#include "imeq/fitness.hpp"

namespace imeq {

// Configuration of the synthetic training-corpus generator.
struct GenConfig {
  // Every sampled tree has exactly this many operator nodes.
  int non_leaf_nodes = 5;
  // A leaf is a variable with probability p_var (uniform over x_1..x_3),
  // otherwise a constant drawn from N(0, 1).
  double p_var = 0.8;
  // Rows per accepted sample.
  int n_points = 200;
  // Interval scanned for roots of the univariate slice, split into
  // scan_subdivisions equal pieces; roots outside are unreachable.
  double scan_lo = -10.0;
  double scan_hi = 10.0;
  int scan_subdivisions = 100;
  // One trial = one draw of the non-solved coordinates. -1 selects the
  // default budget of 10 * n_points.
  int max_point_trials = -1;
  // Accepted samples to write (discarded equations do not count).
  int k_samples = 0;
  std::uint64_t seed = 0;
  // Restricted grammars: operator subset (empty = all operators, drawn
  // with the full weight table) and the highest variable index leaves may
  // use (1..kDMax).
  std::vector<Op> allowed_ops;
  int max_var = kDMax;

  int trial_budget() const {
    return max_point_trials >= 0 ? max_point_trials : 10 * n_points;
  }
};

// One corpus record: a ground-truth equation, its constant-free skeleton,
// and points satisfying the equation.
struct TrainingSample {
  Skeleton skeleton;              // constants replaced by placeholders
  std::vector<double> constants;  // prefix order; instantiate() inverse
  PointMatrix points;             // n_points x kDMax, unused columns zero
  std::set<int> used_dims;        // 1-based variable indices of `equation`
  Expr equation;                  // the instantiated ground truth
};

// Samples a random tree with exactly cfg.non_leaf_nodes operator nodes.
// Operators are drawn with probability weight / kOpWeightTotal; the
// position to expand is chosen uniformly among pending positions.
Expr sample_equation(const GenConfig& cfg, Rng& rng);

// Samples cfg.n_points roots of f(x) = 0: per point one used dimension is
// chosen uniformly and solved for (sign-change scan + bisection to
// |f| <= 1e-10, uniform choice among found roots) while the other used
// dimensions are drawn from N(0, 1); unused dimensions stay zero.
// Returns nullopt ("discarded") when the trial budget runs out, which
// marks f as ill-conditioned.
std::optional<PointMatrix> sample_points(const Expr& f, const GenConfig& cfg,
                                         Rng& rng);

// Packs an equation and its points into a corpus record.
TrainingSample build_sample(const Expr& f, PointMatrix points);

// One JSONL record: {"skeleton", "constants", "points", "dims", "expr"}.
std::string sample_to_json(const TrainingSample& s);
TrainingSample sample_from_json(const std::string& line);

// Writes cfg.k_samples accepted records to out_path as JSONL. Each worker
// owns an independent seed-derived stream; output is byte-deterministic
// for a fixed seed and worker count, and the single-worker stream defines
// the canonical order.
void generate_corpus(const GenConfig& cfg, const std::string& out_path,
                     int workers = 1);

std::vector<TrainingSample> load_corpus(const std::string& path);

}  // namespace imeq
