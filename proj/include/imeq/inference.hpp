#pragma once

// Beam-search skeleton decoding, constant recovery, and candidate
// selection: decode the most probable skeletons for a point set, fit each
// skeleton's constants, and keep the candidate with the best fitness.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "imeq/common.hpp"
#include "imeq/expr.hpp"
#include "imeq/model.hpp"
#include "imeq/numopt.hpp"

namespace imeq {

struct BeamConfig {
  int beam_size = 64;  // the CLI's desk default is 16
  // Longest emitted skeleton body (EOS excluded). The model wrapper
  // additionally caps this at max_seq_len - 1 so prefixes stay decodable.
  int max_len = 48;
  // No length penalty: hypotheses are ranked by raw total log-prob.
};

// One finished hypothesis: body tokens without SOS/EOS, and the total
// log-probability including the terminating EOS step.
struct BeamHyp {
  std::vector<int> tokens;
  double log_prob = 0.0;
};

// Scores a batch of decoder prefixes (each beginning with SOS) and returns
// one row of next-token log-probabilities per prefix.
using StepScorer = std::function<std::vector<std::vector<double>>(
    const std::vector<std::vector<int>>&)>;

// Log-prob beam search over an arbitrary scorer. Starts from SOS, never
// proposes PAD or SOS, retires a hypothesis when it takes EOS, and drops
// hypotheses that exceed max_len without finishing. Returns the top
// beam_size finished hypotheses ordered by log-prob descending, then by
// fewer tokens, then lexicographically.
std::vector<BeamHyp> beam_search_scored(const StepScorer& scorer, int vocab,
                                        const BeamConfig& cfg);

// Encodes the point set once and beam-decodes skeleton bodies from it.
std::vector<BeamHyp> beam_search(const Model& model, const PointMatrix& points,
                                 const BeamConfig& cfg);

// A decoded hypothesis after parsing and constant fitting. `value` is the
// selection fitness (CL-FEM by default): NegInfinity when parsing failed
// or every fitting attempt was degenerate.
struct Candidate {
  std::vector<int> tokens;
  double log_prob = 0.0;
  bool parsed = false;
  Skeleton skeleton;              // empty unless parsed
  std::vector<double> constants;  // fitted slot values, prefix order
  double value = kNegInf;
  bool fitted = false;
  std::string error;  // "", "parse_failed", "degenerate", "non_finite"
};

struct DiscoverConfig {
  BeamConfig beam;
  ClfemConfig clfem;
  BfgsConfig bfgs;
  FitnessKind fitness_kind = FitnessKind::clfem;
  std::uint64_t seed = 0;
};

// Parses and fits every hypothesis against the data. All candidates share
// one pinned stochastic-perturbation seed (derived from cfg.seed unless
// cfg.clfem already pins one) so their fitness values are comparable; each
// candidate's fitting restarts draw from an independent per-index stream.
// Returns candidates sorted by fitness descending, ties broken by fewer
// tokens, then by higher log-prob.
std::vector<Candidate> evaluate_candidates(const std::vector<BeamHyp>& hyps,
                                           const PointMatrix& points,
                                           const DiscoverConfig& cfg);

struct DiscoverResult {
  Candidate best;
  std::vector<Candidate> candidates;  // every evaluated candidate, best first
};

// Full decoding pipeline: beam-search the skeletons, fit and score each,
// return the best viable candidate. Throws NoViableCandidate when the beam
// finishes nothing or every candidate fails parsing / degenerates.
DiscoverResult discover(const Model& model, const PointMatrix& points,
                        const DiscoverConfig& cfg);

// JSON report: {"expr_prefix", "constants", "clfem", "log_prob",
// "all_candidates": [...]}. expr_prefix is the fitted expression when
// fitting succeeded, otherwise the skeleton (or raw tokens when unparsed);
// non-finite fitness values serialize as null.
std::string discover_to_json(const DiscoverResult& result);

// Reads one point set: CSV rows "x1,x2,x3" (shorter rows are zero-padded,
// a non-numeric header line is skipped) or JSONL (one JSON array per line,
// or corpus records, in which case the first record's points are used).
PointMatrix load_points_file(const std::string& path);

}  // namespace imeq
