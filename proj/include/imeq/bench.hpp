#pragma once

// Benchmark orchestration: equation suites, multiplicative input noise,
// and experiment sweeps producing result tables as CSV.

#include <cstdint>
#include <string>
#include <vector>

#include "imeq/common.hpp"
#include "imeq/datagen.hpp"
#include "imeq/expr.hpp"
#include "imeq/gp.hpp"
#include "imeq/inference.hpp"
#include "imeq/metrics.hpp"
#include "imeq/toml.hpp"

namespace imeq {

struct SuiteEquation {
  std::string id;
  Expr equation;
  PointMatrix points;  // roots of equation = 0, one row per point
};

struct BenchmarkSuite {
  std::string name;
  std::vector<SuiteEquation> equations;
};

struct SuiteConfig {
  std::string suites_dir = "suites";
  int n_points = 200;  // rows generated per equation
  // Per-equation point streams derive from this seed, so a suite's data is
  // a pure function of (file contents, seed, n_points).
  std::uint64_t data_seed = 0;
  // The `synthetic` suite is generated fresh instead of read from a file.
  int synthetic_count = 80;
  GenConfig gen;  // tree shape for the fresh synthetic draw
};

// Loads one of the bundled suites:
//   "ai_feynman"        39 physics equations read from suites_dir
//   "synthetic_paper50" 50 sampled equations read from suites_dir
//   "synthetic"         synthetic_count fresh equations from the corpus
//                       generator (held-out seed)
// File-based suites raise ParseError naming the offending equation line;
// equations whose point sampling exhausts its budget raise DegenerateTruth.
BenchmarkSuite load_suite(const std::string& name,
                          const SuiteConfig& cfg = {});

// Multiplicative coordinate noise x -> x * (1 + z), z ~ N(0, sigma) drawn
// independently per coordinate; zeros (padding included) stay zero.
PointMatrix add_noise(const PointMatrix& points, double sigma, Rng& rng);

enum class BenchMethod { pie, pie_vanilla, gp_vanilla, gp_clfem };

const char* method_name(BenchMethod m);
BenchMethod method_from_name(const std::string& name);

struct ExperimentConfig {
  std::string suite = "ai_feynman";
  BenchMethod method = BenchMethod::gp_clfem;
  std::vector<double> sigmas = {0.0};       // noise sweep, row-major outer loop
  std::vector<std::uint64_t> seeds = {0};   // per-run seeds
  std::string checkpoint;                   // model path, pie methods only
  int beam_size = 16;
  SuiteConfig suite_cfg;
  GpConfig gp;            // fitness_mode is overridden by `method`
  DiscoverConfig pie;     // beam/fitting knobs for the model pipeline
  MetricConfig metric;
  // When false the wall_time column is written as 0 so repeated runs are
  // byte-identical.
  bool record_wall_time = true;
};

struct BenchRow {
  std::string suite;
  std::string eq_id;
  std::string method;
  double sigma = 0.0;
  int n_points = 0;
  std::uint64_t seed = 0;
  double fitness = 0.0;
  std::vector<int> acc;  // aligned with metric taus
  double wall_time = 0.0;
  std::string error;  // empty on success
};

struct BenchResult {
  std::vector<double> taus;
  std::vector<BenchRow> rows;
};

// Runs method x sigma x equation x seed sequentially in a deterministic
// order. A failing cell never aborts the sweep: its row records fitness 0,
// zero accs, and an error tag.
BenchResult run_experiment(const ExperimentConfig& cfg);

// CSV table: one data row per cell followed by one aggregate row per
// (method, sigma) group; aggregate fitness is the mean and aggregate acc
// columns are the fraction of rows reaching each threshold, so the
// aggregates are recomputable from the data rows.
std::string bench_csv(const BenchResult& result);

// Reads ExperimentConfig from a parsed TOML table (keys documented in the
// README; unknown keys are ignored, seeds/sigmas accept arrays).
ExperimentConfig experiment_from_toml(const TomlTable& toml);

void run_experiment_to_csv(const ExperimentConfig& cfg,
                           const std::string& out_path);

}  // namespace imeq
