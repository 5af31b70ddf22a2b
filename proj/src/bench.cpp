#include "imeq/bench.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <utility>

#include "imeq/model.hpp"

namespace imeq {

namespace {

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

BenchmarkSuite load_suite_file(const std::string& name,
                               const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open suite file: " + path);
  BenchmarkSuite suite;
  suite.name = name;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    std::istringstream ls(line);
    std::string id;
    ls >> id;
    std::string prefix;
    std::getline(ls, prefix);
    SuiteEquation eq;
    eq.id = id;
    try {
      eq.equation = parse_prefix(prefix);
    } catch (const std::exception& e) {
      throw ParseError("suite " + name + ", equation " + id + ": " + e.what());
    }
    suite.equations.push_back(std::move(eq));
  }
  if (suite.equations.empty())
    throw IoError("suite file has no equations: " + path);
  return suite;
}

void generate_points(BenchmarkSuite& suite, const SuiteConfig& cfg) {
  GenConfig g = cfg.gen;
  g.n_points = cfg.n_points;
  // Physics equations include sharply peaked slices whose root-bearing
  // draws are rare; suite generation gets a deeper trial budget than the
  // corpus default unless the caller pinned one.
  if (g.max_point_trials < 0) g.max_point_trials = 100 * cfg.n_points;
  for (std::size_t i = 0; i < suite.equations.size(); ++i) {
    SuiteEquation& eq = suite.equations[i];
    Rng rng(mix_seed(cfg.data_seed, static_cast<std::uint64_t>(i) + 1));
    std::optional<PointMatrix> pts = sample_points(eq.equation, g, rng);
    if (!pts)
      throw DegenerateTruth("suite " + suite.name + ", equation " + eq.id +
                            ": point sampling budget exhausted");
    eq.points = std::move(*pts);
  }
}

BenchmarkSuite generate_synthetic_suite(const SuiteConfig& cfg) {
  BenchmarkSuite suite;
  suite.name = "synthetic";
  GenConfig g = cfg.gen;
  g.n_points = cfg.n_points;
  Rng rng(mix_seed(cfg.data_seed, 0x5EED));
  int accepted = 0;
  while (accepted < cfg.synthetic_count) {
    Expr eq = sample_equation(g, rng);
    if (eq.used_dimensions().empty()) continue;  // constant tree, unsolvable
    std::optional<PointMatrix> pts = sample_points(eq, g, rng);
    if (!pts) continue;  // ill-conditioned draw, discarded like the corpus
    SuiteEquation se;
    ++accepted;
    char id[32];
    std::snprintf(id, sizeof(id), "syn_gen_%03d", accepted);
    se.id = id;
    se.equation = std::move(eq);
    se.points = std::move(*pts);
    suite.equations.push_back(std::move(se));
  }
  return suite;
}

}  // namespace

BenchmarkSuite load_suite(const std::string& name, const SuiteConfig& cfg) {
  if (name == "synthetic") return generate_synthetic_suite(cfg);
  if (name == "ai_feynman" || name == "synthetic_paper50") {
    BenchmarkSuite suite =
        load_suite_file(name, cfg.suites_dir + "/" + name + ".txt");
    generate_points(suite, cfg);
    return suite;
  }
  throw ParseError("unknown suite: " + name);
}

PointMatrix add_noise(const PointMatrix& points, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("add_noise: sigma < 0");
  if (sigma == 0.0) return points;
  std::normal_distribution<double> noise(0.0, sigma);
  PointMatrix out = points;
  for (Point& p : out)
    for (int c = 0; c < kDMax; ++c) p[c] *= 1.0 + noise(rng);
  return out;
}

const char* method_name(BenchMethod m) {
  switch (m) {
    case BenchMethod::pie: return "pie";
    case BenchMethod::pie_vanilla: return "pie_vanilla";
    case BenchMethod::gp_vanilla: return "gp_vanilla";
    case BenchMethod::gp_clfem: return "gp_clfem";
  }
  return "unknown";
}

BenchMethod method_from_name(const std::string& name) {
  if (name == "pie") return BenchMethod::pie;
  if (name == "pie_vanilla") return BenchMethod::pie_vanilla;
  if (name == "gp_vanilla") return BenchMethod::gp_vanilla;
  if (name == "gp_clfem") return BenchMethod::gp_clfem;
  throw ParseError("unknown benchmark method: " + name);
}

namespace {

Expr run_method(const ExperimentConfig& cfg, const Model* model,
                const PointMatrix& data, std::uint64_t method_seed) {
  switch (cfg.method) {
    case BenchMethod::gp_vanilla:
    case BenchMethod::gp_clfem: {
      GpConfig g = cfg.gp;
      g.fitness_mode = cfg.method == BenchMethod::gp_vanilla
                           ? FitnessKind::vanilla
                           : FitnessKind::clfem;
      g.rng_seed = method_seed;
      return gp_run(data, g).best.expr;
    }
    case BenchMethod::pie:
    case BenchMethod::pie_vanilla: {
      DiscoverConfig d = cfg.pie;
      d.beam.beam_size = cfg.beam_size;
      d.fitness_kind = cfg.method == BenchMethod::pie_vanilla
                           ? FitnessKind::vanilla
                           : FitnessKind::clfem;
      d.seed = method_seed;
      DiscoverResult res = discover(*model, data, d);
      return instantiate(res.best.skeleton, res.best.constants);
    }
  }
  throw std::logic_error("unreachable method");
}

std::string error_tag(const std::exception& e) {
  if (dynamic_cast<const NoViableCandidate*>(&e)) return "no_viable_candidate";
  if (dynamic_cast<const AllRestartsDegenerate*>(&e)) return "degenerate";
  if (dynamic_cast<const DegenerateTruth*>(&e)) return "degenerate_truth";
  if (dynamic_cast<const NonFiniteObjective*>(&e)) return "non_finite";
  if (dynamic_cast<const MalformedPrefix*>(&e)) return "parse_failed";
  if (dynamic_cast<const IoError*>(&e)) return "io_error";
  return "error";
}

}  // namespace

BenchResult run_experiment(const ExperimentConfig& cfg) {
  const bool needs_model = cfg.method == BenchMethod::pie ||
                           cfg.method == BenchMethod::pie_vanilla;
  Model model;
  if (needs_model) {
    if (cfg.checkpoint.empty())
      throw IoError("bench: model methods require a checkpoint path");
    model = load_model(cfg.checkpoint);
  }
  const BenchmarkSuite suite = load_suite(cfg.suite, cfg.suite_cfg);

  BenchResult result;
  result.taus = cfg.metric.taus;
  for (std::size_t si = 0; si < cfg.sigmas.size(); ++si) {
    const double sigma = cfg.sigmas[si];
    for (std::size_t ei = 0; ei < suite.equations.size(); ++ei) {
      const SuiteEquation& eq = suite.equations[ei];
      for (std::uint64_t seed : cfg.seeds) {
        const std::uint64_t cell =
            mix_seed(mix_seed(mix_seed(seed, si + 1),
                              static_cast<std::uint64_t>(ei) + 1),
                     0xBE);
        BenchRow row;
        row.suite = suite.name;
        row.eq_id = eq.id;
        row.method = method_name(cfg.method);
        row.sigma = sigma;
        row.n_points = static_cast<int>(eq.points.size());
        row.seed = seed;
        row.acc.assign(result.taus.size(), 0);
        const auto t0 = std::chrono::steady_clock::now();
        try {
          Rng noise_rng(mix_seed(cell, 1));
          PointMatrix data = add_noise(eq.points, sigma, noise_rng);
          Expr pred = run_method(cfg, needs_model ? &model : nullptr, data,
                                 mix_seed(cell, 2));
          Rng metric_rng(mix_seed(cell, 3));
          EvalReport report =
              fitness_metric(pred, eq.equation, cfg.metric, metric_rng);
          row.fitness = report.fitness;
          for (std::size_t t = 0; t < result.taus.size(); ++t)
            row.acc[t] = report.acc.at(result.taus[t]);
        } catch (const std::exception& e) {
          row.fitness = 0.0;
          row.acc.assign(result.taus.size(), 0);
          row.error = error_tag(e);
        }
        const auto t1 = std::chrono::steady_clock::now();
        row.wall_time =
            cfg.record_wall_time
                ? std::chrono::duration<double>(t1 - t0).count()
                : 0.0;
        result.rows.push_back(std::move(row));
      }
    }
  }
  return result;
}

std::string bench_csv(const BenchResult& result) {
  std::ostringstream out;
  out << "suite,eq_id,method,sigma,n_points,seed,fitness";
  for (double tau : result.taus) out << ",acc_" << format_double("%g", tau);
  out << ",wall_time,error\n";

  auto write_row = [&](const BenchRow& row, const std::vector<double>& accs) {
    out << row.suite << ',' << row.eq_id << ',' << row.method << ','
        << format_double("%g", row.sigma) << ',' << row.n_points << ','
        << row.seed << ',' << format_double("%.9g", row.fitness);
    for (double a : accs) out << ',' << format_double("%.9g", a);
    out << ',' << format_double("%.6g", row.wall_time) << ',' << row.error
        << '\n';
  };

  // Aggregate accumulators per (method, sigma) group, in encounter order.
  struct Group {
    BenchRow proto;
    double fitness_sum = 0.0;
    std::vector<double> acc_sum;
    double time_sum = 0.0;
    int n = 0;
  };
  std::vector<Group> groups;
  auto group_for = [&](const BenchRow& row) -> Group& {
    for (Group& g : groups)
      if (g.proto.method == row.method && g.proto.sigma == row.sigma) return g;
    Group g;
    g.proto = row;
    g.proto.eq_id = "aggregate";
    g.proto.seed = 0;
    g.proto.error.clear();
    g.acc_sum.assign(result.taus.size(), 0.0);
    groups.push_back(std::move(g));
    return groups.back();
  };

  for (const BenchRow& row : result.rows) {
    std::vector<double> accs(row.acc.begin(), row.acc.end());
    write_row(row, accs);
    Group& g = group_for(row);
    g.fitness_sum += row.fitness;
    for (std::size_t t = 0; t < row.acc.size(); ++t) g.acc_sum[t] += row.acc[t];
    g.time_sum += row.wall_time;
    ++g.n;
  }
  for (const Group& g : groups) {
    BenchRow agg = g.proto;
    agg.fitness = g.fitness_sum / g.n;
    agg.wall_time = g.time_sum / g.n;
    std::vector<double> accs;
    for (double s : g.acc_sum) accs.push_back(s / g.n);
    write_row(agg, accs);
  }
  return out.str();
}

ExperimentConfig experiment_from_toml(const TomlTable& toml) {
  ExperimentConfig cfg;
  cfg.suite = toml.get_string("suite", cfg.suite);
  cfg.method = method_from_name(toml.get_string("method", "gp_clfem"));
  if (toml.has("sigmas"))
    cfg.sigmas = toml.get_double_array("sigmas");
  else
    cfg.sigmas = {toml.get_double("noise_sigma", 0.0)};
  if (toml.has("seeds"))
    cfg.seeds = toml.get_u64_array("seeds");
  else
    cfg.seeds = {toml.get_u64("seed", 0)};
  cfg.checkpoint = toml.get_string("checkpoint", "");
  cfg.beam_size = static_cast<int>(toml.get_int("beam_size", cfg.beam_size));
  cfg.record_wall_time =
      toml.get_bool("record_wall_time", cfg.record_wall_time);

  cfg.suite_cfg.suites_dir =
      toml.get_string("suites_dir", cfg.suite_cfg.suites_dir);
  cfg.suite_cfg.n_points =
      static_cast<int>(toml.get_int("n_points", cfg.suite_cfg.n_points));
  cfg.suite_cfg.data_seed = toml.get_u64("data_seed", cfg.suite_cfg.data_seed);
  cfg.suite_cfg.synthetic_count = static_cast<int>(
      toml.get_int("synthetic_count", cfg.suite_cfg.synthetic_count));

  cfg.gp.population =
      static_cast<int>(toml.get_int("gp.population", cfg.gp.population));
  cfg.gp.generations =
      static_cast<int>(toml.get_int("gp.generations", cfg.gp.generations));
  cfg.gp.tournament =
      static_cast<int>(toml.get_int("gp.tournament", cfg.gp.tournament));
  cfg.gp.p_crossover = toml.get_double("gp.p_crossover", cfg.gp.p_crossover);
  cfg.gp.p_subtree_mutation =
      toml.get_double("gp.p_subtree_mutation", cfg.gp.p_subtree_mutation);
  cfg.gp.max_depth =
      static_cast<int>(toml.get_int("gp.max_depth", cfg.gp.max_depth));
  cfg.gp.refit_constants =
      toml.get_bool("gp.refit_constants", cfg.gp.refit_constants);

  cfg.metric.M = static_cast<int>(toml.get_int("metric.M", cfg.metric.M));
  cfg.metric.norm_samples = static_cast<int>(
      toml.get_int("metric.norm_samples", cfg.metric.norm_samples));
  cfg.metric.solver_tol =
      toml.get_double("metric.solver_tol", cfg.metric.solver_tol);
  cfg.metric.min_accepted_fraction = toml.get_double(
      "metric.min_accepted_fraction", cfg.metric.min_accepted_fraction);

  auto clfem_apply = [&](ClfemConfig& c) {
    c.tau = toml.get_double("clfem.tau", c.tau);
    c.L = toml.get_double("clfem.L", c.L);
    c.U = toml.get_double("clfem.U", c.U);
    c.norm_ell =
        static_cast<int>(toml.get_int("clfem.norm_ell", c.norm_ell));
  };
  clfem_apply(cfg.gp.clfem);
  clfem_apply(cfg.pie.clfem);
  return cfg;
}

void run_experiment_to_csv(const ExperimentConfig& cfg,
                           const std::string& out_path) {
  const std::string csv = bench_csv(run_experiment(cfg));
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot write results: " + out_path);
  out << csv;
}

}  // namespace imeq
