// Python bindings for the equation-discovery core: expression handling,
// corpus generation, the two fitness functions, constant fitting, model
// training/loading, beam-search discovery, the GP baseline, the solver
// metric, and benchmark suites.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "imeq/bench.hpp"
#include "imeq/common.hpp"
#include "imeq/datagen.hpp"
#include "imeq/expr.hpp"
#include "imeq/fitness.hpp"
#include "imeq/gp.hpp"
#include "imeq/inference.hpp"
#include "imeq/metrics.hpp"
#include "imeq/model.hpp"
#include "imeq/numopt.hpp"

namespace py = pybind11;
using namespace imeq;

namespace {

// Rows may carry 1..3 coordinates; missing trailing coordinates are
// padding zeros, matching the on-disk point formats.
PointMatrix to_points(const std::vector<std::vector<double>>& rows) {
  PointMatrix out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    if (row.empty() || row.size() > kDMax)
      throw ShapeMismatch("each point needs 1.." + std::to_string(kDMax) +
                          " coordinates");
    Point p{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < row.size(); ++i) p[i] = row[i];
    out.push_back(p);
  }
  return out;
}

std::vector<std::vector<double>> from_points(const PointMatrix& pts) {
  std::vector<std::vector<double>> out;
  out.reserve(pts.size());
  for (const Point& p : pts) out.push_back({p[0], p[1], p[2]});
  return out;
}

GenConfig make_gen_config(int non_leaf_nodes, double p_var, int n_points,
                          int k_samples, std::uint64_t seed,
                          const std::vector<std::string>& allowed_ops,
                          int max_var) {
  GenConfig cfg;
  cfg.non_leaf_nodes = non_leaf_nodes;
  cfg.p_var = p_var;
  cfg.n_points = n_points;
  cfg.k_samples = k_samples;
  cfg.seed = seed;
  cfg.max_var = max_var;
  for (const std::string& name : allowed_ops) {
    bool found = false;
    for (int i = 0; i < kNumOps && !found; ++i)
      if (name == op_name(static_cast<Op>(i))) {
        cfg.allowed_ops.push_back(static_cast<Op>(i));
        found = true;
      }
    if (!found) throw ParseError("unknown operator name: " + name);
  }
  return cfg;
}

FitnessKind kind_from_name(const std::string& name) {
  if (name == "clfem") return FitnessKind::clfem;
  if (name == "vanilla") return FitnessKind::vanilla;
  throw ParseError("fitness must be 'clfem' or 'vanilla', got '" + name + "'");
}

py::dict report_dict(const EvalReport& rep) {
  py::dict acc;
  for (const auto& [tau, hit] : rep.acc) acc[py::float_(tau)] = hit;
  py::dict d;
  d["mse"] = rep.mse;
  d["nmse"] = rep.nmse;
  d["fitness"] = rep.fitness;
  d["acc"] = acc;
  d["accepted_points"] = rep.accepted_points;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Implicit equation discovery from point sets: expression trees, "
      "synthetic corpus generation, anti-degeneracy fitness, constant "
      "fitting, a set-to-sequence model with beam-search decoding, a GP "
      "baseline, and a solver-based evaluation metric.";

  py::register_exception<MalformedPrefix>(m, "MalformedPrefix");
  py::register_exception<SlotCountMismatch>(m, "SlotCountMismatch");
  py::register_exception<AllRestartsDegenerate>(m, "AllRestartsDegenerate");
  py::register_exception<NoViableCandidate>(m, "NoViableCandidate");
  py::register_exception<DegenerateTruth>(m, "DegenerateTruth");
  py::register_exception<ParseError>(m, "ParseError");

  py::class_<Expr>(m, "Expr",
                   "Immutable expression tree in prefix (Polish) notation.")
      .def_static("parse", [](const std::string& text) {
        return parse_prefix(text);
      }, py::arg("prefix"), "Parse a prefix-notation expression string.")
      .def("__str__", &Expr::prefix_string)
      .def("__repr__",
           [](const Expr& e) { return "Expr(\"" + e.prefix_string() + "\")"; })
      .def_property_readonly("prefix", &Expr::prefix_string)
      .def_property_readonly("node_count", &Expr::node_count)
      .def_property_readonly("slot_count", &Expr::slot_count)
      .def_property_readonly(
          "used_dimensions",
          [](const Expr& e) {
            const auto dims = e.used_dimensions();
            return std::vector<int>(dims.begin(), dims.end());
          },
          "1-based indices of the variables appearing in the tree.")
      .def(
          "evaluate",
          [](const Expr& e, const std::vector<std::vector<double>>& rows) {
            const PointMatrix pts = to_points(rows);
            std::vector<double> out;
            out.reserve(pts.size());
            for (const Point& p : pts) out.push_back(e.evaluate(p));
            return out;
          },
          py::arg("points"),
          "Evaluate at each point (rows of 1..3 coordinates); domain "
          "violations yield NaN.");

  m.def(
      "extract_skeleton",
      [](const Expr& e) {
        auto [sk, consts] = extract_skeleton(e);
        return py::make_tuple(sk, consts);
      },
      py::arg("expr"),
      "Split an expression into (skeleton with constant placeholders, "
      "constants in prefix order).");
  m.def(
      "instantiate",
      [](const Expr& skeleton, const std::vector<double>& constants) {
        return instantiate(skeleton, constants);
      },
      py::arg("skeleton"), py::arg("constants"),
      "Fill a skeleton's placeholders with the given constants.");

  m.def("generate_corpus",
        [](const std::string& out_path, int k_samples, std::uint64_t seed,
           int non_leaf_nodes, double p_var, int n_points,
           const std::vector<std::string>& allowed_ops, int max_var,
           int workers) {
          generate_corpus(make_gen_config(non_leaf_nodes, p_var, n_points,
                                          k_samples, seed, allowed_ops,
                                          max_var),
                          out_path, workers);
        },
        py::arg("out_path"), py::arg("k_samples"), py::arg("seed") = 0,
        py::arg("non_leaf_nodes") = 5, py::arg("p_var") = 0.8,
        py::arg("n_points") = 200,
        py::arg("allowed_ops") = std::vector<std::string>{},
        py::arg("max_var") = kDMax, py::arg("workers") = 1,
        "Write a JSONL corpus of sampled equation/point-set pairs.");

  m.def("load_corpus",
        [](const std::string& path) {
          py::list out;
          for (const TrainingSample& s : load_corpus(path)) {
            py::dict d;
            d["skeleton"] = s.skeleton.prefix_string();
            d["constants"] = s.constants;
            d["expr"] = s.equation.prefix_string();
            d["points"] = from_points(s.points);
            d["dims"] =
                std::vector<int>(s.used_dims.begin(), s.used_dims.end());
            out.append(d);
          }
          return out;
        },
        py::arg("path"), "Read a JSONL corpus back as a list of dicts.");

  m.def("vanilla_fitness",
        [](const Expr& f, const std::vector<std::vector<double>>& points,
           int ell) { return vanilla_fitness(f, to_points(points), ell); },
        py::arg("expr"), py::arg("points"), py::arg("ell") = 1,
        "Negative mean residual magnitude over the data.");

  m.def("clfem_fitness",
        [](const Expr& f, const std::vector<std::vector<double>>& points,
           double tau, double lo, double hi, int ell, std::uint64_t seed) {
          ClfemConfig cfg;
          cfg.tau = tau;
          cfg.L = lo;
          cfg.U = hi;
          cfg.norm_ell = ell;
          Rng rng(seed);
          const FitnessResult r = clfem_fitness(f, to_points(points), cfg, rng);
          py::dict d;
          d["value"] = r.value;
          d["degenerate_dims"] = std::vector<int>(r.degenerate_dims.begin(),
                                                  r.degenerate_dims.end());
          d["domain_failure"] = r.domain_failure;
          py::dict dist;
          for (const auto& [j, dj] : r.d) dist[py::int_(j)] = dj;
          d["d"] = dist;
          return d;
        },
        py::arg("expr"), py::arg("points"), py::arg("tau") = 1e-4,
        py::arg("lo") = -1.0, py::arg("hi") = 1.0, py::arg("ell") = 1,
        py::arg("seed") = 0,
        "Anti-degeneracy fitness: -inf when resampling any single active "
        "dimension leaves the expression unchanged beyond tau.");

  m.def("fit_constants",
        [](const Expr& skeleton, const std::vector<std::vector<double>>& points,
           std::uint64_t seed, int restarts, const std::string& fitness) {
          BfgsConfig bfgs;
          bfgs.restarts = restarts;
          ClfemConfig clfem;
          Rng rng(seed);
          const FitResult fit =
              fit_constants(skeleton, to_points(points), clfem, bfgs, rng,
                            kind_from_name(fitness));
          py::dict d;
          d["constants"] = fit.constants;
          d["fitness"] = fit.fitness.value;
          d["residual"] = fit.residual;
          d["expr"] = instantiate(skeleton, fit.constants).prefix_string();
          return d;
        },
        py::arg("skeleton"), py::arg("points"), py::arg("seed") = 0,
        py::arg("restarts") = 4, py::arg("fitness") = "clfem",
        "BFGS constant recovery for a skeleton against a point set.");

  m.def("evaluate",
        [](const Expr& prediction, const Expr& truth, std::uint64_t seed,
           int M, int norm_samples) {
          MetricConfig cfg;
          cfg.M = M;
          cfg.norm_samples = norm_samples;
          cfg.rng_seed = seed;
          Rng rng(seed);
          return report_dict(fitness_metric(prediction, truth, cfg, rng));
        },
        py::arg("prediction"), py::arg("truth"), py::arg("seed") = 0,
        py::arg("M") = 200, py::arg("norm_samples") = 10,
        "Solver-based metric: sample the prediction's zero set, score the "
        "truth's residuals there, normalized to fitness in [0, 1].");

  m.def("gp_run",
        [](const std::vector<std::vector<double>>& points, int population,
           int generations, const std::string& fitness, std::uint64_t seed,
           int tournament) {
          GpConfig cfg;
          cfg.population = population;
          cfg.generations = generations;
          cfg.tournament = tournament;
          cfg.fitness_mode = kind_from_name(fitness);
          cfg.rng_seed = seed;
          const GpResult res = gp_run(to_points(points), cfg);
          py::list stats;
          for (const GenStats& g : res.stats) {
            py::dict row;
            row["generation"] = g.generation;
            row["best_fitness"] = g.best_fitness;
            row["mean_fitness"] = g.mean_fitness;
            stats.append(row);
          }
          py::dict d;
          d["expr"] = res.best.expr.prefix_string();
          d["fitness"] = res.best.fitness;
          d["stats"] = stats;
          return d;
        },
        py::arg("points"), py::arg("population") = 2000,
        py::arg("generations") = 20, py::arg("fitness") = "clfem",
        py::arg("seed") = 0, py::arg("tournament") = 20,
        "Genetic-programming baseline over one point set.");

  py::class_<Model>(m, "Model", "Trained set-to-sequence skeleton model.");
  m.def("load_model", [](const std::string& path) { return load_model(path); },
        py::arg("path"));
  m.def("train_model",
        [](const std::string& data_path, const std::string& val_path,
           const std::string& preset, std::uint64_t seed,
           const std::string& ckpt_path, long max_steps,
           const std::string& loss_csv, int max_epochs) {
          const ModelConfig cfg =
              preset == "paper" ? ModelConfig::paper() : ModelConfig::tiny();
          if (preset != "paper" && preset != "tiny")
            throw ParseError("preset must be 'tiny' or 'paper'");
          TrainOptions opt;
          opt.ckpt_path = ckpt_path;
          opt.loss_csv_path = loss_csv;
          opt.max_steps = max_steps;
          opt.max_epochs = max_epochs;
          TrainReport rep;
          train_model(cfg, load_corpus(data_path), load_corpus(val_path),
                      seed, opt, &rep);
          py::dict d;
          d["steps"] = rep.steps;
          d["epochs"] = rep.epochs;
          d["best_val_ce"] = rep.best_val;
          d["stop_reason"] = rep.stop_reason;
          d["checkpoint"] = ckpt_path;
          return d;
        },
        py::arg("data_path"), py::arg("val_path"), py::arg("preset") = "tiny",
        py::arg("seed") = 0, py::arg("ckpt_path") = "model.ckpt",
        py::arg("max_steps") = -1, py::arg("loss_csv") = "",
        py::arg("max_epochs") = 1000,
        "Train on a JSONL corpus; returns a summary dict.");

  m.def("discover",
        [](const Model& model, const std::vector<std::vector<double>>& points,
           int beam_size, int max_len, const std::string& fitness,
           std::uint64_t seed) {
          DiscoverConfig cfg;
          cfg.beam.beam_size = beam_size;
          cfg.beam.max_len = max_len;
          cfg.fitness_kind = kind_from_name(fitness);
          cfg.seed = seed;
          const DiscoverResult res = discover(model, to_points(points), cfg);
          auto cand_dict = [](const Candidate& c) {
            py::dict d;
            d["expr"] = c.fitted
                            ? instantiate(c.skeleton, c.constants).prefix_string()
                            : (c.parsed ? c.skeleton.prefix_string()
                                        : std::string());
            d["constants"] = c.constants;
            d["log_prob"] = c.log_prob;
            d["fitness"] = c.value;
            d["error"] = c.error;
            return d;
          };
          py::list all;
          for (const Candidate& c : res.candidates) all.append(cand_dict(c));
          py::dict d = cand_dict(res.best);
          d["all_candidates"] = all;
          return d;
        },
        py::arg("model"), py::arg("points"), py::arg("beam_size") = 16,
        py::arg("max_len") = 48, py::arg("fitness") = "clfem",
        py::arg("seed") = 0,
        "Beam-decode skeletons for a point set, fit constants, and rank "
        "the candidates.");

  m.def("load_suite",
        [](const std::string& name, const std::string& suites_dir,
           int n_points, std::uint64_t data_seed, int synthetic_count) {
          SuiteConfig cfg;
          cfg.suites_dir = suites_dir;
          cfg.n_points = n_points;
          cfg.data_seed = data_seed;
          cfg.synthetic_count = synthetic_count;
          const BenchmarkSuite suite = load_suite(name, cfg);
          py::list eqs;
          for (const SuiteEquation& eq : suite.equations) {
            py::dict d;
            d["id"] = eq.id;
            d["expr"] = eq.equation.prefix_string();
            d["points"] = from_points(eq.points);
            eqs.append(d);
          }
          return eqs;
        },
        py::arg("name"), py::arg("suites_dir") = "suites",
        py::arg("n_points") = 200, py::arg("data_seed") = 0,
        py::arg("synthetic_count") = 80,
        "Load a benchmark suite with on-manifold data per equation.");

  m.attr("D_MAX") = kDMax;
  m.attr("VOCAB_SIZE") = kVocabSize;
}
