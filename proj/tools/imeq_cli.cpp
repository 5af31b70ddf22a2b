// Command-line front end: corpus generation, model training, beam-search
// equation discovery, solver-based evaluation, the GP baseline, and the
// benchmark sweep driver.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "imeq/bench.hpp"
#include "imeq/common.hpp"
#include "imeq/datagen.hpp"
#include "imeq/expr.hpp"
#include "imeq/gp.hpp"
#include "imeq/inference.hpp"
#include "imeq/metrics.hpp"
#include "imeq/model.hpp"
#include "imeq/numopt.hpp"
#include "imeq/toml.hpp"

namespace {

using namespace imeq;

Op op_from_name(const std::string& name) {
  for (int i = 0; i < kNumOps; ++i) {
    const Op op = static_cast<Op>(i);
    if (name == op_name(op)) return op;
  }
  throw ParseError("unknown operator name: " + name);
}

GenConfig gen_config_from_toml(const TomlTable& toml) {
  GenConfig cfg;
  cfg.non_leaf_nodes =
      static_cast<int>(toml.get_int("non_leaf_nodes", cfg.non_leaf_nodes));
  cfg.p_var = toml.get_double("p_var", cfg.p_var);
  cfg.n_points = static_cast<int>(toml.get_int("n_points", cfg.n_points));
  cfg.scan_lo = toml.get_double("scan_lo", cfg.scan_lo);
  cfg.scan_hi = toml.get_double("scan_hi", cfg.scan_hi);
  cfg.scan_subdivisions = static_cast<int>(
      toml.get_int("scan_subdivisions", cfg.scan_subdivisions));
  cfg.max_point_trials = static_cast<int>(
      toml.get_int("max_point_trials", cfg.max_point_trials));
  cfg.k_samples = static_cast<int>(toml.get_int("k_samples", cfg.k_samples));
  cfg.max_var = static_cast<int>(toml.get_int("max_var", cfg.max_var));
  if (toml.has("allowed_ops"))
    for (const std::string& name : toml.get_string_array("allowed_ops"))
      cfg.allowed_ops.push_back(op_from_name(name));
  return cfg;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write: " + path);
  out << content;
}

int run(int argc, char** argv) {
  CLI::App app{
      "imeq: implicit equation discovery from point sets — synthetic corpus "
      "generation, set-to-sequence model training, beam-search inference "
      "with constant fitting, solver-based evaluation, a GP baseline, and "
      "benchmark sweeps"};
  app.require_subcommand(1);

  // ---- generate ---------------------------------------------------------
  std::string gen_config_path;
  std::string gen_out;
  std::uint64_t gen_seed = 0;
  int gen_workers = 1;
  CLI::App* gen = app.add_subcommand(
      "generate", "Sample a training corpus of equation/point-set pairs");
  gen->add_option("--config", gen_config_path,
                  "TOML file with sampler settings (non_leaf_nodes, p_var, "
                  "n_points, k_samples, scan_lo, scan_hi, scan_subdivisions, "
                  "max_point_trials, allowed_ops, max_var)")
      ->required()
      ->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output JSONL path")->required();
  gen->add_option("--seed", gen_seed, "Base RNG seed");
  gen->add_option("--workers", gen_workers, "Parallel workers (1 = "
                  "deterministic output order)")
      ->check(CLI::PositiveNumber);

  // ---- train ------------------------------------------------------------
  std::string train_data, train_val, train_preset = "tiny", train_out;
  std::string train_loss_csv;
  std::uint64_t train_seed = 0;
  long train_max_steps = -1;
  int train_max_epochs = 1000;
  CLI::App* train = app.add_subcommand(
      "train", "Train the set-to-sequence skeleton model on a JSONL corpus");
  train->add_option("--data", train_data, "Training JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--val", train_val, "Validation JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--preset", train_preset, "Model size preset")
      ->check(CLI::IsMember({"tiny", "paper"}));
  train->add_option("--seed", train_seed, "RNG seed");
  train->add_option("--out", train_out, "Checkpoint output path")->required();
  train->add_option("--loss-csv", train_loss_csv,
                    "Loss curve CSV (step,train_ce,val_ce)");
  train->add_option("--max-steps", train_max_steps,
                    "Stop after this many optimizer steps (-1 = no cap)");
  train->add_option("--max-epochs", train_max_epochs, "Epoch cap");

  // ---- infer ------------------------------------------------------------
  std::string infer_ckpt, infer_points, infer_out, infer_fitness = "clfem";
  int infer_beam = 16;
  int infer_max_len = 48;
  std::uint64_t infer_seed = 0;
  CLI::App* infer = app.add_subcommand(
      "infer", "Discover an implicit equation for a point set");
  infer->add_option("--ckpt", infer_ckpt, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  infer->add_option("--points", infer_points,
                    "Point set (CSV rows or JSONL [[x1,x2,x3],...] arrays)")
      ->required()
      ->check(CLI::ExistingFile);
  infer->add_option("--beam", infer_beam, "Beam size")
      ->check(CLI::PositiveNumber);
  infer->add_option("--max-len", infer_max_len, "Longest decoded sequence")
      ->check(CLI::PositiveNumber);
  infer->add_option("--fitness", infer_fitness,
                    "Candidate-ranking fitness")
      ->check(CLI::IsMember({"clfem", "vanilla"}));
  infer->add_option("--seed", infer_seed, "RNG seed for constant fitting");
  infer->add_option("--out", infer_out, "Output JSON path")->required();

  // ---- evaluate ---------------------------------------------------------
  std::string eval_pred, eval_truth, eval_out;
  std::uint64_t eval_seed = 0;
  CLI::App* eval = app.add_subcommand(
      "evaluate",
      "Score a discovered equation against a ground truth with the "
      "solver-based fitness metric");
  eval->add_option("--pred", eval_pred,
                   "Prediction JSON (as written by `infer`; the expr_prefix "
                   "field is scored)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--truth", eval_truth,
                   "Ground-truth equation in prefix notation, e.g. "
                   "\"sub add pow2 x_1 pow2 x_2 1.0\"")
      ->required();
  eval->add_option("--seed", eval_seed, "RNG seed for solution sampling");
  eval->add_option("--out", eval_out,
                   "Write the report JSON here instead of stdout");

  // ---- baseline-gp ------------------------------------------------------
  std::string gp_points, gp_fitness = "clfem", gp_out, gp_stats;
  std::uint64_t gp_seed = 0;
  int gp_population = -1, gp_generations = -1;
  CLI::App* gp = app.add_subcommand(
      "baseline-gp", "Genetic-programming baseline on one point set");
  gp->add_option("--points", gp_points, "Point set (CSV or JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  gp->add_option("--fitness", gp_fitness, "Fitness function")
      ->check(CLI::IsMember({"vanilla", "clfem"}));
  gp->add_option("--seed", gp_seed, "RNG seed");
  gp->add_option("--out", gp_out, "Output JSON path")->required();
  gp->add_option("--population", gp_population, "Population size override");
  gp->add_option("--generations", gp_generations, "Generation count override");
  gp->add_option("--stats-csv", gp_stats,
                 "Per-generation stats CSV (generation,best_fitness,"
                 "mean_fitness)");

  // ---- bench ------------------------------------------------------------
  std::string bench_config, bench_out;
  CLI::App* bench = app.add_subcommand(
      "bench", "Run a benchmark sweep over a suite and write the results CSV");
  bench->add_option("--config", bench_config, "Experiment TOML")
      ->required()
      ->check(CLI::ExistingFile);
  bench->add_option("--out", bench_out, "Results CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    GenConfig cfg = gen_config_from_toml(parse_toml_file(gen_config_path));
    cfg.seed = gen_seed;
    if (cfg.k_samples <= 0)
      throw ParseError("config must set k_samples to a positive count");
    generate_corpus(cfg, gen_out, gen_workers);
    std::cout << "wrote " << cfg.k_samples << " samples to " << gen_out
              << "\n";
    return 0;
  }

  if (train->parsed()) {
    const std::vector<TrainingSample> train_set = load_corpus(train_data);
    const std::vector<TrainingSample> val_set = load_corpus(train_val);
    const ModelConfig cfg =
        train_preset == "paper" ? ModelConfig::paper() : ModelConfig::tiny();
    TrainOptions opt;
    opt.ckpt_path = train_out;
    opt.loss_csv_path = train_loss_csv;
    opt.max_steps = train_max_steps;
    opt.max_epochs = train_max_epochs;
    TrainReport report;
    train_model(cfg, train_set, val_set, train_seed, opt, &report);
    std::cout << "trained " << report.steps << " steps over " << report.epochs
              << " epochs (stop: " << report.stop_reason
              << "); best validation CE " << report.best_val
              << "; checkpoint: " << train_out << "\n";
    return 0;
  }

  if (infer->parsed()) {
    const Model model = load_model(infer_ckpt);
    const PointMatrix points = load_points_file(infer_points);
    DiscoverConfig cfg;
    cfg.beam.beam_size = infer_beam;
    cfg.beam.max_len = infer_max_len;
    cfg.fitness_kind = infer_fitness == "vanilla" ? FitnessKind::vanilla
                                                  : FitnessKind::clfem;
    cfg.seed = infer_seed;
    const DiscoverResult result = discover(model, points, cfg);
    write_file(infer_out, discover_to_json(result) + "\n");
    std::cout << instantiate(result.best.skeleton, result.best.constants)
                     .prefix_string()
              << "\n";
    return 0;
  }

  if (eval->parsed()) {
    std::ifstream in(eval_pred);
    if (!in) throw IoError("cannot open prediction: " + eval_pred);
    nlohmann::json pred = nlohmann::json::parse(in, nullptr, true, true);
    if (!pred.contains("expr_prefix") || !pred["expr_prefix"].is_string())
      throw ParseError("prediction JSON lacks a string expr_prefix field");
    const Expr f_hat = parse_prefix(pred["expr_prefix"].get<std::string>());
    const Expr f_true = parse_prefix(eval_truth);
    MetricConfig cfg;
    cfg.rng_seed = eval_seed;
    Rng rng(eval_seed);
    const EvalReport report = fitness_metric(f_hat, f_true, cfg, rng);
    const std::string json = report_to_json(report) + "\n";
    if (eval_out.empty())
      std::cout << json;
    else
      write_file(eval_out, json);
    return 0;
  }

  if (gp->parsed()) {
    const PointMatrix points = load_points_file(gp_points);
    GpConfig cfg;
    cfg.fitness_mode = gp_fitness == "vanilla" ? FitnessKind::vanilla
                                               : FitnessKind::clfem;
    cfg.rng_seed = gp_seed;
    if (gp_population > 0) cfg.population = gp_population;
    if (gp_generations >= 0) cfg.generations = gp_generations;
    const GpResult result = gp_run(points, cfg);
    nlohmann::json j;
    j["expr_prefix"] = result.best.expr.prefix_string();
    j["fitness"] = std::isfinite(result.best.fitness)
                       ? nlohmann::json(result.best.fitness)
                       : nlohmann::json();
    j["fitness_mode"] = gp_fitness;
    j["population"] = cfg.population;
    j["generations"] = cfg.generations;
    j["seed"] = gp_seed;
    write_file(gp_out, j.dump(2) + "\n");
    if (!gp_stats.empty()) write_file(gp_stats, gp_stats_csv(result.stats));
    std::cout << result.best.expr.prefix_string() << "\n";
    return 0;
  }

  if (bench->parsed()) {
    const ExperimentConfig cfg =
        experiment_from_toml(parse_toml_file(bench_config));
    run_experiment_to_csv(cfg, bench_out);
    std::cout << "wrote " << bench_out << "\n";
    return 0;
  }

  return 0;  // unreachable: require_subcommand(1)
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
