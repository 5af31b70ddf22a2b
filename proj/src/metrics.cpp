#include "imeq/metrics.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

namespace imeq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<int> sampling_dims(const std::set<int>& dims) {
  if (!dims.empty()) return {dims.begin(), dims.end()};
  std::vector<int> all(kDMax);
  for (int d = 0; d < kDMax; ++d) all[d] = d + 1;
  return all;
}

}  // namespace

PointMatrix sample_solutions(const Expr& f_hat, const std::set<int>& dims,
                             const MetricConfig& cfg, Rng& rng) {
  const std::vector<int> free_dims = sampling_dims(dims);
  std::normal_distribution<double> n01(0.0, 1.0);

  auto objective = [&](std::span<const double> v) {
    Point p{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < free_dims.size(); ++i)
      p[free_dims[i] - 1] = v[i];
    const double f = f_hat.evaluate(p);
    return f * f;
  };

  PointMatrix accepted;
  for (int i = 0; i < cfg.M; ++i) {
    std::vector<double> x0(free_dims.size());
    for (double& c : x0) c = n01(rng);
    std::vector<double> x;
    try {
      x = bfgs_minimize(objective, std::move(x0), cfg.solver).x;
    } catch (const NonFiniteObjective&) {
      continue;  // prediction undefined at the initial point
    }
    Point p{0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < free_dims.size(); ++k)
      p[free_dims[k] - 1] = x[k];
    const double residual = f_hat.evaluate(p);
    if (std::isfinite(residual) && std::fabs(residual) <= cfg.solver_tol)
      accepted.push_back(p);
  }
  return accepted;
}

PointMatrix sample_solutions(const Expr& f_hat, int M, Rng& rng) {
  MetricConfig cfg;
  cfg.M = M;
  return sample_solutions(f_hat, f_hat.used_dimensions(), cfg, rng);
}

EvalReport fitness_metric(const Expr& f_hat, const Expr& f_true,
                          const MetricConfig& cfg, Rng& rng) {
  const std::set<int> space = f_true.used_dimensions();
  const std::vector<int> free_dims = sampling_dims(space);

  // Solutions of f_hat = 0 inside the truth's ambient space. The draws
  // depend only on the rng stream, never on either expression's values.
  const PointMatrix solutions = sample_solutions(f_hat, space, cfg, rng);

  EvalReport report;
  report.accepted_points = static_cast<int>(solutions.size());

  double num_sum = 0.0;
  long num_count = 0;
  for (const Point& p : solutions) {
    const double t = f_true.evaluate(p);
    if (!std::isfinite(t)) continue;  // truth undefined there: unscorable
    num_sum += t * t;
    ++num_count;
  }

  // Normalization term: mean |f_true|^2 over ambient N(0, I) draws;
  // points where the truth is undefined are redrawn.
  std::normal_distribution<double> n01(0.0, 1.0);
  double den_sum = 0.0;
  int den_count = 0;
  const long budget = 100L * std::max(1, cfg.norm_samples);
  for (long trial = 0; trial < budget && den_count < cfg.norm_samples;
       ++trial) {
    Point p{0.0, 0.0, 0.0};
    for (int d : free_dims) p[d - 1] = n01(rng);
    const double t = f_true.evaluate(p);
    if (!std::isfinite(t)) continue;
    den_sum += t * t;
    ++den_count;
  }
  if (den_count < cfg.norm_samples)
    throw DegenerateTruth(
        "ground truth is undefined almost everywhere on the sampling space");
  const double denominator = den_sum / den_count;
  if (denominator < 1e-12)
    throw DegenerateTruth("normalization term below 1e-12");

  const bool too_few_accepted =
      static_cast<double>(report.accepted_points) <
      cfg.min_accepted_fraction * cfg.M;
  if (num_count == 0 || too_few_accepted) {
    report.mse = kInf;
    report.nmse = kInf;
    report.fitness = 0.0;
  } else {
    report.mse = num_sum / num_count;
    report.nmse = report.mse / denominator;
    report.fitness = 1.0 / (1.0 + std::sqrt(report.nmse));
  }
  for (double tau : cfg.taus) report.acc[tau] = report.fitness >= tau ? 1 : 0;
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["mse"] = std::isfinite(report.mse) ? nlohmann::json(report.mse)
                                       : nlohmann::json();
  j["nmse"] = std::isfinite(report.nmse) ? nlohmann::json(report.nmse)
                                         : nlohmann::json();
  j["fitness"] = report.fitness;
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& [tau, hit] : report.acc) {
    char key[16];
    std::snprintf(key, sizeof key, "%g", tau);
    acc[key] = hit;
  }
  j["acc"] = acc;
  j["accepted_points"] = report.accepted_points;
  return j.dump();
}

}  // namespace imeq
