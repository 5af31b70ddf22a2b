#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include <json.hpp>

#include "imeq/metrics.hpp"

using namespace imeq;

namespace {

Expr circle() { return parse_prefix("sub add pow2 x_1 pow2 x_2 1.0"); }

Expr plane() { return parse_prefix("sub add x_1 x_2 1.0"); }

EvalReport score(const Expr& pred, const Expr& truth, uint64_t seed,
                 MetricConfig cfg = {}) {
  Rng rng(seed);
  return fitness_metric(pred, truth, cfg, rng);
}

}  // namespace

TEST_CASE("solution sampling keeps only points on the predicted zero set") {
  Expr line = parse_prefix("sub x_1 1.0");
  MetricConfig cfg;
  Rng rng(11);
  PointMatrix pts = sample_solutions(line, line.used_dimensions(), cfg, rng);
  CHECK(static_cast<int>(pts.size()) == cfg.M);
  for (const Point& p : pts) {
    CHECK(std::fabs(p[0] - 1.0) <= cfg.solver_tol);
    CHECK(p[1] == 0.0);  // unused coordinates stay pinned at zero
    CHECK(p[2] == 0.0);
  }
}

TEST_CASE("an identically zero prediction accepts every initial draw") {
  Expr zero = parse_prefix("sub x_1 x_1");
  Rng rng(3);
  PointMatrix pts = sample_solutions(zero, 50, rng);
  CHECK(pts.size() == 50);
}

TEST_CASE("a constant-zero prediction samples the full ambient space") {
  Expr zero = Expr::constant(0.0);
  REQUIRE(zero.used_dimensions().empty());
  Rng rng(5);
  PointMatrix pts = sample_solutions(zero, 50, rng);
  REQUIRE(pts.size() == 50);
  bool saw_x3 = false;
  for (const Point& p : pts) saw_x3 = saw_x3 || std::fabs(p[2]) > 0.1;
  CHECK(saw_x3);
}

TEST_CASE("solutions of the circle prediction lie on the unit circle") {
  MetricConfig cfg;
  Rng rng(29);
  PointMatrix pts =
      sample_solutions(circle(), circle().used_dimensions(), cfg, rng);
  CHECK(static_cast<int>(pts.size()) >= cfg.M - 5);
  for (const Point& p : pts) {
    double r = std::hypot(p[0], p[1]);
    CHECK(std::fabs(r - 1.0) <= 1e-6);
    CHECK(p[2] == 0.0);
  }
}

TEST_CASE("a prediction with an empty zero set accepts nothing") {
  Expr nowhere = parse_prefix("add add pow2 x_1 pow2 x_2 1.0");
  Rng rng(17);
  PointMatrix pts = sample_solutions(nowhere, 100, rng);
  CHECK(pts.empty());
}

TEST_CASE("exact recovery scores near-perfect fitness") {
  EvalReport rep = score(circle(), circle(), 101);
  CHECK(rep.accepted_points >= 190);
  CHECK(rep.nmse <= 1e-8);
  CHECK(rep.fitness >= 0.9999);
  for (const auto& [tau, hit] : rep.acc) CHECK(hit == 1);
}

TEST_CASE("the zero prediction lands mid-scale against a plane truth") {
  // Every sampled point is "on" the zero prediction, so the numerator is
  // just the ambient mean of the squared truth: NMSE ~= 1, fitness ~= 1/2.
  MetricConfig cfg;
  cfg.norm_samples = 200;
  EvalReport rep = score(parse_prefix("sub x_1 x_1"), plane(), 23, cfg);
  CHECK(rep.accepted_points == cfg.M);
  CHECK(rep.fitness >= 0.4);
  CHECK(rep.fitness <= 0.6);
  CHECK(rep.acc.at(0.5) == (rep.fitness >= 0.5 ? 1 : 0));
  CHECK(rep.acc.at(0.99) == 0);
}

TEST_CASE("power-of-two truth rescaling leaves the score bit-identical") {
  Expr pred = parse_prefix("sub x_1 1.0");
  Expr truth = plane();
  Expr scaled = Expr::binary(Op::mul, Expr::constant(4.0), truth);
  EvalReport a = score(pred, truth, 77);
  EvalReport b = score(pred, scaled, 77);
  CHECK(b.accepted_points == a.accepted_points);
  CHECK(b.mse == 16.0 * a.mse);
  CHECK(b.nmse == a.nmse);
  CHECK(b.fitness == a.fitness);
  CHECK(b.acc == a.acc);
}

TEST_CASE("a sevenfold truth rescaling moves the score only at rounding scale") {
  Expr pred = parse_prefix("sub x_1 1.0");
  Expr truth = plane();
  Expr scaled = Expr::binary(Op::mul, Expr::constant(7.0), truth);
  EvalReport a = score(pred, truth, 77);
  EvalReport b = score(pred, scaled, 77);
  CHECK(b.accepted_points == a.accepted_points);
  CHECK(std::fabs(b.nmse - a.nmse) <= 1e-12 * a.nmse);
  CHECK(std::fabs(b.fitness - a.fitness) <= 1e-12);
}

TEST_CASE("rescaling the prediction preserves its zero set and the score") {
  Expr scaled = Expr::binary(Op::mul, Expr::constant(4.0), circle());
  EvalReport a = score(circle(), circle(), 55);
  EvalReport b = score(scaled, circle(), 55);
  CHECK(a.fitness >= 0.999);
  CHECK(b.fitness >= 0.999);
  CHECK(std::abs(a.accepted_points - b.accepted_points) <= 10);
}

TEST_CASE("accuracy indicators are monotone in the threshold") {
  Expr ellipse = parse_prefix("sub add pow2 x_1 mul 1.5 pow2 x_2 1.0");
  EvalReport rep = score(ellipse, circle(), 91);
  REQUIRE(rep.acc.size() == 5);
  std::vector<double> taus = {0.5, 0.7, 0.8, 0.9, 0.99};
  int prev = 1;
  for (double tau : taus) {
    REQUIRE(rep.acc.count(tau) == 1);
    int hit = rep.acc.at(tau);
    CHECK(hit == (rep.fitness >= tau ? 1 : 0));
    CHECK(hit <= prev);
    prev = hit;
  }
}

TEST_CASE("a truth that vanishes identically is rejected") {
  Rng rng(1);
  MetricConfig cfg;
  Expr pred = parse_prefix("sub x_1 1.0");
  CHECK_THROWS_AS(fitness_metric(pred, parse_prefix("sub x_1 x_1"), cfg, rng),
                  DegenerateTruth);
}

TEST_CASE("a truth undefined on the whole space is rejected") {
  Rng rng(1);
  MetricConfig cfg;
  Expr pred = parse_prefix("sub x_1 1.0");
  Expr bad = parse_prefix("ln sub 0.0 pow2 x_1");  // ln of -x1^2: never finite
  CHECK_THROWS_AS(fitness_metric(pred, bad, cfg, rng), DegenerateTruth);
}

TEST_CASE("an unsolvable prediction yields zero fitness and null error terms") {
  Expr nowhere = parse_prefix("add add pow2 x_1 pow2 x_2 1.0");
  EvalReport rep = score(nowhere, circle(), 13);
  CHECK(rep.accepted_points == 0);
  CHECK(std::isinf(rep.nmse));
  CHECK(rep.fitness == 0.0);

  nlohmann::json j = nlohmann::json::parse(report_to_json(rep));
  CHECK(j["mse"].is_null());
  CHECK(j["nmse"].is_null());
  CHECK(j["fitness"] == 0.0);
  for (auto& [key, hit] : j["acc"].items()) CHECK(hit == 0);
}

TEST_CASE("report serialization carries every field") {
  EvalReport rep = score(circle(), circle(), 101);
  nlohmann::json j = nlohmann::json::parse(report_to_json(rep));
  CHECK(j["fitness"].get<double>() == rep.fitness);
  CHECK(j["nmse"].get<double>() == rep.nmse);
  CHECK(j["mse"].get<double>() == rep.mse);
  CHECK(j["accepted_points"].get<int>() == rep.accepted_points);
  REQUIRE(j["acc"].is_object());
  CHECK(j["acc"].size() == 5);
  CHECK(j["acc"]["0.5"] == 1);
  CHECK(j["acc"]["0.99"] == 1);
}

TEST_CASE("equal seeds reproduce the score bit for bit") {
  Expr ellipse = parse_prefix("sub add pow2 x_1 mul 1.5 pow2 x_2 1.0");
  EvalReport a = score(ellipse, circle(), 3141);
  EvalReport b = score(ellipse, circle(), 3141);
  CHECK(a.mse == b.mse);
  CHECK(a.nmse == b.nmse);
  CHECK(a.fitness == b.fitness);
  CHECK(a.accepted_points == b.accepted_points);
}

TEST_CASE("the convenience sampler matches the explicit-dimension form") {
  Expr line = parse_prefix("sub x_1 1.0");
  MetricConfig cfg;
  cfg.M = 40;
  Rng r1(9);
  Rng r2(9);
  PointMatrix a = sample_solutions(line, 40, r1);
  PointMatrix b = sample_solutions(line, line.used_dimensions(), cfg, r2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int d = 0; d < 3; ++d) CHECK(a[i][d] == b[i][d]);
}

TEST_CASE("a minimum accepted fraction gates partially solvable predictions") {
  // ln(x_1) is undefined for half of the N(0,1) starts, so roughly half the
  // solver runs are discarded; the survivors all land on x_1 = 1.
  Expr pred = parse_prefix("ln x_1");
  Expr truth = parse_prefix("sub x_1 1.0");

  MetricConfig lax;  // default: report whatever was accepted
  EvalReport open_report = score(pred, truth, 77, lax);
  CHECK(open_report.accepted_points > 0);
  CHECK(open_report.accepted_points < lax.M);
  CHECK(open_report.fitness >= 0.99);

  MetricConfig reachable = lax;
  reachable.min_accepted_fraction = 0.25;  // ~half converge, well above 25%
  EvalReport ok_report = score(pred, truth, 77, reachable);
  CHECK(ok_report.fitness == open_report.fitness);

  MetricConfig strict = lax;
  strict.min_accepted_fraction = 0.9;
  EvalReport gated = score(pred, truth, 77, strict);
  CHECK(gated.accepted_points == open_report.accepted_points);
  CHECK(std::isinf(gated.nmse));
  CHECK(gated.fitness == 0.0);
  for (const auto& [tau, hit] : gated.acc) {
    (void)tau;
    CHECK(hit == 0);
  }
}
