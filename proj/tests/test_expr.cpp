#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "imeq/expr.hpp"

using namespace imeq;

namespace {

// Test-local tree generator, deliberately independent of the library's
// datagen sampler so round-trip checks don't share code with the code
// under test.
Expr random_tree(Rng& rng, int depth, bool allow_slots) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (depth <= 0 || u01(rng) < 0.35) {
    double r = u01(rng);
    if (allow_slots && r < 0.2) return Expr::slot();
    if (r < 0.55) {
      std::uniform_int_distribution<int> var(1, 3);
      return Expr::variable(var(rng));
    }
    // Constants with awkward mantissas and exponents to stress the
    // shortest round-trip formatting.
    double scale = std::ldexp(1.0, std::uniform_int_distribution<int>(-40, 40)(rng));
    double v = (u01(rng) * 2.0 - 1.0) * scale;
    if (u01(rng) < 0.1) v = std::trunc(v * 8) / 8;
    return Expr::constant(v);
  }
  std::uniform_int_distribution<int> pick(0, kNumOps - 1);
  Op op = static_cast<Op>(pick(rng));
  Expr a = random_tree(rng, depth - 1, allow_slots);
  if (op_arity(op) == 1) return Expr::unary(op, a);
  return Expr::binary(op, a, random_tree(rng, depth - 1, allow_slots));
}

}  // namespace

TEST_CASE("token vocabulary is bit-exact") {
  const std::pair<int, const char*> expected[] = {
      {0, "PAD"},  {1, "SOS"},  {2, "EOS"},  {3, "add"},  {4, "mul"},
      {5, "sub"},  {6, "div"},  {7, "sqrt"}, {8, "exp"},  {9, "ln"},
      {10, "sin"}, {11, "cos"}, {12, "pow2"}, {13, "pow3"}, {14, "pow4"},
      {15, "pow5"}, {16, "x_1"}, {17, "x_2"}, {18, "x_3"}, {19, "◇"},
  };
  for (auto [id, name] : expected) {
    CHECK(std::string(token_name(id)) == name);
    CHECK(token_id(name) == id);
  }
  CHECK(token_id("not-a-token") == -1);
  CHECK(kVocabSize == 20);
}

TEST_CASE("operator table: arity and draw weights") {
  int total = 0;
  for (int i = 0; i < kNumOps; ++i) total += op_sample_weight(static_cast<Op>(i));
  CHECK(total == kOpWeightTotal);
  CHECK(op_sample_weight(Op::add) == 10);
  CHECK(op_sample_weight(Op::mul) == 10);
  CHECK(op_sample_weight(Op::sub) == 5);
  CHECK(op_sample_weight(Op::div) == 5);
  CHECK(op_sample_weight(Op::pow5) == 1);
  CHECK(op_arity(Op::add) == 2);
  CHECK(op_arity(Op::div) == 2);
  CHECK(op_arity(Op::sqrt) == 1);
  CHECK(op_arity(Op::pow2) == 1);
}

TEST_CASE("prefix printing of a known tree") {
  Expr e = Expr::binary(Op::sub, Expr::binary(Op::mul, Expr::variable(1), Expr::variable(2)),
                        Expr::constant(0.564));
  std::vector<std::string> want = {"sub", "mul", "x_1", "x_2", "0.564"};
  CHECK(e.prefix_tokens() == want);
  CHECK(e.prefix_string() == "sub mul x_1 x_2 0.564");
}

TEST_CASE("token ids of a skeleton") {
  Expr e = Expr::binary(Op::sub, Expr::binary(Op::mul, Expr::variable(1), Expr::variable(2)),
                        Expr::slot());
  std::vector<int> want = {5, 4, 16, 17, 19};
  CHECK(e.token_ids() == want);
  CHECK(parse_token_ids(want) == e);
}

TEST_CASE("evaluate basics") {
  double x[3] = {2.0, 3.0, 0.0};
  Expr e = Expr::binary(Op::mul, Expr::variable(1), Expr::variable(2));
  CHECK(e.evaluate(x) == 6.0);

  Expr p5 = Expr::unary(Op::pow5, Expr::variable(1));
  CHECK(p5.evaluate(x) == 2.0 * 2.0 * 2.0 * 2.0 * 2.0);
}

TEST_CASE("domain violations evaluate to NotFinite, never crash") {
  double x[3] = {1.0, 0.0, 0.0};
  CHECK(std::isnan(Expr::binary(Op::div, Expr::variable(1), Expr::variable(2)).evaluate(x)));
  CHECK(std::isnan(Expr::unary(Op::ln, Expr::constant(-1.0)).evaluate(x)));
  CHECK(std::isnan(Expr::unary(Op::ln, Expr::constant(0.0)).evaluate(x)));
  CHECK(std::isnan(Expr::unary(Op::sqrt, Expr::constant(-4.0)).evaluate(x)));
  // overflow propagates as NotFinite
  CHECK(std::isnan(Expr::unary(Op::exp, Expr::constant(1000.0)).evaluate(x)));
  CHECK(std::isnan(Expr::unary(Op::pow4, Expr::constant(1e100)).evaluate(x)));
  // a poisoned subtree poisons the whole tree, even through sin/cos
  Expr poisoned = Expr::unary(Op::sin, Expr::unary(Op::ln, Expr::constant(-2.0)));
  CHECK(std::isnan(poisoned.evaluate(x)));
  // near-zero denominator guard
  Expr tiny_div = Expr::binary(Op::div, Expr::constant(1.0), Expr::constant(1e-301));
  CHECK(std::isnan(tiny_div.evaluate(x)));
}

TEST_CASE("used_dimensions") {
  Expr e = Expr::binary(Op::sub, Expr::variable(3),
                        Expr::binary(Op::mul, Expr::variable(1), Expr::variable(1)));
  CHECK(e.used_dimensions() == std::set<int>{1, 3});
  CHECK(Expr::constant(2.0).used_dimensions().empty());
}

TEST_CASE("structural equality is order sensitive") {
  Expr a = Expr::binary(Op::add, Expr::variable(1), Expr::variable(2));
  Expr b = Expr::binary(Op::add, Expr::variable(2), Expr::variable(1));
  CHECK(a == a);
  CHECK(a != b);
  CHECK(Expr::constant(1.0) != Expr::constant(1.0 + 1e-15));
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(parse_prefix("add x_1"), MalformedPrefix);
  CHECK_THROWS_AS(parse_prefix("x_1 x_2"), MalformedPrefix);
  CHECK_THROWS_AS(parse_prefix("frob x_1 x_2"), MalformedPrefix);
  CHECK_THROWS_AS(parse_prefix("PAD"), MalformedPrefix);
  CHECK_THROWS_AS(parse_prefix(""), MalformedPrefix);
  CHECK_THROWS_AS(parse_token_ids({TOK_ADD, TOK_X1}), MalformedPrefix);
  CHECK_THROWS_AS(parse_token_ids({TOK_SOS}), MalformedPrefix);
}

TEST_CASE("parse accepts slots and constants") {
  Expr e = parse_prefix("add ◇ mul x_2 -1.25e-07");
  CHECK(e.slot_count() == 1);
  CHECK(e.has_slots());
  auto toks = e.prefix_tokens();
  CHECK(toks[1] == "◇");
  CHECK(toks[4] == "-1.25e-07");
}

TEST_CASE("evaluating a skeleton is a usage error") {
  Expr s = parse_prefix("add ◇ x_1");
  double x[3] = {0, 0, 0};
  CHECK_THROWS_AS(s.evaluate(x), std::invalid_argument);
}

TEST_CASE("extract/instantiate round trip on a known tree") {
  Expr e = parse_prefix("sub mul x_1 x_2 0.564");
  auto [skel, consts] = extract_skeleton(e);
  CHECK(skel.prefix_string() == "sub mul x_1 x_2 ◇");
  REQUIRE(consts.size() == 1);
  CHECK(consts[0] == 0.564);
  CHECK(instantiate(skel, consts) == e);
  CHECK_THROWS_AS(instantiate(skel, std::vector<double>{1.0, 2.0}), SlotCountMismatch);
}

TEST_CASE("prefix and skeleton round trips over random trees") {
  Rng rng(20240816);
  for (int i = 0; i < 3000; ++i) {
    Expr e = random_tree(rng, 5, false);
    CHECK(parse_prefix(e.prefix_tokens()) == e);
    CHECK(parse_prefix(e.prefix_string()) == e);
    auto [skel, consts] = extract_skeleton(e);
    CHECK(static_cast<size_t>(skel.slot_count()) == consts.size());
    CHECK(instantiate(skel, consts) == e);
  }
  // trees that already contain slots round trip through text as well
  for (int i = 0; i < 1000; ++i) {
    Expr e = random_tree(rng, 4, true);
    CHECK(parse_prefix(e.prefix_tokens()) == e);
  }
}

TEST_CASE("format_double shortest round trip") {
  Rng rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    double v = std::ldexp(u(rng), std::uniform_int_distribution<int>(-300, 300)(rng));
    Expr back = parse_prefix(format_double(v));
    REQUIRE(back.root()->kind == Expr::Kind::cst);
    CHECK(back.root()->value == v);
  }
  CHECK(format_double(0.564) == "0.564");
  CHECK(format_double(1.0) == "1");
}

TEST_CASE("node counts and depth") {
  Expr e = parse_prefix("add sin x_1 mul x_2 0.5");
  CHECK(e.node_count() == 6);
  CHECK(e.op_node_count() == 3);
  CHECK(e.depth() == 3);
}
