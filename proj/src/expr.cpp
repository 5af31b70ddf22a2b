#include "imeq/expr.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>

namespace imeq {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* const kTokenNames[kVocabSize] = {
    "PAD", "SOS",  "EOS",  "add",  "mul",  "sub",  "div",
    "sqrt", "exp", "ln",   "sin",  "cos",  "pow2", "pow3",
    "pow4", "pow5", "x_1",  "x_2",  "x_3",  "◇",
};

struct OpInfo {
  const char* name;
  int arity;
  int token;
  int weight;
};

constexpr OpInfo kOps[kNumOps] = {
    {"add", 2, TOK_ADD, 10}, {"mul", 2, TOK_MUL, 10}, {"sub", 2, TOK_SUB, 5},
    {"div", 2, TOK_DIV, 5},  {"sqrt", 1, TOK_SQRT, 4}, {"exp", 1, TOK_EXP, 4},
    {"ln", 1, TOK_LN, 4},    {"sin", 1, TOK_SIN, 4},   {"cos", 1, TOK_COS, 4},
    {"pow2", 1, TOK_POW2, 4}, {"pow3", 1, TOK_POW3, 2}, {"pow4", 1, TOK_POW4, 1},
    {"pow5", 1, TOK_POW5, 1},
};

double eval_node(const Expr::Node* n, std::span<const double> x) {
  switch (n->kind) {
    case Expr::Kind::cst:
      return n->value;
    case Expr::Kind::var: {
      if (n->var < 1 || n->var > static_cast<int>(x.size())) return kNaN;
      return x[n->var - 1];
    }
    case Expr::Kind::slot:
      throw std::invalid_argument("evaluate() called on a skeleton with unfitted ◇ slots");
    case Expr::Kind::op:
      break;
  }
  double a = eval_node(n->a.get(), x);
  if (std::isnan(a)) return kNaN;
  double b = 0.0;
  if (n->b) {
    b = eval_node(n->b.get(), x);
    if (std::isnan(b)) return kNaN;
  }
  double v;
  switch (n->op) {
    case Op::add: v = a + b; break;
    case Op::mul: v = a * b; break;
    case Op::sub: v = a - b; break;
    case Op::div:
      if (std::fabs(b) < 1e-300) return kNaN;
      v = a / b;
      break;
    case Op::sqrt:
      if (a < 0.0) return kNaN;
      v = std::sqrt(a);
      break;
    case Op::exp: v = std::exp(a); break;
    case Op::ln:
      if (a <= 0.0) return kNaN;
      v = std::log(a);
      break;
    case Op::sin: v = std::sin(a); break;
    case Op::cos: v = std::cos(a); break;
    // Integer powers are repeated multiplication, not pow(); this keeps
    // them exact for negative bases and cheap to evaluate.
    case Op::pow2: v = a * a; break;
    case Op::pow3: v = a * a * a; break;
    case Op::pow4: v = (a * a) * (a * a); break;
    case Op::pow5: v = (a * a) * (a * a) * a; break;
    default: return kNaN;
  }
  if (!std::isfinite(v)) return kNaN;
  return v;
}

void collect_prefix(const Expr::Node* n, std::vector<std::string>& out) {
  switch (n->kind) {
    case Expr::Kind::cst: out.push_back(format_double(n->value)); return;
    case Expr::Kind::var: out.push_back(kTokenNames[TOK_X1 + n->var - 1]); return;
    case Expr::Kind::slot: out.push_back(kTokenNames[TOK_SLOT]); return;
    case Expr::Kind::op: break;
  }
  out.push_back(kOps[static_cast<int>(n->op)].name);
  collect_prefix(n->a.get(), out);
  if (n->b) collect_prefix(n->b.get(), out);
}

void collect_ids(const Expr::Node* n, std::vector<int>& out) {
  switch (n->kind) {
    case Expr::Kind::cst:
      throw std::invalid_argument("token_ids(): tree holds a literal constant; extract a skeleton first");
    case Expr::Kind::var: out.push_back(TOK_X1 + n->var - 1); return;
    case Expr::Kind::slot: out.push_back(TOK_SLOT); return;
    case Expr::Kind::op: break;
  }
  out.push_back(kOps[static_cast<int>(n->op)].token);
  collect_ids(n->a.get(), out);
  if (n->b) collect_ids(n->b.get(), out);
}

bool node_eq(const Expr::Node* x, const Expr::Node* y) {
  if (x == y) return true;
  if (!x || !y) return false;
  if (x->kind != y->kind) return false;
  switch (x->kind) {
    case Expr::Kind::cst: return x->value == y->value;
    case Expr::Kind::var: return x->var == y->var;
    case Expr::Kind::slot: return true;
    case Expr::Kind::op:
      return x->op == y->op && node_eq(x->a.get(), y->a.get()) &&
             node_eq(x->b.get(), y->b.get());
  }
  return false;
}

// Shared recursive-descent core for both textual and id token streams.
template <typename TokT, typename LeafFn>
Expr::NodeP parse_stream(const std::vector<TokT>& toks, size_t& pos, LeafFn&& leaf) {
  if (pos >= toks.size()) throw MalformedPrefix("prefix sequence ends mid-expression");
  const TokT& t = toks[pos++];
  auto node = leaf(t);  // returns NodeP for leaves, nullptr + op set via out-param otherwise
  if (node.first) return node.first;
  Op op = node.second;
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::op;
  n->op = op;
  n->a = parse_stream(toks, pos, leaf);
  if (op_arity(op) == 2) n->b = parse_stream(toks, pos, leaf);
  return n;
}

Expr::NodeP make_leaf_cst(double v) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::cst;
  n->value = v;
  return n;
}

Expr::NodeP make_leaf_var(int var) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::var;
  n->var = var;
  return n;
}

Expr::NodeP make_leaf_slot() {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::slot;
  return n;
}

Expr::NodeP instantiate_node(const Expr::Node* n, std::span<const double> c, size_t& next) {
  auto out = std::make_shared<Expr::Node>();
  *out = *n;
  if (n->kind == Expr::Kind::slot) {
    out->kind = Expr::Kind::cst;
    out->value = c[next++];
    return out;
  }
  if (n->kind == Expr::Kind::op) {
    out->a = instantiate_node(n->a.get(), c, next);
    if (n->b) out->b = instantiate_node(n->b.get(), c, next);
  }
  return out;
}

Expr::NodeP skeleton_node(const Expr::Node* n, std::vector<double>& consts) {
  auto out = std::make_shared<Expr::Node>();
  *out = *n;
  if (n->kind == Expr::Kind::cst) {
    consts.push_back(n->value);
    out->kind = Expr::Kind::slot;
    out->value = 0.0;
    return out;
  }
  if (n->kind == Expr::Kind::op) {
    out->a = skeleton_node(n->a.get(), consts);
    if (n->b) out->b = skeleton_node(n->b.get(), consts);
  }
  return out;
}

int count_nodes(const Expr::Node* n, Expr::Kind only, bool all) {
  if (!n) return 0;
  int c = (all || n->kind == only) ? 1 : 0;
  if (n->kind == Expr::Kind::op) {
    c += count_nodes(n->a.get(), only, all);
    c += count_nodes(n->b.get(), only, all);
  }
  return c;
}

}  // namespace

const char* token_name(int id) {
  if (id < 0 || id >= kVocabSize) throw std::out_of_range("token id out of range");
  return kTokenNames[id];
}

int token_id(std::string_view name) {
  for (int i = 0; i < kVocabSize; ++i)
    if (name == kTokenNames[i]) return i;
  return -1;
}

int op_arity(Op op) { return kOps[static_cast<int>(op)].arity; }
const char* op_name(Op op) { return kOps[static_cast<int>(op)].name; }
int op_token(Op op) { return kOps[static_cast<int>(op)].token; }
int op_sample_weight(Op op) { return kOps[static_cast<int>(op)].weight; }

Expr Expr::constant(double v) { return Expr(make_leaf_cst(v)); }

Expr Expr::variable(int index_1based) {
  if (index_1based < 1 || index_1based > kDMax)
    throw std::out_of_range("variable index must be in 1..3");
  return Expr(make_leaf_var(index_1based));
}

Expr Expr::slot() { return Expr(make_leaf_slot()); }

Expr Expr::unary(Op op, Expr child) {
  if (op_arity(op) != 1) throw std::invalid_argument("unary() with a binary operator");
  auto n = std::make_shared<Node>();
  n->kind = Kind::op;
  n->op = op;
  n->a = child.root_;
  return Expr(std::move(n));
}

Expr Expr::binary(Op op, Expr lhs, Expr rhs) {
  if (op_arity(op) != 2) throw std::invalid_argument("binary() with a unary operator");
  auto n = std::make_shared<Node>();
  n->kind = Kind::op;
  n->op = op;
  n->a = lhs.root_;
  n->b = rhs.root_;
  return Expr(std::move(n));
}

int Expr::node_count() const { return count_nodes(root_.get(), Kind::op, true); }
int Expr::op_node_count() const { return count_nodes(root_.get(), Kind::op, false); }
int Expr::slot_count() const { return count_nodes(root_.get(), Kind::slot, false); }

int Expr::depth() const {
  struct R {
    static int go(const Node* n) {
      if (!n || n->kind != Kind::op) return n ? 1 : 0;
      int d = R::go(n->a.get());
      if (n->b) d = std::max(d, R::go(n->b.get()));
      return d + 1;
    }
  };
  return R::go(root_.get());
}

double Expr::evaluate(std::span<const double> x) const {
  if (!root_) throw std::invalid_argument("evaluate() on an empty expression");
  return eval_node(root_.get(), x);
}

std::set<int> Expr::used_dimensions() const {
  std::set<int> dims;
  struct R {
    static void go(const Node* n, std::set<int>& d) {
      if (!n) return;
      if (n->kind == Kind::var) d.insert(n->var);
      if (n->kind == Kind::op) {
        R::go(n->a.get(), d);
        R::go(n->b.get(), d);
      }
    }
  };
  R::go(root_.get(), dims);
  return dims;
}

std::vector<std::string> Expr::prefix_tokens() const {
  std::vector<std::string> out;
  if (root_) collect_prefix(root_.get(), out);
  return out;
}

std::string Expr::prefix_string() const {
  std::string s;
  for (const auto& t : prefix_tokens()) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

std::vector<int> Expr::token_ids() const {
  std::vector<int> out;
  if (root_) collect_ids(root_.get(), out);
  return out;
}

bool operator==(const Expr& x, const Expr& y) {
  return node_eq(x.root_.get(), y.root_.get());
}

Expr parse_prefix(const std::vector<std::string>& tokens) {
  size_t pos = 0;
  auto leaf = [](const std::string& t) -> std::pair<Expr::NodeP, Op> {
    int id = token_id(t);
    if (id == TOK_SLOT) return {make_leaf_slot(), Op::add};
    if (id >= TOK_X1 && id <= TOK_X3) return {make_leaf_var(id - TOK_X1 + 1), Op::add};
    if (id >= TOK_ADD && id <= TOK_POW5)
      return {nullptr, static_cast<Op>(id - TOK_ADD)};
    if (id >= 0) throw MalformedPrefix("token '" + t + "' is not valid inside an expression");
    double v;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size())
      throw MalformedPrefix("unknown token '" + t + "'");
    return {make_leaf_cst(v), Op::add};
  };
  Expr e = Expr::from_node(parse_stream(tokens, pos, leaf));
  if (pos != tokens.size())
    throw MalformedPrefix("trailing tokens after a complete expression");
  return e;
}

Expr parse_prefix(std::string_view text) {
  std::vector<std::string> toks;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) toks.emplace_back(text.substr(i, j - i));
    i = j;
  }
  if (toks.empty()) throw MalformedPrefix("empty prefix expression");
  return parse_prefix(toks);
}

Expr parse_token_ids(const std::vector<int>& ids) {
  size_t pos = 0;
  auto leaf = [](int id) -> std::pair<Expr::NodeP, Op> {
    if (id == TOK_SLOT) return {make_leaf_slot(), Op::add};
    if (id >= TOK_X1 && id <= TOK_X3) return {make_leaf_var(id - TOK_X1 + 1), Op::add};
    if (id >= TOK_ADD && id <= TOK_POW5)
      return {nullptr, static_cast<Op>(id - TOK_ADD)};
    throw MalformedPrefix("token id " + std::to_string(id) + " is not valid inside an expression");
  };
  Expr e = Expr::from_node(parse_stream(ids, pos, leaf));
  if (pos != ids.size())
    throw MalformedPrefix("trailing tokens after a complete expression");
  return e;
}

std::pair<Skeleton, std::vector<double>> extract_skeleton(const Expr& e) {
  if (e.empty()) throw std::invalid_argument("extract_skeleton() on an empty expression");
  std::vector<double> consts;
  auto root = skeleton_node(e.root().get(), consts);
  return {Expr::from_node(std::move(root)), std::move(consts)};
}

Expr instantiate(const Skeleton& skeleton, std::span<const double> constants) {
  if (skeleton.empty()) throw std::invalid_argument("instantiate() on an empty skeleton");
  size_t slots = static_cast<size_t>(skeleton.slot_count());
  if (slots != constants.size())
    throw SlotCountMismatch("skeleton has " + std::to_string(slots) + " slots but " +
                            std::to_string(constants.size()) + " constants were given");
  size_t next = 0;
  auto root = instantiate_node(skeleton.root().get(), constants, next);
  return Expr::from_node(std::move(root));
}

std::string format_double(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace imeq
