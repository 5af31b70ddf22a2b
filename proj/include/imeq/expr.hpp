#pragma once

#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "imeq/common.hpp"

namespace imeq {

// Fixed token vocabulary shared by the dataset files, the model and the
// decoders. The ids are part of the wire format and must not change.
enum Token : int {
  TOK_PAD = 0,
  TOK_SOS = 1,
  TOK_EOS = 2,
  TOK_ADD = 3,
  TOK_MUL = 4,
  TOK_SUB = 5,
  TOK_DIV = 6,
  TOK_SQRT = 7,
  TOK_EXP = 8,
  TOK_LN = 9,
  TOK_SIN = 10,
  TOK_COS = 11,
  TOK_POW2 = 12,
  TOK_POW3 = 13,
  TOK_POW4 = 14,
  TOK_POW5 = 15,
  TOK_X1 = 16,
  TOK_X2 = 17,
  TOK_X3 = 18,
  TOK_SLOT = 19,  // constant placeholder, printed as "◇"
};
inline constexpr int kVocabSize = 20;
inline constexpr int kDMax = 3;

const char* token_name(int id);
// -1 when the name is not in the vocabulary (e.g. a constant literal).
int token_id(std::string_view name);

enum class Op : uint8_t {
  add,
  mul,
  sub,
  div,
  sqrt,
  exp,
  ln,
  sin,
  cos,
  pow2,
  pow3,
  pow4,
  pow5,
};
inline constexpr int kNumOps = 13;

int op_arity(Op op);
const char* op_name(Op op);
int op_token(Op op);          // token id of the operator
int op_sample_weight(Op op);  // relative draw weight in the training grammar
inline constexpr int kOpWeightTotal = 58;

// Immutable expression tree. Nodes are shared, so copies are cheap and
// subtree sharing (e.g. in GP crossover) is safe.
//
// A tree may contain slot nodes ("◇") marking unfitted constants; such a
// tree is a skeleton. `Skeleton` is an alias kept for signature clarity:
// skeletons are exactly the exprs for which has_slots() is true.
class Expr {
 public:
  enum class Kind : uint8_t { op, var, cst, slot };

  struct Node {
    Kind kind;
    Op op{};          // valid when kind == op
    int var{};        // 1-based variable index, valid when kind == var
    double value{};   // valid when kind == cst
    std::shared_ptr<const Node> a, b;
  };
  using NodeP = std::shared_ptr<const Node>;

  Expr() = default;

  static Expr constant(double v);
  static Expr variable(int index_1based);
  static Expr slot();
  static Expr unary(Op op, Expr child);
  static Expr binary(Op op, Expr lhs, Expr rhs);
  static Expr from_node(NodeP n) { return Expr(std::move(n)); }

  bool empty() const { return root_ == nullptr; }
  const NodeP& root() const { return root_; }

  int node_count() const;
  int op_node_count() const;
  int slot_count() const;
  bool has_slots() const { return slot_count() > 0; }
  int depth() const;

  // Evaluates at x (x[0] is x_1). Domain violations -- division by |d| <
  // 1e-300, sqrt of a negative, ln of a non-positive, overflow -- yield a
  // quiet NaN ("NotFinite") instead of crashing or returning garbage:
  // every non-finite intermediate poisons the result. Must not be called
  // on a tree with slots.
  double evaluate(std::span<const double> x) const;

  // 1-based indices of variables that appear in the tree.
  std::set<int> used_dimensions() const;

  // Prefix (Polish) form; constants are printed as shortest round-trip
  // decimal literals, slots as "◇".
  std::vector<std::string> prefix_tokens() const;
  std::string prefix_string() const;

  // Token-id form used by the model. Requires a tree without literal
  // constants (skeletons and constant-free exprs).
  std::vector<int> token_ids() const;

  // Structural equality: same shape, ops, variable indices and bitwise
  // equal constants.
  friend bool operator==(const Expr& x, const Expr& y);
  friend bool operator!=(const Expr& x, const Expr& y) { return !(x == y); }

 private:
  explicit Expr(NodeP root) : root_(std::move(root)) {}
  NodeP root_;
};

using Skeleton = Expr;

// Parses a whitespace-separated prefix string / token list. Any token
// that parses fully as a decimal literal becomes a constant; "◇" becomes
// a slot. Throws MalformedPrefix on unknown names, truncated input or
// trailing tokens.
Expr parse_prefix(const std::vector<std::string>& tokens);
Expr parse_prefix(std::string_view text);
// Same for model token ids (PAD/SOS/EOS are rejected).
Expr parse_token_ids(const std::vector<int>& ids);

// Replaces every constant by a slot; returns the skeleton and the
// constants in prefix order. instantiate() is its inverse and throws
// SlotCountMismatch when the lengths disagree.
std::pair<Skeleton, std::vector<double>> extract_skeleton(const Expr& e);
Expr instantiate(const Skeleton& skeleton, std::span<const double> constants);

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace imeq
