#include "imeq/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <thread>

#include <json.hpp>

namespace imeq {

namespace {

Op draw_op(const GenConfig& cfg, Rng& rng) {
  if (cfg.allowed_ops.empty()) {
    int t = std::uniform_int_distribution<int>(0, kOpWeightTotal - 1)(rng);
    for (int i = 0; i < kNumOps; ++i) {
      t -= op_sample_weight(static_cast<Op>(i));
      if (t < 0) return static_cast<Op>(i);
    }
    return static_cast<Op>(kNumOps - 1);  // unreachable: weights sum to total
  }
  int total = 0;
  for (Op op : cfg.allowed_ops) total += op_sample_weight(op);
  int t = std::uniform_int_distribution<int>(0, total - 1)(rng);
  for (Op op : cfg.allowed_ops) {
    t -= op_sample_weight(op);
    if (t < 0) return op;
  }
  return cfg.allowed_ops.back();
}

// Mutable scaffold used while growing the tree; converted to Expr at the end.
struct ProtoNode {
  enum class Kind : uint8_t { pending, op, var, cst } kind = Kind::pending;
  Op op{};
  int var = 0;
  double cst = 0.0;
  int a = -1, b = -1;
};

Expr to_expr(const std::vector<ProtoNode>& nodes, int idx) {
  const ProtoNode& n = nodes[idx];
  switch (n.kind) {
    case ProtoNode::Kind::var:
      return Expr::variable(n.var);
    case ProtoNode::Kind::cst:
      return Expr::constant(n.cst);
    case ProtoNode::Kind::op:
      if (op_arity(n.op) == 1) return Expr::unary(n.op, to_expr(nodes, n.a));
      return Expr::binary(n.op, to_expr(nodes, n.a), to_expr(nodes, n.b));
    default:
      throw std::logic_error("unfilled tree position");
  }
}

// Bisects g over [a, b] (endpoints of opposite finite sign) until
// |g| <= 1e-10; gives up on non-finite midpoints or exhausted precision.
template <class G>
std::optional<double> bisect(G&& g, double a, double b, double fa) {
  for (int it = 0; it < 200; ++it) {
    double m = 0.5 * (a + b);
    double fm = g(m);
    if (!std::isfinite(fm)) return std::nullopt;
    if (std::fabs(fm) <= 1e-10) return m;
    if ((fa < 0) != (fm < 0)) {
      b = m;
    } else {
      a = m;
      fa = fm;
    }
    if (b - a <= std::numeric_limits<double>::epsilon() *
                     std::max(1.0, std::fabs(a))) {
      break;
    }
  }
  return std::nullopt;
}

// All roots of t -> f(base with dim set to t) found over the scan range.
std::vector<double> solve_slice(const Expr& f, Point base, int dim,
                                const GenConfig& cfg) {
  auto eval_at = [&](double t) {
    Point p = base;
    p[dim - 1] = t;
    return f.evaluate(p);
  };
  std::vector<double> roots;
  double prev_t = cfg.scan_lo;
  double prev_v = eval_at(prev_t);
  if (std::isfinite(prev_v) && std::fabs(prev_v) <= 1e-10)
    roots.push_back(prev_t);
  for (int i = 1; i <= cfg.scan_subdivisions; ++i) {
    double t = cfg.scan_lo +
               (cfg.scan_hi - cfg.scan_lo) * i / cfg.scan_subdivisions;
    double v = eval_at(t);
    if (std::isfinite(v) && std::fabs(v) <= 1e-10) {
      roots.push_back(t);
    } else if (std::isfinite(prev_v) && std::isfinite(v) &&
               std::fabs(prev_v) > 1e-10 && (prev_v < 0) != (v < 0)) {
      if (auto r = bisect(eval_at, prev_t, t, prev_v)) roots.push_back(*r);
    }
    prev_t = t;
    prev_v = v;
  }
  return roots;
}

void generate_into(const GenConfig& cfg, std::uint64_t stream_seed, int quota,
                   std::string& buf) {
  Rng rng(stream_seed);
  int done = 0;
  while (done < quota) {
    Expr f = sample_equation(cfg, rng);
    if (f.used_dimensions().empty()) continue;
    auto pts = sample_points(f, cfg, rng);
    if (!pts) continue;
    buf += sample_to_json(build_sample(f, std::move(*pts)));
    buf += '\n';
    ++done;
  }
}

}  // namespace

Expr sample_equation(const GenConfig& cfg, Rng& rng) {
  std::vector<ProtoNode> nodes(1);
  std::vector<int> pending = {0};
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);

  for (int step = 0; step < cfg.non_leaf_nodes; ++step) {
    int pick = std::uniform_int_distribution<int>(
        0, static_cast<int>(pending.size()) - 1)(rng);
    int idx = pending[pick];
    pending[pick] = pending.back();
    pending.pop_back();

    Op op = draw_op(cfg, rng);
    nodes[idx].kind = ProtoNode::Kind::op;
    nodes[idx].op = op;
    nodes[idx].a = static_cast<int>(nodes.size());
    nodes.emplace_back();
    pending.push_back(nodes[idx].a);
    if (op_arity(op) == 2) {
      nodes[idx].b = static_cast<int>(nodes.size());
      nodes.emplace_back();
      pending.push_back(nodes[idx].b);
    }
  }

  // Fill the remaining positions as leaves in tree order.
  std::sort(pending.begin(), pending.end());
  for (int idx : pending) {
    if (u01(rng) < cfg.p_var) {
      nodes[idx].kind = ProtoNode::Kind::var;
      nodes[idx].var = std::uniform_int_distribution<int>(1, cfg.max_var)(rng);
    } else {
      nodes[idx].kind = ProtoNode::Kind::cst;
      nodes[idx].cst = n01(rng);
    }
  }
  return to_expr(nodes, 0);
}

std::optional<PointMatrix> sample_points(const Expr& f, const GenConfig& cfg,
                                         Rng& rng) {
  std::set<int> dim_set = f.used_dimensions();
  std::vector<int> used(dim_set.begin(), dim_set.end());
  std::normal_distribution<double> n01(0.0, 1.0);

  PointMatrix out;
  out.reserve(cfg.n_points);
  int budget = cfg.trial_budget();
  while (static_cast<int>(out.size()) < cfg.n_points) {
    if (budget-- <= 0) return std::nullopt;
    int solve_dim = used[std::uniform_int_distribution<int>(
        0, static_cast<int>(used.size()) - 1)(rng)];
    Point p{0.0, 0.0, 0.0};
    for (int d : used)
      if (d != solve_dim) p[d - 1] = n01(rng);
    std::vector<double> roots = solve_slice(f, p, solve_dim, cfg);
    if (roots.empty()) continue;
    double root = roots.size() == 1
                      ? roots[0]
                      : roots[std::uniform_int_distribution<int>(
                            0, static_cast<int>(roots.size()) - 1)(rng)];
    p[solve_dim - 1] = root;
    out.push_back(p);
  }
  return out;
}

TrainingSample build_sample(const Expr& f, PointMatrix points) {
  auto [skeleton, constants] = extract_skeleton(f);
  TrainingSample s;
  s.skeleton = std::move(skeleton);
  s.constants = std::move(constants);
  s.points = std::move(points);
  s.used_dims = f.used_dimensions();
  s.equation = f;
  return s;
}

std::string sample_to_json(const TrainingSample& s) {
  nlohmann::json j;
  j["skeleton"] = s.skeleton.prefix_tokens();
  j["constants"] = s.constants;
  nlohmann::json pts = nlohmann::json::array();
  for (const Point& p : s.points)
    pts.push_back(std::vector<double>(p.begin(), p.end()));
  j["points"] = std::move(pts);
  j["dims"] = std::vector<int>(s.used_dims.begin(), s.used_dims.end());
  j["expr"] = s.equation.prefix_tokens();
  return j.dump();
}

TrainingSample sample_from_json(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  TrainingSample s;
  s.skeleton = parse_prefix(j.at("skeleton").get<std::vector<std::string>>());
  s.constants = j.at("constants").get<std::vector<double>>();
  s.equation = parse_prefix(j.at("expr").get<std::vector<std::string>>());
  for (int d : j.at("dims").get<std::vector<int>>()) s.used_dims.insert(d);
  for (const auto& row : j.at("points")) {
    auto vals = row.get<std::vector<double>>();
    if (vals.size() > kDMax) throw ParseError("point row wider than D_max");
    Point p{0.0, 0.0, 0.0};
    std::copy(vals.begin(), vals.end(), p.begin());
    s.points.push_back(p);
  }
  return s;
}

void generate_corpus(const GenConfig& cfg, const std::string& out_path,
                     int workers) {
  workers = std::max(1, workers);
  std::vector<std::string> bufs(workers);
  if (workers == 1) {
    generate_into(cfg, mix_seed(cfg.seed, 1), cfg.k_samples, bufs[0]);
  } else {
    std::vector<std::thread> pool;
    int base = cfg.k_samples / workers;
    int rem = cfg.k_samples % workers;
    for (int w = 0; w < workers; ++w) {
      int quota = base + (w < rem ? 1 : 0);
      pool.emplace_back([&, w, quota] {
        generate_into(cfg, mix_seed(cfg.seed, w + 1), quota, bufs[w]);
      });
    }
    for (auto& t : pool) t.join();
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + out_path);
  for (const std::string& b : bufs) out << b;
  out.flush();
  if (!out) throw IoError("write failed: " + out_path);
}

std::vector<TrainingSample> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<TrainingSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(sample_from_json(line));
  }
  return out;
}

}  // namespace imeq
