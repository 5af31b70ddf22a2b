#include "imeq/gp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <utility>

namespace imeq {

namespace {

// Prefix-order node access over the immutable tree: index 0 is the node
// itself, then the left subtree, then the right.
Expr::NodeP subtree_at(const Expr::NodeP& n, int& idx) {
  if (idx == 0) return n;
  --idx;
  if (n->a) {
    Expr::NodeP r = subtree_at(n->a, idx);
    if (r) return r;
  }
  if (n->b) {
    Expr::NodeP r = subtree_at(n->b, idx);
    if (r) return r;
  }
  return nullptr;
}

// Rebuilds the path to the idx-th node with `sub` planted there; all
// untouched subtrees stay shared.
Expr::NodeP replace_at(const Expr::NodeP& n, int& idx,
                       const Expr::NodeP& sub) {
  if (idx == 0) {
    --idx;  // mark as consumed
    return sub;
  }
  --idx;
  auto copy = std::make_shared<Expr::Node>(*n);
  if (idx >= 0 && n->a) copy->a = replace_at(n->a, idx, sub);
  if (idx >= 0 && n->b) copy->b = replace_at(n->b, idx, sub);
  return copy;
}

Expr::NodeP pick_subtree(const Expr& e, int idx) {
  int i = idx;
  return subtree_at(e.root(), i);
}

Expr plant_subtree(const Expr& e, int idx, const Expr::NodeP& sub) {
  int i = idx;
  return Expr::from_node(replace_at(e.root(), i, sub));
}

double mean_finite_fitness(const std::vector<Individual>& pop) {
  double sum = 0.0;
  int count = 0;
  for (const Individual& ind : pop)
    if (std::isfinite(ind.fitness)) {
      sum += ind.fitness;
      ++count;
    }
  return count ? sum / count : kNegInf;
}

void validate(const GpConfig& cfg) {
  if (cfg.population < 1 || cfg.generations < 0 || cfg.tournament < 1)
    throw std::invalid_argument("gp: population/generations/tournament");
  if (cfg.population <= cfg.tournament)
    throw std::invalid_argument("gp: population must exceed tournament size");
  if (cfg.p_crossover < 0.0 || cfg.p_crossover > 1.0 ||
      cfg.p_subtree_mutation < 0.0 || cfg.p_subtree_mutation > 1.0 ||
      cfg.p_crossover + cfg.p_subtree_mutation > 1.0)
    throw std::invalid_argument("gp: variation probabilities");
  if (cfg.max_depth < 1 || cfg.init_depth_min < 1 ||
      cfg.init_depth_max < cfg.init_depth_min ||
      cfg.init_depth_max > cfg.max_depth)
    throw std::invalid_argument("gp: depth bounds");
}

}  // namespace

int uniform_subtree_index(const Expr& e, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, e.node_count() - 1);
  return pick(rng);
}

Expr random_tree(const std::vector<int>& dims, int depth_budget, bool full,
                 Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const int n_terminals = static_cast<int>(dims.size()) + 1;

  auto leaf = [&]() -> Expr {
    std::uniform_int_distribution<int> pick(0, n_terminals - 1);
    const int t = pick(rng);
    if (t < static_cast<int>(dims.size())) return Expr::variable(dims[t]);
    return Expr::constant(n01(rng));
  };

  bool make_leaf = depth_budget <= 1;
  if (!make_leaf && !full) {
    // Grow method: choose uniformly over the combined alphabet.
    std::uniform_int_distribution<int> pick(0, kNumOps + n_terminals - 1);
    make_leaf = pick(rng) >= kNumOps;
  }
  if (make_leaf) return leaf();

  std::uniform_int_distribution<int> pick_op(0, kNumOps - 1);
  const Op op = static_cast<Op>(pick_op(rng));
  if (op_arity(op) == 1)
    return Expr::unary(op, random_tree(dims, depth_budget - 1, full, rng));
  Expr lhs = random_tree(dims, depth_budget - 1, full, rng);
  Expr rhs = random_tree(dims, depth_budget - 1, full, rng);
  return Expr::binary(op, std::move(lhs), std::move(rhs));
}

Expr crossover(const Expr& a, const Expr& b, int max_depth, int max_retries,
               Rng& rng) {
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    const int ia = uniform_subtree_index(a, rng);
    const int ib = uniform_subtree_index(b, rng);
    Expr child = plant_subtree(a, ia, pick_subtree(b, ib));
    if (child.depth() <= max_depth) return child;
  }
  return a;  // reproduction fallback
}

Expr mutate(const Expr& a, const std::vector<int>& dims, int max_depth,
            int max_retries, Rng& rng) {
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    const int idx = uniform_subtree_index(a, rng);
    const Expr::NodeP chosen = pick_subtree(a, idx);
    if (chosen->kind == Expr::Kind::cst) {
      // Point mutation of constants: jitter in place.
      std::normal_distribution<double> noise(0.0, 0.1);
      const double v = chosen->value + noise(rng);
      return plant_subtree(a, idx, Expr::constant(v).root());
    }
    Expr fresh = random_tree(dims, max_depth, false, rng);
    Expr child = plant_subtree(a, idx, fresh.root());
    if (child.depth() <= max_depth) return child;
  }
  return a;
}

GpResult gp_run(const PointMatrix& data, const GpConfig& cfg) {
  validate(cfg);
  if (data.empty()) throw IoError("gp_run: empty data");

  Rng rng(cfg.rng_seed);
  ClfemConfig clfem = cfg.clfem;
  if (!clfem.pin_stochastic) {
    clfem.pin_stochastic = true;
    clfem.stochastic_seed = mix_seed(cfg.rng_seed, 0x67505F);
  }

  std::vector<int> dims;
  for (int d : valid_dims(data)) dims.push_back(d);
  if (dims.empty())
    for (int d = 1; d <= kDMax; ++d) dims.push_back(d);

  auto score = [&](Expr& e) -> double {
    if (cfg.refit_constants) {
      auto [skeleton, constants] = extract_skeleton(e);
      if (skeleton.slot_count() > 0) {
        try {
          FitResult fit = fit_constants(skeleton, data, clfem, cfg.bfgs, rng,
                                        cfg.fitness_mode);
          e = instantiate(skeleton, fit.constants);
          return fit.fitness.value;
        } catch (const AllRestartsDegenerate&) {
          return kNegInf;
        }
      }
    }
    if (cfg.fitness_mode == FitnessKind::vanilla)
      return vanilla_fitness(e, data, clfem.norm_ell);
    return clfem_fitness(e, data, clfem, rng).value;
  };

  // Ramped half-and-half: cycle the depth ramp, alternate full and grow.
  std::vector<Individual> pop;
  pop.reserve(cfg.population);
  const int span = cfg.init_depth_max - cfg.init_depth_min + 1;
  for (int i = 0; i < cfg.population; ++i) {
    Individual ind;
    const int depth = cfg.init_depth_min + (i / 2) % span;
    ind.expr = random_tree(dims, depth, i % 2 == 0, rng);
    ind.fitness = score(ind.expr);
    pop.push_back(std::move(ind));
  }

  Individual best = pop.front();
  for (const Individual& ind : pop)
    if (ind.fitness > best.fitness) best = ind;

  std::vector<GenStats> stats;
  stats.push_back({0, best.fitness, mean_finite_fitness(pop)});

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto tourney = [&]() -> const Individual& {
    return pop[tournament_select(pop, cfg.tournament, rng)];
  };

  for (int g = 1; g <= cfg.generations; ++g) {
    std::vector<Individual> next;
    next.reserve(cfg.population);
    next.push_back(best);  // elitism: the best-so-far always survives
    while (static_cast<int>(next.size()) < cfg.population) {
      const double r = u01(rng);
      Individual child;
      if (r < cfg.p_crossover) {
        const Expr& pa = tourney().expr;
        const Expr& pb = tourney().expr;
        child.expr = crossover(pa, pb, cfg.max_depth, cfg.max_retries, rng);
      } else if (r < cfg.p_crossover + cfg.p_subtree_mutation) {
        child.expr =
            mutate(tourney().expr, dims, cfg.max_depth, cfg.max_retries, rng);
      } else {
        child.expr = tourney().expr;
      }
      child.fitness = score(child.expr);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
    for (const Individual& ind : pop)
      if (ind.fitness > best.fitness) best = ind;
    if (cfg.on_generation) cfg.on_generation(g, pop);
    stats.push_back({g, best.fitness, mean_finite_fitness(pop)});
  }
  return {std::move(best), std::move(stats)};
}

int tournament_select(const std::vector<Individual>& pop, int tournament,
                      Rng& rng) {
  std::uniform_int_distribution<int> pick(0,
                                          static_cast<int>(pop.size()) - 1);
  int best = pick(rng);
  for (int t = 1; t < tournament; ++t) {
    const int c = pick(rng);
    if (pop[c].fitness > pop[best].fitness) best = c;
  }
  return best;
}

std::string gp_stats_csv(const std::vector<GenStats>& stats) {
  std::string out = "generation,best_fitness,mean_fitness\n";
  char buf[96];
  for (const GenStats& s : stats) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", s.generation,
                  s.best_fitness, s.mean_fitness);
    out += buf;
  }
  return out;
}

}  // namespace imeq
