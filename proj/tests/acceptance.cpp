// Acceptance gate: twelve end-to-end checks over the equation-discovery
// artifact, one [PASS]/[FAIL] line each. Every check builds its own
// fixtures (corpora, point sets, reference enumerations) and verifies the
// library through its public interface only.
//
// Usage: acceptance --suites-dir <dir> [--only N[,M...]]
// Exit code: number of failing criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
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
#include "imeq/tensor.hpp"

namespace fs = std::filesystem;
using namespace imeq;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_suites_dir = "suites";
fs::path g_scratch = "acceptance_scratch";

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void note(const char* fmt, ...) {
  std::va_list args;
  va_start(args, fmt);
  std::printf("         ");
  std::vprintf(fmt, args);
  std::printf("\n");
  va_end(args);
  std::fflush(stdout);
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PointMatrix circle_data(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> theta(0.0, 2 * M_PI);
  PointMatrix pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double t = theta(rng);
    pts.push_back({std::cos(t), std::sin(t), 0.0});
  }
  return pts;
}

// ---------------------------------------------------------------------------
// 1. Expression round-trip identities.

bool criterion_1() {
  Rng rng(101);
  GenConfig cfg;
  int printed_mismatch = 0, skeleton_mismatch = 0;
  for (int i = 0; i < 10000; ++i) {
    cfg.non_leaf_nodes = 1 + i % 8;
    const Expr e = sample_equation(cfg, rng);
    const std::string s = e.prefix_string();
    if (parse_prefix(s).prefix_string() != s) ++printed_mismatch;
    const auto [sk, consts] = extract_skeleton(e);
    if (instantiate(sk, consts).prefix_string() != s) ++skeleton_mismatch;
  }
  note("parse(print(.)) mismatches: %d / 10000", printed_mismatch);
  note("instantiate(extract(.)) mismatches: %d / 10000", skeleton_mismatch);
  return printed_mismatch == 0 && skeleton_mismatch == 0;
}

// ---------------------------------------------------------------------------
// 2. Generated data satisfies the on-manifold residual and padding rules.

bool criterion_2() {
  GenConfig cfg;
  cfg.k_samples = 1000;
  cfg.seed = 202;
  const fs::path path = g_scratch / "residual_corpus.jsonl";
  generate_corpus(cfg, path.string(), 1);
  const std::vector<TrainingSample> samples = load_corpus(path.string());

  double max_residual = 0.0;
  long padding_violations = 0;
  for (const TrainingSample& s : samples) {
    for (const Point& p : s.points) {
      max_residual = std::max(max_residual, std::fabs(s.equation.evaluate(p)));
      for (int d = 1; d <= kDMax; ++d)
        if (!s.used_dims.count(d) && p[d - 1] != 0.0) ++padding_violations;
    }
  }
  note("samples: %zu, max |f(x_n)|: %.3g, padding violations: %ld",
       samples.size(), max_residual, padding_violations);
  return samples.size() == 1000 && max_residual <= 1e-8 &&
         padding_violations == 0;
}

// ---------------------------------------------------------------------------
// 3. The anti-degeneracy fitness rejects trivial solutions and accepts
//    every bundled physics ground truth on its own clean data.

bool criterion_3() {
  const PointMatrix data = circle_data(200, 303);
  Rng tree_rng(304);
  GenConfig tree_cfg;
  tree_cfg.max_var = 2;

  std::vector<std::pair<std::string, Expr>> degenerates;
  for (int i = 0; i < 20; ++i) {
    tree_cfg.non_leaf_nodes = 1 + i % 5;
    Expr g = sample_equation(tree_cfg, tree_rng);
    degenerates.emplace_back("g - g", Expr::binary(Op::sub, g, g));
    degenerates.emplace_back("0 * g",
                             Expr::binary(Op::mul, Expr::constant(0.0), g));
  }
  // Expressions blind to one of the data's two active coordinates, plus
  // pure constants (blind to both).
  GenConfig one_var = tree_cfg;
  one_var.max_var = 1;
  one_var.p_var = 1.0;
  for (int i = 0; i < 15; ++i) {
    one_var.non_leaf_nodes = 1 + i % 4;
    degenerates.emplace_back("x1-only", sample_equation(one_var, tree_rng));
  }
  for (double c : {0.0, 1.0, -2.5, 1e6, 3.14})
    degenerates.emplace_back("constant", Expr::constant(c));

  Rng fit_rng(305);
  ClfemConfig clfem;
  int rejected = 0;
  for (const auto& [label, f] : degenerates) {
    const FitnessResult r = clfem_fitness(f, data, clfem, fit_rng);
    if (r.value == kNegInf) ++rejected;
  }
  note("constructed degenerates rejected: %d / %zu", rejected,
       degenerates.size());

  SuiteConfig scfg;
  scfg.suites_dir = g_suites_dir;
  scfg.n_points = 200;
  scfg.data_seed = 306;
  const BenchmarkSuite suite = load_suite("ai_feynman", scfg);
  int accepted = 0;
  double worst = 0.0;
  for (const SuiteEquation& eq : suite.equations) {
    const FitnessResult r = clfem_fitness(eq.equation, eq.points, clfem, fit_rng);
    if (std::isfinite(r.value) && r.value >= -1e-6)
      ++accepted;
    else
      note("  physics truth %s scored %.3g", eq.id.c_str(), r.value);
    if (std::isfinite(r.value)) worst = std::min(worst, r.value);
  }
  note("physics truths accepted: %d / %zu (worst finite fitness %.3g)",
       accepted, suite.equations.size(), worst);
  return rejected == static_cast<int>(degenerates.size()) &&
         accepted == static_cast<int>(suite.equations.size()) &&
         suite.equations.size() == 39;
}

// ---------------------------------------------------------------------------
// 4. Reverse-mode gradients match central differences on random smooth
//    compositions in float64.

struct GraphPlan {
  int n = 2, m = 2, k = 2;          // X:[n,m] W1:[m,k] W2:[k,k]
  std::vector<int> layer_ops;       // nonlinearity chain after each matmul
};

TensorT<double> run_plan(const GraphPlan& plan, TapeT<double>& tape,
                         TensorT<double>& X, TensorT<double>& W1,
                         TensorT<double>& b1, TensorT<double>& W2) {
  TensorT<double> h = add(tape, matmul(tape, X, W1), b1);
  for (int op : plan.layer_ops) {
    switch (op) {
      case 0: h = tanh(tape, h); break;
      case 1: h = softmax(tape, h); break;
      case 2: {
        TensorT<double> gamma = TensorT<double>::zeros({plan.k});
        TensorT<double> beta = TensorT<double>::zeros({plan.k});
        for (auto& v : *gamma.data) v = 1.0;
        h = layer_norm(tape, h, gamma, beta);
        break;
      }
      case 3: h = exp(tape, scale(tape, h, 0.3)); break;
      case 4: h = mul(tape, h, tanh(tape, h)); break;
      default: h = sub(tape, h, softmax(tape, h)); break;
    }
  }
  h = matmul(tape, h, W2);
  h = tanh(tape, h);
  return mean_all(tape, h);
}

bool criterion_4() {
  double max_rel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(mix_seed(404, trial));
    std::uniform_int_distribution<int> dim(2, 5);
    std::uniform_int_distribution<int> opd(0, 5);
    std::normal_distribution<double> n01(0.0, 1.0);
    GraphPlan plan;
    plan.n = dim(rng);
    plan.m = dim(rng);
    plan.k = dim(rng);
    const int depth = 1 + trial % 3;
    for (int i = 0; i < depth; ++i) plan.layer_ops.push_back(opd(rng));

    TensorT<double> X = TensorT<double>::zeros({plan.n, plan.m});
    TensorT<double> W1 = TensorT<double>::zeros({plan.m, plan.k});
    TensorT<double> b1 = TensorT<double>::zeros({plan.k});
    TensorT<double> W2 = TensorT<double>::zeros({plan.k, plan.k});
    for (TensorT<double>* t : {&X, &W1, &b1, &W2}) {
      for (auto& v : *t->data) v = 0.5 * n01(rng);
      t->requires_grad();
    }

    {
      TapeT<double> tape;
      TensorT<double> loss = run_plan(plan, tape, X, W1, b1, W2);
      tape.backward(loss);
    }

    auto loss_value = [&]() {
      TapeT<double> tape;
      tape.recording = false;
      return run_plan(plan, tape, X, W1, b1, W2).ptr()[0];
    };

    std::uniform_int_distribution<int> coord(0, 1 << 20);
    for (TensorT<double>* t : {&X, &W1, &b1, &W2}) {
      for (int probe = 0; probe < 3; ++probe) {
        const int idx = coord(rng) % static_cast<int>(t->numel());
        double& v = t->ptr()[idx];
        const double keep = v;
        const double h = 1e-6 * std::max(1.0, std::fabs(keep));
        v = keep + h;
        const double up = loss_value();
        v = keep - h;
        const double down = loss_value();
        v = keep;
        const double fd = (up - down) / (2 * h);
        const double an = t->gptr()[idx];
        const double rel =
            std::fabs(an - fd) / std::max({1e-6, std::fabs(an), std::fabs(fd)});
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  note("max relative gradient error over 100 compositions: %.3g", max_rel);
  return max_rel < 1e-4;
}

// ---------------------------------------------------------------------------
// 5. The set encoder is permutation-invariant in its input points.

bool criterion_5() {
  Rng init_rng(505);
  Model model;
  model.init(ModelConfig::tiny(), init_rng);

  Rng data_rng(506);
  std::normal_distribution<double> n01(0.0, 1.0);
  double worst = 0.0;
  for (int input = 0; input < 100; ++input) {
    PointMatrix pts;
    for (int i = 0; i < 24; ++i)
      pts.push_back({n01(data_rng), n01(data_rng), n01(data_rng)});

    TapeT<float> tape;
    tape.recording = false;
    Rng dummy(0);
    TensorT<float> z0 =
        model.encode(tape, model.embed_points(tape, {pts}), 0.0, false, dummy);
    float scale0 = 0.0f;
    for (std::size_t i = 0; i < z0.numel(); ++i)
      scale0 = std::max(scale0, std::fabs(z0.ptr()[i]));

    for (int perm = 0; perm < 10; ++perm) {
      PointMatrix shuffled = pts;
      std::shuffle(shuffled.begin(), shuffled.end(), data_rng);
      TensorT<float> z1 = model.encode(
          tape, model.embed_points(tape, {shuffled}), 0.0, false, dummy);
      float dev = 0.0f;
      for (std::size_t i = 0; i < z0.numel(); ++i)
        dev = std::max(dev, std::fabs(z0.ptr()[i] - z1.ptr()[i]));
      worst = std::max(worst, double(dev) / std::max(1e-12, double(scale0)));
    }
  }
  note("max relative deviation over 100 inputs x 10 permutations: %.3g",
       worst);
  return worst < 1e-5;
}

// ---------------------------------------------------------------------------
// 6. Decoder causality, uniform cross-entropy at a zeroed output head, and
//    one-batch overfitting capacity.

bool criterion_6() {
  GenConfig gen;
  gen.non_leaf_nodes = 3;
  gen.n_points = 32;
  gen.k_samples = 32;
  gen.seed = 606;
  const fs::path path = g_scratch / "overfit_batch.jsonl";
  generate_corpus(gen, path.string(), 1);
  const std::vector<TrainingSample> batch = load_corpus(path.string());

  ModelConfig cfg = ModelConfig::tiny();
  cfg.dropout = 0.0;
  Rng init_rng(607);
  Model model;
  model.init(cfg, init_rng);

  // (a) Causality: perturbing a future token leaves earlier logits bit-
  // identical.
  bool causal = true;
  {
    TapeT<float> tape;
    tape.recording = false;
    Rng dummy(0);
    TensorT<float> z = model.encode(
        tape, model.embed_points(tape, {batch[0].points, batch[1].points}),
        0.0, false, dummy);
    Rng tok_rng(608);
    std::uniform_int_distribution<int> tok(TOK_EOS + 1, kVocabSize - 1);
    const int L = 10;
    std::vector<std::vector<int>> rows(2, std::vector<int>(L));
    for (auto& row : rows) {
      row[0] = TOK_SOS;
      for (int i = 1; i < L; ++i) row[i] = tok(tok_rng);
    }
    TensorT<float> base = model.decode(tape, z, rows, 0.0, false, dummy);
    for (int cut = 3; cut < L; cut += 2) {
      auto perturbed = rows;
      for (auto& row : perturbed)
        for (int i = cut; i < L; ++i) row[i] = tok(tok_rng);
      TensorT<float> out = model.decode(tape, z, perturbed, 0.0, false, dummy);
      // Positions strictly before the first perturbed index must agree.
      for (int b = 0; b < 2 && causal; ++b)
        for (int p = 0; p < cut && causal; ++p)
          for (int v = 0; v < kVocabSize; ++v) {
            const std::size_t at = (std::size_t(b) * L + p) * kVocabSize + v;
            if (base.ptr()[at] != out.ptr()[at]) {
              causal = false;
              break;
            }
          }
    }
  }
  note("future-token perturbation left earlier logits unchanged: %s",
       causal ? "yes" : "NO");

  // (b) Zeroing the output head makes every next-token distribution
  // uniform, so the masked CE equals ln(vocab).
  Model uniform_model;
  Rng init2(609);
  uniform_model.init(cfg, init2);
  std::fill(uniform_model.head.w.data->begin(),
            uniform_model.head.w.data->end(), 0.0f);
  std::fill(uniform_model.head.b.data->begin(),
            uniform_model.head.b.data->end(), 0.0f);
  const double uniform_ce = evaluate_ce(uniform_model, batch);
  const double ln_vocab = std::log(double(kVocabSize));
  note("zero-head CE: %.6f vs ln %d = %.6f (|diff| %.2g)", uniform_ce,
       kVocabSize, ln_vocab, std::fabs(uniform_ce - ln_vocab));
  const bool uniform_ok = std::fabs(uniform_ce - ln_vocab) <= 1e-3;

  // (c) 200 optimizer steps on one fixed four-sample batch cut the
  // training CE by >= 95%.
  GenConfig small = gen;
  small.n_points = 8;
  small.k_samples = 4;
  small.seed = 610;
  const fs::path small_path = g_scratch / "overfit_small.jsonl";
  generate_corpus(small, small_path.string(), 1);
  const std::vector<TrainingSample> one_batch = load_corpus(small_path.string());

  ModelConfig ocfg;
  ocfg.d_hid = 128;
  ocfg.enc_heads = 4;
  ocfg.n_isab = 1;
  ocfg.n_inducing = 8;
  ocfg.pma_seeds = 3;
  ocfg.dec_heads = 4;
  ocfg.dec_layers = 1;
  ocfg.dropout = 0.0;
  ocfg.max_seq_len = 16;
  ocfg.batch_size = 4;
  Model omodel;
  Rng oinit(611);
  omodel.init(ocfg, oinit);

  double ce_before = 0.0, ce_after = 0.0;
  {
    std::vector<const TrainingSample*> ptrs;
    for (const TrainingSample& s : one_batch) ptrs.push_back(&s);
    std::vector<PointMatrix> points;
    for (const TrainingSample& s : one_batch) points.push_back(s.points);
    const TokenBatch tb = make_token_batch(ptrs, ocfg.max_seq_len);
    auto params = omodel.params();
    AdamStateT<float> adam;
    Rng dummy(0);
    for (int step = 0; step < 200; ++step) {
      TapeT<float> tape;
      TensorT<float> emb = omodel.embed_points(tape, points);
      TensorT<float> z = omodel.encode(tape, emb, 0.0, true, dummy);
      TensorT<float> logits =
          omodel.decode(tape, z, tb.inputs, 0.0, true, dummy);
      TensorT<float> loss = ce_loss(tape, logits, tb.targets_flat);
      omodel.zero_grads();
      tape.backward(loss);
      adam_step(params, adam);
      if (step == 0) ce_before = double(loss.ptr()[0]);
      ce_after = double(loss.ptr()[0]);
    }
  }
  note("one-batch CE: %.4f -> %.4f (reduction %.1f%%)", ce_before, ce_after,
       100.0 * (1.0 - ce_after / ce_before));
  const bool overfit_ok = ce_after <= 0.05 * ce_before;

  return causal && uniform_ok && overfit_ok;
}

// ---------------------------------------------------------------------------
// 7. Beam search equals exhaustive enumeration on a tiny decoder.

void enumerate_bodies(const Model& m, const TensorT<float>& z,
                      const std::vector<int>& body, double lp, int max_len,
                      std::vector<BeamHyp>& out) {
  std::vector<int> prefix(1, TOK_SOS);
  prefix.insert(prefix.end(), body.begin(), body.end());
  const auto row = m.next_logprobs({prefix}, z)[0];
  out.push_back({body, lp + row[TOK_EOS]});
  if (static_cast<int>(body.size()) == max_len) return;
  for (int v = TOK_EOS + 1; v < m.cfg.vocab; ++v) {
    std::vector<int> next = body;
    next.push_back(v);
    enumerate_bodies(m, z, next, lp + row[v], max_len, out);
  }
}

bool criterion_7() {
  ModelConfig cfg;
  cfg.d_hid = 32;
  cfg.enc_heads = 4;
  cfg.n_isab = 1;
  cfg.n_inducing = 4;
  cfg.pma_seeds = 3;
  cfg.dec_heads = 4;
  cfg.dec_layers = 1;
  cfg.dropout = 0.0;
  cfg.vocab = 5;  // PAD, SOS, EOS and two body tokens
  cfg.max_seq_len = 8;
  cfg.batch_size = 4;

  bool all_ok = true;
  for (std::uint64_t seed : {7ull, 19ull, 23ull}) {
    Rng rng(seed);
    Model m;
    m.init(cfg, rng);
    Rng data_rng(mix_seed(seed, 99));
    std::normal_distribution<double> n01(0.0, 1.0);
    PointMatrix pts;
    for (int i = 0; i < 6; ++i)
      pts.push_back({n01(data_rng), n01(data_rng), 0.0});

    TapeT<float> tape;
    tape.recording = false;
    Rng dummy(0);
    TensorT<float> z =
        m.encode(tape, m.embed_points(tape, {pts}), 0.0, false, dummy);
    std::vector<BeamHyp> oracle;
    enumerate_bodies(m, z, {}, 0.0, 4, oracle);
    std::sort(oracle.begin(), oracle.end(),
              [](const BeamHyp& a, const BeamHyp& b) {
                if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                if (a.tokens.size() != b.tokens.size())
                  return a.tokens.size() < b.tokens.size();
                return a.tokens < b.tokens;
              });
    if (oracle.size() != 31) all_ok = false;  // 2^0 + ... + 2^4 bodies

    for (int k : {1, 4, 31}) {
      BeamConfig bc;
      bc.beam_size = k;
      bc.max_len = 4;
      const std::vector<BeamHyp> got = beam_search(m, pts, bc);
      bool match = static_cast<int>(got.size()) == k;
      for (int i = 0; match && i < k; ++i)
        match = got[i].tokens == oracle[i].tokens &&
                got[i].log_prob == oracle[i].log_prob;
      if (!match) {
        note("beam/oracle mismatch at model seed %llu, k=%d",
             (unsigned long long)seed, k);
        all_ok = false;
      }
    }
  }
  note("beam output matched the exhaustive ranking for k in {1,4,31} "
       "on 3 decoder instances: %s", all_ok ? "yes" : "NO");
  return all_ok;
}

// ---------------------------------------------------------------------------
// 8. Constant recovery across four curve families.

bool criterion_8() {
  struct Family {
    const char* name;
    std::function<Expr(Rng&)> make;
  };
  std::uniform_real_distribution<double> mid(0.5, 2.0);
  std::uniform_real_distribution<double> off(0.5, 4.0);
  std::vector<Family> families = {
      {"ellipse",
       [&](Rng& r) {
         return Expr::binary(
             Op::sub,
             Expr::binary(Op::add,
                          Expr::binary(Op::mul, Expr::constant(mid(r)),
                                       Expr::unary(Op::pow2, Expr::variable(1))),
                          Expr::binary(Op::mul, Expr::constant(mid(r)),
                                       Expr::unary(Op::pow2, Expr::variable(2)))),
             Expr::constant(off(r)));
       }},
      {"hyperbola",
       [&](Rng& r) {
         return Expr::binary(
             Op::sub,
             Expr::binary(Op::sub,
                          Expr::binary(Op::mul, Expr::constant(mid(r)),
                                       Expr::unary(Op::pow2, Expr::variable(1))),
                          Expr::binary(Op::mul, Expr::constant(mid(r)),
                                       Expr::unary(Op::pow2, Expr::variable(2)))),
             Expr::constant(mid(r)));
       }},
      {"inverse-proportion",
       [&](Rng& r) {
         return Expr::binary(Op::sub,
                             Expr::binary(Op::mul, Expr::variable(1),
                                          Expr::variable(2)),
                             Expr::constant(mid(r)));
       }},
      {"linear",
       [&](Rng& r) {
         return Expr::binary(
             Op::sub,
             Expr::binary(Op::add,
                          Expr::binary(Op::mul, Expr::constant(mid(r)),
                                       Expr::variable(1)),
                          Expr::binary(Op::mul, Expr::constant(mid(r)),
                                       Expr::variable(2))),
             Expr::constant(mid(r)));
       }},
  };

  GenConfig gen;
  gen.n_points = 200;
  BfgsConfig bfgs;  // 4 restarts by default
  ClfemConfig clfem;
  MetricConfig metric;

  int total = 0, recovered = 0;
  Rng rng(808);
  for (const Family& fam : families) {
    for (int inst = 0; inst < 5; ++inst) {
      ++total;
      const Expr truth = fam.make(rng);
      const std::optional<PointMatrix> data = sample_points(truth, gen, rng);
      if (!data) {
        note("%s #%d: point sampling exhausted its budget", fam.name, inst);
        continue;
      }
      const auto [sk, true_consts] = extract_skeleton(truth);
      try {
        Rng fit_rng(mix_seed(809, total));
        const FitResult fit =
            fit_constants(sk, *data, clfem, bfgs, fit_rng, FitnessKind::clfem);
        const Expr fitted = instantiate(sk, fit.constants);
        Rng metric_rng(mix_seed(810, total));
        const EvalReport rep = fitness_metric(fitted, truth, metric, metric_rng);
        if (rep.fitness >= 0.95)
          ++recovered;
        else
          note("%s #%d: metric fitness %.3f", fam.name, inst, rep.fitness);
      } catch (const std::exception& e) {
        note("%s #%d: %s", fam.name, inst, e.what());
      }
    }
  }
  note("recovered %d / %d cases at metric fitness >= 0.95 (need >= 18)",
       recovered, total);
  return total == 20 && recovered >= 18;
}

// ---------------------------------------------------------------------------
// 9. The solver-based metric: self-score, zero-function mid-scale score,
//    truth-scale invariance, and threshold monotonicity.

bool criterion_9() {
  SuiteConfig scfg;
  scfg.suites_dir = g_suites_dir;
  scfg.n_points = 40;  // metric only needs the equations, keep loading cheap
  scfg.data_seed = 909;
  const BenchmarkSuite suite = load_suite("ai_feynman", scfg);

  MetricConfig metric;
  int self_ok = 0;
  bool monotone = true;
  double worst_self = 1.0;
  for (std::size_t i = 0; i < suite.equations.size(); ++i) {
    const Expr& f = suite.equations[i].equation;
    Rng rng(mix_seed(910, i));
    const EvalReport rep = fitness_metric(f, f, metric, rng);
    worst_self = std::min(worst_self, rep.fitness);
    if (rep.fitness >= 0.99)
      ++self_ok;
    else
      note("self-score of %s: %.4f", suite.equations[i].id.c_str(),
           rep.fitness);
    int prev = 1;
    for (const auto& [tau, hit] : rep.acc) {  // map: ascending tau
      if (hit > prev) monotone = false;
      prev = hit;
    }
  }
  note("self-scores >= 0.99: %d / %zu (worst %.4f)", self_ok,
       suite.equations.size(), worst_self);

  MetricConfig wide = metric;
  wide.norm_samples = 200;
  const Expr zero_fn = parse_prefix("sub x_1 x_1");
  const Expr plane = parse_prefix("sub add x_1 mul 2.0 x_2 1.0");
  Rng zrng(911);
  const EvalReport zrep = fitness_metric(zero_fn, plane, wide, zrng);
  note("zero-function fitness: %.4f (want within [0.4, 0.6])", zrep.fitness);
  const bool zero_ok = zrep.fitness >= 0.4 && zrep.fitness <= 0.6;

  const Expr pred = parse_prefix("sub x_1 1.0");
  const Expr scaled = Expr::binary(Op::mul, Expr::constant(4.0), plane);
  Rng r1(912), r2(912);
  const EvalReport a = fitness_metric(pred, plane, metric, r1);
  const EvalReport b = fitness_metric(pred, scaled, metric, r2);
  const bool scale_ok = a.fitness == b.fitness && a.nmse == b.nmse &&
                        a.acc == b.acc &&
                        a.accepted_points == b.accepted_points;
  note("4x truth rescaling: fitness %.6f vs %.6f, bit-identical: %s",
       a.fitness, b.fitness, scale_ok ? "yes" : "NO");
  note("Acc indicators monotone in the threshold: %s",
       monotone ? "yes" : "NO");

  return self_ok == static_cast<int>(suite.equations.size()) && zero_ok &&
         scale_ok && monotone;
}

// ---------------------------------------------------------------------------
// 10. Toy end-to-end training on a restricted grammar.

bool criterion_10() {
  const auto t0 = Clock::now();
  GenConfig gen;
  gen.non_leaf_nodes = 3;
  gen.allowed_ops = {Op::add, Op::sub, Op::mul, Op::sin};
  gen.max_var = 2;
  gen.n_points = 32;

  auto corpus = [&](int k, std::uint64_t seed, const char* name) {
    GenConfig g = gen;
    g.k_samples = k;
    g.seed = seed;
    const fs::path path = g_scratch / name;
    generate_corpus(g, path.string(), 1);
    return load_corpus(path.string());
  };
  const std::vector<TrainingSample> train_set =
      corpus(20000, 1001, "e2e_train.jsonl");
  const std::vector<TrainingSample> val_set = corpus(1500, 1002, "e2e_val.jsonl");
  const std::vector<TrainingSample> eval_set = corpus(300, 1003, "e2e_eval.jsonl");
  note("corpora ready after %.0fs", seconds_since(t0));

  TrainOptions opt;
  opt.ckpt_path = (g_scratch / "e2e_model.ckpt").string();
  opt.loss_csv_path = (g_scratch / "e2e_loss.csv").string();
  opt.max_steps = 2500;
  TrainReport report;
  Model model =
      train_model(ModelConfig::tiny(), train_set, val_set, 7, opt, &report);
  note("trained %ld steps (%d epochs, stop: %s, best val CE %.4f) after %.0fs",
       report.steps, report.epochs, report.stop_reason.c_str(),
       report.best_val, seconds_since(t0));

  BeamConfig bc;
  bc.beam_size = 16;
  bc.max_len = 16;
  int top1 = 0, contained = 0;
  for (const TrainingSample& s : eval_set) {
    const std::vector<int> body = s.skeleton.token_ids();
    const std::vector<BeamHyp> hyps = beam_search(model, s.points, bc);
    if (!hyps.empty() && hyps[0].tokens == body) ++top1;
    for (const BeamHyp& h : hyps)
      if (h.tokens == body) {
        ++contained;
        break;
      }
  }
  const double top1_rate = double(top1) / double(eval_set.size());
  const double contain_rate = double(contained) / double(eval_set.size());
  note("held-out top-1 exact-match: %.1f%% (need >= 20%%), beam-16 "
       "containment: %.1f%% (need >= 50%%), total %.0fs",
       100 * top1_rate, 100 * contain_rate, seconds_since(t0));
  return top1_rate >= 0.20 && contain_rate >= 0.50;
}

// ---------------------------------------------------------------------------
// 11. GP smoke test on clean unit-circle data.

bool criterion_11() {
  const PointMatrix data = circle_data(200, 1111);
  const Expr truth = parse_prefix("sub add pow2 x_1 pow2 x_2 1.0");

  double best_metric = 0.0;
  bool elitism_ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GpConfig cfg;
    cfg.population = 500;
    cfg.generations = 20;
    cfg.fitness_mode = FitnessKind::clfem;
    cfg.rng_seed = seed;
    const GpResult run = gp_run(data, cfg);
    for (std::size_t i = 1; i < run.stats.size(); ++i)
      if (run.stats[i].best_fitness < run.stats[i - 1].best_fitness)
        elitism_ok = false;
    Rng mrng(mix_seed(1112, seed));
    MetricConfig metric;
    double m = 0.0;
    try {
      m = fitness_metric(run.best.expr, truth, metric, mrng).fitness;
    } catch (const std::exception&) {
      m = 0.0;  // unsolvable best individual scores zero
    }
    best_metric = std::max(best_metric, m);
    note("seed %llu: best fitness %.3g, metric fitness %.3f",
         (unsigned long long)seed, run.best.fitness, m);
  }
  note("best-so-far fitness non-decreasing in all 5 runs: %s",
       elitism_ok ? "yes" : "NO");
  note("max metric fitness over 5 seeds: %.3f (need >= 0.9)", best_metric);
  if (best_metric < 0.9)
    note("unreached: an unnormalized mean-residual ranking lets gate-passing "
         "high-power monomials (residuals near the f64 floor on |x|<=1 data) "
         "dominate every fitted circle; see README notes");
  return elitism_ok && best_metric >= 0.9;
}

// ---------------------------------------------------------------------------
// 12. Full-pipeline determinism: generate -> train -> infer -> evaluate ->
//     bench twice, byte-identical artifacts.

void run_pipeline(const fs::path& dir) {
  fs::create_directories(dir);

  GenConfig gen;
  gen.non_leaf_nodes = 3;
  gen.allowed_ops = {Op::add, Op::sub, Op::mul, Op::sin};
  gen.max_var = 2;
  gen.n_points = 24;
  gen.k_samples = 6400;
  gen.seed = 2101;
  generate_corpus(gen, (dir / "corpus.jsonl").string(), 1);

  GenConfig vgen = gen;
  vgen.k_samples = 96;
  vgen.seed = 2102;
  generate_corpus(vgen, (dir / "val.jsonl").string(), 1);

  const std::vector<TrainingSample> train_set =
      load_corpus((dir / "corpus.jsonl").string());
  const std::vector<TrainingSample> val_set =
      load_corpus((dir / "val.jsonl").string());

  TrainOptions opt;
  opt.ckpt_path = (dir / "model.ckpt").string();
  opt.loss_csv_path = (dir / "loss.csv").string();
  opt.max_steps = 200;
  Model model = train_model(ModelConfig::tiny(), train_set, val_set, 5, opt);

  // Infer on one held-out sample's points, written out like a user would.
  {
    std::ofstream pts(dir / "points.csv");
    for (const Point& p : val_set[0].points) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p[0], p[1], p[2]);
      pts << buf;
    }
  }
  DiscoverConfig dcfg;
  dcfg.beam.beam_size = 16;
  dcfg.beam.max_len = 16;
  dcfg.seed = 9;
  std::string pred_prefix;
  try {
    const DiscoverResult res =
        discover(model, load_points_file((dir / "points.csv").string()), dcfg);
    std::ofstream(dir / "pred.json") << discover_to_json(res) << "\n";
    pred_prefix =
        instantiate(res.best.skeleton, res.best.constants).prefix_string();
  } catch (const NoViableCandidate& e) {
    std::ofstream(dir / "pred.json")
        << "{\"error\": \"" << e.what() << "\"}\n";
  }
  if (!pred_prefix.empty()) {
    MetricConfig metric;
    Rng mrng(11);
    const EvalReport rep = fitness_metric(parse_prefix(pred_prefix),
                                          val_set[0].equation, metric, mrng);
    std::ofstream(dir / "report.json") << report_to_json(rep) << "\n";
  }

  ExperimentConfig bench;
  bench.suite = "synthetic";
  bench.method = BenchMethod::gp_vanilla;
  bench.sigmas = {0.0};
  bench.seeds = {3};
  bench.suite_cfg.suites_dir = g_suites_dir;
  bench.suite_cfg.n_points = 24;
  bench.suite_cfg.data_seed = 4;
  bench.suite_cfg.synthetic_count = 5;
  bench.gp.population = 40;
  bench.gp.generations = 2;
  bench.gp.tournament = 5;
  bench.metric.M = 40;
  bench.metric.norm_samples = 20;
  bench.record_wall_time = false;
  run_experiment_to_csv(bench, (dir / "results.csv").string());
}

bool criterion_12() {
  const fs::path run1 = g_scratch / "pipeline_run1";
  const fs::path run2 = g_scratch / "pipeline_run2";
  run_pipeline(run1);
  note("first pipeline pass done");
  run_pipeline(run2);
  note("second pipeline pass done");

  bool all_ok = true;
  for (const char* name : {"corpus.jsonl", "loss.csv", "results.csv",
                           "model.ckpt", "points.csv", "pred.json"}) {
    const bool have1 = fs::exists(run1 / name);
    const bool have2 = fs::exists(run2 / name);
    const bool same =
        have1 && have2 && read_bytes(run1 / name) == read_bytes(run2 / name);
    note("%-12s byte-identical: %s", name, same ? "yes" : "NO");
    // The three named pipeline artifacts are required; the rest are
    // checked for free because they exist anyway.
    if (!same) all_ok = false;
  }
  if (fs::exists(run1 / "report.json") != fs::exists(run2 / "report.json")) {
    all_ok = false;
  } else if (fs::exists(run1 / "report.json")) {
    const bool same = read_bytes(run1 / "report.json") ==
                      read_bytes(run2 / "report.json");
    note("%-12s byte-identical: %s", "report.json", same ? "yes" : "NO");
    if (!same) all_ok = false;
  }
  return all_ok;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--suites-dir" && i + 1 < argc) {
      g_suites_dir = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr,
                   "usage: %s [--suites-dir <dir>] [--only N[,M...]]\n",
                   argv[0]);
      return 2;
    }
  }

  fs::create_directories(g_scratch);

  struct Criterion {
    int id;
    const char* label;
    bool (*fn)();
  };
  const Criterion criteria[] = {
      {1, "expression round-trip identities", criterion_1},
      {2, "generated data residual and padding invariants", criterion_2},
      {3, "anti-degeneracy fitness rejects trivial solutions", criterion_3},
      {4, "reverse-mode gradients match central differences", criterion_4},
      {5, "set encoder permutation invariance", criterion_5},
      {6, "decoder causality, uniform CE, one-batch overfit", criterion_6},
      {7, "beam search equals exhaustive enumeration", criterion_7},
      {8, "constant recovery across curve families", criterion_8},
      {9, "solver-based metric properties", criterion_9},
      {10, "toy end-to-end training calibration", criterion_10},
      {11, "GP smoke test on circle data", criterion_11},
      {12, "full-pipeline determinism", criterion_12},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = Clock::now();
    bool ok = false;
    std::string error;
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      error = e.what();
    }
    if (!ok) ++failures;
    std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL",
                c.id, c.label, seconds_since(t0),
                error.empty() ? "" : " — exception: ", error.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
