#pragma once

// The sequence model: an IEEE-754 binary16 multi-hot embedding of the
// input points, a Set Transformer encoder (ISAB stack + pooling by
// multihead attention) and an autoregressive Transformer decoder over the
// skeleton token vocabulary.
//
// Everything is templated on the scalar type: float32 is the training
// configuration, float64 exists for numerically strict tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "imeq/common.hpp"
#include "imeq/datagen.hpp"
#include "imeq/expr.hpp"
#include "imeq/fitness.hpp"
#include "imeq/tensor.hpp"

namespace imeq {

struct ModelConfig {
  int d_emb = 16;     // bits per scalar, fixed by the binary16 format
  int d_hid = 512;    // model width
  int enc_heads = 16;
  int n_isab = 5;     // encoder depth in ISAB blocks
  int n_inducing = 50;
  int pma_seeds = 10;  // k pooled output rows
  int dec_heads = 16;
  int dec_layers = 8;
  double dropout = 0.1;
  int vocab = kVocabSize;
  int max_seq_len = 32;
  int batch_size = 64;

  // Full-scale configuration (the defaults above).
  static ModelConfig paper() { return {}; }
  // Desk-scale configuration used by the tests and examples.
  static ModelConfig tiny() {
    ModelConfig c;
    c.d_hid = 128;
    c.enc_heads = 4;
    c.n_isab = 2;
    c.n_inducing = 16;
    c.pma_seeds = 10;
    c.dec_heads = 4;
    c.dec_layers = 2;
    c.batch_size = 32;
    return c;
  }
};

// Round-to-nearest-even conversion to IEEE-754 binary16 bits, saturating
// at the format's largest finite magnitude 65504.
inline std::uint16_t to_binary16_bits(double v) {
  if (std::isnan(v)) return 0x7E00;
  const std::uint16_t sign = std::signbit(v) ? 0x8000 : 0;
  double a = std::fabs(v);
  if (a > 65504.0) return sign | 0x7BFF;
  if (a == 0.0) return sign;
  int e = 0;
  const double m = std::frexp(a, &e);  // a = m * 2^e, m in [0.5, 1)
  int be = e - 1 + 15;                 // biased exponent of 1.f * 2^(e-1)
  double scaled;
  if (be >= 1) {
    scaled = std::ldexp(m, 11);  // 1.f as an integer in [1024, 2048)
  } else {
    scaled = std::ldexp(a, 24);  // subnormal: f = a / 2^-24
    be = 0;
  }
  auto mant = static_cast<std::uint32_t>(std::nearbyint(scaled));
  if (be >= 1) {
    if (mant == 2048) {  // rounding carried into the next binade
      mant = 1024;
      ++be;
    }
    if (be >= 31) return sign | 0x7BFF;
    return sign | static_cast<std::uint16_t>(be << 10) |
           static_cast<std::uint16_t>(mant - 1024);
  }
  if (mant == 1024) return sign | (1u << 10);  // rounded up to normal
  return sign | static_cast<std::uint16_t>(mant);
}

// Writes the 16 bits of to_binary16_bits(v) as {0,1} values, LSB first.
template <class T>
void multi_hot_scalar(double v, T* out) {
  const std::uint16_t bits = to_binary16_bits(v);
  for (int i = 0; i < 16; ++i) out[i] = T((bits >> i) & 1u);
}

template <class T>
struct LinearT {
  TensorT<T> w, b;  // [in, out], [out]

  void init(int in, int out, Rng& rng) {
    w = TensorT<T>::zeros({in, out});
    b = TensorT<T>::zeros({out});
    const double bound = 1.0 / std::sqrt(double(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : *w.data) v = T(u(rng));
    for (auto& v : *b.data) v = T(u(rng));
    w.requires_grad();
    b.requires_grad();
  }
  TensorT<T> apply(TapeT<T>& tape, const TensorT<T>& x) const {
    return add(tape, matmul(tape, x, w), b);
  }
};

// Scaled dot-product multi-head attention. X supplies the queries, Y the
// keys and values; an optional mask (1 = blocked) is broadcast over the
// score batch.
template <class T>
struct MhaT {
  LinearT<T> wq, wk, wv, wo;
  int heads = 1;

  void init(int d, int h, Rng& rng) {
    heads = h;
    if (d % h != 0)
      throw ShapeMismatch("attention width " + std::to_string(d) +
                          " not divisible by " + std::to_string(h) + " heads");
    wq.init(d, d, rng);
    wk.init(d, d, rng);
    wv.init(d, d, rng);
    wo.init(d, d, rng);
  }

  TensorT<T> apply(TapeT<T>& tape, const TensorT<T>& X, const TensorT<T>& Y,
                   const TensorT<T>* mask = nullptr) const {
    const int B = X.shape[0], Nq = X.shape[1], d = X.shape[2];
    const int Nk = Y.shape[1];
    const int dk = d / heads;
    auto split = [&](const TensorT<T>& t, int n) {
      TensorT<T> r = reshape(t, {B, n, heads, dk});
      r = transpose(tape, r, 1, 2);
      return reshape(r, {B * heads, n, dk});
    };
    TensorT<T> q = split(wq.apply(tape, X), Nq);
    TensorT<T> k = split(wk.apply(tape, Y), Nk);
    TensorT<T> v = split(wv.apply(tape, Y), Nk);
    TensorT<T> scores = scale(tape, matmul(tape, q, transpose(tape, k, 1, 2)),
                              T(1) / T(std::sqrt(double(dk))));
    if (mask) scores = mask_fill(tape, scores, *mask, T(-1e9));
    TensorT<T> ctx = matmul(tape, softmax(tape, scores), v);
    ctx = reshape(ctx, {B, heads, Nq, dk});
    ctx = transpose(tape, ctx, 1, 2);
    return wo.apply(tape, reshape(ctx, {B, Nq, d}));
  }
};

// Multihead attention block: LN(H + rFF(H)) with H = LN(X + MHA(X, Y, Y)).
template <class T>
struct MabT {
  MhaT<T> mha;
  LinearT<T> ff1, ff2;
  TensorT<T> ln1_g, ln1_b, ln2_g, ln2_b;

  void init(int d, int heads, Rng& rng) {
    mha.init(d, heads, rng);
    ff1.init(d, d, rng);
    ff2.init(d, d, rng);
    ln1_g = TensorT<T>::full({d}, T(1));
    ln1_b = TensorT<T>::zeros({d});
    ln2_g = TensorT<T>::full({d}, T(1));
    ln2_b = TensorT<T>::zeros({d});
    for (auto* t : {&ln1_g, &ln1_b, &ln2_g, &ln2_b}) t->requires_grad();
  }

  TensorT<T> apply(TapeT<T>& tape, const TensorT<T>& X, const TensorT<T>& Y,
                   double drop_p, bool train, Rng& rng,
                   const TensorT<T>* mask = nullptr) const {
    TensorT<T> a =
        dropout(tape, mha.apply(tape, X, Y, mask), drop_p, train, rng);
    TensorT<T> h = layer_norm(tape, add(tape, X, a), ln1_g, ln1_b);
    TensorT<T> f = ff2.apply(tape, relu(tape, ff1.apply(tape, h)));
    f = dropout(tape, f, drop_p, train, rng);
    return layer_norm(tape, add(tape, h, f), ln2_g, ln2_b);
  }
};

// Induced set attention block: ISAB(X) = MAB(X, MAB(I, X)) with learnable
// inducing points I.
template <class T>
struct IsabT {
  TensorT<T> inducing;  // [m, d]
  MabT<T> mab1, mab2;

  void init(int d, int m, int heads, Rng& rng) {
    inducing = TensorT<T>::zeros({m, d});
    const double bound = 1.0 / std::sqrt(double(d));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : *inducing.data) v = T(u(rng));
    inducing.requires_grad();
    mab1.init(d, heads, rng);
    mab2.init(d, heads, rng);
  }

  TensorT<T> apply(TapeT<T>& tape, const TensorT<T>& X, double p, bool train,
                   Rng& rng) const {
    TensorT<T> I = repeat_leading(tape, inducing, X.shape[0]);
    TensorT<T> H = mab1.apply(tape, I, X, p, train, rng);
    return mab2.apply(tape, X, H, p, train, rng);
  }
};

// Decoder layer: causal self-attention, cross-attention over the encoder
// output, then a feed-forward block; post-norm residuals throughout.
template <class T>
struct DecLayerT {
  MhaT<T> self_mha, cross_mha;
  LinearT<T> ff1, ff2;
  TensorT<T> ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;

  void init(int d, int heads, Rng& rng) {
    self_mha.init(d, heads, rng);
    cross_mha.init(d, heads, rng);
    ff1.init(d, d, rng);
    ff2.init(d, d, rng);
    ln1_g = TensorT<T>::full({d}, T(1));
    ln1_b = TensorT<T>::zeros({d});
    ln2_g = TensorT<T>::full({d}, T(1));
    ln2_b = TensorT<T>::zeros({d});
    ln3_g = TensorT<T>::full({d}, T(1));
    ln3_b = TensorT<T>::zeros({d});
    for (auto* t : {&ln1_g, &ln1_b, &ln2_g, &ln2_b, &ln3_g, &ln3_b})
      t->requires_grad();
  }

  TensorT<T> apply(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& z,
                   const TensorT<T>& causal_mask, double p, bool train,
                   Rng& rng) const {
    TensorT<T> a =
        dropout(tape, self_mha.apply(tape, x, x, &causal_mask), p, train, rng);
    TensorT<T> h = layer_norm(tape, add(tape, x, a), ln1_g, ln1_b);
    TensorT<T> c =
        dropout(tape, cross_mha.apply(tape, h, z), p, train, rng);
    TensorT<T> h2 = layer_norm(tape, add(tape, h, c), ln2_g, ln2_b);
    TensorT<T> f = ff2.apply(tape, relu(tape, ff1.apply(tape, h2)));
    f = dropout(tape, f, p, train, rng);
    return layer_norm(tape, add(tape, h2, f), ln3_g, ln3_b);
  }
};

template <class T>
struct ModelT {
  ModelConfig cfg;
  LinearT<T> emb1, emb2;  // multi-hot -> d_hid -> d_hid
  std::vector<IsabT<T>> isabs;
  TensorT<T> seeds;  // [k, d]
  LinearT<T> pma_ff1, pma_ff2;
  MabT<T> pma_mab;
  TensorT<T> tok_emb, pos_emb;  // [vocab, d], [max_seq_len, d]
  std::vector<DecLayerT<T>> dec;
  LinearT<T> head;  // d -> vocab

  void init(const ModelConfig& c, Rng& rng) {
    cfg = c;
    emb1.init(kDMax * cfg.d_emb, cfg.d_hid, rng);
    emb2.init(cfg.d_hid, cfg.d_hid, rng);
    isabs.assign(cfg.n_isab, {});
    for (auto& b : isabs)
      b.init(cfg.d_hid, cfg.n_inducing, cfg.enc_heads, rng);
    seeds = TensorT<T>::zeros({cfg.pma_seeds, cfg.d_hid});
    const double bound = 1.0 / std::sqrt(double(cfg.d_hid));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : *seeds.data) v = T(u(rng));
    seeds.requires_grad();
    pma_ff1.init(cfg.d_hid, cfg.d_hid, rng);
    pma_ff2.init(cfg.d_hid, cfg.d_hid, rng);
    pma_mab.init(cfg.d_hid, cfg.enc_heads, rng);
    tok_emb = TensorT<T>::zeros({cfg.vocab, cfg.d_hid});
    pos_emb = TensorT<T>::zeros({cfg.max_seq_len, cfg.d_hid});
    for (auto& v : *tok_emb.data) v = T(u(rng));
    for (auto& v : *pos_emb.data) v = T(u(rng));
    tok_emb.requires_grad();
    pos_emb.requires_grad();
    dec.assign(cfg.dec_layers, {});
    for (auto& l : dec) l.init(cfg.d_hid, cfg.dec_heads, rng);
    head.init(cfg.d_hid, cfg.vocab, rng);
  }

  std::vector<std::pair<std::string, TensorT<T>*>> named_params() {
    std::vector<std::pair<std::string, TensorT<T>*>> out;
    auto lin = [&](const std::string& n, LinearT<T>& l) {
      out.emplace_back(n + ".w", &l.w);
      out.emplace_back(n + ".b", &l.b);
    };
    auto mha = [&](const std::string& n, MhaT<T>& m) {
      lin(n + ".wq", m.wq);
      lin(n + ".wk", m.wk);
      lin(n + ".wv", m.wv);
      lin(n + ".wo", m.wo);
    };
    auto mab = [&](const std::string& n, MabT<T>& m) {
      mha(n + ".mha", m.mha);
      lin(n + ".ff1", m.ff1);
      lin(n + ".ff2", m.ff2);
      out.emplace_back(n + ".ln1.g", &m.ln1_g);
      out.emplace_back(n + ".ln1.b", &m.ln1_b);
      out.emplace_back(n + ".ln2.g", &m.ln2_g);
      out.emplace_back(n + ".ln2.b", &m.ln2_b);
    };
    lin("embed.l1", emb1);
    lin("embed.l2", emb2);
    for (std::size_t i = 0; i < isabs.size(); ++i) {
      const std::string p = "enc.isab" + std::to_string(i);
      out.emplace_back(p + ".ind", &isabs[i].inducing);
      mab(p + ".mab1", isabs[i].mab1);
      mab(p + ".mab2", isabs[i].mab2);
    }
    out.emplace_back("enc.pma.seeds", &seeds);
    lin("enc.pma.ff1", pma_ff1);
    lin("enc.pma.ff2", pma_ff2);
    mab("enc.pma.mab", pma_mab);
    out.emplace_back("dec.tok", &tok_emb);
    out.emplace_back("dec.pos", &pos_emb);
    for (std::size_t i = 0; i < dec.size(); ++i) {
      const std::string p = "dec.layer" + std::to_string(i);
      mha(p + ".self", dec[i].self_mha);
      mha(p + ".cross", dec[i].cross_mha);
      lin(p + ".ff1", dec[i].ff1);
      lin(p + ".ff2", dec[i].ff2);
      out.emplace_back(p + ".ln1.g", &dec[i].ln1_g);
      out.emplace_back(p + ".ln1.b", &dec[i].ln1_b);
      out.emplace_back(p + ".ln2.g", &dec[i].ln2_g);
      out.emplace_back(p + ".ln2.b", &dec[i].ln2_b);
      out.emplace_back(p + ".ln3.g", &dec[i].ln3_g);
      out.emplace_back(p + ".ln3.b", &dec[i].ln3_b);
    }
    lin("head", head);
    return out;
  }

  std::vector<TensorT<T>*> params() {
    std::vector<TensorT<T>*> out;
    for (auto& [n, t] : named_params()) out.push_back(t);
    return out;
  }

  void zero_grads() {
    for (auto* p : params()) p->zero_grad();
  }

  // [B][N x kDMax] points -> [B, N, d_hid] through the multi-hot binary16
  // encoding and the two-layer MLP.
  TensorT<T> embed_points(TapeT<T>& tape,
                          const std::vector<PointMatrix>& batch) const {
    const int B = static_cast<int>(batch.size());
    const int N = static_cast<int>(batch.front().size());
    const int w = kDMax * cfg.d_emb;
    TensorT<T> mh = TensorT<T>::zeros({B * N, w});
    T* out = mh.ptr();
    for (const PointMatrix& pm : batch) {
      if (static_cast<int>(pm.size()) != N)
        throw ShapeMismatch("embed_points: ragged batch (" +
                            std::to_string(pm.size()) + " vs " +
                            std::to_string(N) + " points)");
      for (const Point& p : pm) {
        for (int d = 0; d < kDMax; ++d)
          multi_hot_scalar(p[d], out + d * cfg.d_emb);
        out += w;
      }
    }
    TensorT<T> h = relu(tape, emb1.apply(tape, mh));
    return reshape(emb2.apply(tape, h), {B, N, cfg.d_hid});
  }

  // [B, N, d] -> [B, k, d]; permutation-invariant in the N point rows.
  TensorT<T> encode(TapeT<T>& tape, const TensorT<T>& emb, double p,
                    bool train, Rng& rng) const {
    TensorT<T> x = emb;
    for (const auto& b : isabs) x = b.apply(tape, x, p, train, rng);
    TensorT<T> zf = pma_ff2.apply(tape, relu(tape, pma_ff1.apply(tape, x)));
    TensorT<T> s = repeat_leading(tape, seeds, x.shape[0]);
    return pma_mab.apply(tape, s, zf, p, train, rng);
  }

  // Teacher-forced decode: token id rows (all the same length) -> logits
  // [B, L, vocab]. Position l+1 depends only on tokens at positions <= l.
  TensorT<T> decode(TapeT<T>& tape, const TensorT<T>& z,
                    const std::vector<std::vector<int>>& inputs, double p,
                    bool train, Rng& rng) const {
    const int B = static_cast<int>(inputs.size());
    const int L = static_cast<int>(inputs.front().size());
    if (L > cfg.max_seq_len)
      throw ShapeMismatch("decode: sequence length " + std::to_string(L) +
                          " exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
    std::vector<int> flat;
    flat.reserve(std::size_t(B) * L);
    for (const auto& row : inputs) {
      if (static_cast<int>(row.size()) != L)
        throw ShapeMismatch("decode: ragged token batch");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    TensorT<T> tok =
        reshape(index_select(tape, tok_emb, flat), {B, L, cfg.d_hid});
    std::vector<int> iota(L);
    for (int i = 0; i < L; ++i) iota[i] = i;
    TensorT<T> pos = index_select(tape, pos_emb, iota);  // [L, d]
    TensorT<T> x = add(tape, tok, pos);
    x = dropout(tape, x, p, train, rng);

    TensorT<T> causal = TensorT<T>::zeros({L, L});
    for (int i = 0; i < L; ++i)
      for (int j = i + 1; j < L; ++j) causal.ptr()[i * L + j] = T(1);

    for (const auto& layer : dec)
      x = layer.apply(tape, x, z, causal, p, train, rng);
    return head.apply(tape, x);  // [B, L, vocab]
  }

  // Next-token log-probabilities for each prefix row (rows may have
  // different lengths). Evaluation mode, no recording.
  std::vector<std::vector<double>> next_logprobs(
      const std::vector<std::vector<int>>& prefixes,
      const TensorT<T>& z_single) const {
    const int B = static_cast<int>(prefixes.size());
    std::size_t max_len = 0;
    for (const auto& p : prefixes) max_len = std::max(max_len, p.size());
    // PAD-extend on the right; causality makes the padding invisible to
    // the true last position of each row.
    std::vector<std::vector<int>> rows(prefixes);
    for (auto& r : rows) r.resize(max_len, TOK_PAD);

    TapeT<T> tape;
    tape.recording = false;
    Rng dummy(0);
    TensorT<T> z = z_single;
    if (z.shape[0] != B) {
      if (z.shape[0] != 1)
        throw ShapeMismatch("next_logprobs: z batch " +
                            std::to_string(z.shape[0]) + " for " +
                            std::to_string(B) + " prefixes");
      z = reshape(repeat_leading(tape, reshape(z, {z.shape[1], z.shape[2]}), B),
                  {B, z_single.shape[1], z_single.shape[2]});
    }
    TensorT<T> logits = decode(tape, z, rows, 0.0, false, dummy);
    TensorT<T> lp = log_softmax(tape, logits);  // [B, L, V]
    std::vector<std::vector<double>> out(B, std::vector<double>(cfg.vocab));
    const int L = static_cast<int>(max_len);
    for (int b = 0; b < B; ++b) {
      const int last = static_cast<int>(prefixes[b].size()) - 1;
      const T* row = lp.ptr() + (std::size_t(b) * L + last) * cfg.vocab;
      for (int v = 0; v < cfg.vocab; ++v) out[b][v] = double(row[v]);
    }
    return out;
  }

  // Probability distribution over the next token after `prefix`.
  std::vector<double> decode_step(const std::vector<int>& prefix,
                                  const TensorT<T>& z) const {
    auto lp = next_logprobs({prefix}, z)[0];
    std::vector<double> probs(lp.size());
    for (std::size_t i = 0; i < lp.size(); ++i) probs[i] = std::exp(lp[i]);
    return probs;
  }
};

using Model = ModelT<float>;

// ---------------------------------------------------------------------------
// Training (float32).

struct TokenBatch {
  std::vector<std::vector<int>> inputs;  // B x L, SOS-prefixed
  std::vector<int> targets_flat;         // B*L, EOS-terminated, PAD-filled
  int length = 0;
  long n_valid = 0;  // non-PAD target positions
};

// Builds the teacher-forcing token batch for a set of samples.
TokenBatch make_token_batch(const std::vector<const TrainingSample*>& samples,
                            int max_seq_len);

// Masked token-level cross entropy (natural log); PAD targets excluded.
template <class T>
TensorT<T> ce_loss(TapeT<T>& tape, const TensorT<T>& logits,
                   const std::vector<int>& targets_flat) {
  TensorT<T> lp = log_softmax(tape, logits);
  TensorT<T> sel = gather_last(tape, lp, targets_flat);
  TensorT<T> mask = TensorT<T>::zeros(sel.shape);
  long n_valid = 0;
  for (std::size_t i = 0; i < targets_flat.size(); ++i) {
    if (targets_flat[i] != TOK_PAD) {
      mask.ptr()[i] = T(1);
      ++n_valid;
    }
  }
  if (n_valid == 0) throw ShapeMismatch("ce_loss: all targets are padding");
  TensorT<T> s = sum_all(tape, mul(tape, sel, mask));
  return scale(tape, s, T(-1.0 / double(n_valid)));
}

struct TrainOptions {
  std::string ckpt_path;      // checkpoint output (required)
  std::string loss_csv_path;  // loss curve CSV; empty disables it
  long max_steps = -1;        // stop after this many steps; -1 = no cap
  int max_epochs = 1000;
};

struct TrainReport {
  struct Row {
    long step;
    double train_ce;
    double val_ce;  // negative when not evaluated at this step
  };
  std::vector<Row> rows;
  double best_val = 0;
  long steps = 0;
  int epochs = 0;
  std::string stop_reason;
};

// Adam (lr 1e-4) on masked CE; validates after each epoch and stops when
// validation fails to improve for one epoch. The checkpoint holds the
// best-validation weights. Deterministic for a fixed seed.
Model train_model(const ModelConfig& cfg,
                  const std::vector<TrainingSample>& train_set,
                  const std::vector<TrainingSample>& val_set,
                  std::uint64_t seed, const TrainOptions& opt,
                  TrainReport* report = nullptr);

// Mean masked CE of the model over a dataset (evaluation mode).
double evaluate_ce(Model& model, const std::vector<TrainingSample>& data);

void save_model(const std::string& path, Model& model);
Model load_model(const std::string& path);

}  // namespace imeq
