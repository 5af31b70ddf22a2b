#include "imeq/model.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "imeq/checkpoint.hpp"

namespace imeq {

TokenBatch make_token_batch(const std::vector<const TrainingSample*>& samples,
                            int max_seq_len) {
  TokenBatch tb;
  std::vector<std::vector<int>> bodies;
  bodies.reserve(samples.size());
  int L = 0;
  for (const TrainingSample* s : samples) {
    std::vector<int> ids = s->skeleton.token_ids();
    const int need = static_cast<int>(ids.size()) + 1;  // +EOS / +SOS
    if (need > max_seq_len)
      throw ShapeMismatch("token sequence of length " +
                          std::to_string(ids.size()) +
                          " does not fit max_seq_len " +
                          std::to_string(max_seq_len));
    L = std::max(L, need);
    bodies.push_back(std::move(ids));
  }
  tb.length = L;
  tb.inputs.reserve(samples.size());
  tb.targets_flat.reserve(samples.size() * static_cast<std::size_t>(L));
  for (const auto& body : bodies) {
    std::vector<int> in(1, TOK_SOS);
    in.insert(in.end(), body.begin(), body.end());
    in.resize(L, TOK_PAD);
    tb.inputs.push_back(std::move(in));
    std::vector<int> tgt(body);
    tgt.push_back(TOK_EOS);
    tb.n_valid += static_cast<long>(tgt.size());
    tgt.resize(L, TOK_PAD);
    tb.targets_flat.insert(tb.targets_flat.end(), tgt.begin(), tgt.end());
  }
  return tb;
}

namespace {

std::vector<PointMatrix> collect_points(
    const std::vector<const TrainingSample*>& samples) {
  std::vector<PointMatrix> out;
  out.reserve(samples.size());
  for (const TrainingSample* s : samples) out.push_back(s->points);
  return out;
}

// Sum of masked token log-losses and the token count, evaluation mode.
std::pair<double, long> ce_sum(Model& model,
                               const std::vector<const TrainingSample*>& batch,
                               Rng& rng) {
  TapeT<float> tape;
  tape.recording = false;
  TokenBatch tb = make_token_batch(batch, model.cfg.max_seq_len);
  TensorT<float> emb = model.embed_points(tape, collect_points(batch));
  TensorT<float> z = model.encode(tape, emb, 0.0, false, rng);
  TensorT<float> logits = model.decode(tape, z, tb.inputs, 0.0, false, rng);
  TensorT<float> loss = ce_loss(tape, logits, tb.targets_flat);
  return {double(loss.ptr()[0]) * double(tb.n_valid), tb.n_valid};
}

double dataset_ce(Model& model, const std::vector<TrainingSample>& data) {
  Rng dummy(0);
  double total = 0;
  long count = 0;
  // Group rows by point count so each forward pass gets a rectangular
  // point batch.
  std::vector<const TrainingSample*> batch;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return data[a].points.size() < data[b].points.size();
  });
  for (std::size_t idx = 0; idx < order.size();) {
    batch.clear();
    const std::size_t n = data[order[idx]].points.size();
    while (idx < order.size() && data[order[idx]].points.size() == n &&
           static_cast<int>(batch.size()) < model.cfg.batch_size)
      batch.push_back(&data[order[idx++]]);
    auto [s, c] = ce_sum(model, batch, dummy);
    total += s;
    count += c;
  }
  return total / double(count);
}

void write_loss_csv(const std::string& path,
                    const std::vector<TrainReport::Row>& rows) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write loss curve to " + path);
  out << "step,train_ce,val_ce\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9g", r.train_ce);
    out << r.step << ',' << buf << ',';
    if (r.val_ce >= 0) {
      std::snprintf(buf, sizeof buf, "%.9g", r.val_ce);
      out << buf;
    }
    out << '\n';
  }
}

constexpr int kMetaLen = 12;

TensorT<float> config_tensor(const ModelConfig& c) {
  TensorT<float> m = TensorT<float>::zeros({kMetaLen});
  float* p = m.ptr();
  p[0] = float(c.d_emb);
  p[1] = float(c.d_hid);
  p[2] = float(c.enc_heads);
  p[3] = float(c.n_isab);
  p[4] = float(c.n_inducing);
  p[5] = float(c.pma_seeds);
  p[6] = float(c.dec_heads);
  p[7] = float(c.dec_layers);
  p[8] = float(c.dropout);
  p[9] = float(c.vocab);
  p[10] = float(c.max_seq_len);
  p[11] = float(c.batch_size);
  return m;
}

ModelConfig config_from_tensor(const TensorT<float>& m) {
  if (m.numel() != kMetaLen)
    throw IoError("malformed model checkpoint: bad config block");
  const float* p = m.ptr();
  ModelConfig c;
  c.d_emb = int(p[0]);
  c.d_hid = int(p[1]);
  c.enc_heads = int(p[2]);
  c.n_isab = int(p[3]);
  c.n_inducing = int(p[4]);
  c.pma_seeds = int(p[5]);
  c.dec_heads = int(p[6]);
  c.dec_layers = int(p[7]);
  c.dropout = double(p[8]);
  c.vocab = int(p[9]);
  c.max_seq_len = int(p[10]);
  c.batch_size = int(p[11]);
  return c;
}

}  // namespace

double evaluate_ce(Model& model, const std::vector<TrainingSample>& data) {
  return dataset_ce(model, data);
}

void save_model(const std::string& path, Model& model) {
  TensorT<float> meta = config_tensor(model.cfg);
  std::vector<std::pair<std::string, const TensorT<float>*>> entries;
  entries.emplace_back("meta.config", &meta);
  for (auto& [name, t] : model.named_params()) entries.emplace_back(name, t);
  save_checkpoint(path, entries);
}

Model load_model(const std::string& path) {
  TensorT<float> meta = TensorT<float>::zeros({kMetaLen});
  {
    std::vector<std::pair<std::string, TensorT<float>*>> probe;
    probe.emplace_back("meta.config", &meta);
    load_checkpoint(path, probe);
  }
  Model model;
  Rng rng(0);
  model.init(config_from_tensor(meta), rng);
  std::vector<std::pair<std::string, TensorT<float>*>> entries;
  for (auto& [name, t] : model.named_params()) entries.emplace_back(name, t);
  load_checkpoint(path, entries);
  return model;
}

Model train_model(const ModelConfig& cfg,
                  const std::vector<TrainingSample>& train_set,
                  const std::vector<TrainingSample>& val_set,
                  std::uint64_t seed, const TrainOptions& opt,
                  TrainReport* report) {
  if (train_set.empty()) throw IoError("train_model: empty training set");
  if (val_set.empty()) throw IoError("train_model: empty validation set");
  if (opt.ckpt_path.empty())
    throw IoError("train_model: checkpoint path required");

  Model model;
  Rng init_rng(mix_seed(seed, 1));
  model.init(cfg, init_rng);
  Rng shuffle_rng(mix_seed(seed, 2));
  Rng drop_rng(mix_seed(seed, 3));

  auto params = model.params();
  AdamStateT<float> adam;
  TrainReport rep;
  double best_val = std::numeric_limits<double>::infinity();
  bool stop = false;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < opt.max_epochs && !stop; ++epoch) {
    rep.epochs = epoch + 1;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t pos = 0; pos < order.size() && !stop;) {
      std::vector<const TrainingSample*> batch;
      const std::size_t n_points = train_set[order[pos]].points.size();
      while (pos < order.size() &&
             static_cast<int>(batch.size()) < cfg.batch_size &&
             train_set[order[pos]].points.size() == n_points)
        batch.push_back(&train_set[order[pos++]]);

      TapeT<float> tape;
      TokenBatch tb = make_token_batch(batch, cfg.max_seq_len);
      TensorT<float> emb = model.embed_points(tape, collect_points(batch));
      TensorT<float> z = model.encode(tape, emb, cfg.dropout, true, drop_rng);
      TensorT<float> logits =
          model.decode(tape, z, tb.inputs, cfg.dropout, true, drop_rng);
      TensorT<float> loss = ce_loss(tape, logits, tb.targets_flat);
      model.zero_grads();
      tape.backward(loss);
      adam_step(params, adam);

      ++rep.steps;
      rep.rows.push_back({rep.steps, double(loss.ptr()[0]), -1.0});
      if (opt.max_steps >= 0 && rep.steps >= opt.max_steps) {
        rep.stop_reason = "max_steps";
        stop = true;
      }
    }

    const double val = dataset_ce(model, val_set);
    if (!rep.rows.empty()) rep.rows.back().val_ce = val;
    if (val < best_val) {
      best_val = val;
      save_model(opt.ckpt_path, model);
    } else if (!stop) {
      rep.stop_reason = "no_improvement";
      stop = true;
    }
  }
  if (rep.stop_reason.empty()) rep.stop_reason = "max_epochs";
  rep.best_val = best_val;
  write_loss_csv(opt.loss_csv_path, rep.rows);
  if (report) *report = rep;
  return load_model(opt.ckpt_path);
}

}  // namespace imeq
