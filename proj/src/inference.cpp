#include "imeq/inference.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

namespace imeq {

namespace {

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

std::vector<BeamHyp> beam_search_scored(const StepScorer& scorer, int vocab,
                                        const BeamConfig& cfg) {
  if (cfg.beam_size < 1)
    throw std::invalid_argument("beam_size must be at least 1");
  if (cfg.max_len < 0)
    throw std::invalid_argument("max_len must be non-negative");

  struct Partial {
    std::vector<int> body;
    double lp = 0.0;
  };
  std::vector<Partial> alive;
  alive.push_back({{}, 0.0});
  std::vector<BeamHyp> finished;

  // At iteration `step` every alive body has exactly `step` tokens; bodies
  // that reach max_len get one final chance to take EOS and are dropped
  // otherwise.
  for (int step = 0; step <= cfg.max_len && !alive.empty(); ++step) {
    std::vector<std::vector<int>> prefixes(alive.size());
    for (std::size_t i = 0; i < alive.size(); ++i) {
      prefixes[i].reserve(alive[i].body.size() + 1);
      prefixes[i].push_back(TOK_SOS);
      prefixes[i].insert(prefixes[i].end(), alive[i].body.begin(),
                         alive[i].body.end());
    }
    const auto rows = scorer(prefixes);
    if (rows.size() != alive.size())
      throw ShapeMismatch("beam scorer returned " +
                          std::to_string(rows.size()) + " rows for " +
                          std::to_string(alive.size()) + " prefixes");

    const bool at_cap = step == cfg.max_len;
    std::vector<Partial> next;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      const auto& row = rows[i];
      if (static_cast<int>(row.size()) < vocab)
        throw ShapeMismatch("beam scorer row shorter than the vocabulary");
      finished.push_back({alive[i].body, alive[i].lp + row[TOK_EOS]});
      if (at_cap) continue;
      for (int v = 0; v < vocab; ++v) {
        if (v == TOK_PAD || v == TOK_SOS || v == TOK_EOS) continue;
        Partial p;
        p.body = alive[i].body;
        p.body.push_back(v);
        p.lp = alive[i].lp + row[v];
        next.push_back(std::move(p));
      }
    }
    std::sort(next.begin(), next.end(), [](const Partial& a, const Partial& b) {
      if (a.lp != b.lp) return a.lp > b.lp;
      return lex_less(a.body, b.body);
    });
    if (static_cast<int>(next.size()) > cfg.beam_size)
      next.resize(cfg.beam_size);
    alive = std::move(next);

    // Token log-probs are never positive, so extensions only lower a
    // hypothesis' score: once the best alive prefix sits strictly below
    // the k-th best finished score, nothing can still enter the top k.
    if (!alive.empty() &&
        static_cast<int>(finished.size()) >= cfg.beam_size) {
      std::vector<double> lps;
      lps.reserve(finished.size());
      for (const auto& f : finished) lps.push_back(f.log_prob);
      std::nth_element(lps.begin(), lps.begin() + (cfg.beam_size - 1),
                       lps.end(), std::greater<double>());
      if (alive.front().lp < lps[cfg.beam_size - 1]) break;
    }
  }

  std::sort(finished.begin(), finished.end(),
            [](const BeamHyp& a, const BeamHyp& b) {
              if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
              if (a.tokens.size() != b.tokens.size())
                return a.tokens.size() < b.tokens.size();
              return lex_less(a.tokens, b.tokens);
            });
  if (static_cast<int>(finished.size()) > cfg.beam_size)
    finished.resize(cfg.beam_size);
  return finished;
}

std::vector<BeamHyp> beam_search(const Model& model, const PointMatrix& points,
                                 const BeamConfig& cfg) {
  if (points.empty()) throw IoError("beam_search: empty point set");
  BeamConfig eff = cfg;
  eff.max_len = std::min(cfg.max_len, model.cfg.max_seq_len - 1);

  TapeT<float> tape;
  tape.recording = false;
  Rng dummy(0);
  TensorT<float> emb = model.embed_points(tape, {points});
  TensorT<float> z = model.encode(tape, emb, 0.0, false, dummy);

  StepScorer scorer = [&model, z](const std::vector<std::vector<int>>& p) {
    return model.next_logprobs(p, z);
  };
  return beam_search_scored(scorer, model.cfg.vocab, eff);
}

std::vector<Candidate> evaluate_candidates(const std::vector<BeamHyp>& hyps,
                                           const PointMatrix& points,
                                           const DiscoverConfig& cfg) {
  // All candidates must see identical stochastic perturbations or their
  // fitness values would not be comparable.
  ClfemConfig clfem = cfg.clfem;
  if (!clfem.pin_stochastic) {
    clfem.pin_stochastic = true;
    clfem.stochastic_seed = mix_seed(cfg.seed, 0xC1FE);
  }

  std::vector<Candidate> out;
  out.reserve(hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    Candidate c;
    c.tokens = hyps[i].tokens;
    c.log_prob = hyps[i].log_prob;
    try {
      c.skeleton = parse_token_ids(c.tokens);
      c.parsed = true;
    } catch (const MalformedPrefix&) {
      c.error = "parse_failed";
      out.push_back(std::move(c));
      continue;
    }
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i) + 1));
    try {
      FitResult fit = fit_constants(c.skeleton, points, clfem, cfg.bfgs, rng,
                                    cfg.fitness_kind);
      c.constants = fit.constants;
      c.value = fit.fitness.value;
      c.fitted = true;
    } catch (const AllRestartsDegenerate&) {
      c.error = "degenerate";
    } catch (const NonFiniteObjective&) {
      c.error = "non_finite";
    }
    out.push_back(std::move(c));
  }

  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.value != b.value) return a.value > b.value;
                     if (a.tokens.size() != b.tokens.size())
                       return a.tokens.size() < b.tokens.size();
                     return a.log_prob > b.log_prob;
                   });
  return out;
}

DiscoverResult discover(const Model& model, const PointMatrix& points,
                        const DiscoverConfig& cfg) {
  const std::vector<BeamHyp> hyps = beam_search(model, points, cfg.beam);
  if (hyps.empty())
    throw NoViableCandidate("beam search produced no finished sequences");
  std::vector<Candidate> cands = evaluate_candidates(hyps, points, cfg);
  if (cands.empty() || cands.front().value == kNegInf)
    throw NoViableCandidate(
        "every decoded candidate failed to parse or was degenerate");
  DiscoverResult r;
  r.best = cands.front();
  r.candidates = std::move(cands);
  return r;
}

namespace {

std::string candidate_expr_prefix(const Candidate& c) {
  if (c.fitted) return instantiate(c.skeleton, c.constants).prefix_string();
  if (c.parsed) return c.skeleton.prefix_string();
  std::string s;
  for (std::size_t i = 0; i < c.tokens.size(); ++i) {
    if (i) s += ' ';
    const int id = c.tokens[i];
    s += (id >= 0 && id < kVocabSize) ? token_name(id) : std::to_string(id);
  }
  return s;
}

nlohmann::json candidate_json(const Candidate& c) {
  nlohmann::json j;
  j["expr_prefix"] = candidate_expr_prefix(c);
  j["constants"] = c.constants;
  j["clfem"] =
      std::isfinite(c.value) ? nlohmann::json(c.value) : nlohmann::json();
  j["log_prob"] = c.log_prob;
  if (!c.error.empty()) j["error"] = c.error;
  return j;
}

}  // namespace

std::string discover_to_json(const DiscoverResult& result) {
  nlohmann::json j = candidate_json(result.best);
  nlohmann::json all = nlohmann::json::array();
  for (const Candidate& c : result.candidates) all.push_back(candidate_json(c));
  j["all_candidates"] = std::move(all);
  return j.dump(2);
}

namespace {

Point json_row_to_point(const nlohmann::json& row, const std::string& path) {
  if (!row.is_array() || row.size() > kDMax)
    throw IoError("bad point row in " + path + ": expected at most " +
                  std::to_string(kDMax) + " coordinates");
  Point p{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < row.size(); ++i) p[i] = row[i].get<double>();
  return p;
}

bool parse_csv_row(const std::string& line, Point& p) {
  p = {0.0, 0.0, 0.0};
  std::size_t start = 0;
  int col = 0;
  while (start <= line.size()) {
    std::size_t comma = line.find(',', start);
    std::string cell = line.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    // trim
    std::size_t a = cell.find_first_not_of(" \t\r");
    std::size_t b = cell.find_last_not_of(" \t\r");
    cell = a == std::string::npos ? "" : cell.substr(a, b - a + 1);
    if (!cell.empty()) {
      if (col >= kDMax) return false;
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end != cell.c_str() + cell.size()) return false;
      p[col] = v;
    }
    ++col;
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return true;
}

}  // namespace

PointMatrix load_points_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open points file: " + path);

  PointMatrix pts;
  std::string line;
  bool first_content = true;
  bool jsonl = false;
  bool csv_header_allowed = true;
  while (std::getline(in, line)) {
    const std::size_t a = line.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) continue;
    if (first_content) {
      jsonl = line[a] == '{' || line[a] == '[';
      first_content = false;
    }
    if (jsonl) {
      nlohmann::json j = nlohmann::json::parse(line);
      if (j.is_object()) {
        // A corpus record: use the first record's point set.
        if (!j.contains("points"))
          throw IoError("JSONL record without a points field in " + path);
        for (const auto& row : j["points"])
          pts.push_back(json_row_to_point(row, path));
        return pts;
      }
      pts.push_back(json_row_to_point(j, path));
    } else {
      Point p;
      if (!parse_csv_row(line.substr(a), p)) {
        if (csv_header_allowed) {  // a single leading header line is fine
          csv_header_allowed = false;
          continue;
        }
        throw IoError("bad CSV point row in " + path + ": " + line);
      }
      csv_header_allowed = false;
      pts.push_back(p);
    }
  }
  if (pts.empty()) throw IoError("no points in file: " + path);
  return pts;
}

}  // namespace imeq
