#include "imeq/fitness.hpp"

#include <cmath>

namespace imeq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double residual_term(const Expr& f, const PointMatrix& data, int ell, int* notfinite_out) {
  double sum = 0.0;
  int notfinite = 0;
  for (const Point& p : data) {
    double v = f.evaluate(p);
    if (std::isnan(v)) {
      sum += kNotFinitePenalty;
      ++notfinite;
      continue;
    }
    sum += (ell == 2) ? v * v : std::fabs(v);
  }
  if (notfinite_out) *notfinite_out = notfinite;
  return data.empty() ? 0.0 : -sum / static_cast<double>(data.size());
}

}  // namespace

double vanilla_fitness(const Expr& f, const PointMatrix& data, int ell) {
  return residual_term(f, data, ell, nullptr);
}

std::set<int> valid_dims(const PointMatrix& data) {
  std::set<int> dims;
  for (int j = 0; j < kDMax; ++j)
    for (const Point& p : data)
      if (p[j] != 0.0) {
        dims.insert(j + 1);
        break;
      }
  return dims;
}

PointMatrix make_stochastic_dataset(const PointMatrix& data, int j,
                                    const ClfemConfig& cfg, Rng& rng) {
  if (j < 1 || j > kDMax) throw std::out_of_range("stochastic dataset dimension out of range");
  std::uniform_real_distribution<double> u(cfg.L, cfg.U);
  PointMatrix out = data;
  for (Point& p : out) p[j - 1] = u(rng);
  return out;
}

FitnessResult clfem_fitness(const Expr& f, const PointMatrix& data,
                            const ClfemConfig& cfg, Rng& rng) {
  FitnessResult r;
  if (data.empty()) return r;

  Rng pinned(cfg.stochastic_seed);
  Rng& stream = cfg.pin_stochastic ? pinned : rng;

  const size_t n = data.size();
  std::vector<double> fx(n);
  int notfinite = 0;
  for (size_t i = 0; i < n; ++i) {
    fx[i] = f.evaluate(data[i]);
    if (std::isnan(fx[i])) ++notfinite;
  }

  for (int j : valid_dims(data)) {
    PointMatrix dj_data = make_stochastic_dataset(data, j, cfg, stream);
    double acc = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < n; ++i) {
      double b = f.evaluate(dj_data[i]);
      if (std::isnan(fx[i]) || std::isnan(b)) continue;
      double diff = fx[i] - b;
      acc += diff * diff;
      ++pairs;
    }
    double dj = pairs ? acc / static_cast<double>(pairs) : kInf;
    r.d[j] = dj;
    if (dj <= cfg.tau) r.degenerate_dims.insert(j);
  }

  r.domain_failure = 2 * notfinite > static_cast<int>(n);
  if (!r.degenerate_dims.empty() || r.domain_failure) {
    r.value = kNegInf;
    return r;
  }

  double sum = 0.0;
  for (size_t i = 0; i < n; ++i)
    sum += std::isnan(fx[i]) ? kNotFinitePenalty
                             : (cfg.norm_ell == 2 ? fx[i] * fx[i] : std::fabs(fx[i]));
  r.value = -sum / static_cast<double>(n);
  return r;
}

}  // namespace imeq
