#include "imeq/numopt.hpp"

#include <algorithm>
#include <cmath>

namespace imeq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double call(const Objective& f, std::span<const double> x) {
  double v = f(x);
  return std::isfinite(v) ? v : kInf;
}

// Central differences; falls back to one-sided when a sample is infeasible
// so a feasible iterate near a domain boundary still gets a usable slope.
void fd_gradient(const Objective& f, std::vector<double>& x, double fx, double h,
                 std::vector<double>& g) {
  for (size_t i = 0; i < x.size(); ++i) {
    double xi = x[i];
    x[i] = xi + h;
    double fp = call(f, x);
    x[i] = xi - h;
    double fm = call(f, x);
    x[i] = xi;
    if (std::isfinite(fp) && std::isfinite(fm))
      g[i] = (fp - fm) / (2 * h);
    else if (std::isfinite(fp))
      g[i] = (fp - fx) / h;
    else if (std::isfinite(fm))
      g[i] = (fx - fm) / h;
    else
      g[i] = 0.0;
  }
}

struct LineSearchResult {
  double alpha = 0.0;
  double fx = kInf;
  bool ok = false;
};

// Strong-Wolfe bracket + zoom. phi(a) = f(x + a*p). Directional
// derivatives come from full finite-difference gradients at the trial
// points; dimensionality is small everywhere this module is used.
LineSearchResult wolfe_search(const Objective& f, const std::vector<double>& x,
                              const std::vector<double>& p, double f0, double df0,
                              const BfgsConfig& cfg) {
  const size_t n = x.size();
  std::vector<double> xt(n), g(n);
  auto phi = [&](double a) {
    for (size_t i = 0; i < n; ++i) xt[i] = x[i] + a * p[i];
    return call(f, xt);
  };
  auto dphi = [&](double a, double fa) {
    for (size_t i = 0; i < n; ++i) xt[i] = x[i] + a * p[i];
    fd_gradient(f, xt, fa, cfg.fd_step, g);
    double d = 0.0;
    for (size_t i = 0; i < n; ++i) d += g[i] * p[i];
    return d;
  };

  LineSearchResult best;  // best Armijo-satisfying point seen, as fallback
  auto note = [&](double a, double fa) {
    if (fa <= f0 + cfg.c1 * a * df0 && fa < best.fx) best = {a, fa, true};
  };

  auto zoom = [&](double lo, double flo, double hi) -> LineSearchResult {
    for (int it = 0; it < 30; ++it) {
      double a = 0.5 * (lo + hi);
      double fa = phi(a);
      if (fa > f0 + cfg.c1 * a * df0 || fa >= flo) {
        hi = a;
        continue;
      }
      note(a, fa);
      double da = dphi(a, fa);
      if (std::fabs(da) <= -cfg.c2 * df0) return {a, fa, true};
      if (da * (hi - lo) >= 0) hi = lo;
      lo = a;
      flo = fa;
    }
    return best;
  };

  double a_prev = 0.0, f_prev = f0;
  double a = 1.0;
  for (int it = 0; it < 20; ++it) {
    double fa = phi(a);
    if (fa > f0 + cfg.c1 * a * df0 || (it > 0 && fa >= f_prev))
      return zoom(a_prev, f_prev, a);
    note(a, fa);
    double da = dphi(a, fa);
    if (std::fabs(da) <= -cfg.c2 * df0) return {a, fa, true};
    if (da >= 0) return zoom(a, fa, a_prev);
    a_prev = a;
    f_prev = fa;
    a *= 2.0;
  }
  return best;
}

}  // namespace

std::vector<double> finite_diff_gradient(const Objective& objective,
                                         std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  double fx = call(objective, x);
  fd_gradient(objective, x, fx, h, g);
  return g;
}

OptResult bfgs_minimize(const Objective& objective, std::vector<double> x0,
                        const BfgsConfig& cfg, const IterateCallback& on_accept) {
  const size_t n = x0.size();
  OptResult res;
  res.x = std::move(x0);
  res.fx = objective(res.x);
  if (!std::isfinite(res.fx)) throw NonFiniteObjective("objective not finite at the start point");
  if (n == 0) {
    res.converged = true;
    return res;
  }

  std::vector<double> g(n), g_new(n), p(n), s(n), y(n), hg(n);
  std::vector<double> H(n * n, 0.0);  // inverse Hessian approximation
  for (size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
  fd_gradient(objective, res.x, res.fx, cfg.fd_step, g);

  auto grad_inf_norm = [&](const std::vector<double>& v) {
    double m = 0.0;
    for (double t : v) m = std::max(m, std::fabs(t));
    return m;
  };

  for (res.iters = 0; res.iters < cfg.max_iters; ++res.iters) {
    if (grad_inf_norm(g) <= cfg.grad_tol) {
      res.converged = true;
      return res;
    }
    // p = -H g, with a steepest-descent reset if H lost positive
    // definiteness along the way
    double df0 = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (size_t j = 0; j < n; ++j) acc += H[i * n + j] * g[j];
      p[i] = -acc;
      df0 += p[i] * g[i];
    }
    if (!(df0 < 0.0)) {
      std::fill(H.begin(), H.end(), 0.0);
      for (size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
      df0 = 0.0;
      for (size_t i = 0; i < n; ++i) {
        p[i] = -g[i];
        df0 += p[i] * g[i];
      }
      if (!(df0 < 0.0)) return res;  // zero gradient direction; done
    }

    LineSearchResult ls = wolfe_search(objective, res.x, p, res.fx, df0, cfg);
    if (!ls.ok || ls.fx >= res.fx) return res;  // no usable step (e.g. kink)

    for (size_t i = 0; i < n; ++i) {
      s[i] = ls.alpha * p[i];
      res.x[i] += s[i];
    }
    res.fx = ls.fx;
    if (on_accept) on_accept(res.x, res.fx);

    fd_gradient(objective, res.x, res.fx, cfg.fd_step, g_new);
    double sy = 0.0, ss = 0.0, yy = 0.0;
    for (size_t i = 0; i < n; ++i) {
      y[i] = g_new[i] - g[i];
      sy += s[i] * y[i];
      ss += s[i] * s[i];
      yy += y[i] * y[i];
    }
    if (sy > 1e-10 * std::sqrt(ss * yy)) {
      // H <- (I - r s y^T) H (I - r y s^T) + r s s^T
      double r = 1.0 / sy;
      for (size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < n; ++j) acc += H[i * n + j] * y[j];
        hg[i] = acc;  // H y
      }
      double yHy = 0.0;
      for (size_t i = 0; i < n; ++i) yHy += y[i] * hg[i];
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
          H[i * n + j] += -r * (s[i] * hg[j] + hg[i] * s[j]) +
                          r * (1.0 + r * yHy) * s[i] * s[j];
    }
    g.swap(g_new);
  }
  return res;
}

FitResult fit_constants(const Skeleton& s, const PointMatrix& data,
                        const ClfemConfig& clfem_cfg, const BfgsConfig& bfgs_cfg,
                        Rng& rng, FitnessKind kind, FitGate gate) {
  const int slots = s.slot_count();

  // One pinned perturbation draw per fit keeps the degeneracy gate
  // consistent across restarts even when the caller didn't pin it.
  ClfemConfig gate_cfg = clfem_cfg;
  if (!gate_cfg.pin_stochastic) {
    gate_cfg.pin_stochastic = true;
    gate_cfg.stochastic_seed = rng();
  }

  auto score = [&](const Expr& e) -> FitnessResult {
    if (kind == FitnessKind::vanilla) {
      FitnessResult r;
      r.value = vanilla_fitness(e, data, clfem_cfg.norm_ell);
      return r;
    }
    Rng unused(0);
    return clfem_fitness(e, data, gate_cfg, unused);
  };

  if (slots == 0) {
    FitResult out;
    out.fitness = score(s);
    out.residual = -vanilla_fitness(s, data, clfem_cfg.norm_ell);
    if (out.fitness.value == kNegInf)
      throw AllRestartsDegenerate("expression without constants is degenerate on this data");
    return out;
  }

  auto residual_of = [&](std::span<const double> c) {
    Expr e = instantiate(s, c);
    double v = -vanilla_fitness(e, data, clfem_cfg.norm_ell);
    if (gate == FitGate::gated_objective) {
      Rng unused(0);
      if (clfem_fitness(e, data, gate_cfg, unused).degenerate()) v += 1e12;
    }
    return v;
  };

  std::normal_distribution<double> normal(0.0, 1.0);
  const int attempts = std::max(1, bfgs_cfg.restarts);
  FitResult best;
  best.fitness.value = kNegInf;
  bool have_best = false;
  for (int a = 0; a < attempts; ++a) {
    std::vector<double> c0(slots);
    for (double& c : c0) c = normal(rng);
    OptResult opt = bfgs_minimize(residual_of, std::move(c0), bfgs_cfg);
    FitnessResult fr = score(instantiate(s, opt.x));
    bool better = !have_best || fr.value > best.fitness.value ||
                  (fr.value == best.fitness.value && opt.fx < best.residual);
    if (better) {
      best.constants = opt.x;
      best.fitness = fr;
      best.residual = opt.fx;
      have_best = true;
    }
  }
  if (best.fitness.value == kNegInf)
    throw AllRestartsDegenerate("every fitting attempt produced a degenerate expression");
  return best;
}

}  // namespace imeq
