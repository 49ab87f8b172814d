#pragma once

#include "entrofact/exact.hpp"
#include "entrofact/linalg.hpp"
#include "entrofact/model.hpp"
#include "entrofact/parallel.hpp"
#include "entrofact/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

namespace entrofact::loc {

using exact::Distribution;

// State of the localization process: time t and tilt vector y_t. The
// measure rho_t is reconstructed in closed form from (t, y), so pathwise
// normalization is exact; only y carries discretization error.
struct LocalizationState {
  model::SpinSystem sys;
  StateSpace space;
  double t = 0.0;
  Vec y;
  Mat sqrt2gamma;              // PSD square root of 2*Gamma, cached
  Rng rng;

  // Per-configuration tables: quadratic form <eta, Gamma eta> and the
  // indicator coordinates of every site.
  Vec quad;
  std::vector<std::int32_t> coords;
};

inline LocalizationState make_state(const model::SpinSystem& sys, std::uint64_t seed) {
  model::validate(sys);
  LocalizationState st{sys, StateSpace::uniform(sys.n, sys.q), 0.0,
                       Vec::Zero(sys.dim()),  psd_sqrt(2.0 * sys.gamma), Rng(seed),
                       Vec(), {}};
  exact::check_cap(st.space.size());
  const std::size_t n_states = st.space.size();
  st.quad.resize(n_states);
  st.coords.resize(n_states * sys.n);
  for (std::size_t idx = 0; idx < n_states; ++idx) {
    double e = 0.0;
    for (int i = 0; i < sys.n; ++i) {
      const int c = sys.q * i + st.space.value(idx, i);
      st.coords[idx * sys.n + i] = c;
      for (int j = 0; j < sys.n; ++j)
        e += sys.gamma(c, sys.q * j + st.space.value(idx, j));
    }
    st.quad[idx] = e;
  }
  return st;
}

// Normalized probabilities of rho_t = F_t rho without building log weights.
inline Vec rho_probs(const LocalizationState& st) {
  const int n = st.sys.n;
  const Vec field = st.y + st.sys.fields;
  Vec logw(st.space.size());
  double top = -kInf;
  for (std::size_t idx = 0; idx < st.space.size(); ++idx) {
    double e = (1.0 - st.t) * st.quad[idx];
    for (int i = 0; i < n; ++i) e += field[st.coords[idx * n + i]];
    logw[idx] = e;
    top = std::max(top, e);
  }
  double total = 0.0;
  for (std::size_t idx = 0; idx < st.space.size(); ++idx) {
    logw[idx] = std::exp(logw[idx] - top);
    total += logw[idx];
  }
  return logw / total;
}

// rho_t(eta) \propto exp((1-t) <eta,Gamma eta> + <y_t + h, eta>).
inline Distribution rho_t(const LocalizationState& st) {
  require(st.t >= -1e-12 && st.t <= 1.0 + 1e-12,
          "rho_t: time must lie in [0,1]");
  const Vec field = st.y + st.sys.fields;
  Vec logw(st.space.size());
  for (std::size_t idx = 0; idx < st.space.size(); ++idx) {
    double e = (1.0 - st.t) * st.quad[idx];
    for (int i = 0; i < st.sys.n; ++i) e += field[st.coords[idx * st.sys.n + i]];
    logw[idx] = e;
  }
  return exact::from_log_weights(st.space, std::move(logw));
}

inline Vec mean_from_probs(const LocalizationState& st, const Vec& probs) {
  Vec m = Vec::Zero(st.sys.dim());
  const int n = st.sys.n;
  for (std::size_t idx = 0; idx < st.space.size(); ++idx) {
    const double p = probs[idx];
    if (p == 0.0) continue;
    for (int i = 0; i < n; ++i) m[st.coords[idx * n + i]] += p;
  }
  return m;
}

// One Euler-Maruyama increment of the tilt SDE:
//   y += sqrt(2 Gamma) sqrt(dt) g + 2 Gamma m(rho_t) dt.
inline void step(LocalizationState& st, double dt) {
  require(dt > 0.0, "step: dt must be positive");
  require(st.t + dt <= 1.0 + 1e-12, "step: cannot step past t = 1");
  Vec g(st.sys.dim());
  for (int c = 0; c < st.sys.dim(); ++c) g[c] = st.rng.gaussian();
  const Vec m = mean_from_probs(st, rho_probs(st));
  st.y += std::sqrt(dt) * (st.sqrt2gamma * g) + 2.0 * dt * (st.sys.gamma * m);
  st.t += dt;
}

// Advances to `target` on the grid k*dt with the final time assigned
// exactly, so t = 1 lands on 1.0 with no accumulation drift.
inline void advance_to(LocalizationState& st, double target, double dt) {
  require(target >= st.t - 1e-12 && target <= 1.0 + 1e-12, "advance_to: bad target");
  const double t0 = st.t;
  const auto whole = static_cast<long>((target - t0 + 1e-12) / dt);
  for (long k = 1; k <= whole; ++k) {
    step(st, dt);
    st.t = t0 + static_cast<double>(k) * dt;
  }
  const double rest = target - st.t;
  if (rest > 1e-12) step(st, rest);
  st.t = target;
}

// --- Monte Carlo checks -------------------------------------------------------

struct McStat {
  double mean = 0.0;
  double se = 0.0;
  int paths = 0;
};

inline McStat summarize(const std::vector<double>& xs) {
  McStat s;
  s.paths = static_cast<int>(xs.size());
  for (double x : xs) s.mean += x;
  s.mean /= s.paths;
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  var /= std::max(1, s.paths - 1);
  s.se = std::sqrt(var / s.paths);
  return s;
}

// Statistical verdicts are three-sigma tests: excess <= 3 passes, 3..4
// warns, beyond 4 fails.
inline double sigma_excess(double violation, double se) {
  if (violation <= 0.0) return 0.0;
  if (se <= 0.0) return kInf;
  return violation / se;
}

struct MartingaleReport {
  std::size_t probe = 0;
  double rho0 = 0.0;
  McStat terminal;
  double dt = 0.0;
  double allowance_coef = 10.0;

  double bias() const { return terminal.mean - rho0; }
  double allowance() const { return allowance_coef * dt; }
  double excess() const {
    return sigma_excess(std::abs(bias()) - allowance(), terminal.se);
  }
};

// E[rho_T(eta)] versus rho_0(eta) over independent paths.
inline MartingaleReport martingale_check(const model::SpinSystem& sys,
                                         const model::BinaryConfig& eta, double T,
                                         double dt, int paths, std::uint64_t seed) {
  require(T > 0.0 && T <= 1.0 + 1e-12, "martingale_check: T must be in (0,1]");
  const model::Config cfg = model::from_binary(eta, sys.q);
  const LocalizationState proto = make_state(sys, seed);
  const std::size_t probe = exact::config_index(proto.space, cfg);

  std::vector<double> terminal(paths);
  parallel_for(paths, [&](std::size_t p) {
    LocalizationState st = proto;
    st.rng = Rng(seed).fork("path", p);
    advance_to(st, T, dt);
    const Vec probs = rho_probs(st);
    require(std::abs(probs.sum() - 1.0) <= 1e-12,
            "martingale_check: pathwise normalization lost");
    terminal[p] = probs[probe];
  });

  MartingaleReport rep;
  rep.probe = probe;
  rep.rho0 = exact::gibbs_distribution(sys).probs[probe];
  rep.terminal = summarize(terminal);
  rep.dt = dt;
  return rep;
}

// kappa(t) = min{ 1/(2(1-(1-delta)(1-t))), n/2 }, optionally refined by a
// caller-supplied c1*sqrt(n) term.
inline double kappa_bound(double delta, double t, int n, double c1 = kNaN) {
  require(delta >= 0.0 && delta <= 1.0, "kappa_bound: delta must be in [0,1]");
  require(t >= 0.0 && t <= 1.0 + 1e-12, "kappa_bound: t must be in [0,1]");
  const double denom = 1.0 - (1.0 - delta) * (1.0 - t);
  double bound = n / 2.0;
  if (denom > 0.0) bound = std::min(bound, 0.5 / denom);
  if (std::isfinite(c1)) bound = std::min(bound, c1 * std::sqrt(static_cast<double>(n)));
  return bound;
}

struct CovarianceBoundReport {
  double lambda_gamma = 0.0;
  double delta = 0.0;
  struct Sample {
    double t = 0.0;
    double lambda_cov = 0.0;
    double bound = 0.0;
  };
  std::vector<Sample> samples;
  double worst_margin = kInf;  // min over samples of bound - lambda
};

// lambda(Cov[T_v rho_t]) <= kappa(t) along simulated paths and random tilts.
inline CovarianceBoundReport covariance_bound_check(const model::SpinSystem& sys,
                                                    double delta,
                                                    std::vector<double> t_grid,
                                                    int v_samples, std::uint64_t seed,
                                                    int path_count = 3) {
  CovarianceBoundReport rep;
  rep.delta = delta;
  rep.lambda_gamma = max_eigenvalue(sys.gamma);
  if (!(rep.lambda_gamma <= 1.0 - delta + 1e-9))
    fail("covariance_bound_check: lambda(Gamma) = " + std::to_string(rep.lambda_gamma) +
         " exceeds 1 - delta = " + std::to_string(1.0 - delta));
  std::sort(t_grid.begin(), t_grid.end());
  const double dt = 1e-2;
  for (int p = 0; p < path_count; ++p) {
    LocalizationState st = make_state(sys, seed);
    st.rng = Rng(seed).fork("cov-path", p);
    Rng vstream = Rng(seed).fork("cov-tilt", p);
    for (double t : t_grid) {
      advance_to(st, t, dt);
      const Distribution d = rho_t(st);
      const double bound = kappa_bound(delta, t, sys.n);
      for (int s = 0; s < v_samples; ++s) {
        Vec v(sys.dim());
        const double scale[] = {0.5, 1.0, 2.0, 4.0};
        for (int c = 0; c < sys.dim(); ++c) v[c] = vstream.gaussian() * scale[s % 4];
        const double lam = max_eigenvalue(exact::covariance(exact::tilt(d, v)));
        rep.samples.push_back({t, lam, bound});
        rep.worst_margin = std::min(rep.worst_margin, bound - lam);
      }
    }
  }
  return rep;
}

struct StabilityReport {
  double ent0 = 0.0;     // Ent_rho f
  double c_delta = 0.0;  // contraction factor from the delta schedule
  McStat terminal;       // E[Ent_{rho_1} f]
  double dt = 0.0;
  double allowance_coef = 10.0;

  double rhs() const { return c_delta * ent0; }
  double allowance() const { return allowance_coef * dt * ent0; }
  double excess() const {
    return sigma_excess(rhs() - allowance() - terminal.mean, terminal.se);
  }
};

inline double c_delta_schedule(double delta, int n) {
  require(delta >= 0.0 && delta <= 1.0, "c_delta_schedule: delta in [0,1]");
  if (delta >= 1.0 / n) return delta;
  return 1.0 / (n * std::exp(1.0 - delta * n));
}

// E[Ent_{rho_1} f] >= c_delta Ent_rho f, verified by simulation.
inline StabilityReport entropic_stability_check(const model::SpinSystem& sys,
                                                double delta, const Vec& f, double dt,
                                                int paths, std::uint64_t seed) {
  exact::require_nonnegative(f);
  const double lambda = max_eigenvalue(sys.gamma);
  if (!(lambda <= 1.0 - delta + 1e-9))
    fail("entropic_stability_check: lambda(Gamma) exceeds 1 - delta");
  const LocalizationState proto = make_state(sys, seed);
  StabilityReport rep;
  rep.ent0 = exact::entropy(exact::gibbs_distribution(sys), f);
  rep.c_delta = c_delta_schedule(delta, sys.n);
  rep.dt = dt;

  std::vector<double> terminal(paths);
  parallel_for(paths, [&](std::size_t p) {
    LocalizationState st = proto;
    st.rng = Rng(seed).fork("path", p);
    advance_to(st, 1.0, dt);
    terminal[p] = exact::entropy(rho_t(st), f);
  });
  rep.terminal = summarize(terminal);
  return rep;
}

// sum_eta rho_t(eta) Q_{t,A} f(eta) log Q_{t,A} f(eta), the quantity whose
// expectation is nondecreasing in t for every block A.
inline double conditional_flow(const Vec& probs, const FiberIndex& fi, const Vec& f) {
  double total = 0.0;
  for (std::size_t o = 0; o < fi.fibers(); ++o) {
    const std::size_t base = fi.out_base[o];
    double mass = 0.0, fmass = 0.0;
    for (std::size_t r = 0; r < fi.fiber_size(); ++r) {
      const std::size_t idx = base + fi.in_off[r];
      mass += probs[idx];
      fmass += probs[idx] * f[idx];
    }
    if (mass > 0.0 && fmass > 0.0) total += fmass * std::log(fmass / mass);
  }
  return total;
}

struct SubmartingaleReport {
  struct Row {
    BlockMask block = 0;
    double t = 0.0;
    double baseline = 0.0;  // value at t = 0
    McStat stat;
    double excess() const { return sigma_excess(baseline - stat.mean, stat.se); }
  };
  std::vector<Row> rows;
};

inline SubmartingaleReport submartingale_check(const model::SpinSystem& sys,
                                               const exact::BlockWeights& alpha,
                                               const Vec& f, std::vector<double> t_grid,
                                               double dt, int paths, std::uint64_t seed) {
  exact::require_nonnegative(f);
  std::sort(t_grid.begin(), t_grid.end());
  const LocalizationState proto = make_state(sys, seed);
  std::vector<FiberIndex> fibers;
  for (const auto& [mask, w] : alpha.entries) fibers.emplace_back(proto.space, mask);

  const Vec p0 = exact::gibbs_distribution(sys).probs;
  // values[p] holds, per path, the flow for every (grid point, block).
  std::vector<std::vector<double>> values(paths);
  parallel_for(paths, [&](std::size_t p) {
    LocalizationState st = proto;
    st.rng = Rng(seed).fork("path", p);
    auto& row = values[p];
    for (double t : t_grid) {
      advance_to(st, t, dt);
      const Vec probs = rho_probs(st);
      for (const auto& fi : fibers) row.push_back(conditional_flow(probs, fi, f));
    }
  });

  SubmartingaleReport rep;
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
    for (std::size_t a = 0; a < fibers.size(); ++a) {
      std::vector<double> xs(paths);
      for (int p = 0; p < paths; ++p) xs[p] = values[p][ti * fibers.size() + a];
      SubmartingaleReport::Row row;
      row.block = alpha.entries[a].first;
      row.t = t_grid[ti];
      row.baseline = conditional_flow(p0, fibers[a], f);
      row.stat = summarize(xs);
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

}  // namespace entrofact::loc
