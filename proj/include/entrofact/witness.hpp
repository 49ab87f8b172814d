#pragma once

#include "entrofact/exact.hpp"
#include "entrofact/parallel.hpp"
#include "entrofact/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

namespace entrofact::witness {

// The searched families, in evaluation order. Random-tilt draws are a
// prefix-stable stream, and ascent restarts never depend on them, so the
// reported maximum is monotone in the budget for a fixed seed.
struct SearchOptions {
  int budget = 200;        // number of random exponential-tilt witnesses
  int ascent_restarts = 16;
  int ascent_steps = 80;
  std::size_t max_config_indicators = 4096;
};

struct SearchResult {
  double best = -kInf;
  Vec best_f;
  std::size_t evaluations = 0;
  bool unbounded = false;  // hit a zero-denominator witness
};

// Objective over nonnegative test functions f; nullopt marks degenerate
// inputs (e.g. constant f), +inf an unbounded witness.
using Evaluator = std::function<std::optional<double>(const Vec&)>;
// d/dg of log(objective) at f = exp(g), for strictly positive f.
using LogGradient = std::function<Vec(const Vec&)>;

namespace detail {

struct CoordIndicator {
  int coord;
};
struct ConfigIndicator {
  std::size_t index;
};
struct Tilt {
  Vec v;
};
using Candidate = std::variant<CoordIndicator, ConfigIndicator, Tilt>;

inline Vec materialize(const exact::Distribution& d, const Candidate& c) {
  const StateSpace& space = d.space;
  Vec f(space.size());
  if (const auto* ci = std::get_if<CoordIndicator>(&c)) {
    for (std::size_t idx = 0; idx < space.size(); ++idx) {
      double hit = 0.0;
      for (int k = 0; k < space.sites() && hit == 0.0; ++k)
        if (space.coord(k, space.value(idx, k)) == ci->coord) hit = 1.0;
      f[idx] = hit;
    }
  } else if (const auto* gi = std::get_if<ConfigIndicator>(&c)) {
    f.setZero();
    f[gi->index] = 1.0;
  } else {
    const Vec& v = std::get<Tilt>(c).v;
    double top = -kInf;
    for (std::size_t idx = 0; idx < space.size(); ++idx) {
      f[idx] = exact::indicator_dot(space, idx, v);
      top = std::max(top, f[idx]);
    }
    for (std::size_t idx = 0; idx < space.size(); ++idx)
      f[idx] = std::exp(f[idx] - top);
  }
  return f;
}

inline constexpr double kLogFloor = -690.0;  // exp(-690) ~ 1e-300

inline Vec clamp_shift(Vec g) {
  const double top = g.maxCoeff();
  for (Eigen::Index i = 0; i < g.size(); ++i)
    g[i] = std::max(g[i] - top, kLogFloor);
  return g;
}

// Hill-climb on g = log f; returns the best objective value seen along the
// trajectory and updates best_f on improvement.
inline void ascend(const Evaluator& eval, const LogGradient& grad, Vec g,
                   int steps, SearchResult& out) {
  g = clamp_shift(std::move(g));
  Vec f = g.array().exp();
  auto value = eval(f);
  if (!value) return;
  double current = *value;
  if (current > out.best) {
    out.best = current;
    out.best_f = f;
  }
  double step = 0.5;
  for (int it = 0; it < steps; ++it) {
    Vec direction = grad(f);
    const double mag = direction.cwiseAbs().maxCoeff();
    if (!(mag > 0.0) || !std::isfinite(mag)) break;
    direction /= mag;
    bool moved = false;
    for (int tries = 0; tries < 12; ++tries) {
      Vec g2 = clamp_shift(g + step * direction);
      Vec f2 = g2.array().exp();
      auto v2 = eval(f2);
      ++out.evaluations;
      if (v2 && *v2 > current) {
        g = std::move(g2);
        f = std::move(f2);
        current = *v2;
        if (current > out.best) {
          out.best = current;
          out.best_f = f;
        }
        step *= 1.4;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
}

}  // namespace detail

// Maximizes `eval` over: coordinate indicators, configuration indicators,
// block-magnetization tilts, `budget` random Gaussian tilts, and gradient
// ascent restarts. Deterministic for a fixed seed and independent of the
// worker count.
inline SearchResult search(const exact::Distribution& d, const Evaluator& eval,
                           const LogGradient& grad, const SearchOptions& opts,
                           std::uint64_t seed) {
  using namespace detail;
  const StateSpace& space = d.space;
  const int dim = space.dim();

  std::vector<Candidate> candidates;
  for (int c = 0; c < dim; ++c) candidates.push_back(CoordIndicator{c});

  if (space.size() <= opts.max_config_indicators) {
    for (std::size_t idx = 0; idx < space.size(); ++idx)
      candidates.push_back(ConfigIndicator{idx});
  } else {
    Rng rng = Rng(seed).fork("config-indicators");
    for (std::size_t k = 0; k < opts.max_config_indicators; ++k)
      candidates.push_back(ConfigIndicator{rng.below(space.size())});
  }

  int max_arity = 0;
  for (int k = 0; k < space.sites(); ++k) max_arity = std::max(max_arity, space.arity(k));
  for (int a = 0; a < max_arity; ++a) {
    Vec pattern = Vec::Zero(dim);
    for (int k = 0; k < space.sites(); ++k)
      if (a < space.arity(k)) pattern[space.coord(k, a)] = 1.0;
    for (double s : {0.25, 0.5, 1.0, 2.0, 4.0}) {
      candidates.push_back(Tilt{s * pattern});
      candidates.push_back(Tilt{-s * pattern});
    }
  }
  const std::size_t deterministic_count = candidates.size();

  {
    Rng rng = Rng(seed).fork("tilts");
    const double scales[] = {0.5, 1.0, 2.0, 4.0};
    for (int b = 0; b < opts.budget; ++b) {
      Vec v(dim);
      for (int c = 0; c < dim; ++c) v[c] = rng.gaussian();
      candidates.push_back(Tilt{v * scales[b % 4]});
    }
  }

  std::vector<double> values(candidates.size(), -kInf);
  std::vector<char> degenerate(candidates.size(), 0);
  parallel_for(candidates.size(), [&](std::size_t i) {
    const Vec f = materialize(d, candidates[i]);
    const auto v = eval(f);
    if (v)
      values[i] = *v;
    else
      degenerate[i] = 1;
  });

  SearchResult out;
  out.evaluations = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (degenerate[i]) continue;
    if (values[i] > out.best) {
      out.best = values[i];
      out.best_f = materialize(d, candidates[i]);
    }
  }
  if (std::isinf(out.best)) {
    out.unbounded = true;
    return out;
  }

  if (grad && opts.ascent_restarts > 0) {
    // Restart points: the best deterministic candidates plus fresh random
    // tilts from a dedicated stream; never derived from the budgeted draws.
    std::vector<std::size_t> order(deterministic_count);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

    std::vector<Vec> starts;
    const int from_best = std::max(1, opts.ascent_restarts / 2);
    for (std::size_t i = 0; i < order.size() && static_cast<int>(starts.size()) < from_best; ++i) {
      if (degenerate[order[i]]) continue;
      Vec f = materialize(d, candidates[order[i]]);
      Vec g(f.size());
      for (Eigen::Index k = 0; k < f.size(); ++k)
        g[k] = f[k] > 0.0 ? std::log(f[k]) : kLogFloor;
      starts.push_back(std::move(g));
    }
    Rng rng = Rng(seed).fork("ascent");
    while (static_cast<int>(starts.size()) < opts.ascent_restarts) {
      Vec v(dim);
      for (int c = 0; c < dim; ++c) v[c] = rng.gaussian();
      Vec g(space.size());
      for (std::size_t idx = 0; idx < space.size(); ++idx)
        g[idx] = exact::indicator_dot(space, idx, v);
      starts.push_back(std::move(g));
    }

    std::vector<SearchResult> slots(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) {
      slots[i].best = -kInf;
      ascend(eval, grad, starts[i], opts.ascent_steps, slots[i]);
    });
    for (const auto& slot : slots) {
      out.evaluations += slot.evaluations;
      if (slot.best > out.best) {
        out.best = slot.best;
        out.best_f = slot.best_f;
      }
    }
  }
  return out;
}

}  // namespace entrofact::witness

namespace entrofact::exact {

struct BestConstant {
  double value = 0.0;
  Vec witness;
  std::size_t evaluations = 0;
  bool unbounded = false;
};

// Certified lower bound on the optimal factorization constant C_alpha:
// the largest Shearer ratio found by the witness search. Monotone in
// `budget` and deterministic given `seed`.
inline BestConstant estimate_best_constant_detail(const Distribution& d,
                                                  const BlockWeights& alpha,
                                                  int budget, std::uint64_t seed,
                                                  const witness::SearchOptions* base = nullptr) {
  require(min_cover(alpha, d.space.sites()) > 0.0,
          "estimate_best_constant: min cover gamma(alpha) must be positive");
  const ShearerObjective obj(d, alpha);
  witness::SearchOptions opts = base ? *base : witness::SearchOptions{};
  opts.budget = budget;
  const auto result = witness::search(
      d, [&](const Vec& f) { return obj.ratio(f, /*require_reliable=*/true); },
      [&](const Vec& f) { return obj.log_gradient(f); }, opts, seed);
  BestConstant out;
  out.value = result.best;
  out.witness = result.best_f;
  out.evaluations = result.evaluations;
  out.unbounded = result.unbounded;
  return out;
}

inline double estimate_best_constant(const Distribution& d, const BlockWeights& alpha,
                                     int budget, std::uint64_t seed) {
  return estimate_best_constant_detail(d, alpha, budget, seed).value;
}

}  // namespace entrofact::exact
