#pragma once

#include "entrofact/common.hpp"
#include "entrofact/linalg.hpp"
#include "entrofact/model.hpp"
#include "entrofact/space.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace entrofact::exact {

// Cap on dense weight-vector length, settable from the CLI.
inline std::size_t& enumeration_cap() {
  static std::size_t cap = std::size_t(1) << 20;
  return cap;
}

inline void check_cap(std::size_t size) {
  if (size > enumeration_cap())
    throw CapExceeded("state space of size " + std::to_string(size) +
                      " exceeds enumeration cap " + std::to_string(enumeration_cap()) +
                      "; raise the cap to at least " + std::to_string(size));
}

// Dense probability vector over an explicit configuration space, backed by
// unnormalized log-weights (-inf encodes zero mass).
struct Distribution {
  StateSpace space;
  Vec logw;
  Vec probs;

  std::size_t size() const { return space.size(); }
};

inline Distribution from_log_weights(StateSpace space, Vec logw) {
  check_cap(space.size());
  require(static_cast<std::size_t>(logw.size()) == space.size(),
          "from_log_weights: weight vector does not match space");
  double top = -kInf;
  for (Eigen::Index i = 0; i < logw.size(); ++i) top = std::max(top, logw[i]);
  require(std::isfinite(top), "from_log_weights: empty support");
  Vec probs(logw.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logw.size(); ++i) {
    probs[i] = std::isfinite(logw[i]) ? std::exp(logw[i] - top) : 0.0;
    total += probs[i];
  }
  probs /= total;
  return Distribution{std::move(space), std::move(logw), std::move(probs)};
}

inline Distribution from_weights(StateSpace space, const Vec& w) {
  Vec logw(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    require(w[i] >= 0.0, "from_weights: negative weight");
    logw[i] = w[i] > 0.0 ? std::log(w[i]) : -kInf;
  }
  return from_log_weights(std::move(space), std::move(logw));
}

// <v, eta(idx)> for the one-hot encoding of configuration idx.
inline double indicator_dot(const StateSpace& space, std::size_t idx, const Vec& v) {
  double s = 0.0;
  for (int k = 0; k < space.sites(); ++k) s += v[space.coord(k, space.value(idx, k))];
  return s;
}

// Gibbs measure of a spin system: log-weight <eta, Gamma eta> + <h, eta>.
inline Distribution gibbs_distribution(const model::SpinSystem& sys) {
  StateSpace space = StateSpace::uniform(sys.n, sys.q);
  check_cap(space.size());
  Vec logw(space.size());
  std::vector<int> coords(sys.n);
  for (std::size_t idx = 0; idx < space.size(); ++idx) {
    for (int i = 0; i < sys.n; ++i) coords[i] = sys.q * i + space.value(idx, i);
    double e = 0.0;
    for (int i = 0; i < sys.n; ++i) {
      e += sys.fields[coords[i]];
      for (int j = 0; j < sys.n; ++j) e += sys.gamma(coords[i], coords[j]);
    }
    logw[idx] = e;
  }
  return from_log_weights(std::move(space), std::move(logw));
}

// --- entropy functionals ---------------------------------------------------

// Entropy plus the magnitude scale of its constituent sums; the scale is
// what decides whether a computed value is genuinely zero or cancellation
// residue.
struct EntValue {
  double value = 0.0;
  double scale = 0.0;
  bool negligible() const { return !(value > 1e-13 * scale); }
  // Cancellation estimate: summing ~states terms of magnitude `scale`
  // leaves roundoff around states * eps * scale; demand value to sit well
  // above it so ratios carry at most ~1e-7 relative noise.
  bool reliable(std::size_t states) const {
    return value > 1.1e-9 * static_cast<double>(states) * scale;
  }
};

inline void require_nonnegative(const Vec& f) {
  for (Eigen::Index i = 0; i < f.size(); ++i)
    require(f[i] >= 0.0, "test function must be nonnegative");
}

inline EntValue entropy_value(const Distribution& d, const Vec& f) {
  double mean = 0.0, flogf = 0.0, scale = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (d.probs[i] == 0.0) continue;
    const double t = d.probs[i] * xlogx(f[i]);
    flogf += t;
    scale += std::abs(t);
    mean += d.probs[i] * f[i];
  }
  const double m = xlogx(mean);
  const double v = flogf - m;
  // `mean` enters the scale: rounding of mu(f) alone perturbs the result
  // by ~eps*mu(f), which is what masks the entropy of near-constant f.
  return EntValue{std::max(0.0, v), scale + std::abs(m) + mean};
}

// Ent_d f = d(f log f) - d(f) log d(f), with 0 log 0 = 0. Cancellation
// residue on (near-)constant f collapses to an exact 0.
inline double entropy(const Distribution& d, const Vec& f) {
  require(static_cast<std::size_t>(f.size()) == d.size(), "entropy: size mismatch");
  require_nonnegative(f);
  const EntValue e = entropy_value(d, f);
  return e.negligible() ? 0.0 : e.value;
}

// sum_F d(F) * Ent_{d_F}(f) over the fibers of `fi`, single pass.
inline EntValue conditional_entropy_value(const Distribution& d, const FiberIndex& fi,
                                          const Vec& f) {
  double total = 0.0, scale = 0.0;
  for (std::size_t o = 0; o < fi.fibers(); ++o) {
    const std::size_t base = fi.out_base[o];
    double mass = 0.0, mean = 0.0, flogf = 0.0;
    for (std::size_t r = 0; r < fi.fiber_size(); ++r) {
      const std::size_t idx = base + fi.in_off[r];
      const double p = d.probs[idx];
      if (p == 0.0) continue;
      mass += p;
      mean += p * f[idx];
      const double t = p * xlogx(f[idx]);
      flogf += t;
      scale += std::abs(t);
    }
    if (mass == 0.0 || mean == 0.0) continue;
    const double m = mean * std::log(mean / mass);
    total += std::max(0.0, flogf - m);
    scale += std::abs(m) + mean;
  }
  return EntValue{total, scale};
}

// mu(Ent_A f), computed two ways (fiber-by-fiber, and as
// d(f log(f / mu_A f))); the two routes must agree to 1e-10.
inline double avg_conditional_entropy(const Distribution& d, BlockMask block,
                                      const Vec& f) {
  require(static_cast<std::size_t>(f.size()) == d.size(),
          "avg_conditional_entropy: size mismatch");
  require_nonnegative(f);
  const FiberIndex fi(d.space, block);
  const EntValue route_a = conditional_entropy_value(d, fi, f);

  // Route B: d(f log(f / mu_A f)).
  double route_b = 0.0;
  for (std::size_t o = 0; o < fi.fibers(); ++o) {
    const std::size_t base = fi.out_base[o];
    double mass = 0.0, mean = 0.0;
    for (std::size_t r = 0; r < fi.fiber_size(); ++r) {
      const std::size_t idx = base + fi.in_off[r];
      mass += d.probs[idx];
      mean += d.probs[idx] * f[idx];
    }
    if (mass == 0.0) continue;
    const double cond_mean = mean / mass;
    for (std::size_t r = 0; r < fi.fiber_size(); ++r) {
      const std::size_t idx = base + fi.in_off[r];
      if (d.probs[idx] == 0.0 || f[idx] == 0.0) continue;
      route_b += d.probs[idx] * f[idx] * std::log(f[idx] / cond_mean);
    }
  }
  require(std::abs(route_a.value - route_b) <=
              1e-10 * std::max(1.0, route_a.scale),
          "avg_conditional_entropy: fiber and direct formulas disagree");
  return route_a.negligible() ? 0.0 : route_a.value;
}

// --- conditioning and marginals ---------------------------------------------

inline std::size_t config_index(const StateSpace& space, const model::Config& c) {
  require(static_cast<int>(c.spins.size()) == space.sites(),
          "config_index: wrong number of sites");
  std::size_t idx = 0;
  for (int k = 0; k < space.sites(); ++k) {
    require(c.spins[k] >= 1 && c.spins[k] <= space.arity(k),
            "config_index: spin value out of range");
    idx += static_cast<std::size_t>(c.spins[k] - 1) * space.stride(k);
  }
  return idx;
}

inline model::Config config_at(const StateSpace& space, std::size_t idx) {
  model::Config c{std::vector<int>(space.sites())};
  for (int k = 0; k < space.sites(); ++k) c.spins[k] = space.value(idx, k) + 1;
  return c;
}

// mu_A^tau: resample inside `block`, freeze everything else to tau.
inline Distribution conditional(const Distribution& d, BlockMask block,
                                const model::Config& tau) {
  const std::size_t tau_idx = config_index(d.space, tau);
  std::size_t out_part = 0;
  for (int k = 0; k < d.space.sites(); ++k)
    if (!((block >> k) & 1u))
      out_part += static_cast<std::size_t>(d.space.value(tau_idx, k)) * d.space.stride(k);

  Vec logw = Vec::Constant(d.logw.size(), -kInf);
  const FiberIndex fi(d.space, block);
  double mass = 0.0;
  for (std::size_t r = 0; r < fi.fiber_size(); ++r) {
    const std::size_t idx = out_part + fi.in_off[r];
    logw[idx] = d.logw[idx];
    mass += d.probs[idx];
  }
  require(mass > 0.0, "conditional: conditioning event has zero probability");
  return from_log_weights(d.space, std::move(logw));
}

// Coordinate (k,a) marginal probabilities d(eta_c = 1), length dim.
inline Vec mean_vector(const Distribution& d) {
  Vec p = Vec::Zero(d.space.dim());
  for (std::size_t idx = 0; idx < d.size(); ++idx) {
    if (d.probs[idx] == 0.0) continue;
    for (int k = 0; k < d.space.sites(); ++k)
      p[d.space.coord(k, d.space.value(idx, k))] += d.probs[idx];
  }
  return p;
}

// Indicator covariance matrix, dim x dim, symmetric PSD.
inline Mat covariance(const Distribution& d) {
  const int m = d.space.dim();
  Vec p = Vec::Zero(m);
  Mat second = Mat::Zero(m, m);
  std::vector<int> coords(d.space.sites());
  for (std::size_t idx = 0; idx < d.size(); ++idx) {
    const double w = d.probs[idx];
    if (w == 0.0) continue;
    for (int k = 0; k < d.space.sites(); ++k)
      coords[k] = d.space.coord(k, d.space.value(idx, k));
    for (int k = 0; k < d.space.sites(); ++k) {
      p[coords[k]] += w;
      for (int l = 0; l < d.space.sites(); ++l) second(coords[k], coords[l]) += w;
    }
  }
  return second - p * p.transpose();
}

// Exponential tilt: T_v d (eta) \propto d(eta) exp(<v, eta>).
inline Distribution tilt(const Distribution& d, const Vec& v) {
  require(static_cast<int>(v.size()) == d.space.dim(), "tilt: bad tilt dimension");
  for (Eigen::Index i = 0; i < v.size(); ++i)
    require(std::isfinite(v[i]), "tilt: tilt vector must be finite");
  Vec logw = d.logw;
  for (std::size_t idx = 0; idx < d.size(); ++idx)
    if (std::isfinite(logw[idx])) logw[idx] += indicator_dot(d.space, idx, v);
  return from_log_weights(d.space, std::move(logw));
}

// --- influence matrix (spectral independence) --------------------------------

// J(i,a;j,b) = d(eta^j_b = 1 | eta^i_a = 1) - d(eta^j_b = 1) off the
// diagonal site blocks, zero on them. Requires every coordinate event to
// have positive probability.
inline Mat influence_matrix(const Distribution& d) {
  const int m = d.space.dim();
  Vec p = Vec::Zero(m);
  Mat second = Mat::Zero(m, m);
  std::vector<int> coords(d.space.sites());
  for (std::size_t idx = 0; idx < d.size(); ++idx) {
    const double w = d.probs[idx];
    if (w == 0.0) continue;
    for (int k = 0; k < d.space.sites(); ++k)
      coords[k] = d.space.coord(k, d.space.value(idx, k));
    for (int k = 0; k < d.space.sites(); ++k) {
      p[coords[k]] += w;
      for (int l = 0; l < d.space.sites(); ++l) second(coords[k], coords[l]) += w;
    }
  }
  for (int c = 0; c < m; ++c)
    require(p[c] > 0.0, "influence_matrix: coordinate event with zero probability");
  Mat j = Mat::Zero(m, m);
  for (int site_i = 0; site_i < d.space.sites(); ++site_i)
    for (int a = 0; a < d.space.arity(site_i); ++a) {
      const int c = d.space.coord(site_i, a);
      for (int site_j = 0; site_j < d.space.sites(); ++site_j) {
        if (site_j == site_i) continue;
        for (int b = 0; b < d.space.arity(site_j); ++b) {
          const int cc = d.space.coord(site_j, b);
          j(c, cc) = second(c, cc) / p[c] - p[cc];
        }
      }
    }
  return j;
}

// Spectrum of J via the similar matrix D^{1/2} J D^{-1/2}, which is
// symmetric in exact arithmetic. Its floating-point skew part bounds the
// imaginary parts of eig(J) (Bauer-Fike around the symmetrized matrix).
struct InfluenceSpectrum {
  Vec eigenvalues;    // ascending, of the symmetrized similar matrix
  double lambda_max = 0.0;
  double imag_bound = 0.0;
};

inline InfluenceSpectrum influence_spectrum(const Distribution& d) {
  const Mat j = influence_matrix(d);
  const Vec p = mean_vector(d);
  const int m = d.space.dim();
  Mat similar(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c)
      similar(r, c) = std::sqrt(p[r]) * j(r, c) / std::sqrt(p[c]);
  const Mat sym = 0.5 * (similar + similar.transpose());
  const Mat skew = 0.5 * (similar - similar.transpose());
  InfluenceSpectrum out;
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  out.eigenvalues = es.eigenvalues();
  out.lambda_max = out.eigenvalues.maxCoeff();
  out.imag_bound = spectral_norm(skew);
  return out;
}

// --- block weights -----------------------------------------------------------

// Probability vector over vertex subsets (bitmasks).
struct BlockWeights {
  std::vector<std::pair<BlockMask, double>> entries;  // sorted by mask

  static BlockWeights from_map(std::map<BlockMask, double> m) {
    BlockWeights w;
    for (auto& [mask, weight] : m) {
      require(weight >= 0.0, "BlockWeights: negative weight");
      if (weight > 0.0) w.entries.emplace_back(mask, weight);
    }
    return w;
  }

  static BlockWeights glauber(int n) {
    std::map<BlockMask, double> m;
    for (int i = 0; i < n; ++i) m[BlockMask(1) << i] = 1.0 / n;
    return from_map(std::move(m));
  }

  static BlockWeights even_odd(int n) {
    BlockMask even = 0, odd = 0;
    for (int i = 0; i < n; ++i) ((i % 2 == 0) ? even : odd) |= BlockMask(1) << i;
    return from_map({{even, 0.5}, {odd, 0.5}});
  }

  static BlockWeights full(int n) {
    const BlockMask all = (n == 64) ? ~BlockMask(0) : (BlockMask(1) << n) - 1;
    return from_map({{all, 1.0}});
  }

  double total() const {
    double s = 0.0;
    for (const auto& [mask, w] : entries) s += w;
    return s;
  }

  void require_normalized() const {
    require(std::abs(total() - 1.0) <= 1e-12, "block weights must sum to 1");
  }
};

// Minimum covering probability gamma(alpha) = min_i sum_{A : i in A} alpha_A.
inline double min_cover(const BlockWeights& alpha, int n) {
  double best = kInf;
  for (int i = 0; i < n; ++i) {
    double covered = 0.0;
    for (const auto& [mask, w] : alpha.entries)
      if ((mask >> i) & 1u) covered += w;
    best = std::min(best, covered);
  }
  return best;
}

// --- Shearer ratio ------------------------------------------------------------

// Precomputed per-alpha machinery for repeated ratio evaluations.
class ShearerObjective {
 public:
  ShearerObjective(const Distribution& d, const BlockWeights& alpha)
      : d_(&d), gamma_(min_cover(alpha, d.space.sites())) {
    alpha.require_normalized();
    for (const auto& [mask, w] : alpha.entries) {
      weights_.push_back(w);
      fibers_.emplace_back(d.space, mask);
    }
  }

  double gamma() const { return gamma_; }
  const Distribution& dist() const { return *d_; }

  // gamma(alpha) * Ent f / sum_A alpha_A mu(Ent_A f); nullopt for the 0/0
  // case, +inf when only the denominator vanishes. With `require_reliable`
  // set, witnesses whose entropies are dominated by float cancellation
  // (f nearly constant) are refused instead of returning a noisy ratio.
  std::optional<double> ratio(const Vec& f, bool require_reliable = false) const {
    const EntValue num = entropy_value(*d_, f);
    EntValue den{0.0, 0.0};
    for (std::size_t a = 0; a < weights_.size(); ++a) {
      const EntValue t = conditional_entropy_value(*d_, fibers_[a], f);
      den.value += weights_[a] * t.value;
      den.scale += weights_[a] * t.scale;
    }
    if (den.negligible()) {
      if (num.negligible()) return std::nullopt;
      return kInf;
    }
    if (num.negligible()) return 0.0;
    if (require_reliable &&
        (!num.reliable(d_->size()) || !den.reliable(d_->size())))
      return std::nullopt;
    return gamma_ * num.value / den.value;
  }

  // d/dg log(ratio) for f = exp(g); f must be strictly positive.
  Vec log_gradient(const Vec& f) const {
    const Vec& p = d_->probs;
    double mean = 0.0, num = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) mean += p[i] * f[i];
    Vec grad_num(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      grad_num[i] = p[i] == 0.0 ? 0.0 : p[i] * std::log(f[i] / mean);
      num += p[i] * xlogx(f[i]);
    }
    num -= xlogx(mean);

    Vec grad_den = Vec::Zero(f.size());
    double den = 0.0;
    for (std::size_t a = 0; a < weights_.size(); ++a) {
      const FiberIndex& fi = fibers_[a];
      for (std::size_t o = 0; o < fi.fibers(); ++o) {
        const std::size_t base = fi.out_base[o];
        double mass = 0.0, fiber_mean = 0.0;
        for (std::size_t r = 0; r < fi.fiber_size(); ++r) {
          const std::size_t idx = base + fi.in_off[r];
          mass += p[idx];
          fiber_mean += p[idx] * f[idx];
        }
        if (mass == 0.0) continue;
        const double cond = fiber_mean / mass;
        for (std::size_t r = 0; r < fi.fiber_size(); ++r) {
          const std::size_t idx = base + fi.in_off[r];
          if (p[idx] == 0.0) continue;
          const double t = std::log(f[idx] / cond);
          grad_den[idx] += weights_[a] * p[idx] * t;
          den += weights_[a] * p[idx] * f[idx] * t;
        }
      }
    }
    if (num <= 0.0 || den <= 0.0) return Vec::Zero(f.size());
    Vec g = grad_num / num - grad_den / den;
    return g.cwiseProduct(f);
  }

 private:
  const Distribution* d_;
  double gamma_;
  std::vector<double> weights_;
  std::vector<FiberIndex> fibers_;
};

// The constant that f certifies as necessary in the alpha-entropy
// factorization. Throws on (near-)constant f; +inf flags an unbounded
// witness (zero denominator, positive entropy).
inline double shearer_ratio(const Distribution& d, const BlockWeights& alpha,
                            const Vec& f) {
  require(static_cast<std::size_t>(f.size()) == d.size(), "shearer_ratio: size mismatch");
  require_nonnegative(f);
  const auto r = ShearerObjective(d, alpha).ratio(f);
  if (!r) fail("shearer_ratio: 0/0 (f is constant on the support)");
  return *r;
}

}  // namespace entrofact::exact
