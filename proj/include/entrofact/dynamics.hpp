#pragma once

#include "entrofact/exact.hpp"
#include "entrofact/witness.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace entrofact::dynamics {

using exact::BlockWeights;
using exact::Distribution;

// Dense kernels get expensive quadratically; keep a separate cap.
inline std::size_t& kernel_state_cap() {
  static std::size_t cap = 4096;
  return cap;
}

struct Kernel {
  Mat matrix;               // row-stochastic, q^n x q^n
  Distribution stationary;  // reversible measure
  bool irreducible = true;  // gamma(alpha) > 0 at construction
};

inline double row_sum_defect(const Mat& m) {
  return (m.rowwise().sum() - Vec::Ones(m.rows())).cwiseAbs().maxCoeff();
}

inline double detailed_balance_defect(const Kernel& k) {
  const Vec& mu = k.stationary.probs;
  double worst = 0.0;
  for (Eigen::Index r = 0; r < k.matrix.rows(); ++r)
    for (Eigen::Index c = r + 1; c < k.matrix.cols(); ++c)
      worst = std::max(worst, std::abs(mu[r] * k.matrix(r, c) - mu[c] * k.matrix(c, r)));
  return worst;
}

inline void validate(const Kernel& k) {
  require(k.matrix.rows() == k.matrix.cols(), "Kernel: matrix must be square");
  require(static_cast<std::size_t>(k.matrix.rows()) == k.stationary.size(),
          "Kernel: matrix does not match stationary distribution");
  require(k.matrix.minCoeff() >= 0.0, "Kernel: negative transition probability");
  require(row_sum_defect(k.matrix) <= 1e-12, "Kernel: rows must sum to 1");
  require(detailed_balance_defect(k) <= 1e-10, "Kernel: detailed balance violated");
}

// alpha-weighted block dynamics P(sigma,eta) = sum_A alpha_A mu_A^sigma(eta).
// Fibers with zero stationary mass are resampled uniformly; they carry no
// weight in any mu-average.
inline Kernel block_kernel(const Distribution& d, const BlockWeights& alpha) {
  alpha.require_normalized();
  const std::size_t n_states = d.size();
  if (n_states > kernel_state_cap())
    throw CapExceeded("block_kernel: " + std::to_string(n_states) +
                      " states exceed the kernel cap " +
                      std::to_string(kernel_state_cap()));
  Mat p = Mat::Zero(n_states, n_states);
  for (const auto& [mask, weight] : alpha.entries) {
    const FiberIndex fi(d.space, mask);
    for (std::size_t o = 0; o < fi.fibers(); ++o) {
      const std::size_t base = fi.out_base[o];
      double mass = 0.0;
      for (std::size_t r = 0; r < fi.fiber_size(); ++r) mass += d.probs[base + fi.in_off[r]];
      for (std::size_t rr = 0; rr < fi.fiber_size(); ++rr) {
        const std::size_t row = base + fi.in_off[rr];
        for (std::size_t cc = 0; cc < fi.fiber_size(); ++cc) {
          const std::size_t col = base + fi.in_off[cc];
          const double cond = mass > 0.0 ? d.probs[col] / mass : 1.0 / fi.fiber_size();
          p(row, col) += weight * cond;
        }
      }
    }
  }
  Kernel k{std::move(p), d, exact::min_cover(alpha, d.space.sites()) > 0.0};
  validate(k);
  return k;
}

// Both sides of the half-step identity: the relative entropy of the lifted
// pair distribution (A, eta) -> alpha_A (nu mu_A)(eta) against
// alpha_A mu(eta), and sum_A alpha_A Ent(mu_A f). f is normalized to
// mu(f) = 1 first; the two routes must agree for every f >= 0.
inline std::pair<double, double> half_step_check(const Distribution& d,
                                                 const BlockWeights& alpha,
                                                 const Vec& f) {
  alpha.require_normalized();
  exact::require_nonnegative(f);
  const double mean = d.probs.dot(f);
  require(mean > 0.0, "half_step_check: mu(f) must be positive");
  const Vec fhat = f / mean;

  double lhs = 0.0, rhs = 0.0;
  for (const auto& [mask, weight] : alpha.entries) {
    const FiberIndex fi(d.space, mask);
    // lhs: iterate the pair distribution pointwise over eta.
    for (std::size_t o = 0; o < fi.fibers(); ++o) {
      const std::size_t base = fi.out_base[o];
      double mass = 0.0, nu_mass = 0.0;
      for (std::size_t r = 0; r < fi.fiber_size(); ++r) {
        const std::size_t idx = base + fi.in_off[r];
        mass += d.probs[idx];
        nu_mass += d.probs[idx] * fhat[idx];
      }
      if (mass == 0.0 || nu_mass == 0.0) continue;
      for (std::size_t r = 0; r < fi.fiber_size(); ++r) {
        const std::size_t idx = base + fi.in_off[r];
        if (d.probs[idx] == 0.0) continue;
        const double w = nu_mass * (d.probs[idx] / mass);
        lhs += weight * w * std::log(w / d.probs[idx]);
      }
    }
    // rhs: entropy of the conditional expectation mu_A fhat.
    Vec cond_exp(d.size());
    for (std::size_t o = 0; o < fi.fibers(); ++o) {
      const std::size_t base = fi.out_base[o];
      double mass = 0.0, nu_mass = 0.0;
      for (std::size_t r = 0; r < fi.fiber_size(); ++r) {
        const std::size_t idx = base + fi.in_off[r];
        mass += d.probs[idx];
        nu_mass += d.probs[idx] * fhat[idx];
      }
      const double value = mass > 0.0 ? nu_mass / mass : 0.0;
      for (std::size_t r = 0; r < fi.fiber_size(); ++r)
        cond_exp[base + fi.in_off[r]] = value;
    }
    rhs += weight * exact::entropy_value(d, cond_exp).value;
  }
  return {lhs, rhs};
}

// Certified upper bound on the entropy contraction rate delta_alpha:
// 1 - max over witnesses of Ent(P f)/Ent(f).
inline double contraction_rate(const Kernel& k, int budget, std::uint64_t seed,
                               const witness::SearchOptions* base = nullptr) {
  require(k.irreducible, "contraction_rate: kernel must be irreducible");
  const Distribution& d = k.stationary;
  auto eval = [&](const Vec& f) -> std::optional<double> {
    const exact::EntValue denom = exact::entropy_value(d, f);
    if (denom.negligible() || !denom.reliable(d.size())) return std::nullopt;
    const Vec pf = k.matrix * f;
    const exact::EntValue num = exact::entropy_value(d, pf);
    if (num.negligible()) return 0.0;
    if (!num.reliable(d.size())) return std::nullopt;
    return num.value / denom.value;
  };
  auto grad = [&](const Vec& f) -> Vec {
    const Vec& mu = d.probs;
    const double mean = mu.dot(f);
    const Vec pf = k.matrix * f;
    const double ent_f = exact::entropy_value(d, f).value;
    const double ent_pf = exact::entropy_value(d, pf).value;
    if (ent_f <= 0.0 || ent_pf <= 0.0) return Vec::Zero(f.size());
    Vec log_pf(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i)
      log_pf[i] = pf[i] > 0.0 ? std::log(pf[i]) : witness::detail::kLogFloor;
    const Vec p_log_pf = k.matrix * log_pf;
    const double log_mean = std::log(mean);
    Vec g(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      const double grad_num = mu[i] * (p_log_pf[i] - log_mean);
      const double grad_den = mu[i] * (std::log(f[i]) - log_mean);
      g[i] = f[i] * (grad_num / ent_pf - grad_den / ent_f);
    }
    return g;
  };
  witness::SearchOptions opts = base ? *base : witness::SearchOptions{};
  opts.budget = budget;
  const auto result = witness::search(d, eval, grad, opts, seed);
  return 1.0 - result.best;
}

// Spectral gap 1 - lambda_2 of the kernel symmetrized in L^2(mu).
inline double spectral_gap(const Kernel& k) {
  require(detailed_balance_defect(k) <= 1e-10, "spectral_gap: kernel not reversible");
  const Vec& mu = k.stationary.probs;
  const Eigen::Index n = k.matrix.rows();
  for (Eigen::Index i = 0; i < n; ++i)
    require(mu[i] > 0.0, "spectral_gap: stationary measure must be positive");
  Mat s(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c)
      s(r, c) = std::sqrt(mu[r] / mu[c]) * k.matrix(r, c);
  const Vec vals = symmetric_eigenvalues(s);
  if (n == 1) return 1.0;
  return 1.0 - vals[n - 2];
}

// d_TV(start P^t, mu) for t = 0..max_steps (index = t).
inline std::vector<double> mixing_curve(const Kernel& k, std::size_t start_idx,
                                        int max_steps) {
  const Vec& mu = k.stationary.probs;
  Vec nu = Vec::Zero(k.matrix.rows());
  nu[start_idx] = 1.0;
  std::vector<double> curve;
  curve.reserve(max_steps + 1);
  for (int t = 0;; ++t) {
    curve.push_back(0.5 * (nu - mu).cwiseAbs().sum());
    if (t >= max_steps) break;
    nu = k.matrix.transpose() * nu;
  }
  return curve;
}

// Smallest t with d_TV(start P^t, mu) <= eps; -1 if not reached within
// `cap` steps. The TV sequence is checked to be nonincreasing as it goes.
inline int mixing_time_tv(const Kernel& k, double eps, const model::Config& start,
                          int cap = 100000) {
  require(eps > 0.0 && eps < 1.0, "mixing_time_tv: eps must be in (0,1)");
  const Vec& mu = k.stationary.probs;
  Vec nu = Vec::Zero(k.matrix.rows());
  nu[exact::config_index(k.stationary.space, start)] = 1.0;
  double prev = kInf;
  for (int t = 0; t <= cap; ++t) {
    const double tv = 0.5 * (nu - mu).cwiseAbs().sum();
    require(tv <= prev + 1e-12, "mixing_time_tv: TV distance increased");
    prev = tv;
    if (tv <= eps) return t;
    nu = k.matrix.transpose() * nu;
  }
  return -1;
}

// Worst-case over all Dirac starts.
inline int mixing_time_tv_worst(const Kernel& k, double eps, int cap = 100000) {
  require(eps > 0.0 && eps < 1.0, "mixing_time_tv: eps must be in (0,1)");
  const Vec& mu = k.stationary.probs;
  Mat power = Mat::Identity(k.matrix.rows(), k.matrix.cols());
  for (int t = 0; t <= cap; ++t) {
    double worst = 0.0;
    for (Eigen::Index r = 0; r < power.rows(); ++r)
      worst = std::max(worst, 0.5 * (power.row(r).transpose() - mu).cwiseAbs().sum());
    if (worst <= eps) return t;
    power = power * k.matrix;
  }
  return -1;
}

}  // namespace entrofact::dynamics
