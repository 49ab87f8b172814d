#pragma once

#include "entrofact/exact.hpp"
#include "entrofact/linalg.hpp"
#include "entrofact/model.hpp"
#include "entrofact/witness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace entrofact::multi {

using exact::BlockWeights;
using exact::Distribution;

// Heterogeneous components mu_i over [q_i]^{L_i}, coupled through an M x M
// interaction over the concatenated indicator coordinates, M = sum q_i L_i.
struct ComponentSystem {
  std::vector<Distribution> components;
  Mat gamma;   // M x M, symmetric
  Vec fields;  // length M

  int count() const { return static_cast<int>(components.size()); }
};

inline StateSpace joint_space(const ComponentSystem& cs) {
  std::vector<int> arity;
  for (const auto& c : cs.components)
    for (int k = 0; k < c.space.sites(); ++k) arity.push_back(c.space.arity(k));
  return StateSpace(std::move(arity));
}

inline int indicator_dim(const ComponentSystem& cs) {
  int m = 0;
  for (const auto& c : cs.components) m += c.space.dim();
  return m;
}

// First site index of each component in the joint space.
inline std::vector<int> component_site_offsets(const ComponentSystem& cs) {
  std::vector<int> off(cs.components.size() + 1, 0);
  for (std::size_t i = 0; i < cs.components.size(); ++i)
    off[i + 1] = off[i] + cs.components[i].space.sites();
  return off;
}

// Weights over subsets of components; a separate type so that they cannot
// be mixed up with weights over individual sites.
struct ComponentWeights {
  BlockWeights raw;  // masks index components, not sites

  static ComponentWeights glauber(int count) {
    return ComponentWeights{BlockWeights::glauber(count)};
  }
  static ComponentWeights from_map(std::map<BlockMask, double> m) {
    return ComponentWeights{BlockWeights::from_map(std::move(m))};
  }
};

// Expand a subset of components to the subset of their sites.
inline BlockMask expand_component_mask(const ComponentSystem& cs, BlockMask components) {
  const auto off = component_site_offsets(cs);
  BlockMask sites = 0;
  for (int i = 0; i < cs.count(); ++i)
    if ((components >> i) & 1u)
      for (int k = off[i]; k < off[i + 1]; ++k) sites |= BlockMask(1) << k;
  return sites;
}

inline BlockWeights expand_component_weights(const ComponentSystem& cs,
                                             const ComponentWeights& alpha) {
  BlockWeights out;
  for (const auto& [mask, w] : alpha.raw.entries)
    out.entries.emplace_back(expand_component_mask(cs, mask), w);
  std::sort(out.entries.begin(), out.entries.end());
  return out;
}

inline void validate(const ComponentSystem& cs) {
  require(!cs.components.empty(), "ComponentSystem: need at least one component");
  const int m = indicator_dim(cs);
  require(cs.gamma.rows() == m && cs.gamma.cols() == m,
          "ComponentSystem: gamma must be M x M with M = sum q_i L_i");
  require(cs.fields.size() == m, "ComponentSystem: fields must have length M");
  require(max_asymmetry(cs.gamma) == 0.0, "ComponentSystem: gamma not symmetric");
}

// mu(sigma) \propto exp(<eta,Gamma eta> + <h,eta>) prod_i mu_i(sigma_i);
// hard constraints of the components are respected (zero stays zero).
inline Distribution joint_distribution(const ComponentSystem& cs) {
  validate(cs);
  StateSpace space = joint_space(cs);
  exact::check_cap(space.size());
  const auto off = component_site_offsets(cs);

  Vec logw(space.size());
  std::vector<int> coords(space.sites());
  for (std::size_t idx = 0; idx < space.size(); ++idx) {
    for (int k = 0; k < space.sites(); ++k)
      coords[k] = space.coord(k, space.value(idx, k));
    double e = 0.0;
    for (int k = 0; k < space.sites(); ++k) {
      e += cs.fields[coords[k]];
      for (int l = 0; l < space.sites(); ++l) e += cs.gamma(coords[k], coords[l]);
    }
    for (int i = 0; i < cs.count(); ++i) {
      std::size_t sub = 0;
      for (int k = off[i]; k < off[i + 1]; ++k)
        sub += static_cast<std::size_t>(space.value(idx, k)) *
               cs.components[i].space.stride(k - off[i]);
      if (!std::isfinite(cs.components[i].logw[sub])) {
        e = -kInf;
        break;
      }
      e += cs.components[i].logw[sub];
    }
    logw[idx] = e;
  }
  return exact::from_log_weights(std::move(space), std::move(logw));
}

// Indicator covariance of the tilted component mu_i^psi.
inline Mat sigma_psi(const Distribution& mu_i, const Vec& psi) {
  return exact::covariance(exact::tilt(mu_i, psi));
}

struct REstimate {
  double value = 0.0;                  // lower bound on R = 2 max_i sup_psi
  std::vector<double> per_component;   // 2 * max lambda found per component
  bool boundary_hit = false;           // some search clamped at |psi| = 20
  std::size_t evaluations = 0;
};

namespace detail {

inline constexpr double kPsiClamp = 20.0;

inline Vec clamp_psi(Vec psi, bool& hit) {
  for (Eigen::Index i = 0; i < psi.size(); ++i) {
    if (std::abs(psi[i]) > kPsiClamp) {
      hit = true;
      psi[i] = psi[i] > 0.0 ? kPsiClamp : -kPsiClamp;
    }
  }
  return psi;
}

// Hill-climb on lambda(Sigma^psi) with a central finite-difference gradient.
inline double ascend_psi(const Distribution& mu, Vec psi, int steps, bool& hit,
                         std::size_t& evals) {
  auto value = [&](const Vec& v) {
    ++evals;
    return max_eigenvalue(sigma_psi(mu, v));
  };
  double current = value(psi);
  double step = 0.5;
  const double h = 1e-4;
  for (int it = 0; it < steps; ++it) {
    Vec grad(psi.size());
    for (Eigen::Index c = 0; c < psi.size(); ++c) {
      Vec up = psi, down = psi;
      up[c] += h;
      down[c] -= h;
      grad[c] = (value(up) - value(down)) / (2.0 * h);
    }
    const double mag = grad.cwiseAbs().maxCoeff();
    if (!(mag > 1e-14)) break;
    grad /= mag;
    bool moved = false;
    for (int tries = 0; tries < 10; ++tries) {
      const Vec cand = clamp_psi(psi + step * grad, hit);
      const double v = value(cand);
      if (v > current + 1e-15) {
        psi = cand;
        current = v;
        step *= 1.3;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return current;
}

}  // namespace detail

// Witness search for R = 2 max_i sup_psi lambda(Sigma_i^psi). Reports a
// certified lower bound; the sup over self-potentials has no closed form,
// so upper validation must come from the tensorization lemmas.
inline REstimate estimate_R_detail(const ComponentSystem& cs, int budget,
                                   std::uint64_t seed) {
  REstimate out;
  for (int i = 0; i < cs.count(); ++i) {
    const Distribution& mu = cs.components[i];
    const int m = mu.space.dim();
    double best = max_eigenvalue(sigma_psi(mu, Vec::Zero(m)));
    ++out.evaluations;

    Rng rng = Rng(seed).fork("psi", static_cast<std::uint64_t>(i));
    const double scales[] = {1.0, 2.0, 5.0, 10.0};
    for (int b = 0; b < budget; ++b) {
      Vec psi(m);
      for (int c = 0; c < m; ++c) psi[c] = rng.gaussian() * scales[b % 4];
      psi = detail::clamp_psi(std::move(psi), out.boundary_hit);
      best = std::max(best, max_eigenvalue(sigma_psi(mu, psi)));
      ++out.evaluations;
    }

    Rng astream = Rng(seed).fork("psi-ascent", static_cast<std::uint64_t>(i));
    std::vector<Vec> starts{Vec::Zero(m)};
    for (int s = 0; s < 4; ++s) {
      Vec psi(m);
      for (int c = 0; c < m; ++c) psi[c] = astream.gaussian();
      starts.push_back(std::move(psi));
    }
    for (const Vec& start : starts)
      best = std::max(best, detail::ascend_psi(mu, start, 40, out.boundary_hit,
                                               out.evaluations));
    out.per_component.push_back(2.0 * best);
    out.value = std::max(out.value, 2.0 * best);
  }
  return out;
}

inline double estimate_R(const ComponentSystem& cs, int budget, std::uint64_t seed) {
  return estimate_R_detail(cs, budget, seed).value;
}

// Product of Bernoulli(p_l) over {success, failure} conditioned on exactly
// k successes. Site value 1 is success.
inline Distribution conditioned_bernoulli(int L, const Vec& probs, int k) {
  require(L >= 1, "conditioned_bernoulli: need L >= 1");
  require(static_cast<int>(probs.size()) == L, "conditioned_bernoulli: probs length");
  require(k >= 0 && k <= L, "conditioned_bernoulli: need 0 <= k <= L");
  for (int l = 0; l < L; ++l)
    require(probs[l] >= 0.0 && probs[l] <= 1.0, "conditioned_bernoulli: probs in [0,1]");
  StateSpace space = StateSpace::uniform(L, 2);
  Vec w = Vec::Zero(space.size());
  double total = 0.0;
  for (std::size_t idx = 0; idx < space.size(); ++idx) {
    int successes = 0;
    double weight = 1.0;
    for (int l = 0; l < L; ++l) {
      if (space.value(idx, l) == 0) {
        ++successes;
        weight *= probs[l];
      } else {
        weight *= 1.0 - probs[l];
      }
    }
    if (successes == k) {
      w[idx] = weight;
      total += weight;
    }
  }
  require(total > 0.0, "conditioned_bernoulli: conditioning event has zero probability");
  return exact::from_weights(std::move(space), w);
}

// --- JSON manifest ------------------------------------------------------------

// One component from a manifest entry: either an explicit probability
// table or a named builder with parameters.
inline Distribution component_from_json(const nlohmann::json& spec) {
  const std::string type = spec.at("type").get<std::string>();
  if (type == "table") {
    const auto arities = spec.at("arities").get<std::vector<int>>();
    StateSpace space{arities};
    const auto probs = spec.at("probs").get<std::vector<double>>();
    require(probs.size() == space.size(),
            "component manifest: probability table size mismatch");
    return exact::from_weights(space, Eigen::Map<const Vec>(probs.data(), probs.size()));
  }
  if (type == "product") {
    const auto sites = spec.at("sites").get<std::vector<std::vector<double>>>();
    std::vector<int> arities;
    for (const auto& s : sites) arities.push_back(static_cast<int>(s.size()));
    StateSpace space{arities};
    Vec w(space.size());
    for (std::size_t idx = 0; idx < space.size(); ++idx) {
      double v = 1.0;
      for (int k = 0; k < space.sites(); ++k) v *= sites[k][space.value(idx, k)];
      w[idx] = v;
    }
    return exact::from_weights(space, w);
  }
  if (type == "conditioned_bernoulli") {
    const auto probs = spec.at("probs").get<std::vector<double>>();
    return conditioned_bernoulli(static_cast<int>(probs.size()),
                                 Eigen::Map<const Vec>(probs.data(), probs.size()),
                                 spec.at("k").get<int>());
  }
  if (type == "curie_weiss")
    return exact::gibbs_distribution(model::build_curie_weiss(
        spec.at("n").get<int>(), spec.at("beta").get<double>(), spec.value("q", 2)));
  fail("component manifest: unknown component type " + type);
}

// Manifest: {components: [...], gamma: row-major M*M (default 0),
// fields: length M (default 0)}.
inline ComponentSystem from_json(const nlohmann::json& manifest) {
  ComponentSystem cs;
  for (const auto& spec : manifest.at("components"))
    cs.components.push_back(component_from_json(spec));
  const int m = indicator_dim(cs);
  cs.gamma = Mat::Zero(m, m);
  cs.fields = Vec::Zero(m);
  if (manifest.contains("gamma")) {
    const auto flat = manifest.at("gamma").get<std::vector<double>>();
    require(static_cast<int>(flat.size()) == m * m,
            "component manifest: gamma must be M*M row-major");
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) cs.gamma(r, c) = flat[static_cast<std::size_t>(r) * m + c];
  }
  if (manifest.contains("fields")) {
    const auto flat = manifest.at("fields").get<std::vector<double>>();
    require(static_cast<int>(flat.size()) == m, "component manifest: fields length");
    cs.fields = Eigen::Map<const Vec>(flat.data(), m);
  }
  validate(cs);
  return cs;
}

// Covariance of the success indicators X_l, L x L.
inline Mat success_covariance(const Distribution& d) {
  const Mat full = exact::covariance(d);
  const int L = d.space.sites();
  Mat c(L, L);
  for (int l = 0; l < L; ++l)
    for (int k = 0; k < L; ++k) c(l, k) = full(d.space.coord(l, 0), d.space.coord(k, 0));
  return c;
}

struct FactorizationReport {
  double lambda_gamma = 0.0;
  double r_used = 0.0;       // certified upper bound on R entering the constant
  double r_estimate = 0.0;   // witnessed lower bound
  double constant = 0.0;     // (1 - r_used * lambda)^{-1} (times max C_i if any)
  double witnessed = 0.0;    // best ratio found
  double slack = 0.0;        // constant - witnessed
  std::size_t evaluations = 0;
  bool pass = false;
};

// Entropy factorization into blocks of components with constant
// (1 - R lambda(Gamma))^{-1}; r_upper must be a certified upper bound on R
// (2 for sum-conditioned Bernoulli products, 1 for products).
inline FactorizationReport component_factorization_check(const ComponentSystem& cs,
                                                         const ComponentWeights& alpha,
                                                         int budget, std::uint64_t seed,
                                                         double r_upper) {
  validate(cs);
  alpha.raw.require_normalized();
  FactorizationReport rep;
  rep.lambda_gamma = max_eigenvalue(cs.gamma);
  require(min_eigenvalue(cs.gamma) >= -1e-10,
          "component_factorization_check: Gamma must be PSD");
  rep.r_estimate = estimate_R(cs, std::max(16, budget / 8), seed);
  rep.r_used = std::isfinite(r_upper) ? r_upper : std::max(rep.r_estimate, 1.0);
  if (!(rep.r_used * rep.lambda_gamma < 1.0))
    fail("component_factorization_check: R*lambda(Gamma) = " +
         std::to_string(rep.r_used * rep.lambda_gamma) + " is not < 1");
  rep.constant = 1.0 / (1.0 - rep.r_used * rep.lambda_gamma);

  const Distribution d = joint_distribution(cs);
  const BlockWeights site_alpha = expand_component_weights(cs, alpha);
  const auto best =
      exact::estimate_best_constant_detail(d, site_alpha, budget, seed);
  rep.witnessed = best.value;
  rep.evaluations = best.evaluations;
  rep.slack = rep.constant - rep.witnessed;
  rep.pass = rep.witnessed <= rep.constant + 1e-9;
  return rep;
}

// Full Shearer tensorization: constant (1 - min(R, max C_i) lambda)^{-1}
// max_i C_i over arbitrary site blocks, with the Lemma "R <= max C_i"
// asserted numerically first. C_i must be certified constants for the
// components (theorem values where available).
struct TensorizationReport : FactorizationReport {
  double max_c = 0.0;
  double lemma_r_slack = 0.0;  // max C_i - R estimate, must be >= -1e-6
};

inline TensorizationReport tensorization_check(const ComponentSystem& cs,
                                               const std::vector<double>& component_constants,
                                               const BlockWeights& alpha, int budget,
                                               std::uint64_t seed,
                                               double r_upper = kNaN) {
  validate(cs);
  alpha.require_normalized();
  require(component_constants.size() == cs.components.size(),
          "tensorization_check: need one constant per component");
  TensorizationReport rep;
  rep.max_c = *std::max_element(component_constants.begin(), component_constants.end());
  rep.lambda_gamma = max_eigenvalue(cs.gamma);
  require(min_eigenvalue(cs.gamma) >= -1e-10, "tensorization_check: Gamma must be PSD");

  rep.r_estimate = estimate_R(cs, std::max(16, budget / 8), seed);
  rep.lemma_r_slack = rep.max_c - rep.r_estimate;
  require(rep.lemma_r_slack >= -1e-6,
          "tensorization_check: R estimate exceeds max C_i beyond tolerance");

  rep.r_used = std::isfinite(r_upper) ? std::min(r_upper, rep.max_c) : rep.max_c;
  if (!(rep.r_used * rep.lambda_gamma < 1.0))
    fail("tensorization_check: min(R, max C_i) * lambda(Gamma) is not < 1");
  rep.constant = rep.max_c / (1.0 - rep.r_used * rep.lambda_gamma);

  const Distribution d = joint_distribution(cs);
  const auto best = exact::estimate_best_constant_detail(d, alpha, budget, seed);
  rep.witnessed = best.value;
  rep.evaluations = best.evaluations;
  rep.slack = rep.constant - rep.witnessed;
  rep.pass = rep.witnessed <= rep.constant + 1e-9;
  return rep;
}

}  // namespace entrofact::multi
