#pragma once

#include "entrofact/common.hpp"
#include "entrofact/linalg.hpp"
#include "entrofact/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace entrofact::model {

// Spin configuration over n vertices; spin values are 1-based, in [q].
struct Config {
  std::vector<int> spins;
};

// One-hot encoding over q*n binary coordinates, vertex-major color-minor.
struct BinaryConfig {
  std::vector<int> bits;
};

// Quadratic-form spin system: interaction matrix Gamma over the qn
// indicator coordinates plus linear self-potential fields h, so that the
// Gibbs weight of eta is exp(<eta, Gamma eta> + <h, eta>).
struct SpinSystem {
  int n = 0;
  int q = 0;
  Mat gamma;   // (qn) x (qn), symmetric
  Vec fields;  // length qn; fields[q*i + a-1] = psi_i(a)

  int dim() const { return n * q; }
  int coord(int vertex, int color1) const { return q * vertex + (color1 - 1); }
};

inline void validate(const SpinSystem& sys) {
  require(sys.n >= 1 && sys.q >= 2, "SpinSystem: need n >= 1 and q >= 2");
  const int d = sys.dim();
  require(sys.gamma.rows() == d && sys.gamma.cols() == d,
          "SpinSystem: gamma must be (qn)x(qn)");
  require(sys.fields.size() == d, "SpinSystem: fields must have length qn");
  for (int r = 0; r < d; ++r)
    for (int c = r + 1; c < d; ++c)
      require(sys.gamma(r, c) == sys.gamma(c, r), "SpinSystem: gamma not symmetric");
}

// Graphical q-Potts interaction: Gamma(i,a;j,b) = beta * A_ij * 1_{a=b}.
// No diagonal shift is applied.
inline SpinSystem build_potts(const Mat& adjacency, double beta, int q,
                              const Vec& fields = Vec()) {
  const int n = static_cast<int>(adjacency.rows());
  require(n >= 1 && adjacency.cols() == n, "build_potts: adjacency must be square");
  require(q >= 2, "build_potts: need q >= 2");
  for (int i = 0; i < n; ++i) {
    require(adjacency(i, i) == 0.0, "build_potts: adjacency diagonal must be zero");
    for (int j = 0; j < n; ++j) {
      require(adjacency(i, j) == adjacency(j, i), "build_potts: adjacency not symmetric");
      require(adjacency(i, j) == 0.0 || adjacency(i, j) == 1.0,
              "build_potts: adjacency entries must be 0 or 1");
    }
  }
  SpinSystem sys{n, q, Mat::Zero(n * q, n * q),
                 fields.size() ? fields : Vec::Zero(n * q)};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (adjacency(i, j) != 0.0)
        for (int a = 0; a < q; ++a) sys.gamma(q * i + a, q * j + a) = beta;
  validate(sys);
  return sys;
}

// Ferromagnetic mean-field q-Potts: Gamma(i,a;j,b) = (beta/n) 1_{a=b} for
// all i,j, i.e. the complete-graph coupling with the harmless diagonal term
// included so that Gamma is PSD with maximum eigenvalue beta.
inline SpinSystem build_curie_weiss(int n, double beta, int q,
                                    const Vec& fields = Vec()) {
  require(n >= 1, "build_curie_weiss: need n >= 1");
  require(q >= 2, "build_curie_weiss: need q >= 2");
  require(beta >= 0.0, "build_curie_weiss: beta must be >= 0 (ferromagnetic)");
  SpinSystem sys{n, q, Mat::Zero(n * q, n * q),
                 fields.size() ? fields : Vec::Zero(n * q)};
  const double w = beta / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < q; ++a) sys.gamma(q * i + a, q * j + a) = w;
  validate(sys);
  return sys;
}

// q-Potts spin glass with i.i.d. standard normal couplings J_ij = J_ji and
// the diagonal shift beta*(2+eps) that makes Gamma PSD with high
// probability (GOE spectrum lies in [-2-eps, 2+eps] for large n).
inline SpinSystem build_spin_glass(int n, double beta, int q, std::uint64_t seed,
                                   double eps = 0.1) {
  require(n >= 1, "build_spin_glass: need n >= 1");
  require(q >= 2, "build_spin_glass: need q >= 2");
  require(beta >= 0.0, "build_spin_glass: beta must be >= 0");
  Rng rng(seed);
  Mat couplings = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) couplings(i, j) = couplings(j, i) = rng.gaussian();
  SpinSystem sys{n, q, Mat::Zero(n * q, n * q), Vec::Zero(n * q)};
  const double scale = beta / std::sqrt(static_cast<double>(n));
  const double shift = beta * (2.0 + eps);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < q; ++a) {
      sys.gamma(q * i + a, q * i + a) = shift;
      for (int j = 0; j < n; ++j)
        if (j != i) sys.gamma(q * i + a, q * j + a) = scale * couplings(i, j);
    }
  validate(sys);
  return sys;
}

// Gamma' = Gamma + c*Id over the qn coordinates. Leaves the Gibbs measure
// unchanged: <eta, Id eta> = n for every one-hot eta.
inline SpinSystem shift_diagonal(const SpinSystem& sys, double c) {
  SpinSystem out = sys;
  out.gamma += c * Mat::Identity(sys.dim(), sys.dim());
  return out;
}

inline BinaryConfig to_binary(const Config& c, int q) {
  const int n = static_cast<int>(c.spins.size());
  require(n >= 1, "to_binary: empty configuration");
  BinaryConfig b{std::vector<int>(static_cast<std::size_t>(n) * q, 0)};
  for (int i = 0; i < n; ++i) {
    require(c.spins[i] >= 1 && c.spins[i] <= q, "to_binary: spin value outside [q]");
    b.bits[static_cast<std::size_t>(q) * i + (c.spins[i] - 1)] = 1;
  }
  return b;
}

inline Config from_binary(const BinaryConfig& b, int q) {
  require(q >= 2, "from_binary: need q >= 2");
  require(b.bits.size() % q == 0, "from_binary: bit vector length not divisible by q");
  const int n = static_cast<int>(b.bits.size()) / q;
  Config c{std::vector<int>(n, 0)};
  for (int i = 0; i < n; ++i) {
    int sum = 0;
    for (int a = 0; a < q; ++a) {
      const int bit = b.bits[static_cast<std::size_t>(q) * i + a];
      require(bit == 0 || bit == 1, "from_binary: entries must be 0/1");
      sum += bit;
      if (bit == 1) c.spins[i] = a + 1;
    }
    require(sum == 1, "from_binary: block sum must be exactly 1");
  }
  return c;
}

// Dobrushin-type row-sum condition: max_(i,a) sum_(j,b) |Gamma| <= 1-delta.
inline bool check_dobrushin(const SpinSystem& sys, double delta) {
  const double max_row = sys.gamma.cwiseAbs().rowwise().sum().maxCoeff();
  return max_row <= 1.0 - delta;
}

// Ising tree-uniqueness regime with gap delta on graphs of maximum degree
// max_degree: tanh(|beta|) <= (1-delta)/(max_degree-1).
inline bool check_tree_uniqueness(double beta, int max_degree, double delta) {
  require(max_degree >= 3, "check_tree_uniqueness: need max_degree >= 3");
  require(delta > 0.0 && delta < 1.0, "check_tree_uniqueness: need delta in (0,1)");
  return std::tanh(std::abs(beta)) <= (1.0 - delta) / (max_degree - 1);
}

inline nlohmann::json to_json(const SpinSystem& sys) {
  nlohmann::json j;
  j["n"] = sys.n;
  j["q"] = sys.q;
  std::vector<double> gamma;
  gamma.reserve(static_cast<std::size_t>(sys.dim()) * sys.dim());
  for (int r = 0; r < sys.dim(); ++r)
    for (int c = 0; c < sys.dim(); ++c) gamma.push_back(sys.gamma(r, c));
  j["gamma"] = gamma;
  j["fields"] = std::vector<double>(sys.fields.data(), sys.fields.data() + sys.dim());
  return j;
}

inline SpinSystem from_json(const nlohmann::json& j) {
  SpinSystem sys;
  sys.n = j.at("n").get<int>();
  sys.q = j.at("q").get<int>();
  require(sys.n >= 1 && sys.q >= 2, "SpinSystem json: bad n/q");
  const int d = sys.n * sys.q;
  const auto gamma = j.at("gamma").get<std::vector<double>>();
  const auto fields = j.at("fields").get<std::vector<double>>();
  require(static_cast<int>(gamma.size()) == d * d, "SpinSystem json: gamma size mismatch");
  require(static_cast<int>(fields.size()) == d, "SpinSystem json: fields size mismatch");
  sys.gamma.resize(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) sys.gamma(r, c) = gamma[static_cast<std::size_t>(r) * d + c];
  sys.fields = Eigen::Map<const Vec>(fields.data(), d);
  validate(sys);
  return sys;
}

}  // namespace entrofact::model
