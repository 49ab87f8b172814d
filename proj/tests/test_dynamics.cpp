#include "entrofact/dynamics.hpp"
#include "entrofact/io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

using namespace entrofact;
using exact::BlockWeights;
using exact::Distribution;

namespace {

Distribution uniform_product_2x2() {
  return exact::from_weights(StateSpace::uniform(2, 2), Vec::Constant(4, 1.0));
}

Distribution edge_ising(double beta) {
  Mat a = Mat::Zero(2, 2);
  a(0, 1) = a(1, 0) = 1.0;
  return exact::gibbs_distribution(model::build_potts(a, beta, 2));
}

Distribution random_distribution(int n, int q, Rng& rng) {
  Vec logw(StateSpace::uniform(n, q).size());
  for (Eigen::Index i = 0; i < logw.size(); ++i) logw[i] = rng.gaussian();
  return exact::from_log_weights(StateSpace::uniform(n, q), std::move(logw));
}

Vec random_f(std::size_t n, Rng& rng, double scale = 1.0) {
  Vec g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = rng.gaussian() * scale;
  return g.array().exp();
}

}  // namespace

TEST_CASE("full-block kernel is rank one") {
  Rng rng(2);
  const auto d = random_distribution(2, 3, rng);
  const auto k = dynamics::block_kernel(d, BlockWeights::full(2));
  for (Eigen::Index r = 0; r < k.matrix.rows(); ++r)
    CHECK((k.matrix.row(r).transpose() - d.probs).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("glauber kernel on the single edge matches the hand-built matrix") {
  const double beta = 0.3;
  const auto d = edge_ising(beta);
  const auto k = dynamics::block_kernel(d, BlockWeights::glauber(2));

  // Hand-built: resample one endpoint from the conditional given the other.
  // p = conditional probability of agreeing with the frozen neighbour.
  const double p = std::exp(2 * beta) / (std::exp(2 * beta) + 1.0);
  Mat expected = Mat::Zero(4, 4);
  // State index = s0 + 2*s1 with spins in {0,1}.
  for (int s0 = 0; s0 < 2; ++s0)
    for (int s1 = 0; s1 < 2; ++s1) {
      const int row = s0 + 2 * s1;
      for (int t0 = 0; t0 < 2; ++t0) {
        const int col = t0 + 2 * s1;  // resample site 0, keep site 1
        expected(row, col) += 0.5 * (t0 == s1 ? p : 1.0 - p);
      }
      for (int t1 = 0; t1 < 2; ++t1) {
        const int col = s0 + 2 * t1;  // resample site 1, keep site 0
        expected(row, col) += 0.5 * (t1 == s0 ? p : 1.0 - p);
      }
    }
  CHECK((k.matrix - expected).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("kernel construction honors the state cap") {
  Rng rng(77);
  const auto d = random_distribution(3, 2, rng);
  const auto saved = dynamics::kernel_state_cap();
  dynamics::kernel_state_cap() = 4;
  CHECK_THROWS_AS(dynamics::block_kernel(d, BlockWeights::glauber(3)), CapExceeded);
  dynamics::kernel_state_cap() = saved;
}

TEST_CASE("kernels are row-stochastic and reversible on random systems") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto d = random_distribution(3, 2, rng);
    std::map<BlockMask, double> m{{0b011, 0.3}, {0b101, 0.3}, {0b110, 0.4}};
    const auto k = dynamics::block_kernel(d, BlockWeights::from_map(std::move(m)));
    CHECK(dynamics::row_sum_defect(k.matrix) <= 1e-12);
    CHECK(dynamics::detailed_balance_defect(k) <= 1e-10);
  }

  const auto d = uniform_product_2x2();
  auto bad = BlockWeights::glauber(2);
  bad.entries[0].second = 0.9;  // no longer sums to 1
  CHECK_THROWS_AS(dynamics::block_kernel(d, bad), InvalidArgument);
}

TEST_CASE("half-step identity") {
  Rng rng(14);
  const auto d = uniform_product_2x2();
  const auto alpha = BlockWeights::glauber(2);

  const auto [lc, rc] = dynamics::half_step_check(d, alpha, Vec::Constant(4, 2.5));
  CHECK(lc == 0.0);
  CHECK(rc == 0.0);

  for (int trial = 0; trial < 50; ++trial) {
    const Vec f = random_f(4, rng, 1.3);
    const auto [lhs, rhs] = dynamics::half_step_check(d, alpha, f);
    CHECK(std::abs(lhs - rhs) <= 1e-10);
  }

  // Full resample forgets f entirely.
  const Vec f = random_f(4, rng);
  const auto [lhs, rhs] = dynamics::half_step_check(d, BlockWeights::full(2), f);
  CHECK(std::abs(lhs) <= 1e-14);
  CHECK(std::abs(rhs) <= 1e-14);
}

TEST_CASE("convexity: Ent(Pf) is below the mixture of Ent(mu_A f)") {
  Rng rng(23);
  const auto d = edge_ising(0.4);
  const auto alpha = BlockWeights::glauber(2);
  const auto k = dynamics::block_kernel(d, alpha);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec f = random_f(4, rng, 1.2);
    double avg = 0.0;
    for (const auto& [mask, w] : alpha.entries) {
      const FiberIndex fi(d.space, mask);
      Vec cond_exp(d.size());
      for (std::size_t o = 0; o < fi.fibers(); ++o) {
        double mass = 0.0, mean = 0.0;
        for (std::size_t r = 0; r < fi.fiber_size(); ++r) {
          const std::size_t idx = fi.out_base[o] + fi.in_off[r];
          mass += d.probs[idx];
          mean += d.probs[idx] * f[idx];
        }
        for (std::size_t r = 0; r < fi.fiber_size(); ++r)
          cond_exp[fi.out_base[o] + fi.in_off[r]] = mass > 0 ? mean / mass : 0.0;
      }
      avg += w * exact::entropy(d, cond_exp);
    }
    CHECK(exact::entropy(d, k.matrix * f) <= avg + 1e-10);
  }
}

TEST_CASE("contraction rate: full block contracts completely") {
  Rng rng(3);
  const auto d = random_distribution(2, 2, rng);
  const auto k = dynamics::block_kernel(d, BlockWeights::full(2));
  CHECK(dynamics::contraction_rate(k, 40, 5) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("contraction rate on the uniform product matches the grid oracle") {
  const auto d = uniform_product_2x2();
  const auto k = dynamics::block_kernel(d, BlockWeights::glauber(2));
  const double observed = dynamics::contraction_rate(k, 150, 11);
  CHECK(observed >= 0.5 - 1e-9);

  // Grid oracle: no f pushes the one-step entropy ratio above 1/2.
  const std::vector<double> levels = {0.1, 0.3, 0.7, 1.0, 1.8, 3.5, 7.0};
  Vec f(4);
  double max_ratio = 0.0;
  for (double f0 : levels)
    for (double f1 : levels)
      for (double f2 : levels)
        for (double f3 : levels) {
          f << f0, f1, f2, f3;
          const double ent = exact::entropy(d, f);
          if (ent <= 1e-13) continue;
          max_ratio = std::max(max_ratio, exact::entropy(d, k.matrix * f) / ent);
        }
  CHECK(max_ratio <= 0.5 + 1e-9);

  // The sharp one-step optimum sits at the linearization value lambda_2^2;
  // here lambda_2 = 1/2, so the witnessed upper bound on delta is 3/4.
  CHECK(observed == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("contraction orderings against gamma/C and the kernel spectrum") {
  Rng rng(37);
  for (int trial = 0; trial < 5; ++trial) {
    const auto d = random_distribution(2, 2, rng);
    const auto alpha = BlockWeights::glauber(2);
    const auto k = dynamics::block_kernel(d, alpha);
    const double c_witnessed = exact::estimate_best_constant(d, alpha, 80, 100 + trial);
    const double rate = dynamics::contraction_rate(k, 80, 200 + trial);
    const double lower = exact::min_cover(alpha, 2) / c_witnessed;
    CHECK(rate >= lower - 1e-9);

    // Variance factorization puts gamma/C_true below the spectral gap, and
    // the linearized witnesses cap the one-step contraction at 1-lambda_2^2.
    // Both comparisons run against witnessed quantities (C from below, the
    // ratio optimum approached in the f -> 1 limit), so they carry a search
    // sharpness tolerance rather than a float one.
    const double gap = dynamics::spectral_gap(k);
    CHECK(gap >= lower - 1e-3);
    const double lambda2 = 1.0 - gap;
    CHECK(rate <= 1.0 - lambda2 * lambda2 + 1e-3);
  }
}

TEST_CASE("spectral gap rejects non-reversible kernels") {
  const auto u = uniform_product_2x2();
  Mat m = Mat::Zero(4, 4);
  for (int r = 0; r < 4; ++r) m(r, (r + 1) % 4) = 1.0;  // a cycle: not reversible
  const dynamics::Kernel k{m, u, true};
  CHECK_THROWS_AS(dynamics::spectral_gap(k), InvalidArgument);
}

TEST_CASE("estimates require positive min cover") {
  const auto u = uniform_product_2x2();
  const auto alpha = BlockWeights::from_map({{0b01, 1.0}});  // site 1 uncovered
  CHECK(exact::min_cover(alpha, 2) == 0.0);
  CHECK_THROWS_AS(exact::estimate_best_constant(u, alpha, 10, 1), InvalidArgument);
}

TEST_CASE("spectral gap: rank-one kernel and glauber on the uniform product") {
  Rng rng(4);
  const auto d = random_distribution(2, 2, rng);
  CHECK(dynamics::spectral_gap(dynamics::block_kernel(d, BlockWeights::full(2))) ==
        doctest::Approx(1.0).epsilon(1e-12));

  const auto u = uniform_product_2x2();
  const auto k = dynamics::block_kernel(u, BlockWeights::glauber(2));
  // Hand spectral decomposition: eigenfunctions 1, s0, s1, s0*s1 with
  // eigenvalues 1, 1/2, 1/2, 0.
  Vec s0(4), s1(4);
  for (std::size_t idx = 0; idx < 4; ++idx) {
    s0[idx] = u.space.value(idx, 0) == 0 ? 1.0 : -1.0;
    s1[idx] = u.space.value(idx, 1) == 0 ? 1.0 : -1.0;
  }
  CHECK((k.matrix * s0 - 0.5 * s0).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((k.matrix * s1 - 0.5 * s1).cwiseAbs().maxCoeff() <= 1e-14);
  const Vec s01 = s0.cwiseProduct(s1);
  CHECK((k.matrix * s01).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(dynamics::spectral_gap(k) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tv mixing time") {
  Rng rng(6);
  const auto d = random_distribution(2, 2, rng);
  const auto rank_one = dynamics::block_kernel(d, BlockWeights::full(2));
  CHECK(dynamics::mixing_time_tv(rank_one, 0.5, exact::config_at(d.space, 0)) == 1);

  const auto u = uniform_product_2x2();
  const auto k = dynamics::block_kernel(u, BlockWeights::glauber(2));
  // Eigendecomposition oracle: from a corner start the TV distance is
  // 2^{-t-1}, so the 0.01 mixing time is the least t with 2^{-t-1} <= 0.01.
  int expected = 0;
  while (std::pow(2.0, -(expected + 1)) > 0.01) ++expected;
  const int measured = dynamics::mixing_time_tv(k, 0.01, exact::config_at(u.space, 0));
  CHECK(std::abs(measured - expected) <= 1);

  const auto curve = dynamics::mixing_curve(k, 0, 12);
  for (std::size_t t = 1; t < curve.size(); ++t) CHECK(curve[t] <= curve[t - 1] + 1e-12);
  CHECK(dynamics::mixing_time_tv_worst(k, 0.01) >= measured);

  // Step cap produces the sentinel.
  Mat a = Mat::Zero(2, 2);
  a(0, 1) = a(1, 0) = 1.0;
  const auto slow = exact::gibbs_distribution(model::build_potts(a, 3.0, 2));
  const auto sk = dynamics::block_kernel(slow, BlockWeights::glauber(2));
  CHECK(dynamics::mixing_time_tv(sk, 1e-6, exact::config_at(slow.space, 0), 2) == -1);
}

TEST_CASE("kernel and mixing-curve CSV exports") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "entrofact-dyn-csv";
  fs::remove_all(dir);

  const auto u = uniform_product_2x2();
  const auto k = dynamics::block_kernel(u, BlockWeights::glauber(2));
  io::write_matrix_csv(dir / "kernel.csv", k.matrix);
  std::ifstream in(dir / "kernel.csv", std::ios::binary);
  std::string header, row;
  std::getline(in, header);
  CHECK(header == "c0,c1,c2,c3");
  int rows = 0;
  while (std::getline(in, row)) ++rows;
  CHECK(rows == 4);

  const auto curve = dynamics::mixing_curve(k, 0, 8);
  std::vector<std::vector<double>> series;
  for (std::size_t t = 0; t < curve.size(); ++t)
    series.push_back({static_cast<double>(t), curve[t]});
  io::write_series_csv(dir / "mixing.csv", {"t", "d_tv"}, series);
  std::ifstream min(dir / "mixing.csv", std::ios::binary);
  std::getline(min, header);
  CHECK(header == "t,d_tv");
  std::getline(min, row);
  CHECK(row.rfind("0,", 0) == 0);
}
