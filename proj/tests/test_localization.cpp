#include "entrofact/localization.hpp"

#include <doctest.h>

#include <cmath>

using namespace entrofact;

namespace {

model::SpinSystem edge_psd(double beta) {
  Mat a = Mat::Zero(2, 2);
  a(0, 1) = a(1, 0) = 1.0;
  return model::shift_diagonal(model::build_potts(a, beta, 2), beta);
}

Vec random_f(std::size_t n, Rng& rng, double scale = 1.0) {
  Vec g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = rng.gaussian() * scale;
  return g.array().exp();
}

}  // namespace

TEST_CASE("rho at time zero is the Gibbs measure") {
  const auto sys = edge_psd(0.3);
  auto st = loc::make_state(sys, 1);
  const auto d0 = loc::rho_t(st);
  const auto gibbs = exact::gibbs_distribution(sys);
  CHECK((d0.probs - gibbs.probs).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("zero interaction freezes the process") {
  const auto sys = model::build_potts(Mat::Zero(3, 3), 0.5, 2,
                                      Vec::LinSpaced(6, -0.4, 0.8));
  auto st = loc::make_state(sys, 7);
  const Vec p0 = loc::rho_probs(st);
  loc::advance_to(st, 1.0, 1e-2);
  CHECK(st.y.cwiseAbs().maxCoeff() == 0.0);
  CHECK((loc::rho_probs(st) - p0).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("time one factorizes over blocks") {
  const auto sys = edge_psd(0.4);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto st = loc::make_state(sys, 1);
    st.t = 1.0;
    for (int c = 0; c < sys.dim(); ++c) st.y[c] = rng.gaussian() * 2.0;
    const Mat cov = exact::covariance(loc::rho_t(st));
    for (int r = 0; r < 2; ++r)
      for (int c = 2; c < 4; ++c) CHECK(std::abs(cov(r, c)) <= 1e-12);
  }
  auto st = loc::make_state(sys, 1);
  st.t = 1.5;
  CHECK_THROWS_AS(loc::rho_t(st), InvalidArgument);
}

TEST_CASE("mean vector basics") {
  const auto uniform = exact::from_weights(StateSpace::uniform(1, 2), Vec::Constant(2, 1.0));
  const Vec m = exact::mean_vector(uniform);
  CHECK(m[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m[1] == doctest::Approx(0.5).epsilon(1e-15));

  Vec w = Vec::Zero(4);
  const auto space = StateSpace::uniform(2, 2);
  const model::Config sigma{{2, 1}};
  w[exact::config_index(space, sigma)] = 3.0;
  const auto dirac = exact::from_weights(space, w);
  const auto eta = model::to_binary(sigma, 2);
  const Vec md = exact::mean_vector(dirac);
  for (int c = 0; c < 4; ++c) CHECK(md[c] == doctest::Approx(eta.bits[c]).epsilon(1e-15));

  // Enumeration oracle on the single edge.
  const auto d = exact::gibbs_distribution(edge_psd(0.3));
  Vec expect = Vec::Zero(4);
  for (std::size_t idx = 0; idx < d.size(); ++idx) {
    expect[2 * 0 + d.space.value(idx, 0)] += d.probs[idx];
    expect[2 * 1 + d.space.value(idx, 1)] += d.probs[idx];
  }
  CHECK((exact::mean_vector(d) - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("step: zero interaction, determinism, martingale drift") {
  const auto flat = model::build_potts(Mat::Zero(2, 2), 0.1, 2);
  auto st = loc::make_state(flat, 4);
  loc::step(st, 0.25);
  CHECK(st.t == doctest::Approx(0.25));
  CHECK(st.y.cwiseAbs().maxCoeff() == 0.0);

  const auto sys = edge_psd(0.3);
  auto a = loc::make_state(sys, 99);
  auto b = loc::make_state(sys, 99);
  loc::advance_to(a, 1.0, 1e-2);
  loc::advance_to(b, 1.0, 1e-2);
  CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(loc::step(a, 0.5), InvalidArgument);

  // One-vertex system: the mean of rho_t is a bounded martingale; the
  // empirical drift must sit within three standard errors of zero.
  const model::SpinSystem one{1, 2, 0.4 * Mat::Identity(2, 2), Vec{{0.3, -0.3}}};
  const auto m0 = exact::mean_vector(exact::gibbs_distribution(one));
  const int paths = 10000;
  std::vector<double> drift(paths);
  parallel_for(paths, [&](std::size_t p) {
    auto stp = loc::make_state(one, 5);
    stp.rng = Rng(5).fork("path", p);
    loc::advance_to(stp, 1.0, 1e-3);
    drift[p] = exact::mean_vector(loc::rho_t(stp))[0] - m0[0];
  });
  const auto stat = loc::summarize(drift);
  CHECK(std::abs(stat.mean) <= 3.0 * stat.se + 10 * 1e-3);
}

TEST_CASE("martingale check: exact for zero interaction, passes on the edge") {
  const auto flat = model::build_potts(Mat::Zero(2, 2), 0.2, 2);
  const auto cfg = model::Config{{1, 2}};
  const auto r0 = loc::martingale_check(flat, model::to_binary(cfg, 2), 1.0, 1e-2,
                                        200, 3);
  CHECK(r0.bias() == 0.0);

  const auto sys = edge_psd(0.3);
  const auto r = loc::martingale_check(sys, model::to_binary(cfg, 2), 0.5, 2e-3,
                                       4000, 17);
  CHECK(r.excess() <= 3.0);

  // Halving dt keeps the verdict.
  const auto r2 = loc::martingale_check(sys, model::to_binary(cfg, 2), 0.5, 1e-3,
                                        4000, 17);
  CHECK(r2.excess() <= 3.0);
}

TEST_CASE("kappa bound branches") {
  CHECK(loc::kappa_bound(0.3, 1.0, 50) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(loc::kappa_bound(0.9, 1.0, 50) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(loc::kappa_bound(0.0, 0.0, 6) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(loc::kappa_bound(0.5, 0.0, 50) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(loc::kappa_bound(0.0, 0.0, 100, 1.5) ==
        doctest::Approx(15.0).epsilon(1e-15));
}

TEST_CASE("covariance bound holds along paths") {
  const auto sys = edge_psd(0.3);  // lambda = 0.6 -> delta = 0.4
  const auto rep = loc::covariance_bound_check(sys, 0.4, {0.0, 0.5, 1.0}, 10, 21, 2);
  CHECK(rep.worst_margin >= -1e-9);

  const auto cw = model::build_curie_weiss(3, 0.5, 2);
  const auto rep2 = loc::covariance_bound_check(cw, 0.5, {0.0, 0.25, 0.75, 1.0}, 10, 2, 2);
  CHECK(rep2.worst_margin >= -1e-9);

  // Eigenvalue hypothesis failures are rejected with the eigenvalue named.
  CHECK_THROWS_WITH_AS(loc::covariance_bound_check(sys, 0.9, {0.0}, 1, 1, 1),
                       doctest::Contains("lambda(Gamma)"), InvalidArgument);

  // Zero interaction at the delta -> 1 boundary: the bound is 1/2 at every
  // t and product measures sit below it.
  const auto flat = model::build_potts(Mat::Zero(3, 3), 0.1, 2,
                                       Vec::LinSpaced(6, -0.5, 0.5));
  const auto rep3 = loc::covariance_bound_check(flat, 1.0, {0.0, 0.5, 1.0}, 5, 5, 1);
  for (const auto& s : rep3.samples) CHECK(s.bound == doctest::Approx(0.5));
  CHECK(rep3.worst_margin >= -1e-9);
}

TEST_CASE("c_delta schedule") {
  CHECK(loc::c_delta_schedule(1.0, 4) == doctest::Approx(1.0));
  CHECK(loc::c_delta_schedule(0.5, 4) == doctest::Approx(0.5));
  const int n = 5;
  const double delta = 0.1;  // below 1/n
  CHECK(loc::c_delta_schedule(delta, n) ==
        doctest::Approx(1.0 / (n * std::exp(1.0 - delta * n))).epsilon(1e-15));
}

TEST_CASE("entropic stability") {
  // Constant f: both sides vanish.
  const auto cw = model::build_curie_weiss(3, 0.5, 2);
  const auto rc = loc::entropic_stability_check(cw, 0.5, Vec::Constant(8, 2.0),
                                                5e-3, 50, 9);
  CHECK(rc.ent0 == 0.0);
  CHECK(rc.terminal.mean == 0.0);

  // Zero interaction (delta = 1): rho_1 = rho pathwise, so equality holds.
  const auto flat = model::build_potts(Mat::Zero(2, 2), 0.2, 2);
  Rng rng(31);
  const Vec f = random_f(4, rng);
  const auto re = loc::entropic_stability_check(flat, 1.0, f, 1e-2, 50, 9);
  CHECK(re.c_delta == 1.0);
  CHECK(re.terminal.se <= 1e-14);
  CHECK(re.terminal.mean == doctest::Approx(re.ent0).epsilon(1e-12));

  // Curie-Weiss n=3: statistical pass with margins reported.
  const Vec f2 = random_f(8, rng);
  const auto r = loc::entropic_stability_check(cw, 0.5, f2, 5e-3, 1000, 13);
  CHECK(r.excess() <= 3.0);
}

TEST_CASE("covariance-influence chain holds along simulated paths") {
  const auto sys = edge_psd(0.35);
  auto st = loc::make_state(sys, 23);
  st.rng = Rng(23).fork("path", 0);
  for (double t : {0.2, 0.5, 0.8}) {
    loc::advance_to(st, t, 5e-3);
    const auto d = loc::rho_t(st);
    const auto spec = exact::influence_spectrum(d);
    CHECK(spec.imag_bound <= 1e-9);
    CHECK(max_eigenvalue(exact::covariance(d)) <= spec.lambda_max + 0.5 + 1e-9);
  }
}

TEST_CASE("submartingale flow") {
  const auto sys = edge_psd(0.3);
  Rng rng(41);
  const Vec f = random_f(4, rng);

  // Grid containing zero gives exact equality there; the full block reduces
  // to the closed-form path functional rho_t(f) log rho_t(f).
  auto alpha = exact::BlockWeights::from_map({{0b01, 0.5}, {0b11, 0.5}});
  const auto rep = loc::submartingale_check(sys, alpha, f, {0.0, 0.25, 0.5, 1.0},
                                            2e-3, 800, 19);
  REQUIRE(rep.rows.size() == 8);
  for (const auto& row : rep.rows) {
    if (row.t == 0.0) {
      CHECK(row.stat.mean == doctest::Approx(row.baseline).epsilon(1e-13));
      CHECK(row.stat.se <= 1e-14);
    }
    CHECK(row.excess() <= 3.0);
  }

  // Closed-form oracle for the full block on a fresh path.
  auto st = loc::make_state(sys, 77);
  st.rng = Rng(77).fork("path", 0);
  loc::advance_to(st, 0.6, 1e-2);
  const Vec probs = loc::rho_probs(st);
  const double rho_f = probs.dot(f);
  const FiberIndex full(st.space, st.space.full_mask());
  CHECK(loc::conditional_flow(probs, full, f) ==
        doctest::Approx(rho_f * std::log(rho_f)).epsilon(1e-12));
}
