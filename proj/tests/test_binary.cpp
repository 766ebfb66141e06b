#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "prinstrat/binary.hpp"

using namespace prinstrat;

namespace {

BinaryParams reference_truth() {
  BinaryParams p;
  p.beta0 = Eigen::Vector2d(1.2, 0.6);
  p.beta1 = Eigen::Vector2d(0.8, 1.2);
  p.lambda0 = 0.9;
  p.lambda1 = 0.5;
  p.sigma_y2 = 0.25;
  p.p00 = 0.1;
  p.p01 = 0.3;
  p.p10 = 0.2;
  p.p11 = 0.4;
  return p;
}

BinaryParams random_binary(RngStream& rng) {
  BinaryParams p;
  p.beta0 = Eigen::Vector2d(2.0 * rng.normal(), 2.0 * rng.normal());
  p.beta1 = Eigen::Vector2d(2.0 * rng.normal(), 2.0 * rng.normal());
  p.lambda0 = rng.normal();
  p.lambda1 = rng.normal();
  p.sigma_y2 = 0.2 + rng.uniform();
  Eigen::Vector4d cells;
  double total = 0.0;
  for (int j = 0; j < 4; ++j) {
    cells(j) = 0.05 + rng.uniform();
    total += cells(j);
  }
  cells /= total;
  p.p00 = cells(0);
  p.p01 = cells(1);
  p.p10 = cells(2);
  p.p11 = cells(3);
  return p;
}

// Simpson-rule integral of the joint density over y for one s, t.
double integrate_pdf(const BinaryParams& p, int s, int t) {
  const double lo = -30.0, hi = 30.0;
  const int n = 8000;  // even
  const double h = (hi - lo) / n;
  double acc = marginal_pdf_binary(lo, s, t, p) + marginal_pdf_binary(hi, s, t, p);
  for (int i = 1; i < n; ++i)
    acc += marginal_pdf_binary(lo + h * i, s, t, p) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("simulate_binary: cell frequencies and mixture means") {
  const BinaryParams truth = reference_truth();
  RngStream rng(81, 0);
  const int n = 100000;
  const Dataset d = simulate_binary(truth, n, rng);
  REQUIRE(d.has_truth());
  double c00 = 0, c01 = 0, c10 = 0, c11 = 0, y1 = 0, n1 = 0;
  for (int i = 0; i < n; ++i) {
    const int s0 = static_cast<int>(d.s0(i));
    const int s1 = static_cast<int>(d.s1(i));
    c00 += (s0 == 0 && s1 == 0);
    c01 += (s0 == 0 && s1 == 1);
    c10 += (s0 == 1 && s1 == 0);
    c11 += (s0 == 1 && s1 == 1);
    if (d.t(i) == 1) {
      y1 += d.y(i);
      n1 += 1.0;
    }
  }
  CHECK(std::abs(c00 / n - 0.1) < 0.005);
  CHECK(std::abs(c01 / n - 0.3) < 0.005);
  CHECK(std::abs(c10 / n - 0.2) < 0.005);
  CHECK(std::abs(c11 / n - 0.4) < 0.005);
  // E[Y | T=1] = lambda1 + 0.8 p1. + 1.2 p.1
  CHECK(y1 / n1 == doctest::Approx(1.82).epsilon(0.01));

  BinaryParams degenerate = truth;
  degenerate.p00 = degenerate.p01 = degenerate.p10 = 0.0;
  degenerate.p11 = 1.0;
  const Dataset dd = simulate_binary(degenerate, 500, rng);
  CHECK(dd.s0.minCoeff() == 1.0);
  CHECK(dd.s1.minCoeff() == 1.0);
}

TEST_CASE("marginal pdf collapses to a single normal when beta01 = 0") {
  BinaryParams p = reference_truth();
  p.beta0(1) = 0.0;
  for (double y : {-1.0, 0.3, 1.5, 4.0}) {
    for (int s = 0; s < 2; ++s) {
      const double m = p.lambda0 + p.beta0(0) * s;
      const double cell = s == 0 ? p.p00 + p.p01 : p.p10 + p.p11;
      const double want = cell *
                          std::exp(-0.5 * (y - m) * (y - m) / p.sigma_y2) /
                          std::sqrt(2.0 * 3.14159265358979323846 * p.sigma_y2);
      CHECK(marginal_pdf_binary(y, s, 0, p) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("marginal pdf normalizes to one (quadrature oracle, 20 random sets)") {
  RngStream rng(82, 0);
  for (int k = 0; k < 20; ++k) {
    const BinaryParams p = random_binary(rng);
    for (int t = 0; t < 2; ++t) {
      const double total = integrate_pdf(p, 0, t) + integrate_pdf(p, 1, t);
      REQUIRE(total == doctest::Approx(1.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("marginal pdf against a simulation-based density estimate") {
  const BinaryParams truth = reference_truth();
  RngStream rng(83, 0);
  const int n = 1000000;
  const Dataset d = simulate_binary(truth, n, rng);
  // histogram density estimate at (y, s, t) = (1.5, 1, 0)
  const double y0 = 1.5, h = 0.05;
  int hits = 0, arm = 0;
  for (int i = 0; i < n; ++i) {
    if (d.t(i) != 0) continue;
    ++arm;
    if (d.s(i) == 1.0 && std::abs(d.y(i) - y0) < h) ++hits;
  }
  // joint density of (y, s=1 | t=0): hits / (arm * 2h)
  const double est = hits / (arm * 2.0 * h);
  const double want = marginal_pdf_binary(y0, 1, 0, truth);
  const double se = std::sqrt(want / (arm * 2.0 * h));
  CHECK(std::abs(est - want) < 3.0 * se + 1e-3);
}

TEST_CASE("imputation probability equals the two-term Bayes enumeration") {
  RngStream rng(84, 0);
  for (int k = 0; k < 200; ++k) {
    const BinaryParams p = random_binary(rng);
    const double y = 3.0 * rng.normal();
    const int s = rng.uniform() < 0.5 ? 0 : 1;
    const int t = rng.uniform() < 0.5 ? 0 : 1;
    // brute force: posterior over the missing intermediate
    double h0, h1;
    if (t == 0) {
      const double m0 = p.lambda0 + p.beta0(0) * s;
      const double m1 = m0 + p.beta0(1);
      h0 = (s == 0 ? p.p00 : p.p10) * std::exp(-0.5 * (y - m0) * (y - m0) / p.sigma_y2);
      h1 = (s == 0 ? p.p01 : p.p11) * std::exp(-0.5 * (y - m1) * (y - m1) / p.sigma_y2);
    } else {
      const double m0 = p.lambda1 + p.beta1(1) * s;
      const double m1 = m0 + p.beta1(0);
      h0 = (s == 0 ? p.p00 : p.p01) * std::exp(-0.5 * (y - m0) * (y - m0) / p.sigma_y2);
      h1 = (s == 0 ? p.p10 : p.p11) * std::exp(-0.5 * (y - m1) * (y - m1) / p.sigma_y2);
    }
    const double want = h1 / (h0 + h1);
    REQUIRE(binary_impute_prob1(y, s, t, p) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("moment-matched sign flips preserve every marginal moment") {
  const BinaryParams a = reference_truth();
  const BinaryMoments ma = binary_marginal_moments(a);
  // frozen flip targets, solved by hand from the moment equations
  const BinaryParams b = binary_flip_signs(a, false, true);
  CHECK(b.beta1(0) == doctest::Approx(-0.8).epsilon(1e-12));
  CHECK(b.beta1(1) == doctest::Approx(1.0476190476190474).epsilon(1e-12));
  CHECK(b.lambda1 == doctest::Approx(1.5666666666666669).epsilon(1e-12));
  const BinaryParams c = binary_flip_signs(a, true, false);
  CHECK(c.beta0(0) == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(c.lambda0 == doctest::Approx(1.8).epsilon(1e-12));

  for (const BinaryParams& q : {b, c}) {
    const BinaryMoments mq = binary_marginal_moments(q);
    for (int t = 0; t < 2; ++t) {
      CHECK(mq.mu_y[t] == doctest::Approx(ma.mu_y[t]).epsilon(1e-12));
      CHECK(mq.zeta[t] == doctest::Approx(ma.zeta[t]).epsilon(1e-12));
      CHECK(mq.psi[t] == doctest::Approx(ma.psi[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("sign separation: identity, flipped pair, and variance perturbation") {
  const BinaryParams a = reference_truth();
  std::vector<double> grid;
  for (double y = -6.0; y <= 8.0; y += 0.25) grid.push_back(y);

  CHECK(sign_separation_check(a, a, grid) == doctest::Approx(0.0));

  // both violation signs flipped, moments re-matched: observationally close
  // but not identical (the binary mixture identifies signs weakly)
  const BinaryParams flipped = binary_flip_signs(a, true, true);
  const double gap = sign_separation_check(a, flipped, grid);
  CHECK(gap > 1e-4);
  CHECK(gap < 10.0);

  // sigma_y2 perturbed with moments re-matched: distinguishable in the tails
  BinaryParams pert = a;
  pert.sigma_y2 = a.sigma_y2 * 1.2;
  const BinaryMoments ma = binary_marginal_moments(a);
  // re-solve beta00, beta01 (positive branch) and lambda0 to match moments
  {
    const double omr2 = 1.0 - ma.cor * ma.cor;
    const double v0 = ma.zeta[0] - ma.psi[0] * ma.psi[0];
    const double b01 = std::sqrt((v0 - pert.sigma_y2) / (omr2 * ma.sigma_s[1] * ma.sigma_s[1]));
    const double b00 = (ma.psi[0] - ma.cor * ma.sigma_s[1] * b01) / ma.sigma_s[0];
    pert.beta0 = Eigen::Vector2d(b00, b01);
    pert.lambda0 = ma.mu_y[0] - (b00 * ma.phi[0] + b01 * ma.phi[1]);
  }
  std::vector<double> wide_grid;
  for (double y = -12.0; y <= 14.0; y += 0.5) wide_grid.push_back(y);
  CHECK(sign_separation_check(a, pert, wide_grid) > 1.0);
}

TEST_CASE("binary gibbs: margins track the observed arm frequencies") {
  const BinaryParams truth = reference_truth();
  RngStream rng(85, 0);
  const Dataset data = simulate_binary(truth, 5000, rng);
  double f0 = 0.0, n0 = 0.0, f1 = 0.0, n1 = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    if (data.t(i) == 0) {
      f0 += data.s(i);
      n0 += 1.0;
    } else {
      f1 += data.s(i);
      n1 += 1.0;
    }
  }
  ConstraintSet cons;
  cons.sigma_y2_floor_frac = 0.0;
  cons.rho_fixed = 0.4;  // known p11
  ChainConfig cfg = binary_chain_defaults();
  cfg.n_iter = 3000;
  cfg.burn_in = 500;
  cfg.thin = 5;
  cfg.seed = 41;
  const PosteriorDraws draws = gibbs_binary(data, PriorSpec{}, cons, cfg, {});
  const double p1dot_mean = draws.mean("p10") + draws.mean("p11");
  const double pdot1_mean = draws.mean("p01") + draws.mean("p11");
  CHECK(std::abs(p1dot_mean - f0 / n0) < 0.02);
  CHECK(std::abs(pdot1_mean - f1 / n1) < 0.02);
}

TEST_CASE("binary gibbs: sign constraint keeps the violation coefficients positive") {
  const BinaryParams truth = reference_truth();
  RngStream rng(86, 0);
  const Dataset data = simulate_binary(truth, 2000, rng);
  ConstraintSet cons;
  cons.sigma_y2_floor_frac = 0.0;
  cons.sign_positive = true;
  cons.rho_fixed = 0.4;
  ChainConfig cfg = binary_chain_defaults();
  cfg.n_iter = 2000;
  cfg.burn_in = 400;
  cfg.thin = 4;
  cfg.seed = 42;
  const PosteriorDraws draws = gibbs_binary(data, PriorSpec{}, cons, cfg, {});
  CHECK(draws.column("beta01").minCoeff() > 0.0);
  CHECK(draws.column("beta10").minCoeff() > 0.0);
  // every draw respects the four-cell simplex
  for (int r = 0; r < draws.draws.rows(); ++r) {
    const double total = draws.draws(r, draws.col("p00")) + draws.draws(r, draws.col("p01")) +
                         draws.draws(r, draws.col("p10")) + draws.draws(r, draws.col("p11"));
    REQUIRE(total == doctest::Approx(1.0).epsilon(1e-9));
    REQUIRE(draws.draws(r, draws.col("p11")) == 0.4);
  }
}

TEST_CASE("binary gibbs: posterior log-likelihood stays near the truth's") {
  // with p11 known and the sign constraint, retained draws should explain
  // the data essentially as well as the generating parameters
  const BinaryParams truth = reference_truth();
  RngStream rng(87, 0);
  const Dataset data = simulate_binary(truth, 2000, rng);
  ConstraintSet cons;
  cons.sigma_y2_floor_frac = 0.0;
  cons.sign_positive = true;
  cons.rho_fixed = 0.4;
  ChainConfig cfg = binary_chain_defaults();
  cfg.n_iter = 3000;
  cfg.burn_in = 1000;
  cfg.thin = 10;
  cfg.seed = 43;
  const PosteriorDraws draws = gibbs_binary(data, PriorSpec{}, cons, cfg, {});

  auto loglik = [&](const BinaryParams& p) {
    double ll = 0.0;
    for (int i = 0; i < data.n(); ++i)
      ll += std::log(
          marginal_pdf_binary(data.y(i), static_cast<int>(data.s(i)), data.t(i), p));
    return ll;
  };
  const double ll_truth = loglik(truth);
  double avg = 0.0;
  for (int r = 0; r < draws.draws.rows(); ++r) {
    BinaryParams p = truth;
    p.beta0 = Eigen::Vector2d(draws.draws(r, draws.col("beta00")),
                              draws.draws(r, draws.col("beta01")));
    p.beta1 = Eigen::Vector2d(draws.draws(r, draws.col("beta10")),
                              draws.draws(r, draws.col("beta11")));
    p.lambda0 = draws.draws(r, draws.col("lambda0"));
    p.lambda1 = draws.draws(r, draws.col("lambda1"));
    p.sigma_y2 = draws.draws(r, draws.col("sigma_y2"));
    p.p00 = draws.draws(r, draws.col("p00"));
    p.p01 = draws.draws(r, draws.col("p01"));
    p.p10 = draws.draws(r, draws.col("p10"));
    p.p11 = draws.draws(r, draws.col("p11"));
    avg += loglik(p);
  }
  avg /= draws.draws.rows();
  CHECK(avg > ll_truth - 10.0);  // posterior-concentration sanity
}

TEST_CASE("binary gibbs: grid update stays inside the feasible interval") {
  const BinaryParams truth = reference_truth();
  RngStream rng(88, 0);
  const Dataset data = simulate_binary(truth, 1500, rng);
  ConstraintSet cons;
  cons.sigma_y2_floor_frac = 0.0;
  cons.sign_positive = true;  // p11 free
  ChainConfig cfg = binary_chain_defaults();
  cfg.n_iter = 1200;
  cfg.burn_in = 200;
  cfg.thin = 4;
  cfg.seed = 44;
  BinaryGibbsSampler sampler(data, PriorSpec{}, cons, cfg);
  const PosteriorDraws draws = sampler.run({});
  for (int r = 0; r < draws.draws.rows(); ++r) {
    const double p11 = draws.draws(r, draws.col("p11"));
    const double p1d = draws.draws(r, draws.col("p10")) + p11;
    const double pd1 = draws.draws(r, draws.col("p01")) + p11;
    REQUIRE(p11 >= std::max(0.0, p1d + pd1 - 1.0) - 1e-12);
    REQUIRE(p11 <= std::min(p1d, pd1) + 1e-12);
    REQUIRE(draws.draws(r, draws.col("p00")) >= -1e-12);
  }
}

TEST_CASE("binary gibbs is deterministic per seed") {
  const BinaryParams truth = reference_truth();
  RngStream rng(89, 0);
  const Dataset data = simulate_binary(truth, 800, rng);
  ConstraintSet cons;
  cons.sigma_y2_floor_frac = 0.0;
  cons.sign_positive = true;
  ChainConfig cfg = binary_chain_defaults();
  cfg.n_iter = 600;
  cfg.burn_in = 100;
  cfg.thin = 2;
  cfg.seed = 45;
  const PosteriorDraws a = gibbs_binary(data, PriorSpec{}, cons, cfg, {});
  const PosteriorDraws b = gibbs_binary(data, PriorSpec{}, cons, cfg, {});
  CHECK(a.draws == b.draws);
}

TEST_CASE("binary sampler rejects continuous-only constraints and covariates") {
  const BinaryParams truth = reference_truth();
  RngStream rng(90, 0);
  const Dataset data = simulate_binary(truth, 100, rng);
  ChainConfig cfg = binary_chain_defaults();
  ConstraintSet bad;
  bad.dominant_effect = true;
  CHECK_THROWS_AS(BinaryGibbsSampler(data, PriorSpec{}, bad, cfg), ConfigError);

  Dataset cont = data;
  cont.s(0) = 0.5;
  ConstraintSet ok;
  ok.sigma_y2_floor_frac = 0.0;
  CHECK_THROWS_AS(BinaryGibbsSampler(cont, PriorSpec{}, ok, cfg), DataError);
}
