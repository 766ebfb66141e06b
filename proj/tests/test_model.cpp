#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace {
template <class E, class F>
bool throws_with_substr(F&& fn, const char* needle) {
  try {
    fn();
  } catch (const E& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  } catch (...) {
    return false;
  }
  return false;
}
}  // namespace

#include "prinstrat/csv.hpp"
#include "prinstrat/model.hpp"

using namespace prinstrat;

namespace {

// Data-generating values used across the simulation checks.
JointParams lrc_truth() {
  JointParams p;
  p.beta0 = Eigen::Vector2d(11.5, 0.0);
  p.beta1 = Eigen::Vector2d(11.5, 96.0);
  p.lambda0 = p.lambda1 = -0.5;
  p.sigma_y2 = 196.0;
  p.phi0 = 0.89;
  p.phi1 = 0.70;
  p.sigma_s0 = p.sigma_s1 = 0.25;
  p.rho = 0.75;
  return p;
}

JointParams random_params(RngStream& rng) {
  JointParams p;
  p.beta0 = Eigen::Vector2d(3.0 * rng.normal(), 3.0 * rng.normal());
  p.beta1 = Eigen::Vector2d(3.0 * rng.normal(), 3.0 * rng.normal());
  p.lambda0 = rng.normal();
  p.lambda1 = rng.normal();
  p.sigma_y2 = 0.2 + 3.0 * rng.uniform();
  p.phi0 = rng.normal();
  p.phi1 = rng.normal();
  p.sigma_s0 = 0.3 + rng.uniform();
  p.sigma_s1 = 0.3 + rng.uniform();
  p.rho = 1.8 * rng.uniform() - 0.9;
  return p;
}

}  // namespace

TEST_CASE("marginalize: exact hand-computed values for the LRC setting") {
  const MarginalParams m = marginalize(lrc_truth());
  CHECK(m.zeta[1] == doctest::Approx(883.765625).epsilon(1e-12));
  CHECK(m.psi[1] == doctest::Approx(26.15625).epsilon(1e-12));
  CHECK(m.zeta[0] == doctest::Approx(204.265625).epsilon(1e-12));
  CHECK(m.psi[0] == doctest::Approx(2.875).epsilon(1e-12));
  CHECK(m.mu_y_prime[0] == doctest::Approx(9.735).epsilon(1e-12));
  CHECK(m.mu_y_prime[1] == doctest::Approx(76.935).epsilon(1e-12));
  // beta01 = 0 makes the arm-0 conditional variance exactly sigma_y2
  CHECK(m.var_y_given_s(0) == doctest::Approx(196.0).epsilon(1e-12));
}

TEST_CASE("marginalize: no intermediate effect collapses to sigma_y2") {
  JointParams p = lrc_truth();
  p.beta0.setZero();
  p.beta1.setZero();
  const MarginalParams m = marginalize(p);
  for (int t = 0; t < 2; ++t) {
    CHECK(m.zeta[t] == doctest::Approx(p.sigma_y2));
    CHECK(m.psi[t] == doctest::Approx(0.0));
  }
}

TEST_CASE("conditional-variance identity holds exactly") {
  RngStream rng(31, 0);
  for (int k = 0; k < 200; ++k) {
    const JointParams p = random_params(rng);
    const MarginalParams m = marginalize(p);
    for (int t = 0; t < 2; ++t) {
      const double other_sd = t == 0 ? p.sigma_s1 : p.sigma_s0;
      const double b_other = p.beta(t)(1 - t);
      const double want =
          p.sigma_y2 + (1.0 - p.rho * p.rho) * other_sd * other_sd * b_other * b_other;
      CHECK(m.var_y_given_s(t) == doctest::Approx(want).epsilon(1e-11));
    }
  }
}

TEST_CASE("solve_joint recovers the generating parameters") {
  const JointParams truth = lrc_truth();
  const MarginalParams m = marginalize(truth);
  const JointParams back = solve_joint(m, truth.rho, truth.sigma_y2, 1, 1);
  CHECK(back.beta0(1) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(back.beta1(0) == doctest::Approx(11.5).epsilon(1e-9));
  CHECK(back.beta1(1) == doctest::Approx(96.0).epsilon(1e-9));
  CHECK(back.lambda1 == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(back.beta0(0) == doctest::Approx(11.5).epsilon(1e-9));
}

TEST_CASE("solve_joint at the feasibility boundary zeroes one coefficient") {
  const MarginalParams m = marginalize(lrc_truth());
  const double vmin = std::min(m.var_y_given_s(0), m.var_y_given_s(1));
  const JointParams back = solve_joint(m, 0.75, vmin, 1, 1);
  const double b01 = back.beta0(1);
  const double b10 = back.beta1(0);
  CHECK(std::min(std::abs(b01), std::abs(b10)) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_THROWS_AS(solve_joint(m, 0.75, vmin * 1.01, 1, 1), NumericalError);
  CHECK_THROWS_AS(solve_joint(m, 0.75, -1.0, 1, 1), NumericalError);
}

TEST_CASE("marginalize after solve_joint is the identity (200 random tuples)") {
  RngStream rng(32, 0);
  int tested = 0;
  while (tested < 200) {
    const JointParams gen = random_params(rng);
    const MarginalParams m = marginalize(gen);
    const double vmin = std::min(m.var_y_given_s(0), m.var_y_given_s(1));
    const double s2 = vmin * rng.uniform();
    const int sign01 = rng.uniform() < 0.5 ? 1 : -1;
    const int sign10 = rng.uniform() < 0.5 ? 1 : -1;
    const double rho = 1.8 * rng.uniform() - 0.9;
    const JointParams solved = solve_joint(m, rho, s2, sign01, sign10);
    const MarginalParams m2 = marginalize(solved);
    for (int t = 0; t < 2; ++t) {
      REQUIRE(m2.zeta[t] == doctest::Approx(m.zeta[t]).epsilon(1e-9));
      REQUIRE(m2.psi[t] == doctest::Approx(m.psi[t]).epsilon(1e-9));
      REQUIRE(m2.mu_y_prime[t] == doctest::Approx(m.mu_y_prime[t]).epsilon(1e-9));
      REQUIRE(m2.phi[t] == doctest::Approx(m.phi[t]).epsilon(1e-9));
      REQUIRE(m2.sigma_s[t] == doctest::Approx(m.sigma_s[t]).epsilon(1e-9));
    }
    ++tested;
  }
}

TEST_CASE("partial identification: distinct joints share one observed likelihood") {
  RngStream rng(33, 0);
  const JointParams gen = random_params(rng);
  const MarginalParams m = marginalize(gen);
  const Dataset data = simulate(gen, 50, nullptr, rng);

  const double vmin = std::min(m.var_y_given_s(0), m.var_y_given_s(1));
  const JointParams a = solve_joint(m, gen.rho, 0.2 * vmin, 1, 1);
  const JointParams b = solve_joint(m, gen.rho, 0.9 * vmin, -1, 1);
  const JointParams c = solve_joint(m, gen.rho, 0.5 * vmin, -1, -1);
  const double la = marginal_loglik(a, data);
  const double lb = marginal_loglik(b, data);
  const double lc = marginal_loglik(c, data);
  CHECK(la == doctest::Approx(lb).epsilon(1e-10));
  CHECK(la == doctest::Approx(lc).epsilon(1e-10));
}

TEST_CASE("pce_true: table values and the identical-arms null") {
  const JointParams p = lrc_truth();
  CHECK(pce_true(p, {0.89, 0.18}) == doctest::Approx(17.28).epsilon(1e-12));
  CHECK(pce_true(p, {0.89, 0.35}) == doctest::Approx(33.6).epsilon(1e-12));
  CHECK(pce_true(p, {0.89, 0.52}) == doctest::Approx(49.92).epsilon(1e-12));

  JointParams null = p;
  null.beta1 = null.beta0;
  null.lambda1 = null.lambda0;
  RngStream rng(34, 0);
  for (int i = 0; i < 20; ++i)
    CHECK(pce_true(null, {rng.normal(), rng.normal()}) == doctest::Approx(0.0));
}

TEST_CASE("pce_from_marginal agrees with pce_true through the solution map") {
  const JointParams truth = lrc_truth();
  const MarginalParams m = marginalize(truth);
  CHECK(pce_from_marginal(m, truth.rho, 0.0, 11.5, {0.89, 0.35}) ==
        doctest::Approx(33.6).epsilon(1e-10));
  // centering point gives the mean difference regardless of the coefficients
  CHECK(pce_from_marginal(m, truth.rho, -17.0, 40.0, {m.phi[0], m.phi[1]}) ==
        doctest::Approx(m.mu_y_prime[1] - m.mu_y_prime[0]).epsilon(1e-12));

  RngStream rng(35, 0);
  for (int k = 0; k < 50; ++k) {
    const JointParams gen = random_params(rng);
    const MarginalParams mg = marginalize(gen);
    const double vmin = std::min(mg.var_y_given_s(0), mg.var_y_given_s(1));
    const double s2 = vmin * rng.uniform();
    const int s01 = rng.uniform() < 0.5 ? 1 : -1;
    const int s10 = rng.uniform() < 0.5 ? 1 : -1;
    const JointParams solved = solve_joint(mg, gen.rho, s2, s01, s10);
    const PrincipalStratum u{gen.phi0 + rng.normal(), gen.phi1 + rng.normal()};
    CHECK(pce_from_marginal(mg, gen.rho, solved.beta0(1), solved.beta1(0), u) ==
          doctest::Approx(pce_true(solved, u)).epsilon(1e-9));
  }
}

TEST_CASE("simulate: moments of the generated data match the truth") {
  const JointParams truth = lrc_truth();
  RngStream rng(36, 0);
  const int n = 100000;
  const Dataset d = simulate(truth, n, nullptr, rng);
  REQUIRE(d.has_truth());

  CHECK(d.s1.mean() == doctest::Approx(0.70).epsilon(0.005));
  const double m0 = d.s0.mean(), m1 = d.s1.mean();
  double c01 = 0.0, v0 = 0.0, v1 = 0.0;
  for (int i = 0; i < n; ++i) {
    c01 += (d.s0(i) - m0) * (d.s1(i) - m1);
    v0 += (d.s0(i) - m0) * (d.s0(i) - m0);
    v1 += (d.s1(i) - m1) * (d.s1(i) - m1);
  }
  CHECK(c01 / std::sqrt(v0 * v1) == doctest::Approx(0.75).epsilon(0.015));
}

TEST_CASE("simulate: degenerate noise pins the outcome") {
  JointParams p;
  p.beta0.setZero();
  p.beta1.setZero();
  p.lambda0 = p.lambda1 = 3.25;
  p.sigma_y2 = 1e-30;
  p.phi0 = 0.1;
  p.phi1 = 0.2;
  p.sigma_s0 = p.sigma_s1 = 1.0;
  p.rho = 0.0;
  RngStream rng(37, 0);
  const Dataset d = simulate(p, 500, nullptr, rng);
  for (int i = 0; i < d.n(); ++i) CHECK(d.y(i) == doctest::Approx(3.25).epsilon(1e-9));
}

TEST_CASE("pce_true matches Monte Carlo potential-outcome differences in a bin") {
  const JointParams truth = lrc_truth();
  RngStream rng(38, 0);
  const int n = 100000;
  // The oracle generates both potential outcomes itself.
  const double l00 = truth.sigma_s0;
  const double l10 = truth.rho * truth.sigma_s1;
  const double l11 = truth.sigma_s1 * std::sqrt(1.0 - truth.rho * truth.rho);
  const double sy = std::sqrt(truth.sigma_y2);
  double acc_diff = 0.0, acc_pce = 0.0;
  int in_bin = 0;
  for (int i = 0; i < n; ++i) {
    const double z0 = rng.normal(), z1 = rng.normal();
    const double s0 = truth.phi0 + l00 * z0;
    const double s1 = truth.phi1 + l10 * z0 + l11 * z1;
    const double y0 = truth.beta0.dot(Eigen::Vector2d(s0, s1)) + truth.lambda0 + sy * rng.normal();
    const double y1 = truth.beta1.dot(Eigen::Vector2d(s0, s1)) + truth.lambda1 + sy * rng.normal();
    if (std::abs(s0 - 0.89) < 0.05 && std::abs(s1 - 0.70) < 0.05) {
      acc_diff += y1 - y0;
      acc_pce += pce_true(truth, {s0, s1});
      ++in_bin;
    }
  }
  REQUIRE(in_bin > 500);
  const double se = std::sqrt(2.0 * truth.sigma_y2 / in_bin);
  CHECK(std::abs(acc_diff / in_bin - acc_pce / in_bin) < 3.0 * se);
}

TEST_CASE("residualize: identity without covariates") {
  RngStream rng(39, 0);
  const Dataset d = simulate(lrc_truth(), 200, nullptr, rng);
  const ResidualizeResult r = residualize(d);
  CHECK(r.data.y == d.y);
  CHECK(r.data.s == d.s);
  CHECK(r.gamma0_hat.size() == 0);
}

TEST_CASE("residualize: null covariate effects leave moments unchanged") {
  JointParams p = lrc_truth();
  p.gamma = Eigen::VectorXd::Zero(2);
  p.alpha = Eigen::VectorXd::Zero(2);
  RngStream rng(40, 0);
  CovariateGen gen = [](RngStream& r) {
    Eigen::VectorXd x(2);
    x << r.normal(), r.normal();
    return x;
  };
  const Dataset d = simulate(p, 10000, &gen, rng);
  const ResidualizeResult r = residualize(d);
  CHECK(r.data.y.mean() == doctest::Approx(d.y.mean()).epsilon(0.02));
  const double vy_raw = (d.y.array() - d.y.mean()).square().mean();
  const double vy_res = (r.data.y.array() - r.data.y.mean()).square().mean();
  CHECK(vy_res == doctest::Approx(vy_raw).epsilon(0.02));
}

TEST_CASE("residualize: fitted residuals are orthogonal to covariates") {
  JointParams p = lrc_truth();
  p.gamma = Eigen::VectorXd(2);
  p.gamma << 4.0, -2.0;
  p.alpha = Eigen::VectorXd(2);
  p.alpha << 0.3, 0.15;
  RngStream rng(41, 0);
  CovariateGen gen = [](RngStream& r) {
    Eigen::VectorXd x(2);
    x << r.normal(), r.normal();
    return x;
  };
  const Dataset d = simulate(p, 10000, &gen, rng);
  const ResidualizeResult r = residualize(d);
  CHECK((r.alpha_hat - p.alpha).norm() < 0.05);
  for (int j = 0; j < 2; ++j) {
    const double ms = r.data.s.mean();
    const double mx = d.x.col(j).mean();
    double c = 0.0, vs = 0.0, vx = 0.0;
    for (int i = 0; i < d.n(); ++i) {
      c += (r.data.s(i) - ms) * (d.x(i, j) - mx);
      vs += (r.data.s(i) - ms) * (r.data.s(i) - ms);
      vx += (d.x(i, j) - mx) * (d.x(i, j) - mx);
    }
    CHECK(std::abs(c / std::sqrt(vs * vx)) < 0.03);
  }
}

TEST_CASE("residualize: collinear covariates are named") {
  JointParams p = lrc_truth();
  p.gamma = Eigen::VectorXd::Zero(2);
  p.alpha = Eigen::VectorXd::Zero(2);
  RngStream rng(42, 0);
  CovariateGen gen = [](RngStream& r) {
    Eigen::VectorXd x(2);
    x(0) = r.normal();
    x(1) = 2.0 * x(0);  // exact collinearity
    return x;
  };
  const Dataset d = simulate(p, 500, &gen, rng);
  CHECK(throws_with_substr<DataError>([&] { residualize(d); }, "collinear"));
}

TEST_CASE("dataset csv round trip") {
  JointParams p = lrc_truth();
  p.gamma = Eigen::VectorXd(1);
  p.gamma << 1.5;
  p.alpha = Eigen::VectorXd(1);
  p.alpha << -0.2;
  RngStream rng(43, 0);
  CovariateGen gen = [](RngStream& r) {
    Eigen::VectorXd x(1);
    x << r.normal();
    return x;
  };
  const Dataset d = simulate(p, 64, &gen, rng);
  const std::string path =
      (std::filesystem::temp_directory_path() / "prinstrat_test_roundtrip.csv").string();
  write_dataset_csv(d, path);
  const Dataset back = read_dataset_csv(path);
  REQUIRE(back.n() == d.n());
  REQUIRE(back.p() == d.p());
  REQUIRE(back.has_truth());
  for (int i = 0; i < d.n(); ++i) {
    REQUIRE(back.y(i) == d.y(i));
    REQUIRE(back.t(i) == d.t(i));
    REQUIRE(back.s(i) == d.s(i));
    REQUIRE(back.x(i, 0) == d.x(i, 0));
    REQUIRE(back.s0(i) == d.s0(i));
    REQUIRE(back.s1(i) == d.s1(i));
  }
  std::remove(path.c_str());
}

TEST_CASE("dataset csv schema errors name the offending column") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "prinstrat_bad_schema.csv").string();
  {
    std::ofstream f(path);
    f << "y,t,s,weight\n1.0,0,0.5,2.0\n";
  }
  CHECK(throws_with_substr<DataError>([&] { read_dataset_csv(path); }, "weight"));
  std::remove(path.c_str());
}
