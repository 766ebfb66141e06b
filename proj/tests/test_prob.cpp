#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "prinstrat/prob.hpp"

using namespace prinstrat;

TEST_CASE("rng determinism and stream independence") {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  // distinct streams decorrelate
  RngStream c(42, 8);
  a.reseed(42, 7);
  double corr = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i)
    corr += (a.uniform() - 0.5) * (c.uniform() - 0.5);
  corr /= n / 12.0;  // normalized by uniform variance
  CHECK(std::abs(corr) < 0.05);
}

TEST_CASE("sample_mvn determinism, moments and degenerate covariance") {
  Eigen::VectorXd mean(2);
  mean << 0.0, 0.0;
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.9, 0.9, 1.0;

  RngStream r1(5, 0), r2(5, 0);
  CHECK(sample_mvn(mean, cov, r1) == sample_mvn(mean, cov, r2));

  RngStream rng(123, 0);
  const int n = 100000;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd z = sample_mvn(mean, cov, rng);
    sxy += z(0) * z(1);
    sxx += z(0) * z(0);
    syy += z(1) * z(1);
  }
  CHECK(sxy / std::sqrt(sxx * syy) == doctest::Approx(0.9).epsilon(0.025));

  Eigen::MatrixXd singular(2, 2);
  singular << 0.0, 0.0, 0.0, 1.0;
  Eigen::VectorXd m2(2);
  m2 << 1.0, 2.0;
  CHECK_THROWS_AS(sample_mvn(m2, singular, rng), NumericalError);
}

TEST_CASE("truncated normal moments and support") {
  RngStream rng(7, 0);
  // half-normal mean
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += sample_trunc_normal(0.0, 1.0, 0.0, kInf, rng);
  CHECK(acc / n == doctest::Approx(0.7978845608028654).epsilon(0.013));

  // no truncation reduces to a plain normal
  acc = 0.0;
  for (int i = 0; i < n; ++i) acc += sample_trunc_normal(5.0, 1.0, -kInf, kInf, rng);
  CHECK(acc / n == doctest::Approx(5.0).epsilon(0.004));

  // tiny interval containing the mean
  for (int i = 0; i < 1000; ++i) {
    const double z = sample_trunc_normal(0.0, 1.0, -1e-6, 1e-6, rng);
    CHECK(z >= -1e-6);
    CHECK(z <= 1e-6);
  }
}

TEST_CASE("truncated normal support containment, one million draws") {
  RngStream rng(8, 0);
  struct Case {
    double mean, var, lo, hi;
  };
  const Case cases[] = {{0, 1, 0, kInf},  {2, 4, -1, 3},    {0, 1, 8, kInf},
                        {0, 1, 8, 9},     {-3, 0.25, -kInf, -3.5}, {0, 1, 35, kInf},
                        {1, 9, 0.5, 0.6}};
  for (const auto& c : cases) {
    for (int i = 0; i < 150000; ++i) {
      const double z = sample_trunc_normal(c.mean, c.var, c.lo, c.hi, rng);
      REQUIRE(z >= c.lo);
      REQUIRE(z <= c.hi);
      REQUIRE(std::isfinite(z));
    }
  }
}

TEST_CASE("truncated normal far-tail draws follow the tail distribution") {
  // For a >= 6 the sampler inverts the survival function; check the
  // conditional tail ratio P(Z > a + 0.1 | Z > a) against erfc-free math.
  RngStream rng(9, 0);
  const double a = 8.0;
  const int n = 200000;
  int beyond = 0;
  for (int i = 0; i < n; ++i)
    beyond += sample_trunc_normal(0.0, 1.0, a, kInf, rng) > a + 0.1 ? 1 : 0;
  const double want = std::exp(special::norm_logsf(a + 0.1) - special::norm_logsf(a));
  CHECK(static_cast<double>(beyond) / n == doctest::Approx(want).epsilon(0.03));
}

TEST_CASE("truncated normal interval mass underflow errors") {
  RngStream rng(10, 0);
  CHECK_THROWS_AS(sample_trunc_normal(0.0, 1.0, 40.0, 40.5, rng), NumericalError);
  // the whole upper tail beyond 40 sigma also carries mass below 1e-300
  CHECK_THROWS_AS(sample_trunc_normal(0.0, 1.0, 40.0, kInf, rng), NumericalError);
  CHECK_THROWS_AS(sample_trunc_normal(0.0, 1.0, 1.0, 1.0, rng), std::invalid_argument);
}

TEST_CASE("truncated inverse gamma") {
  RngStream rng(11, 0);
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += sample_trunc_invgamma(3.0, 2.0, 0.0, rng);
  CHECK(acc / n == doctest::Approx(1.0).epsilon(0.02));  // rate/(shape-1)

  for (int i = 0; i < 1000000; ++i)
    REQUIRE(sample_trunc_invgamma(3.0, 2.0, 10.0, rng) >= 10.0);

  // noninformative shape/rate: draws stay valid
  for (int i = 0; i < 10000; ++i) {
    const double v = sample_trunc_invgamma(1e-3, 1e-3, 0.0, rng);
    REQUIRE(!std::isnan(v));
    REQUIRE(v > 0.0);
  }

  // far truncation with tiny mass above lo errors out
  CHECK_THROWS_AS(sample_trunc_invgamma(200.0, 1.0, 1.0, rng), NumericalError);
}

TEST_CASE("dirichlet moments and simplex invariants") {
  RngStream rng(12, 0);
  const int n = 100000;
  Eigen::VectorXd alphas(3);

  alphas << 1.0, 1.0, 1.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd w = sample_dirichlet(alphas, rng);
    REQUIRE(w.minCoeff() > 0.0);
    REQUIRE(std::abs(w.sum() - 1.0) < 1e-12);
    mean += w;
  }
  mean /= n;
  for (int j = 0; j < 3; ++j) CHECK(mean(j) == doctest::Approx(1.0 / 3).epsilon(0.02));

  alphas << 100.0, 1.0, 1.0;
  double first = 0.0;
  for (int i = 0; i < n / 4; ++i) first += sample_dirichlet(alphas, rng)(0);
  CHECK(first / (n / 4) == doctest::Approx(100.0 / 102.0).epsilon(0.01));

  alphas << 2.0, 3.0, 5.0;
  mean.setZero();
  for (int i = 0; i < n; ++i) mean += sample_dirichlet(alphas, rng);
  mean /= n;
  CHECK(mean(0) == doctest::Approx(0.2).epsilon(0.02));
  CHECK(mean(1) == doctest::Approx(0.3).epsilon(0.02));
  CHECK(mean(2) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("mh_step: flat target accepts everything and reflects at bounds") {
  RngStream rng(13, 0);
  auto flat = [](double) { return 0.0; };
  double x = 0.94;
  int accepted = 0;
  const Interval bounds(0.0, 0.95);
  for (int i = 0; i < 10000; ++i) {
    const MhResult r = mh_step(x, flat, 0.3, bounds, rng);
    accepted += r.accepted;
    x = r.value;
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 0.95);
  }
  CHECK(accepted == 10000);
}

TEST_CASE("mh_step: long-run variance of a standard normal target") {
  RngStream rng(14, 0);
  auto logd = [](double v) { return -0.5 * v * v; };
  double x = 0.0, sum = 0.0, sumsq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    x = mh_step(x, logd, 2.4, Interval::whole(), rng).value;
    sum += x;
    sumsq += x * x;
  }
  const double var = sumsq / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("mh_step: NaN log-density auto-rejects") {
  RngStream rng(15, 0);
  auto logd = [](double v) {
    return v > 1.0 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  };
  double x = 0.0;
  for (int i = 0; i < 5000; ++i) {
    x = mh_step(x, logd, 1.0, Interval::whole(), rng).value;
    REQUIRE(!std::isnan(x));
    REQUIRE(x <= 1.0);
  }
}

TEST_CASE("mh_step empirical detailed balance on a 3-state step target") {
  // Step density over [0, 3): target mass (0.2, 0.3, 0.5) per unit cell.
  RngStream rng(16, 0);
  const double logp[3] = {std::log(0.2), std::log(0.3), std::log(0.5)};
  auto logd = [&](double v) {
    const int cell = std::clamp(static_cast<int>(v), 0, 2);
    return logp[cell];
  };
  double x = 1.5;
  long counts[3] = {0, 0, 0};
  const long n = 1000000;
  for (long i = 0; i < n; ++i) {
    x = mh_step(x, logd, 0.9, Interval(0.0, 3.0), rng).value;
    ++counts[std::clamp(static_cast<int>(x), 0, 2)];
  }
  CHECK(static_cast<double>(counts[0]) / n == doctest::Approx(0.2).epsilon(0.05));
  CHECK(static_cast<double>(counts[1]) / n == doctest::Approx(0.3).epsilon(0.034));
  CHECK(static_cast<double>(counts[2]) / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("grid_sample: degenerate, uniform and gaussian targets") {
  RngStream rng(17, 0);

  // point-mass-like target returns the spiked grid point
  auto spike = [](double v) { return std::abs(v - 0.25) < 1e-9 ? 1e6 : 0.0; };
  CHECK(grid_sample(spike, Interval(0.0, 1.0), 5, rng) == doctest::Approx(0.25));

  // uniform target: bin occupancy within multinomial 3-sigma bands
  auto flat = [](double) { return 1.0; };
  const int npts = 512, draws = 100000;
  std::vector<int> counts(npts, 0);
  for (int i = 0; i < draws; ++i) {
    const double v = grid_sample(flat, Interval(0.0, 1.0), npts, rng);
    const int idx = static_cast<int>(std::lround(v * (npts - 1)));
    ++counts[static_cast<std::size_t>(idx)];
  }
  const double expect = static_cast<double>(draws) / npts;
  const double sigma = std::sqrt(expect * (1.0 - 1.0 / npts));
  int outliers = 0;
  for (int c : counts)
    if (std::abs(c - expect) > 3.0 * sigma) ++outliers;
  CHECK(outliers <= 5);  // ~0.27% of 512 expected beyond 3 sigma

  // sharp gaussian: sample mean near the mode
  auto gauss = [](double v) { return -50.0 * (v - 0.4) * (v - 0.4); };
  double acc = 0.0;
  const int m = 100000;
  for (int i = 0; i < m; ++i) acc += grid_sample(gauss, Interval(0.0, 1.0), 512, rng);
  CHECK(acc / m == doctest::Approx(0.4).epsilon(0.025));

  // all -inf errors
  auto none = [](double) { return -kInf; };
  CHECK_THROWS_AS(grid_sample(none, Interval(0.0, 1.0), 16, rng), NumericalError);
}

TEST_CASE("determinism of every sampler under a fixed stream") {
  for (int rep = 0; rep < 2; ++rep) {
    RngStream rng(99, 4);
    Eigen::VectorXd alphas(3);
    alphas << 2.0, 3.0, 5.0;
    static double first[5];
    double got[5];
    got[0] = sample_trunc_normal(0.0, 2.0, -1.0, kInf, rng);
    got[1] = sample_trunc_invgamma(3.0, 2.0, 0.5, rng);
    got[2] = sample_dirichlet(alphas, rng)(1);
    got[3] = sample_gamma(0.5, 2.0, rng);
    got[4] = grid_sample([](double v) { return -v * v; }, Interval(-2.0, 2.0), 101, rng);
    if (rep == 0)
      std::copy(got, got + 5, first);
    else
      for (int i = 0; i < 5; ++i) REQUIRE(got[i] == first[i]);
  }
}
