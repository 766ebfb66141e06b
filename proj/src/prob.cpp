#include "prinstrat/prob.hpp"

#include <algorithm>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

namespace prinstrat {

namespace special {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
constexpr double kSqrt2 = 1.4142135623730950488;
}  // namespace

double log1mexp(double x) {
  // x < 0; the two branches keep precision on either side of -log 2.
  if (x > -0.6931471805599453) return std::log(-std::expm1(x));
  return std::log1p(-std::exp(x));
}

double norm_logsf(double z) {
  if (std::isnan(z)) return std::numeric_limits<double>::quiet_NaN();
  if (z < 0.0) return log1mexp(norm_logsf(-z));
  if (z <= 34.0) return std::log(0.5 * std::erfc(z / kSqrt2));
  // Asymptotic tail: sf(z) = phi(z)/z * (1 - z^-2 + 3 z^-4 - 15 z^-6 + 105 z^-8 ...)
  const double zi2 = 1.0 / (z * z);
  const double series = 1.0 + zi2 * (-1.0 + zi2 * (3.0 + zi2 * (-15.0 + zi2 * 105.0)));
  return -0.5 * z * z - std::log(z) - 0.5 * kLog2Pi + std::log(series);
}

double norm_isf_from_logsf(double log_sf) {
  // Solve norm_logsf(x) = log_sf for x, for tail targets (log_sf < log 0.5).
  const double t = -log_sf;
  double x = std::sqrt(std::max(2.0 * t, 1e-12));
  for (int it = 0; it < 100; ++it) {
    const double f = norm_logsf(x) - log_sf;
    // d/dx log sf = -phi(x)/sf(x)
    const double dlog = -std::exp(-0.5 * x * x - 0.5 * kLog2Pi - norm_logsf(x));
    const double step = f / dlog;
    x -= step;
    if (std::abs(step) < 1e-14 * (1.0 + std::abs(x))) break;
  }
  return x;
}

}  // namespace special

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                           RngStream& rng) {
  const Eigen::Index d = mean.size();
  if (cov.rows() != d || cov.cols() != d)
    throw std::invalid_argument("sample_mvn: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  bool ok = llt.info() == Eigen::Success;
  Eigen::MatrixXd L;
  if (ok) {
    L = llt.matrixL();
    for (Eigen::Index i = 0; i < d; ++i)
      if (!(L(i, i) > 0.0) || !std::isfinite(L(i, i))) ok = false;
  }
  if (!ok)
    throw NumericalError("sample_mvn: covariance not positive definite (Cholesky failed)");
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = rng.normal();
  return mean + L * z;
}

namespace {

constexpr double kLogMassFloor = -690.77552789821368;  // log(1e-300)
constexpr int kRejectionCap = 200000;

// Standardized truncated-normal draw on [a, b] with b > 0.
double trunc_std_upper_positive(double a, double b, RngStream& rng) {
  using special::norm_logsf;
  if (a <= 0.0) {
    // Interval straddles the mode (or starts left of it).
    const double cdf_b = std::isinf(b) ? 1.0 : 1.0 - std::exp(norm_logsf(b));
    const double cdf_a = std::isinf(a) ? 0.0 : std::exp(norm_logsf(-a));
    const double mass = cdf_b - cdf_a;
    if (mass >= 0.0625) {
      for (int k = 0; k < kRejectionCap; ++k) {
        const double z = rng.normal();
        if (z >= a && z <= b) return z;
      }
      throw NumericalError("sample_trunc_normal: rejection cap exceeded");
    }
    // Narrow slice around 0: uniform proposal bounded by the density at 0.
    for (int k = 0; k < kRejectionCap; ++k) {
      const double z = a + (b - a) * rng.uniform();
      if (std::log(rng.uniform_pos()) < -0.5 * z * z) return z;
    }
    throw NumericalError("sample_trunc_normal: rejection cap exceeded");
  }

  // a > 0: pure tail. Check the interval mass first.
  const double lsf_a = norm_logsf(a);
  const double lsf_b = std::isinf(b) ? -kInf : norm_logsf(b);
  const double log_mass =
      std::isinf(b) ? lsf_a : lsf_a + special::log1mexp(lsf_b - lsf_a);
  if (!(log_mass >= kLogMassFloor))
    throw NumericalError("sample_trunc_normal: interval mass below 1e-300");

  if (a > 6.0) {
    // Far tail: invert the survival function in log space; one uniform,
    // no rejection.
    const double u = rng.uniform_pos();
    const double r = std::isinf(b) ? 0.0 : std::exp(lsf_b - lsf_a);
    const double target = lsf_a + std::log1p(-u * (1.0 - r));
    return special::norm_isf_from_logsf(target);
  }

  const double r = std::isinf(b) ? 0.0 : std::exp(lsf_b - lsf_a);
  if (r <= 0.5) {
    // Exponential proposal tilted at the optimal rate for the lower tail.
    const double lam = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (int k = 0; k < kRejectionCap; ++k) {
      const double z = a + rng.exponential() / lam;
      if (z > b) continue;
      const double dz = z - lam;
      if (std::log(rng.uniform_pos()) < -0.5 * dz * dz) return z;
    }
    throw NumericalError("sample_trunc_normal: rejection cap exceeded");
  }
  // Thin slice [a, b] well inside the tail: uniform proposal, density bound
  // at the left endpoint.
  for (int k = 0; k < kRejectionCap; ++k) {
    const double z = a + (b - a) * rng.uniform();
    if (std::log(rng.uniform_pos()) < 0.5 * (a * a - z * z)) return z;
  }
  throw NumericalError("sample_trunc_normal: rejection cap exceeded");
}

}  // namespace

double sample_trunc_normal(double mean, double var, double lo, double hi, RngStream& rng) {
  if (!(var > 0.0) || !std::isfinite(var))
    throw std::invalid_argument("sample_trunc_normal: var must be positive finite");
  if (!(lo < hi)) throw std::invalid_argument("sample_trunc_normal: require lo < hi");
  const double sd = std::sqrt(var);
  const double a = (lo - mean) / sd;
  const double b = (hi - mean) / sd;
  double z;
  if (std::isinf(a) && std::isinf(b)) {
    z = rng.normal();
  } else if (b > 0.0) {
    z = trunc_std_upper_positive(a, b, rng);
  } else {
    z = -trunc_std_upper_positive(-b, -a, rng);
  }
  return std::clamp(mean + sd * z, lo, hi);
}

double sample_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw std::invalid_argument("sample_gamma: shape and rate must be positive");
  if (shape < 1.0) {
    // Boost the shape by one, then scale back; done in log space so tiny
    // shapes stay finite.
    const double g = sample_gamma(shape + 1.0, 1.0, rng);
    const double lg = std::log(g) + std::log(rng.uniform_pos()) / shape;
    return std::exp(lg) / rate;
  }
  // Marsaglia-Tsang squeeze.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = rng.normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = rng.uniform_pos();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v / rate;
  }
}

double sample_trunc_invgamma(double shape, double rate, double lo, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw std::invalid_argument("sample_trunc_invgamma: shape and rate must be positive");
  if (!(lo >= 0.0) || !std::isfinite(lo))
    throw std::invalid_argument("sample_trunc_invgamma: lo must be finite and >= 0");
  constexpr double kHuge = std::numeric_limits<double>::max();
  if (lo == 0.0) {
    const double g = sample_gamma(shape, rate, rng);
    return 1.0 / std::max(g, 1.0 / kHuge);
  }
  // X >= lo iff 1/X <= 1/lo; draw the gamma by inverse CDF on (0, 1/lo].
  const double p_cap = boost::math::gamma_p(shape, rate / lo);
  if (!(p_cap >= 1e-300))
    throw NumericalError("sample_trunc_invgamma: upper-tail mass underflow at lo");
  const double q = rng.uniform_pos() * p_cap;
  const double x = boost::math::gamma_p_inv(shape, q);
  if (!(x > 0.0)) return kHuge;
  return std::max(rate / x, lo);
}

Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& alphas, RngStream& rng) {
  const Eigen::Index k = alphas.size();
  if (k < 1) throw std::invalid_argument("sample_dirichlet: need at least one component");
  for (Eigen::Index i = 0; i < k; ++i)
    if (!(alphas(i) > 0.0))
      throw std::invalid_argument("sample_dirichlet: all concentrations must be positive");
  Eigen::VectorXd g(k);
  for (Eigen::Index i = 0; i < k; ++i)
    g(i) = std::max(sample_gamma(alphas(i), 1.0, rng), std::numeric_limits<double>::min());
  return g / g.sum();
}

std::size_t sample_categorical_logits(std::span<const double> logits, RngStream& rng) {
  if (logits.empty())
    throw std::invalid_argument("sample_categorical_logits: empty input");
  double mx = -kInf;
  for (double l : logits) mx = std::max(mx, l);
  if (!std::isfinite(mx))
    throw NumericalError("sample_categorical_logits: all log-densities are -inf");
  double total = 0.0;
  for (double l : logits) total += std::exp(l - mx);
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    acc += std::exp(logits[i] - mx);
    if (u < acc) return i;
  }
  return logits.size() - 1;
}

double reflect_into(double x, Interval bounds) {
  const bool lo_fin = std::isfinite(bounds.lo);
  const bool hi_fin = std::isfinite(bounds.hi);
  if (!lo_fin && !hi_fin) return x;
  if (bounds.contains(x)) return x;
  if (lo_fin && hi_fin) {
    const double w = bounds.width();
    if (w <= 0.0) return bounds.lo;
    double t = std::fmod(x - bounds.lo, 2.0 * w);
    if (t < 0.0) t += 2.0 * w;
    return bounds.lo + (t <= w ? t : 2.0 * w - t);
  }
  if (lo_fin && x < bounds.lo) return 2.0 * bounds.lo - x;
  if (hi_fin && x > bounds.hi) return 2.0 * bounds.hi - x;
  return x;
}

}  // namespace prinstrat
