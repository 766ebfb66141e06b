#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>

#include "prinstrat/common.hpp"
#include "prinstrat/rng.hpp"

namespace prinstrat {

/// Draw from N(mean, cov). Throws NumericalError when cov is not positive
/// definite (a degenerate conditional in the samplers).
Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                           RngStream& rng);

/// Draw from N(mean, var) restricted to [lo, hi]. Far one-sided tails use an
/// inverse-CDF in log space; everything else uses exact rejection samplers.
/// Throws NumericalError when the interval mass is below 1e-300.
double sample_trunc_normal(double mean, double var, double lo, double hi, RngStream& rng);

/// Gamma(shape, rate), mean shape/rate.
double sample_gamma(double shape, double rate, RngStream& rng);

/// Inverse gamma (shape, rate) restricted to [lo, inf); mean rate/(shape-1)
/// when untruncated. Throws NumericalError on upper-tail mass underflow.
double sample_trunc_invgamma(double shape, double rate, double lo, RngStream& rng);

Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& alphas, RngStream& rng);

/// Index draw proportional to exp(logits); -inf entries carry zero mass.
/// Throws NumericalError if every entry is -inf.
std::size_t sample_categorical_logits(std::span<const double> logits, RngStream& rng);

/// Fold x into [bounds.lo, bounds.hi] by reflection at the finite endpoints.
double reflect_into(double x, Interval bounds);

struct MhResult {
  double value = 0.0;
  bool accepted = false;
};

/// One random-walk Metropolis step with proposals reflected at the bounds.
/// A NaN log-density at the proposal counts as -inf (auto-reject); NaN never
/// enters the chain.
template <class F>
MhResult mh_step(double current, F&& log_density, double proposal_sd, Interval bounds,
                 RngStream& rng) {
  if (!(proposal_sd > 0.0))
    throw std::invalid_argument("mh_step: proposal_sd must be positive");
  const double ld_cur = log_density(current);
  if (!std::isfinite(ld_cur))
    throw NumericalError("mh_step: log-density not finite at current value");
  const double prop = reflect_into(current + proposal_sd * rng.normal(), bounds);
  double ld_prop = log_density(prop);
  if (std::isnan(ld_prop)) ld_prop = -kInf;
  if (std::log(rng.uniform_pos()) < ld_prop - ld_cur) return {prop, true};
  return {current, false};
}

/// Exact draw from a 1-d density known up to a constant: evaluate the
/// log-density on a uniform grid over [grid.lo, grid.hi] (endpoints
/// included), normalize, and sample one grid point.
template <class F>
double grid_sample(F&& log_density, Interval grid, int n_points, RngStream& rng) {
  if (n_points < 2) throw std::invalid_argument("grid_sample: n_points must be >= 2");
  std::vector<double> logd(static_cast<std::size_t>(n_points));
  const double step = grid.width() / (n_points - 1);
  for (int i = 0; i < n_points; ++i) {
    double ld = log_density(grid.lo + step * i);
    logd[static_cast<std::size_t>(i)] = std::isnan(ld) ? -kInf : ld;
  }
  const std::size_t idx = sample_categorical_logits(logd, rng);
  return grid.lo + step * static_cast<double>(idx);
}

namespace special {
/// log P(Z > z) for standard normal Z; accurate into the far tail.
double norm_logsf(double z);
/// Inverse of norm_logsf for tail arguments (log_sf < log(0.5)).
double norm_isf_from_logsf(double log_sf);
/// log(1 - exp(x)) for x < 0.
double log1mexp(double x);
}  // namespace special

}  // namespace prinstrat
