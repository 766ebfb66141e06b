#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "prinstrat/common.hpp"

namespace prinstrat {

/// Inputs for the closed-form large-n approximation of the posterior
/// variance of the strata correlation (outcome model treated as known).
struct AsymVarInputs {
  double t_bar = 0.5;  // treated fraction
  double beta10 = 0.0;
  double beta01 = 0.0;
  double sigma_s0 = 1.0;
  double sigma_s1 = 1.0;
  double sigma_y2 = 1.0;
  double rho = 0.0;
  std::int64_t n = 1;
  void validate() const;
};

/// n^-1 [ Tbar b10^2 s0^2 {2 rho^2 b10^2 s0^2 / V1^2 + 1/V1}
///      + (1-Tbar) b01^2 s1^2 {2 rho^2 b01^2 s1^2 / V0^2 + 1/V0} ]^-1
/// with V1 = sigma_y2 + (1-rho^2) b10^2 s0^2 and V0 the mirror image.
/// Returns nullopt when both violation coefficients are zero: the posterior
/// does not concentrate and the variance is not estimable.
std::optional<double> posterior_var_approx(const AsymVarInputs& in);

/// Least-squares slope of log(var) on log(n).
double rate_fit(std::span<const double> n_values, std::span<const double> var_values);

}  // namespace prinstrat
