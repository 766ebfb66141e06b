#include "prinstrat/asymvar.hpp"

#include <cmath>

namespace prinstrat {

void AsymVarInputs::validate() const {
  if (!(t_bar > 0.0) || !(t_bar < 1.0))
    throw std::invalid_argument("AsymVarInputs: t_bar must be in (0,1)");
  if (!(sigma_s0 > 0.0) || !(sigma_s1 > 0.0))
    throw std::invalid_argument("AsymVarInputs: strata sds must be > 0");
  if (!(sigma_y2 > 0.0)) throw std::invalid_argument("AsymVarInputs: sigma_y2 must be > 0");
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("AsymVarInputs: |rho| must be < 1");
  if (n < 1) throw std::invalid_argument("AsymVarInputs: n must be >= 1");
}

std::optional<double> posterior_var_approx(const AsymVarInputs& in) {
  in.validate();
  if (in.beta10 == 0.0 && in.beta01 == 0.0) return std::nullopt;
  const double omr = 1.0 - in.rho * in.rho;
  const double a1 = in.beta10 * in.beta10 * in.sigma_s0 * in.sigma_s0;
  const double a0 = in.beta01 * in.beta01 * in.sigma_s1 * in.sigma_s1;
  const double v1 = in.sigma_y2 + omr * a1;  // zeta1 - psi1^2
  const double v0 = in.sigma_y2 + omr * a0;  // zeta0 - psi0^2
  const double r2 = in.rho * in.rho;
  const double info = in.t_bar * a1 * (2.0 * r2 * a1 / (v1 * v1) + 1.0 / v1) +
                      (1.0 - in.t_bar) * a0 * (2.0 * r2 * a0 / (v0 * v0) + 1.0 / v0);
  return 1.0 / (static_cast<double>(in.n) * info);
}

double rate_fit(std::span<const double> n_values, std::span<const double> var_values) {
  if (n_values.size() != var_values.size())
    throw std::invalid_argument("rate_fit: length mismatch");
  if (n_values.size() < 3)
    throw std::invalid_argument("rate_fit: need at least 3 points");
  for (std::size_t i = 0; i < n_values.size(); ++i) {
    if (!(n_values[i] > 0.0)) throw std::invalid_argument("rate_fit: n must be positive");
    if (i > 0 && !(n_values[i] > n_values[i - 1]))
      throw std::invalid_argument("rate_fit: n must be strictly increasing");
    if (!(var_values[i] > 0.0))
      throw std::invalid_argument("rate_fit: variances must be positive");
  }
  const std::size_t k = n_values.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += std::log(n_values[i]);
    my += std::log(var_values[i]);
  }
  mx /= static_cast<double>(k);
  my /= static_cast<double>(k);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double dx = std::log(n_values[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(var_values[i]) - my);
  }
  return sxy / sxx;
}

}  // namespace prinstrat
