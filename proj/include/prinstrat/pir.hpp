#pragma once

#include <array>
#include <vector>

#include "prinstrat/common.hpp"
#include "prinstrat/model.hpp"

#include "json.hpp"

namespace prinstrat {

/// Identifiable second-moment summaries of the observed (Y, S) | T
/// distribution, per arm: Var(Y|S), Var(S), Var(Y), Cor(Y,S), and the
/// estimated sign of the same-arm slope.
struct ObservedMoments {
  std::array<double, 2> var_y_given_s{1.0, 1.0};
  std::array<double, 2> var_s{1.0, 1.0};
  std::array<double, 2> var_y{1.0, 1.0};
  std::array<double, 2> cor_ys{0.0, 0.0};
  std::array<int, 2> sign_beta_tt{1, 1};
  // t statistic of the per-arm Y-on-S slope; infinite in population mode.
  // Surfaced so callers can audit the estimated signs.
  std::array<double, 2> slope_t_stat{kInf, kInf};
  void validate() const;
};

/// Sample moments from residualized (covariate-free) data.
ObservedMoments moments_from_data(const Dataset& data);
/// Population moments implied by marginal parameters.
ObservedMoments moments_from_marginal(const MarginalParams& marg);

/// A coefficient region: one interval, or a union of two disjoint ordered
/// intervals, plus the right-hand side of the quadratic coupling constraint.
struct PirRegion {
  std::vector<Interval> intervals;
  double constraint_rhs = 0.0;
  bool contains(double v) const;
  double min_abs() const;
  double max_abs() const;
};

enum class Assumption { none, same_sign, dominant };

struct PirPair {
  PirRegion beta01;
  PirRegion beta10;
};

PirPair pir_unconstrained(const ObservedMoments& m, double rho);
PirPair pir_same_sign(const ObservedMoments& m, double rho);
PirPair pir_dominant(const ObservedMoments& m, double rho);

/// Feasible residual-variance interval: [0, min_t Var(Y|S,T=t)] with no
/// assumption; the dominant-observed-effect assumption raises the lower end
/// to max_t Var(Y|S,T=t)^2 / Var(Y|T=t). Throws NumericalError when the
/// dominant interval is empty (assumption refuted by the moments).
Interval sigma_y2_bounds(const ObservedMoments& m, Assumption assumption);

/// Var(S0) b10^2 - Var(S1) b01^2 - (V1 - V0)/(1 - rho^2); zero exactly on
/// the identified manifold.
double eq4_residual(double beta01, double beta10, const ObservedMoments& m, double rho);

/// Extremes of the principal effect at stratum u over the feasible set
/// (sigma_y2 swept on a dense grid, admissible sign pairs filtered by the
/// assumption).
Interval pce_band(const ObservedMoments& m, const MarginalParams& marg, double rho,
                  PrincipalStratum u, Assumption assumption, int grid_points = 10000);

const char* assumption_name(Assumption a);
Assumption assumption_from_name(const std::string& name);

/// {assumption, rho, beta01:{intervals}, beta10:{intervals},
///  sigma_y2_bounds, constraint_rhs}
nlohmann::ordered_json region_report(const ObservedMoments& m, double rho, Assumption a);

}  // namespace prinstrat
