#pragma once

#include <array>
#include <span>
#include <vector>

#include "prinstrat/gibbs.hpp"
#include "prinstrat/model.hpp"

namespace prinstrat {

/// Binary-intermediate model: the outcome is the same linear Gaussian form,
/// the strata U = (S(0), S(1)) follow a four-cell multinomial with
/// probabilities p_{s0 s1}. No covariates.
struct BinaryParams {
  Eigen::Vector2d beta0{0.0, 0.0};
  Eigen::Vector2d beta1{0.0, 0.0};
  double lambda0 = 0.0;
  double lambda1 = 0.0;
  double sigma_y2 = 1.0;
  double p00 = 0.25, p01 = 0.25, p10 = 0.25, p11 = 0.25;

  double p1dot() const { return p10 + p11; }  // P(S(0)=1)
  double pdot1() const { return p01 + p11; }  // P(S(1)=1)
  void validate() const;
};

Dataset simulate_binary(const BinaryParams& params, int n, RngStream& rng);

/// Joint density of (Y=y, S=s) given T=t: a two-component normal mixture,
/// the components indexed by the unobserved other-arm intermediate.
double marginal_pdf_binary(double y, int s, int t, const BinaryParams& params);

/// Posterior probability that the missing intermediate equals 1 given
/// (y, s, t) and the parameters.
double binary_impute_prob1(double y, int s, int t, const BinaryParams& params);

/// First and second marginal moments of (Y, S) per arm, in the same layout
/// as the Gaussian model's marginal parameters, plus the strata correlation.
struct BinaryMoments {
  std::array<double, 2> mu_y{0.0, 0.0};
  std::array<double, 2> phi{0.0, 0.0};
  std::array<double, 2> zeta{1.0, 1.0};
  std::array<double, 2> psi{0.0, 0.0};
  std::array<double, 2> sigma_s{0.5, 0.5};
  double cor = 0.0;
};
BinaryMoments binary_marginal_moments(const BinaryParams& params);

/// Flip the sign of either violation coefficient while re-solving the
/// same-arm coefficient and intercept so every marginal mean/variance/
/// covariance is unchanged. The two parameter sets differ only through the
/// shape of the mixture.
BinaryParams binary_flip_signs(const BinaryParams& params, bool flip01, bool flip10);

/// max over the grid and s in {0,1} of |log f0(y,s|a) - log f0(y,s|b)| for
/// the control-arm marginal pdf. Near zero certifies observational
/// equivalence; large values certify the candidates are distinguishable.
double sign_separation_check(const BinaryParams& a, const BinaryParams& b,
                             std::span<const double> y_grid);

/// Gibbs sampler for the binary model. One iteration cycles: Bernoulli
/// imputation of the missing intermediates, conjugate outcome-coefficient
/// and outcome-variance draws, a Dirichlet update of the margins given p11,
/// and a grid draw of p11 from the observed-data marginal posterior over its
/// feasible interval. ConstraintSet::sign_positive truncates the violation
/// coefficients to be positive; ConstraintSet::rho_fixed fixes p11.
class BinaryGibbsSampler {
 public:
  BinaryGibbsSampler(const Dataset& data, const PriorSpec& prior,
                     const ConstraintSet& constraints, const ChainConfig& config);

  PosteriorDraws run(std::span<const PrincipalStratum> strata = {});

  void step();
  void impute_missing();
  void update_theta_y();
  void update_sigma_y2();
  void update_margins();
  void update_p11();

  BinaryParams& params() { return par_; }
  const BinaryParams& params() const { return par_; }
  Eigen::VectorXi& s_missing() { return smis_; }
  RngStream& rng() { return rng_; }

  /// Feasible p11 interval implied by the current margins.
  Interval p11_feasible() const;
  /// Log posterior (up to a constant) on the current p11 grid.
  std::vector<double> p11_grid_logpost(const Interval& grid) const;

 private:
  std::array<int, 4> cell_counts() const;

  Dataset data_;
  PriorSpec prior_;
  ConstraintSet cons_;
  ChainConfig cfg_;
  RngStream rng_;
  BinaryParams par_;
  Eigen::VectorXi smis_;
  int iteration_ = 0;
  std::array<std::vector<int>, 4> groups_;  // rows by t*2+s
  mutable std::array<std::vector<double>, 4> wgrp_;
};

PosteriorDraws gibbs_binary(const Dataset& data, const PriorSpec& prior,
                            const ConstraintSet& constraints, const ChainConfig& config,
                            std::span<const PrincipalStratum> strata = {});

}  // namespace prinstrat
