#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <optional>

#include "prinstrat/common.hpp"
#include "prinstrat/rng.hpp"

namespace prinstrat {

/// Generative parameter set of the joint outcome/strata model.
///
/// Outcome:  Y | U, X, T=t  ~  N(beta_t' U + lambda_t + gamma' X, sigma_y2)
/// Strata:   U = (S(0), S(1)) | X ~ N((phi0 + alpha' X, phi1 + alpha' X), Sigma_s)
/// with Sigma_s built from (sigma_s0, sigma_s1, rho). beta_t = (beta_t0, beta_t1);
/// beta_tt multiplies the same-arm intermediate, beta_{t,1-t} the other-arm one.
struct JointParams {
  Eigen::Vector2d beta0{0.0, 0.0};
  Eigen::Vector2d beta1{0.0, 0.0};
  double lambda0 = 0.0;
  double lambda1 = 0.0;
  Eigen::VectorXd gamma;  // outcome covariate coefficients (may be empty)
  Eigen::VectorXd alpha;  // intermediate covariate coefficients (may be empty)
  double sigma_y2 = 1.0;
  double phi0 = 0.0;
  double phi1 = 0.0;
  double sigma_s0 = 1.0;
  double sigma_s1 = 1.0;
  double rho = 0.0;

  Eigen::Matrix2d strata_cov() const {
    Eigen::Matrix2d s;
    s << sigma_s0 * sigma_s0, rho * sigma_s0 * sigma_s1, rho * sigma_s0 * sigma_s1,
        sigma_s1 * sigma_s1;
    return s;
  }
  const Eigen::Vector2d& beta(int t) const { return t == 0 ? beta0 : beta1; }
  double lambda(int t) const { return t == 0 ? lambda0 : lambda1; }
  double sigma_s(int t) const { return t == 0 ? sigma_s0 : sigma_s1; }
  void validate() const;
};

/// The ten identifiable parameters of the observed (Y, S) | T distribution,
/// indexed by arm t: covariate-free outcome mean mu', strata mean phi,
/// marginal outcome variance zeta, scaled Y-S covariance psi (so that
/// Cov(Y,S|T=t) = psi_t * sigma_st), and strata sd sigma_s.
struct MarginalParams {
  std::array<double, 2> mu_y_prime{0.0, 0.0};
  std::array<double, 2> phi{0.0, 0.0};
  std::array<double, 2> zeta{1.0, 1.0};
  std::array<double, 2> psi{0.0, 0.0};
  std::array<double, 2> sigma_s{1.0, 1.0};
  void validate() const;
  /// Var(Y|S,T=t) = zeta_t - psi_t^2.
  double var_y_given_s(int t) const { return zeta[t] - psi[t] * psi[t]; }
};

struct PrincipalStratum {
  double s0 = 0.0;
  double s1 = 0.0;
};

/// Observed rows (y, t, s, x...) plus optional latent truth columns
/// (s0, s1) kept by the simulator.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::VectorXi t;
  Eigen::VectorXd s;
  Eigen::MatrixXd x;   // n x p, p may be 0
  Eigen::VectorXd s0;  // empty or length n
  Eigen::VectorXd s1;

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(x.cols()); }
  bool has_truth() const { return s0.size() == y.size() && s1.size() == y.size(); }
  int arm_count(int arm) const;
  void validate(bool for_fitting = false) const;
};

/// Per-row covariate generator used by simulate(); null means no covariates.
using CovariateGen = std::function<Eigen::VectorXd(RngStream&)>;

/// Generate n rows from the joint model with randomized treatment
/// (Bernoulli(1/2)). Truth columns are filled.
Dataset simulate(const JointParams& params, int n, const CovariateGen* x_gen, RngStream& rng);

/// Map joint parameters to the identifiable marginal parameters. With at_x,
/// the means are evaluated at that covariate value; variances are unchanged.
MarginalParams marginalize(const JointParams& params,
                           const Eigen::VectorXd* at_x = nullptr);

/// Invert marginalize() given the non-identified (sigma_y2, signs):
///   beta_{t,1-t}^2 = (zeta_t - psi_t^2 - sigma_y2) / ((1-rho^2) sigma_{s,1-t}^2)
///   beta_tt = (psi_t - rho sigma_{s,1-t} beta_{t,1-t}) / sigma_st
///   lambda_t = mu'_yt - beta_t' (phi0, phi1)
/// Throws NumericalError when sigma_y2 is outside [0, min_t Var(Y|S,T=t)].
JointParams solve_joint(const MarginalParams& marg, double rho, double sigma_y2,
                        int sign01, int sign10);

/// E{Y(1)-Y(0) | U=u} under the joint model:
/// (beta10-beta00) s0 + (beta11-beta01) s1 + lambda1 - lambda0.
double pce_true(const JointParams& params, PrincipalStratum u);

/// The same effect written in identifiable marginal quantities plus the two
/// non-identified violation coefficients.
double pce_from_marginal(const MarginalParams& marg, double rho, double beta01,
                         double beta10, PrincipalStratum u);

struct ResidualizeResult {
  Dataset data;                // covariate-free primed variables
  Eigen::VectorXd gamma0_hat;  // per-arm outcome-on-X slopes
  Eigen::VectorXd gamma1_hat;
  Eigen::VectorXd alpha_hat;   // pooled intermediate-on-X slopes
};

/// Remove covariates: per-arm least squares of Y on X and pooled least
/// squares of S on X with arm-specific intercepts.  Identity transform when
/// there are no covariates. Throws DataError on rank-deficient designs,
/// naming the collinear columns.
ResidualizeResult residualize(const Dataset& data);

/// Log-likelihood of the observed rows under the bivariate-normal marginal
/// implied by the joint parameters (covariate-free data).
double marginal_loglik(const JointParams& params, const Dataset& data);

}  // namespace prinstrat
