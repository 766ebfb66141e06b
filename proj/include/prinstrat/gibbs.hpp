#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prinstrat/common.hpp"
#include "prinstrat/model.hpp"
#include "prinstrat/rng.hpp"

namespace prinstrat {

/// Conjugate prior settings. Means/variances are per coordinate for the
/// outcome and strata coefficients; covariate blocks share one setting.
struct PriorSpec {
  Eigen::Vector2d beta0_mean{0.0, 0.0};
  Eigen::Vector2d beta0_var{1e5, 1e5};
  Eigen::Vector2d beta1_mean{0.0, 0.0};
  Eigen::Vector2d beta1_var{1e5, 1e5};
  double lambda0_mean = 0.0, lambda0_var = 1e5;
  double lambda1_mean = 0.0, lambda1_var = 1e5;
  double gamma_mean = 0.0, gamma_var = 1e5;
  double alpha_mean = 0.0, alpha_var = 1e5;
  double phi0_mean = 0.0, phi0_var = 1e5;
  double phi1_mean = 0.0, phi1_var = 1e5;
  double sigma_y2_shape = 1e-3, sigma_y2_rate = 1e-3;
  double sigma_s_shape = 1e-3, sigma_s_rate = 1e-3;
  Interval rho_interval{0.0, 0.95};
  void validate() const;
};

/// Identification constraints and truncation devices applied to the chain.
struct ConstraintSet {
  bool pi = false;               // beta01 = beta10 = 0
  bool zero_beta01 = false;      // beta01 = 0
  bool shared_baseline = false;  // beta00 = beta10 (merged design column)
  bool same_sign_arm0 = false;   // sign(beta00) = sign(beta01), from data
  bool same_sign_arm1 = false;   // sign(beta10) = sign(beta11), from data
  bool dominant_effect = false;  // sigma_y2 lower bound, data-derived
  bool sign_positive = false;    // binary sampler: beta01 > 0 and beta10 > 0
  double sigma_y2_floor_frac = 0.05;  // generic floor on sigma_y2
  std::optional<double> rho_fixed;    // continuous: rho; binary: p11
  bool equal_sigma_s = false;
  void validate() const;
};

struct ChainConfig {
  int n_iter = 25000;
  int burn_in = 5000;
  int thin = 30;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  double rho_proposal_sd = 0.05;
  double sigma_s_proposal_sd = 0.1;  // log scale
  int p11_grid_points = 512;         // binary sampler only
  void validate() const;
  int retained() const { return (n_iter - burn_in) / thin; }
};

/// Chain settings used by the binary-intermediate sampler runs.
ChainConfig binary_chain_defaults();

struct ChainState {
  JointParams params;
  Eigen::VectorXd s_missing;  // the unobserved other-arm intermediates
  int iteration = 0;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  Eigen::MatrixXd draws;  // retained x names
  std::vector<PrincipalStratum> strata;
  std::optional<double> accept_rho;
  std::optional<double> accept_sigma_s0;
  std::optional<double> accept_sigma_s1;
  double sigma_y2_floor = 0.0;
  double frac_at_floor = 0.0;
  ChainConfig config;

  int col(std::string_view name) const;
  Eigen::VectorXd column(std::string_view name) const;
  double mean(std::string_view name) const;
  double sd(std::string_view name) const;
  double quantile(std::string_view name, double p) const;
};

/// Type-7 sample quantile (linear interpolation of order statistics).
double quantile_type7(std::vector<double> values, double p);

struct RhoSuffStats {
  std::array<double, 2> yy{0.0, 0.0}, ys{0.0, 0.0}, ss{0.0, 0.0};
  std::array<int, 2> n{0, 0};
};

/// Gibbs sampler for the joint Gaussian outcome/strata model with
/// covariates. One iteration cycles: impute the missing intermediates,
/// outcome coefficients, strata coefficients, outcome variance, strata
/// variances, then a Metropolis step on the strata correlation against the
/// observed-data marginal.
class GibbsSampler {
 public:
  GibbsSampler(const Dataset& data, const PriorSpec& prior, const ConstraintSet& constraints,
               const ChainConfig& config);

  PosteriorDraws run(std::span<const PrincipalStratum> strata = {});

  void step();
  void impute_missing();
  void update_theta_y();
  void update_theta_s();
  void update_sigma_y2();
  void update_sigma_s();
  void update_rho();

  ChainState& state() { return st_; }
  const ChainState& state() const { return st_; }
  RngStream& rng() { return rng_; }
  double sigma_y2_lower() const { return sigma_y2_lower_; }
  const std::array<int, 2>& data_signs() const { return sign_; }

  /// (mean, variance) of the imputation conditional for row i.
  std::pair<double, double> impute_moments(int i) const;
  /// Log posterior of rho given the observed rows only (up to a constant),
  /// other parameters at their current values.
  double rho_marginal_logpost(double rho) const;

 private:
  enum class Coef { B00, B01, B10, B11, BShared, Lam0, Lam1, Gamma };
  struct ColSpec {
    Coef kind;
    int xj = -1;  // gamma column index
    double prior_mean = 0.0;
    double prior_var = 1.0;
    int trunc_sign = 0;  // 0 free, +1 positive, -1 negative
  };

  void build_layout();
  void compute_floors_and_signs();
  void init_state();
  RhoSuffStats rho_suff_stats() const;
  double design_value(const ColSpec& c, int i) const;
  Eigen::VectorXd current_coefs() const;
  void expand_coefs(const Eigen::VectorXd& theta);
  double u0(int i) const { return data_.t(i) == 0 ? data_.s(i) : st_.s_missing(i); }
  double u1(int i) const { return data_.t(i) == 1 ? data_.s(i) : st_.s_missing(i); }

  Dataset data_;
  PriorSpec prior_;
  ConstraintSet cons_;
  ChainConfig cfg_;
  RngStream rng_;
  ChainState st_;
  std::vector<ColSpec> cols_;
  double sigma_y2_lower_ = 0.0;
  std::array<int, 2> sign_{1, 1};
  long rho_acc_ = 0, rho_try_ = 0;
  long s0_acc_ = 0, s0_try_ = 0, s1_acc_ = 0, s1_try_ = 0;
  // per-iteration workspaces
  Eigen::MatrixXd design_;
  std::vector<double> wa_, wb_;
};

/// Constrained multivariate-normal draw in precision form: theta ~ N(m, P^-1)
/// with P = precision, b = P m, where coordinates with trunc_sign != 0 are
/// drawn from their sign-truncated univariate full conditionals and the rest
/// jointly. `theta` carries the current values in and the draw out.
void draw_gaussian_precision(const Eigen::MatrixXd& precision, const Eigen::VectorXd& b,
                             std::span<const int> trunc_sign, Eigen::VectorXd& theta,
                             RngStream& rng);

PosteriorDraws run_chain(const Dataset& data, const PriorSpec& prior,
                         const ConstraintSet& constraints, const ChainConfig& config,
                         std::span<const PrincipalStratum> strata = {});

}  // namespace prinstrat
