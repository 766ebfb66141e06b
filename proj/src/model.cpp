#include "prinstrat/model.hpp"

#include <cmath>
#include <string>

namespace prinstrat {

void JointParams::validate() const {
  if (!(sigma_y2 > 0.0)) throw std::invalid_argument("JointParams: sigma_y2 must be > 0");
  if (!(sigma_s0 > 0.0) || !(sigma_s1 > 0.0))
    throw std::invalid_argument("JointParams: strata sds must be > 0");
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("JointParams: |rho| must be < 1");
  if (gamma.size() != alpha.size())
    throw std::invalid_argument("JointParams: gamma and alpha must have equal length");
  Eigen::LLT<Eigen::Matrix2d> llt(strata_cov());
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("JointParams: strata covariance not positive definite");
}

void MarginalParams::validate() const {
  for (int t = 0; t < 2; ++t) {
    if (!(zeta[t] > 0.0)) throw std::invalid_argument("MarginalParams: zeta must be > 0");
    if (!(sigma_s[t] > 0.0))
      throw std::invalid_argument("MarginalParams: sigma_s must be > 0");
    if (!(var_y_given_s(t) > 0.0))
      throw std::invalid_argument("MarginalParams: zeta_t - psi_t^2 must be > 0");
  }
}

int Dataset::arm_count(int arm) const {
  int c = 0;
  for (int i = 0; i < n(); ++i) c += (t(i) == arm);
  return c;
}

void Dataset::validate(bool for_fitting) const {
  const int m = n();
  if (t.size() != m || s.size() != m)
    throw DataError("Dataset: y, t, s must have equal length");
  if (x.size() > 0 && x.rows() != m)
    throw DataError("Dataset: covariate rows must match n");
  if (s0.size() != 0 && s0.size() != m)
    throw DataError("Dataset: s0 truth column length mismatch");
  if (s1.size() != 0 && s1.size() != m)
    throw DataError("Dataset: s1 truth column length mismatch");
  for (int i = 0; i < m; ++i)
    if (t(i) != 0 && t(i) != 1) throw DataError("Dataset: t must be binary 0/1");
  if (for_fitting) {
    if (m == 0) throw DataError("Dataset: empty");
    if (arm_count(0) == 0 || arm_count(1) == 0)
      throw DataError("Dataset: both treatment arms must be nonempty");
  }
}

Dataset simulate(const JointParams& params, int n, const CovariateGen* x_gen,
                 RngStream& rng) {
  params.validate();
  if (n < 1) throw std::invalid_argument("simulate: n must be >= 1");

  Dataset d;
  d.y.resize(n);
  d.t.resize(n);
  d.s.resize(n);
  d.s0.resize(n);
  d.s1.resize(n);

  // Lower Cholesky factor of the 2x2 strata covariance, closed form.
  const double l00 = params.sigma_s0;
  const double l10 = params.rho * params.sigma_s1;
  const double l11 = params.sigma_s1 * std::sqrt(1.0 - params.rho * params.rho);
  const double sy = std::sqrt(params.sigma_y2);
  const int p = static_cast<int>(params.gamma.size());
  if (x_gen != nullptr && p == 0)
    throw std::invalid_argument("simulate: covariate generator given but gamma/alpha empty");
  if (x_gen == nullptr && p > 0)
    throw std::invalid_argument("simulate: nonzero gamma/alpha need a covariate generator");
  if (p > 0) d.x.resize(n, p);

  for (int i = 0; i < n; ++i) {
    double gx = 0.0, ax = 0.0;
    if (p > 0) {
      Eigen::VectorXd xi = (*x_gen)(rng);
      if (xi.size() != p) throw std::invalid_argument("simulate: covariate row length mismatch");
      d.x.row(i) = xi.transpose();
      gx = params.gamma.dot(xi);
      ax = params.alpha.dot(xi);
    }
    const double z0 = rng.normal();
    const double z1 = rng.normal();
    const double u0 = params.phi0 + ax + l00 * z0;
    const double u1 = params.phi1 + ax + l10 * z0 + l11 * z1;
    const int ti = rng.uniform() < 0.5 ? 0 : 1;
    const Eigen::Vector2d u(u0, u1);
    const double mean_y = params.beta(ti).dot(u) + params.lambda(ti) + gx;
    d.y(i) = mean_y + sy * rng.normal();
    d.t(i) = ti;
    d.s(i) = ti == 0 ? u0 : u1;
    d.s0(i) = u0;
    d.s1(i) = u1;
  }
  return d;
}

MarginalParams marginalize(const JointParams& params, const Eigen::VectorXd* at_x) {
  params.validate();
  MarginalParams m;
  const Eigen::Matrix2d sig = params.strata_cov();
  double gx = 0.0, ax = 0.0;
  if (at_x != nullptr && at_x->size() > 0) {
    if (at_x->size() != params.gamma.size())
      throw std::invalid_argument("marginalize: at_x length mismatch");
    gx = params.gamma.dot(*at_x);
    ax = params.alpha.dot(*at_x);
  }
  for (int t = 0; t < 2; ++t) {
    const Eigen::Vector2d& b = params.beta(t);
    m.zeta[t] = params.sigma_y2 + b.dot(sig * b);
    const double own = t == 0 ? params.sigma_s0 : params.sigma_s1;
    const double other = t == 0 ? params.sigma_s1 : params.sigma_s0;
    const double b_own = b(t);
    const double b_other = b(1 - t);
    m.psi[t] = own * b_own + params.rho * other * b_other;
    m.mu_y_prime[t] = params.lambda(t) + b(0) * (params.phi0 + ax) +
                      b(1) * (params.phi1 + ax) + gx;
    m.phi[t] = (t == 0 ? params.phi0 : params.phi1) + ax;
    m.sigma_s[t] = own;
  }
  return m;
}

JointParams solve_joint(const MarginalParams& marg, double rho, double sigma_y2,
                        int sign01, int sign10) {
  marg.validate();
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("solve_joint: |rho| must be < 1");
  if (sign01 != 1 && sign01 != -1)
    throw std::invalid_argument("solve_joint: sign01 must be +1 or -1");
  if (sign10 != 1 && sign10 != -1)
    throw std::invalid_argument("solve_joint: sign10 must be +1 or -1");
  const double vmin = std::min(marg.var_y_given_s(0), marg.var_y_given_s(1));
  const double slack = 1e-12 * std::max(1.0, vmin);
  if (!(sigma_y2 >= -slack) || !(sigma_y2 <= vmin + slack))
    throw NumericalError("solve_joint: sigma_y2 = " + std::to_string(sigma_y2) +
                         " outside feasible range [0, " + std::to_string(vmin) + "]");
  const double s2 = std::clamp(sigma_y2, 0.0, vmin);
  const double omr = 1.0 - rho * rho;

  JointParams out;
  out.sigma_y2 = std::max(s2, std::numeric_limits<double>::min());
  out.phi0 = marg.phi[0];
  out.phi1 = marg.phi[1];
  out.sigma_s0 = marg.sigma_s[0];
  out.sigma_s1 = marg.sigma_s[1];
  out.rho = rho;
  for (int t = 0; t < 2; ++t) {
    const double other_sd = marg.sigma_s[1 - t];
    const double own_sd = marg.sigma_s[t];
    const double gap = std::max(marg.var_y_given_s(t) - s2, 0.0);
    const double mag = std::sqrt(gap / (omr * other_sd * other_sd));
    const double b_other = (t == 0 ? sign01 : sign10) * mag;
    const double b_own = (marg.psi[t] - rho * other_sd * b_other) / own_sd;
    Eigen::Vector2d b;
    b(t) = b_own;
    b(1 - t) = b_other;
    if (t == 0) {
      out.beta0 = b;
      out.lambda0 = marg.mu_y_prime[0] - (b(0) * marg.phi[0] + b(1) * marg.phi[1]);
    } else {
      out.beta1 = b;
      out.lambda1 = marg.mu_y_prime[1] - (b(0) * marg.phi[0] + b(1) * marg.phi[1]);
    }
  }
  return out;
}

double pce_true(const JointParams& params, PrincipalStratum u) {
  return (params.beta1(0) - params.beta0(0)) * u.s0 +
         (params.beta1(1) - params.beta0(1)) * u.s1 + params.lambda1 - params.lambda0;
}

double pce_from_marginal(const MarginalParams& marg, double rho, double beta01,
                         double beta10, PrincipalStratum u) {
  const double c0 = beta10 - marg.psi[0] / marg.sigma_s[0] +
                    (marg.sigma_s[1] / marg.sigma_s[0]) * rho * beta01;
  const double c1 = marg.psi[1] / marg.sigma_s[1] -
                    (marg.sigma_s[0] / marg.sigma_s[1]) * rho * beta10 - beta01;
  return c0 * (u.s0 - marg.phi[0]) + c1 * (u.s1 - marg.phi[1]) +
         (marg.mu_y_prime[1] - marg.mu_y_prime[0]);
}

namespace {

// Least squares with rank checking; columns listed in `names` for messages.
Eigen::VectorXd ls_solve(const Eigen::MatrixXd& design, const Eigen::VectorXd& rhs,
                         const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols()) {
    std::string bad;
    const auto perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < design.cols(); ++k) {
      if (!bad.empty()) bad += ", ";
      bad += names[static_cast<std::size_t>(perm(k))];
    }
    throw DataError("residualize: rank-deficient design; collinear columns: " + bad);
  }
  return qr.solve(rhs);
}

}  // namespace

ResidualizeResult residualize(const Dataset& data) {
  data.validate(true);
  ResidualizeResult out;
  out.data = data;
  const int p = data.p();
  out.gamma0_hat = Eigen::VectorXd::Zero(p);
  out.gamma1_hat = Eigen::VectorXd::Zero(p);
  out.alpha_hat = Eigen::VectorXd::Zero(p);
  if (p == 0) return out;

  const int n = data.n();
  for (int arm = 0; arm < 2; ++arm)
    if (data.arm_count(arm) <= p + 2)
      throw DataError("residualize: arm " + std::to_string(arm) +
                      " needs more than p+2 rows");

  std::vector<std::string> xnames;
  for (int j = 0; j < p; ++j) xnames.push_back("x" + std::to_string(j + 1));

  // Per-arm outcome fits y ~ [1, x]; the intercept stays in the model.
  for (int arm = 0; arm < 2; ++arm) {
    const int na = data.arm_count(arm);
    Eigen::MatrixXd design(na, p + 1);
    Eigen::VectorXd rhs(na);
    int r = 0;
    for (int i = 0; i < n; ++i) {
      if (data.t(i) != arm) continue;
      design(r, 0) = 1.0;
      design.row(r).tail(p) = data.x.row(i);
      rhs(r) = data.y(i);
      ++r;
    }
    std::vector<std::string> names{"intercept"};
    names.insert(names.end(), xnames.begin(), xnames.end());
    const Eigen::VectorXd coef = ls_solve(design, rhs, names);
    if (arm == 0)
      out.gamma0_hat = coef.tail(p);
    else
      out.gamma1_hat = coef.tail(p);
  }

  // Pooled intermediate fit s ~ [1{t=0}, 1{t=1}, x].
  {
    Eigen::MatrixXd design(n, p + 2);
    for (int i = 0; i < n; ++i) {
      design(i, 0) = data.t(i) == 0 ? 1.0 : 0.0;
      design(i, 1) = data.t(i) == 1 ? 1.0 : 0.0;
      design.row(i).tail(p) = data.x.row(i);
    }
    std::vector<std::string> names{"arm0 intercept", "arm1 intercept"};
    names.insert(names.end(), xnames.begin(), xnames.end());
    const Eigen::VectorXd coef = ls_solve(design, data.s, names);
    out.alpha_hat = coef.tail(p);
  }

  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = data.x.row(i).transpose();
    const double gx = (data.t(i) == 0 ? out.gamma0_hat : out.gamma1_hat).dot(xi);
    const double ax = out.alpha_hat.dot(xi);
    out.data.y(i) = data.y(i) - gx;
    out.data.s(i) = data.s(i) - ax;
    if (data.has_truth()) {
      out.data.s0(i) = data.s0(i) - ax;
      out.data.s1(i) = data.s1(i) - ax;
    }
  }
  out.data.x.resize(data.n(), 0);
  return out;
}

double marginal_loglik(const JointParams& params, const Dataset& data) {
  data.validate();
  if (data.p() != 0)
    throw DataError("marginal_loglik: expects covariate-free (residualized) data");
  const MarginalParams m = marginalize(params);
  constexpr double kLog2Pi = 1.8378770664093454836;
  double ll = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const int t = data.t(i);
    const double v = m.var_y_given_s(t);
    const double ss = m.sigma_s[t] * m.sigma_s[t];
    const double ds = data.s(i) - m.phi[t];
    const double dy = data.y(i) - m.mu_y_prime[t] - (m.psi[t] / m.sigma_s[t]) * ds;
    ll += -kLog2Pi - 0.5 * std::log(v * ss) - 0.5 * dy * dy / v - 0.5 * ds * ds / ss;
  }
  return ll;
}

}  // namespace prinstrat
