#include "prinstrat/binary.hpp"

#include <algorithm>
#include <cmath>

#include "prinstrat/kernels.hpp"
#include "prinstrat/prob.hpp"

namespace prinstrat {

namespace {
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}

void BinaryParams::validate() const {
  if (!(sigma_y2 > 0.0)) throw std::invalid_argument("BinaryParams: sigma_y2 must be > 0");
  const double s = p00 + p01 + p10 + p11;
  if (!(p00 >= 0.0 && p01 >= 0.0 && p10 >= 0.0 && p11 >= 0.0))
    throw std::invalid_argument("BinaryParams: cell probabilities must be nonnegative");
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument("BinaryParams: cell probabilities must sum to 1");
}

Dataset simulate_binary(const BinaryParams& params, int n, RngStream& rng) {
  params.validate();
  if (n < 1) throw std::invalid_argument("simulate_binary: n must be >= 1");
  Dataset d;
  d.y.resize(n);
  d.t.resize(n);
  d.s.resize(n);
  d.s0.resize(n);
  d.s1.resize(n);
  const double sy = std::sqrt(params.sigma_y2);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    int s0, s1;
    if (u < params.p00) {
      s0 = 0; s1 = 0;
    } else if (u < params.p00 + params.p01) {
      s0 = 0; s1 = 1;
    } else if (u < params.p00 + params.p01 + params.p10) {
      s0 = 1; s1 = 0;
    } else {
      s0 = 1; s1 = 1;
    }
    const int ti = rng.uniform() < 0.5 ? 0 : 1;
    const Eigen::Vector2d uv(static_cast<double>(s0), static_cast<double>(s1));
    const double mean =
        (ti == 0 ? params.beta0 : params.beta1).dot(uv) + (ti == 0 ? params.lambda0 : params.lambda1);
    d.y(i) = mean + sy * rng.normal();
    d.t(i) = ti;
    d.s(i) = ti == 0 ? s0 : s1;
    d.s0(i) = s0;
    d.s1(i) = s1;
  }
  return d;
}

namespace {

// Mixture pieces for arm t given observed S=s: component means and cell
// probabilities indexed by the missing intermediate value.
struct MixturePieces {
  double m0, m1;  // outcome means for missing = 0 / 1
  double c0, c1;  // cell probabilities for missing = 0 / 1
};

MixturePieces pieces(int s, int t, const BinaryParams& p) {
  MixturePieces out{};
  if (t == 0) {
    out.m0 = p.lambda0 + p.beta0(0) * s;
    out.m1 = out.m0 + p.beta0(1);
    out.c0 = s == 0 ? p.p00 : p.p10;
    out.c1 = s == 0 ? p.p01 : p.p11;
  } else {
    out.m0 = p.lambda1 + p.beta1(1) * s;
    out.m1 = out.m0 + p.beta1(0);
    out.c0 = s == 0 ? p.p00 : p.p01;
    out.c1 = s == 0 ? p.p10 : p.p11;
  }
  return out;
}

}  // namespace

double marginal_pdf_binary(double y, int s, int t, const BinaryParams& params) {
  params.validate();
  if ((s != 0 && s != 1) || (t != 0 && t != 1))
    throw std::invalid_argument("marginal_pdf_binary: s and t must be 0/1");
  const MixturePieces mp = pieces(s, t, params);
  const double sy = std::sqrt(params.sigma_y2);
  const double z0 = (y - mp.m0) / sy;
  const double z1 = (y - mp.m1) / sy;
  return kInvSqrt2Pi / sy *
         (mp.c0 * std::exp(-0.5 * z0 * z0) + mp.c1 * std::exp(-0.5 * z1 * z1));
}

double binary_impute_prob1(double y, int s, int t, const BinaryParams& params) {
  const MixturePieces mp = pieces(s, t, params);
  if (mp.c1 <= 0.0) return 0.0;
  if (mp.c0 <= 0.0) return 1.0;
  const double d0 = y - mp.m0;
  const double d1 = y - mp.m1;
  const double logit =
      std::log(mp.c1 / mp.c0) + (d0 * d0 - d1 * d1) / (2.0 * params.sigma_y2);
  return 1.0 / (1.0 + std::exp(-logit));
}

BinaryMoments binary_marginal_moments(const BinaryParams& p) {
  BinaryMoments m;
  const double p1d = p.p1dot();
  const double pd1 = p.pdot1();
  m.phi = {p1d, pd1};
  m.sigma_s = {std::sqrt(p1d * (1.0 - p1d)), std::sqrt(pd1 * (1.0 - pd1))};
  const double cov = p.p11 - p1d * pd1;
  m.cor = cov / (m.sigma_s[0] * m.sigma_s[1]);
  Eigen::Matrix2d sig;
  sig << m.sigma_s[0] * m.sigma_s[0], cov, cov, m.sigma_s[1] * m.sigma_s[1];
  for (int t = 0; t < 2; ++t) {
    const Eigen::Vector2d& b = t == 0 ? p.beta0 : p.beta1;
    m.zeta[t] = p.sigma_y2 + b.dot(sig * b);
    m.psi[t] = m.sigma_s[t] * b(t) + m.cor * m.sigma_s[1 - t] * b(1 - t);
    m.mu_y[t] = (t == 0 ? p.lambda0 : p.lambda1) + b(0) * p1d + b(1) * pd1;
  }
  return m;
}

BinaryParams binary_flip_signs(const BinaryParams& params, bool flip01, bool flip10) {
  const BinaryMoments m = binary_marginal_moments(params);
  BinaryParams out = params;
  if (flip01) {
    const double b01 = -params.beta0(1);
    const double b00 = (m.psi[0] - m.cor * m.sigma_s[1] * b01) / m.sigma_s[0];
    out.beta0 = Eigen::Vector2d(b00, b01);
    out.lambda0 = m.mu_y[0] - (b00 * m.phi[0] + b01 * m.phi[1]);
  }
  if (flip10) {
    const double b10 = -params.beta1(0);
    const double b11 = (m.psi[1] - m.cor * m.sigma_s[0] * b10) / m.sigma_s[1];
    out.beta1 = Eigen::Vector2d(b10, b11);
    out.lambda1 = m.mu_y[1] - (b10 * m.phi[0] + b11 * m.phi[1]);
  }
  return out;
}

double sign_separation_check(const BinaryParams& a, const BinaryParams& b,
                             std::span<const double> y_grid) {
  double worst = 0.0;
  for (double y : y_grid) {
    for (int s = 0; s < 2; ++s) {
      const double fa = marginal_pdf_binary(y, s, 0, a);
      const double fb = marginal_pdf_binary(y, s, 0, b);
      if (fa <= 0.0 && fb <= 0.0) continue;
      if (fa <= 0.0 || fb <= 0.0) return kInf;
      worst = std::max(worst, std::abs(std::log(fa) - std::log(fb)));
    }
  }
  return worst;
}

BinaryGibbsSampler::BinaryGibbsSampler(const Dataset& data, const PriorSpec& prior,
                                       const ConstraintSet& constraints,
                                       const ChainConfig& config)
    : data_(data), prior_(prior), cons_(constraints), cfg_(config),
      rng_(config.seed, config.stream_id) {
  data_.validate(true);
  prior_.validate();
  cons_.validate();
  cfg_.validate();
  if (data_.p() != 0)
    throw DataError("binary sampler: covariates are not supported");
  for (int i = 0; i < data_.n(); ++i)
    if (data_.s(i) != 0.0 && data_.s(i) != 1.0)
      throw DataError("binary sampler: intermediate values must be 0/1");
  if (cons_.pi || cons_.zero_beta01 || cons_.shared_baseline || cons_.same_sign_arm0 ||
      cons_.same_sign_arm1 || cons_.dominant_effect || cons_.equal_sigma_s)
    throw ConfigError("binary sampler: only sign_positive and rho_fixed (= known p11) apply");
  if (cons_.rho_fixed && !(*cons_.rho_fixed >= 0.0 && *cons_.rho_fixed <= 1.0))
    throw ConfigError("binary sampler: fixed p11 must lie in [0, 1]");

  const int n = data_.n();
  for (int i = 0; i < n; ++i)
    groups_[data_.t(i) * 2 + static_cast<int>(data_.s(i))].push_back(i);

  // Margins from the observed arms; p11 starts at independence (or the
  // supplied known value).
  double p1d = 0.0, pd1 = 0.0;
  int n0 = 0, n1 = 0;
  for (int i = 0; i < n; ++i) {
    if (data_.t(i) == 0) {
      p1d += data_.s(i);
      ++n0;
    } else {
      pd1 += data_.s(i);
      ++n1;
    }
  }
  p1d = std::clamp(p1d / std::max(n0, 1), 0.02, 0.98);
  pd1 = std::clamp(pd1 / std::max(n1, 1), 0.02, 0.98);
  const double lo = std::max(0.0, p1d + pd1 - 1.0);
  const double hi = std::min(p1d, pd1);
  double p11 = cons_.rho_fixed ? *cons_.rho_fixed : p1d * pd1;
  p11 = std::clamp(p11, lo, hi);
  par_.p11 = p11;
  par_.p10 = p1d - p11;
  par_.p01 = pd1 - p11;
  par_.p00 = 1.0 - p1d - pd1 + p11;

  // Outcome side: per-arm least squares of y on (1, s).
  double resid = 0.0;
  for (int arm = 0; arm < 2; ++arm) {
    double sy = 0.0, ss = 0.0, syy = 0.0, sys = 0.0, sn = 0.0;
    for (int i = 0; i < n; ++i) {
      if (data_.t(i) != arm) continue;
      sn += 1.0;
      sy += data_.y(i);
      ss += data_.s(i);
      syy += data_.y(i) * data_.y(i);
      sys += data_.y(i) * data_.s(i);
    }
    const double vy = syy / sn - (sy / sn) * (sy / sn);
    const double vs = ss / sn * (1.0 - ss / sn);
    const double cov = sys / sn - (sy / sn) * (ss / sn);
    const double slope = vs > 1e-12 ? cov / vs : 0.0;
    const double icept = sy / sn - slope * (ss / sn);
    if (arm == 0) {
      par_.beta0 = Eigen::Vector2d(slope, 0.0);
      par_.lambda0 = icept;
    } else {
      par_.beta1 = Eigen::Vector2d(0.0, slope);
      par_.lambda1 = icept;
    }
    resid += std::max(vy - slope * cov, 1e-8);
  }
  par_.sigma_y2 = 0.5 * resid;

  smis_.resize(n);
  for (int i = 0; i < n; ++i) {
    const double marg = data_.t(i) == 0 ? pd1 : p1d;
    smis_(i) = marg > 0.5 ? 1 : 0;
  }
}

void BinaryGibbsSampler::impute_missing() {
  for (int i = 0; i < data_.n(); ++i) {
    const double q =
        binary_impute_prob1(data_.y(i), static_cast<int>(data_.s(i)), data_.t(i), par_);
    smis_(i) = rng_.uniform() < q ? 1 : 0;
  }
}

void BinaryGibbsSampler::update_theta_y() {
  const int n = data_.n();
  Eigen::MatrixXd design(n, 6);
  for (int i = 0; i < n; ++i) {
    const int t = data_.t(i);
    const double su0 = t == 0 ? data_.s(i) : static_cast<double>(smis_(i));
    const double su1 = t == 1 ? data_.s(i) : static_cast<double>(smis_(i));
    design(i, 0) = t == 0 ? su0 : 0.0;  // beta00
    design(i, 1) = t == 0 ? su1 : 0.0;  // beta01
    design(i, 2) = t == 1 ? su0 : 0.0;  // beta10
    design(i, 3) = t == 1 ? su1 : 0.0;  // beta11
    design(i, 4) = t == 0 ? 1.0 : 0.0;  // lambda0
    design(i, 5) = t == 1 ? 1.0 : 0.0;  // lambda1
  }
  const double inv = 1.0 / par_.sigma_y2;
  Eigen::MatrixXd precision = design.transpose() * design * inv;
  Eigen::VectorXd b = design.transpose() * data_.y * inv;
  const double pm[6] = {prior_.beta0_mean(0), prior_.beta0_mean(1), prior_.beta1_mean(0),
                        prior_.beta1_mean(1), prior_.lambda0_mean, prior_.lambda1_mean};
  const double pv[6] = {prior_.beta0_var(0), prior_.beta0_var(1), prior_.beta1_var(0),
                        prior_.beta1_var(1), prior_.lambda0_var, prior_.lambda1_var};
  for (int j = 0; j < 6; ++j) {
    precision(j, j) += 1.0 / pv[j];
    b(j) += pm[j] / pv[j];
  }
  Eigen::VectorXd theta(6);
  theta << par_.beta0(0), par_.beta0(1), par_.beta1(0), par_.beta1(1), par_.lambda0,
      par_.lambda1;
  std::vector<int> trunc(6, 0);
  if (cons_.sign_positive) {
    trunc[1] = 1;  // beta01 > 0
    trunc[2] = 1;  // beta10 > 0
  }
  draw_gaussian_precision(precision, b, trunc, theta, rng_);
  par_.beta0 = Eigen::Vector2d(theta(0), theta(1));
  par_.beta1 = Eigen::Vector2d(theta(2), theta(3));
  par_.lambda0 = theta(4);
  par_.lambda1 = theta(5);
}

void BinaryGibbsSampler::update_sigma_y2() {
  double ss = 0.0;
  for (int i = 0; i < data_.n(); ++i) {
    const int t = data_.t(i);
    const double su0 = t == 0 ? data_.s(i) : static_cast<double>(smis_(i));
    const double su1 = t == 1 ? data_.s(i) : static_cast<double>(smis_(i));
    const double mean = (t == 0 ? par_.beta0 : par_.beta1).dot(Eigen::Vector2d(su0, su1)) +
                        (t == 0 ? par_.lambda0 : par_.lambda1);
    const double r = mean - data_.y(i);
    ss += r * r;
  }
  par_.sigma_y2 = sample_trunc_invgamma(0.5 * data_.n() + prior_.sigma_y2_shape,
                                        0.5 * ss + prior_.sigma_y2_rate, 0.0, rng_);
}

std::array<int, 4> BinaryGibbsSampler::cell_counts() const {
  std::array<int, 4> counts{0, 0, 0, 0};
  for (int i = 0; i < data_.n(); ++i) {
    const int t = data_.t(i);
    const int su0 = t == 0 ? static_cast<int>(data_.s(i)) : smis_(i);
    const int su1 = t == 1 ? static_cast<int>(data_.s(i)) : smis_(i);
    ++counts[su0 * 2 + su1];  // order: 00, 01, 10, 11
  }
  return counts;
}

void BinaryGibbsSampler::update_margins() {
  // Given p11, the remaining three cells scaled by 1/(1-p11) are Dirichlet
  // with the imputed cell counts.
  const auto counts = cell_counts();
  Eigen::Vector3d alphas(counts[2] + 1.0, counts[1] + 1.0, counts[0] + 1.0);  // n10, n01, n00
  const Eigen::VectorXd w = sample_dirichlet(alphas, rng_);
  const double rest = 1.0 - par_.p11;
  par_.p10 = rest * w(0);
  par_.p01 = rest * w(1);
  par_.p00 = rest * w(2);
}

Interval BinaryGibbsSampler::p11_feasible() const {
  const double p1d = par_.p1dot();
  const double pd1 = par_.pdot1();
  const double lo = std::max(0.0, p1d + pd1 - 1.0);
  const double hi = std::min(p1d, pd1);
  if (!(lo <= hi)) throw NumericalError("binary sampler: empty feasible p11 interval");
  return Interval(lo, hi);
}

std::vector<double> BinaryGibbsSampler::p11_grid_logpost(const Interval& grid) const {
  const int npts = cfg_.p11_grid_points;
  const double p1d = par_.p1dot();
  const double pd1 = par_.pdot1();

  // Per-row mixture weight ratios relative to the missing=0 component; the
  // cell probabilities enter each group's sum linearly, so the grid scan
  // reduces to sum_log_affine over precomputed ratios.
  for (int g = 0; g < 4; ++g) {
    const int t = g / 2;
    const int s = g % 2;
    auto& w = wgrp_[static_cast<std::size_t>(g)];
    w.resize(groups_[static_cast<std::size_t>(g)].size());
    const MixturePieces mp = pieces(s, t, par_);
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double y = data_.y(groups_[static_cast<std::size_t>(g)][k]);
      const double d0 = y - mp.m0;
      const double d1 = y - mp.m1;
      w[k] = std::exp((d0 * d0 - d1 * d1) / (2.0 * par_.sigma_y2));
    }
  }

  std::vector<double> logpost(static_cast<std::size_t>(npts));
  const double step = grid.width() / (npts - 1);
  for (int gpt = 0; gpt < npts; ++gpt) {
    const double p11 = grid.lo + step * gpt;
    const double p10 = p1d - p11;
    const double p01 = pd1 - p11;
    const double p00 = 1.0 - p1d - pd1 + p11;
    // Group cell pairs (missing=0, missing=1): t=0,s=0 -> (p00,p01);
    // t=0,s=1 -> (p10,p11); t=1,s=0 -> (p00,p10); t=1,s=1 -> (p01,p11).
    const double c0[4] = {p00, p10, p00, p01};
    const double c1[4] = {p01, p11, p10, p11};
    double lp = 0.0;
    for (int g = 0; g < 4; ++g) {
      const auto& w = wgrp_[static_cast<std::size_t>(g)];
      lp += kernels::sum_log_affine(w.data(), w.size(), std::max(c0[g], 0.0),
                                    std::max(c1[g], 0.0));
    }
    logpost[static_cast<std::size_t>(gpt)] = lp;
  }
  return logpost;
}

void BinaryGibbsSampler::update_p11() {
  if (cons_.rho_fixed) return;
  const Interval grid = p11_feasible();
  if (grid.width() <= 0.0) return;
  const std::vector<double> logpost = p11_grid_logpost(grid);
  const std::size_t idx = sample_categorical_logits(logpost, rng_);
  const double p1d = par_.p1dot();
  const double pd1 = par_.pdot1();
  const double step = grid.width() / (cfg_.p11_grid_points - 1);
  const double p11 = grid.lo + step * static_cast<double>(idx);
  par_.p11 = p11;
  par_.p10 = std::max(p1d - p11, 0.0);
  par_.p01 = std::max(pd1 - p11, 0.0);
  par_.p00 = std::max(1.0 - p1d - pd1 + p11, 0.0);
}

void BinaryGibbsSampler::step() {
  ++iteration_;
  const char* stage = "impute_missing";
  try {
    impute_missing();
    stage = "update_theta_y";
    update_theta_y();
    stage = "update_sigma_y2";
    update_sigma_y2();
    stage = "update_margins";
    update_margins();
    stage = "update_p11";
    update_p11();
  } catch (const std::exception& e) {
    throw NumericalError("binary chain aborted at iteration " + std::to_string(iteration_) +
                         ", step " + stage + ": " + e.what());
  }
}

PosteriorDraws BinaryGibbsSampler::run(std::span<const PrincipalStratum> strata) {
  PosteriorDraws out;
  out.names = {"beta00", "beta01", "beta10", "beta11", "lambda0", "lambda1",
               "sigma_y2", "p00",   "p01",   "p10",    "p11"};
  for (std::size_t k = 0; k < strata.size(); ++k)
    out.names.push_back("pce_" + std::to_string(k + 1));
  out.strata.assign(strata.begin(), strata.end());
  out.config = cfg_;

  const int rows = cfg_.retained();
  out.draws.resize(rows, static_cast<Eigen::Index>(out.names.size()));
  int r = 0;
  for (int it = 1; it <= cfg_.n_iter; ++it) {
    step();
    if (it <= cfg_.burn_in || (it - cfg_.burn_in) % cfg_.thin != 0) continue;
    if (r >= rows) break;
    int c = 0;
    out.draws(r, c++) = par_.beta0(0);
    out.draws(r, c++) = par_.beta0(1);
    out.draws(r, c++) = par_.beta1(0);
    out.draws(r, c++) = par_.beta1(1);
    out.draws(r, c++) = par_.lambda0;
    out.draws(r, c++) = par_.lambda1;
    out.draws(r, c++) = par_.sigma_y2;
    out.draws(r, c++) = par_.p00;
    out.draws(r, c++) = par_.p01;
    out.draws(r, c++) = par_.p10;
    out.draws(r, c++) = par_.p11;
    for (const auto& u : strata)
      out.draws(r, c++) = (par_.beta1(0) - par_.beta0(0)) * u.s0 +
                          (par_.beta1(1) - par_.beta0(1)) * u.s1 + par_.lambda1 -
                          par_.lambda0;
    ++r;
  }
  return out;
}

PosteriorDraws gibbs_binary(const Dataset& data, const PriorSpec& prior,
                            const ConstraintSet& constraints, const ChainConfig& config,
                            std::span<const PrincipalStratum> strata) {
  BinaryGibbsSampler sampler(data, prior, constraints, config);
  return sampler.run(strata);
}

}  // namespace prinstrat
