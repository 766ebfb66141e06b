#include "prinstrat/pir.hpp"

#include <algorithm>
#include <cmath>

namespace prinstrat {

void ObservedMoments::validate() const {
  for (int t = 0; t < 2; ++t) {
    if (!(var_y_given_s[t] >= 0.0) || !(var_s[t] > 0.0) || !(var_y[t] > 0.0))
      throw std::invalid_argument("ObservedMoments: variances must be positive");
    if (var_y_given_s[t] > var_y[t] * (1.0 + 1e-12))
      throw std::invalid_argument("ObservedMoments: Var(Y|S) must not exceed Var(Y)");
    if (sign_beta_tt[t] != 1 && sign_beta_tt[t] != -1)
      throw std::invalid_argument("ObservedMoments: signs must be +1/-1");
  }
}

ObservedMoments moments_from_data(const Dataset& data) {
  data.validate(true);
  if (data.p() != 0)
    throw DataError("moments_from_data: expects residualized (covariate-free) data");
  ObservedMoments m;
  for (int arm = 0; arm < 2; ++arm) {
    const int na = data.arm_count(arm);
    if (na < 3) throw DataError("moments_from_data: each arm needs at least 3 rows");
    double my = 0.0, ms = 0.0;
    for (int i = 0; i < data.n(); ++i) {
      if (data.t(i) != arm) continue;
      my += data.y(i);
      ms += data.s(i);
    }
    my /= na;
    ms /= na;
    double syy = 0.0, sss = 0.0, sys = 0.0;
    for (int i = 0; i < data.n(); ++i) {
      if (data.t(i) != arm) continue;
      const double dy = data.y(i) - my;
      const double ds = data.s(i) - ms;
      syy += dy * dy;
      sss += ds * ds;
      sys += dy * ds;
    }
    if (!(sss > 0.0)) throw DataError("moments_from_data: S is constant in one arm");
    if (!(syy > 0.0)) throw DataError("moments_from_data: Y is constant in one arm");
    const double var_y = syy / (na - 1);
    const double var_s = sss / (na - 1);
    const double cov = sys / (na - 1);
    const double slope = cov / var_s;
    const double resid = std::max(var_y - cov * cov / var_s, 0.0);
    m.var_y[arm] = var_y;
    m.var_s[arm] = var_s;
    m.var_y_given_s[arm] = resid;
    m.cor_ys[arm] = cov / std::sqrt(var_y * var_s);
    m.sign_beta_tt[arm] = slope >= 0.0 ? 1 : -1;
    // OLS slope standard error from the same regression.
    const double sigma2_hat = std::max(syy - sys * sys / sss, 0.0) / std::max(na - 2, 1);
    const double se = std::sqrt(sigma2_hat / sss);
    m.slope_t_stat[arm] = se > 0.0 ? slope / se : kInf;
  }
  m.validate();
  return m;
}

ObservedMoments moments_from_marginal(const MarginalParams& marg) {
  marg.validate();
  ObservedMoments m;
  for (int t = 0; t < 2; ++t) {
    m.var_y[t] = marg.zeta[t];
    m.var_s[t] = marg.sigma_s[t] * marg.sigma_s[t];
    m.var_y_given_s[t] = marg.var_y_given_s(t);
    m.cor_ys[t] = marg.psi[t] / std::sqrt(marg.zeta[t]);
    m.sign_beta_tt[t] = marg.psi[t] >= 0.0 ? 1 : -1;
    m.slope_t_stat[t] = kInf;
  }
  return m;
}

bool PirRegion::contains(double v) const {
  for (const auto& iv : intervals)
    if (iv.contains(v)) return true;
  return false;
}

double PirRegion::min_abs() const {
  double best = kInf;
  for (const auto& iv : intervals) {
    if (iv.contains(0.0)) return 0.0;
    best = std::min(best, std::min(std::abs(iv.lo), std::abs(iv.hi)));
  }
  return best;
}

double PirRegion::max_abs() const {
  double best = 0.0;
  for (const auto& iv : intervals)
    best = std::max(best, std::max(std::abs(iv.lo), std::abs(iv.hi)));
  return best;
}

namespace {

// Region of one violation coefficient whose squared value ranges over
// [sq_lo, sq_hi]; symmetric about 0 (single interval when sq_lo == 0,
// union of the two mirrored intervals otherwise).
PirRegion region_from_sq_range(double sq_lo, double sq_hi, double rhs) {
  PirRegion r;
  r.constraint_rhs = rhs;
  const double lo = std::sqrt(std::max(sq_lo, 0.0));
  const double hi = std::sqrt(std::max(sq_hi, 0.0));
  if (lo <= 0.0) {
    r.intervals = {Interval(-hi, hi)};
  } else {
    r.intervals = {Interval(-hi, -lo), Interval(lo, hi)};
  }
  return r;
}

PirRegion keep_sign(const PirRegion& r, int sign) {
  PirRegion out;
  out.constraint_rhs = r.constraint_rhs;
  for (const auto& iv : r.intervals) {
    if (sign > 0) {
      if (iv.hi >= 0.0) out.intervals.push_back(Interval(std::max(iv.lo, 0.0), iv.hi));
    } else {
      if (iv.lo <= 0.0) out.intervals.push_back(Interval(iv.lo, std::min(iv.hi, 0.0)));
    }
  }
  return out;
}

PirPair regions_for_bounds(const ObservedMoments& m, double rho, Interval s2_bounds) {
  const double omr = 1.0 - rho * rho;
  const double rhs = (m.var_y_given_s[1] - m.var_y_given_s[0]) / omr;
  PirPair out;
  for (int t = 0; t < 2; ++t) {
    const double denom = omr * m.var_s[1 - t];
    const double sq_lo = (m.var_y_given_s[t] - s2_bounds.hi) / denom;
    const double sq_hi = (m.var_y_given_s[t] - s2_bounds.lo) / denom;
    PirRegion r = region_from_sq_range(sq_lo, sq_hi, rhs);
    if (t == 0)
      out.beta01 = std::move(r);
    else
      out.beta10 = std::move(r);
  }
  return out;
}

}  // namespace

Interval sigma_y2_bounds(const ObservedMoments& m, Assumption assumption) {
  m.validate();
  const double hi = std::min(m.var_y_given_s[0], m.var_y_given_s[1]);
  if (assumption == Assumption::dominant) {
    const double l0 = m.var_y_given_s[0] * m.var_y_given_s[0] / m.var_y[0];
    const double l1 = m.var_y_given_s[1] * m.var_y_given_s[1] / m.var_y[1];
    const double lo = std::max(l0, l1);
    if (lo > hi * (1.0 + 1e-12))
      throw NumericalError(
          "dominant-effect assumption refuted by the moments: lower bound "
          "max_t Var(Y|S,T=t)^2/Var(Y|T=t) = " + std::to_string(lo) +
          " exceeds min_t Var(Y|S,T=t) = " + std::to_string(hi));
    return Interval(std::min(lo, hi), hi);
  }
  return Interval(0.0, hi);
}

PirPair pir_unconstrained(const ObservedMoments& m, double rho) {
  m.validate();
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("pir: |rho| must be < 1");
  return regions_for_bounds(m, rho, sigma_y2_bounds(m, Assumption::none));
}

PirPair pir_same_sign(const ObservedMoments& m, double rho) {
  PirPair r = pir_unconstrained(m, rho);
  // Within each arm the unobserved-intermediate coefficient shares the sign
  // of the observed one.
  r.beta01 = keep_sign(r.beta01, m.sign_beta_tt[0]);
  r.beta10 = keep_sign(r.beta10, m.sign_beta_tt[1]);
  return r;
}

PirPair pir_dominant(const ObservedMoments& m, double rho) {
  m.validate();
  if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("pir: |rho| must be < 1");
  return regions_for_bounds(m, rho, sigma_y2_bounds(m, Assumption::dominant));
}

double eq4_residual(double beta01, double beta10, const ObservedMoments& m, double rho) {
  const double omr = 1.0 - rho * rho;
  return m.var_s[0] * beta10 * beta10 - m.var_s[1] * beta01 * beta01 -
         (m.var_y_given_s[1] - m.var_y_given_s[0]) / omr;
}

Interval pce_band(const ObservedMoments& m, const MarginalParams& marg, double rho,
                  PrincipalStratum u, Assumption assumption, int grid_points) {
  if (grid_points < 2) throw std::invalid_argument("pce_band: grid_points must be >= 2");
  const Interval s2 = sigma_y2_bounds(m, assumption);
  const double omr = 1.0 - rho * rho;
  double lo = kInf, hi = -kInf;
  const int npts = s2.width() > 0.0 ? grid_points : 1;
  for (int g = 0; g < npts; ++g) {
    const double sy2 = npts == 1 ? s2.lo : s2.lo + s2.width() * g / (npts - 1);
    const double m01 = std::sqrt(std::max(m.var_y_given_s[0] - sy2, 0.0) / (omr * m.var_s[1]));
    const double m10 = std::sqrt(std::max(m.var_y_given_s[1] - sy2, 0.0) / (omr * m.var_s[0]));
    for (int s01 = -1; s01 <= 1; s01 += 2) {
      if (assumption == Assumption::same_sign && s01 != m.sign_beta_tt[0]) continue;
      for (int s10 = -1; s10 <= 1; s10 += 2) {
        if (assumption == Assumption::same_sign && s10 != m.sign_beta_tt[1]) continue;
        const double v = pce_from_marginal(marg, rho, s01 * m01, s10 * m10, u);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!(lo <= hi)) throw NumericalError("pce_band: empty feasible set");
  return Interval(lo, hi);
}

const char* assumption_name(Assumption a) {
  switch (a) {
    case Assumption::none: return "none";
    case Assumption::same_sign: return "same_sign";
    case Assumption::dominant: return "dominant";
  }
  return "none";
}

Assumption assumption_from_name(const std::string& name) {
  if (name == "none") return Assumption::none;
  if (name == "same_sign") return Assumption::same_sign;
  if (name == "dominant") return Assumption::dominant;
  throw ConfigError("unknown assumption '" + name + "' (expected none|same_sign|dominant)");
}

namespace {
nlohmann::ordered_json intervals_json(const PirRegion& r) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& iv : r.intervals) arr.push_back({iv.lo, iv.hi});
  nlohmann::ordered_json o;
  o["intervals"] = arr;
  return o;
}
}  // namespace

nlohmann::ordered_json region_report(const ObservedMoments& m, double rho, Assumption a) {
  PirPair pair;
  switch (a) {
    case Assumption::none: pair = pir_unconstrained(m, rho); break;
    case Assumption::same_sign: pair = pir_same_sign(m, rho); break;
    case Assumption::dominant: pair = pir_dominant(m, rho); break;
  }
  const Interval s2 = sigma_y2_bounds(
      m, a == Assumption::dominant ? Assumption::dominant : Assumption::none);
  nlohmann::ordered_json o;
  o["assumption"] = assumption_name(a);
  o["rho"] = rho;
  o["beta01"] = intervals_json(pair.beta01);
  o["beta10"] = intervals_json(pair.beta10);
  o["sigma_y2_bounds"] = {s2.lo, s2.hi};
  o["constraint_rhs"] = pair.beta01.constraint_rhs;
  // which arm has the larger conditional outcome variance and hence carries
  // the two-interval region; arm roles swap automatically when it is arm 0
  o["wider_conditional_variance_arm"] = m.var_y_given_s[1] >= m.var_y_given_s[0] ? 1 : 0;
  return o;
}

}  // namespace prinstrat
