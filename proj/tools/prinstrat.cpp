// prinstrat: simulate, fit, bound and study principal-stratification models
// with continuous or binary intermediates.
//
// Every command is driven by a single JSON config; command-line flags are
// sugar that override config keys, and the effective config is echoed into
// each output so a run is reproducible from its artifacts alone.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"

#include "prinstrat/asymvar.hpp"
#include "prinstrat/binary.hpp"
#include "prinstrat/csv.hpp"
#include "prinstrat/gibbs.hpp"
#include "prinstrat/harness.hpp"
#include "prinstrat/kernels.hpp"
#include "prinstrat/model.hpp"
#include "prinstrat/pir.hpp"

namespace ps = prinstrat;
using json = nlohmann::ordered_json;

namespace {

void check_keys(const json& obj, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ps::ConfigError(where + ": expected an object");
  for (const auto& item : obj.items())
    if (!allowed.count(item.key()))
      throw ps::ConfigError(where + ": unknown key '" + item.key() + "'");
}

double jget(const json& o, const std::string& key, double dflt) {
  return o.contains(key) ? o.at(key).get<double>() : dflt;
}

Eigen::Vector2d jget2(const json& o, const std::string& key, Eigen::Vector2d dflt) {
  if (!o.contains(key)) return dflt;
  const auto& a = o.at(key);
  if (!a.is_array() || a.size() != 2)
    throw ps::ConfigError("'" + key + "' must be an array of length 2");
  return {a[0].get<double>(), a[1].get<double>()};
}

Eigen::VectorXd jgetvec(const json& o, const std::string& key) {
  if (!o.contains(key)) return Eigen::VectorXd();
  const auto& a = o.at(key);
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

ps::JointParams parse_joint(const json& t) {
  check_keys(t, "truth",
             {"beta0", "beta1", "lambda0", "lambda1", "sigma_y2", "phi0", "phi1",
              "sigma_s0", "sigma_s1", "rho", "gamma", "alpha"});
  ps::JointParams p;
  p.beta0 = jget2(t, "beta0", {0.0, 0.0});
  p.beta1 = jget2(t, "beta1", {0.0, 0.0});
  p.lambda0 = jget(t, "lambda0", 0.0);
  p.lambda1 = jget(t, "lambda1", 0.0);
  p.sigma_y2 = jget(t, "sigma_y2", 1.0);
  p.phi0 = jget(t, "phi0", 0.0);
  p.phi1 = jget(t, "phi1", 0.0);
  p.sigma_s0 = jget(t, "sigma_s0", 1.0);
  p.sigma_s1 = jget(t, "sigma_s1", 1.0);
  p.rho = jget(t, "rho", 0.0);
  p.gamma = jgetvec(t, "gamma");
  p.alpha = jgetvec(t, "alpha");
  if (p.gamma.size() != p.alpha.size())
    throw ps::ConfigError("truth: gamma and alpha must have the same length");
  p.validate();
  return p;
}

ps::BinaryParams parse_binary(const json& t) {
  check_keys(t, "truth", {"beta0", "beta1", "lambda0", "lambda1", "sigma_y2", "p"});
  ps::BinaryParams p;
  p.beta0 = jget2(t, "beta0", {0.0, 0.0});
  p.beta1 = jget2(t, "beta1", {0.0, 0.0});
  p.lambda0 = jget(t, "lambda0", 0.0);
  p.lambda1 = jget(t, "lambda1", 0.0);
  p.sigma_y2 = jget(t, "sigma_y2", 1.0);
  if (!t.contains("p") || !t.at("p").is_array() || t.at("p").size() != 4)
    throw ps::ConfigError("binary truth: 'p' must be [p00, p01, p10, p11]");
  p.p00 = t.at("p")[0].get<double>();
  p.p01 = t.at("p")[1].get<double>();
  p.p10 = t.at("p")[2].get<double>();
  p.p11 = t.at("p")[3].get<double>();
  p.validate();
  return p;
}

ps::PriorSpec parse_prior(const json& o) {
  check_keys(o, "prior",
             {"beta0_mean", "beta0_var", "beta1_mean", "beta1_var", "lambda0_mean",
              "lambda0_var", "lambda1_mean", "lambda1_var", "gamma_mean", "gamma_var",
              "alpha_mean", "alpha_var", "phi0_mean", "phi0_var", "phi1_mean", "phi1_var",
              "sigma_y2_shape", "sigma_y2_rate", "sigma_s_shape", "sigma_s_rate",
              "rho_interval"});
  ps::PriorSpec p;
  p.beta0_mean = jget2(o, "beta0_mean", p.beta0_mean);
  p.beta0_var = jget2(o, "beta0_var", p.beta0_var);
  p.beta1_mean = jget2(o, "beta1_mean", p.beta1_mean);
  p.beta1_var = jget2(o, "beta1_var", p.beta1_var);
  p.lambda0_mean = jget(o, "lambda0_mean", p.lambda0_mean);
  p.lambda0_var = jget(o, "lambda0_var", p.lambda0_var);
  p.lambda1_mean = jget(o, "lambda1_mean", p.lambda1_mean);
  p.lambda1_var = jget(o, "lambda1_var", p.lambda1_var);
  p.gamma_mean = jget(o, "gamma_mean", p.gamma_mean);
  p.gamma_var = jget(o, "gamma_var", p.gamma_var);
  p.alpha_mean = jget(o, "alpha_mean", p.alpha_mean);
  p.alpha_var = jget(o, "alpha_var", p.alpha_var);
  p.phi0_mean = jget(o, "phi0_mean", p.phi0_mean);
  p.phi0_var = jget(o, "phi0_var", p.phi0_var);
  p.phi1_mean = jget(o, "phi1_mean", p.phi1_mean);
  p.phi1_var = jget(o, "phi1_var", p.phi1_var);
  p.sigma_y2_shape = jget(o, "sigma_y2_shape", p.sigma_y2_shape);
  p.sigma_y2_rate = jget(o, "sigma_y2_rate", p.sigma_y2_rate);
  p.sigma_s_shape = jget(o, "sigma_s_shape", p.sigma_s_shape);
  p.sigma_s_rate = jget(o, "sigma_s_rate", p.sigma_s_rate);
  if (o.contains("rho_interval")) {
    const auto& iv = o.at("rho_interval");
    if (!iv.is_array() || iv.size() != 2)
      throw ps::ConfigError("prior: rho_interval must be [lo, hi]");
    p.rho_interval = ps::Interval(iv[0].get<double>(), iv[1].get<double>());
  }
  p.validate();
  return p;
}

ps::ConstraintSet parse_constraints(const json& o) {
  if (o.is_string())
    return ps::regime_constraints(o.get<std::string>(), std::nullopt, false);
  check_keys(o, "constraints",
             {"pi", "zero_beta01", "shared_baseline", "same_sign_arm0", "same_sign_arm1",
              "dominant_effect", "sign_positive", "sigma_y2_floor_frac", "rho_fixed",
              "equal_sigma_s"});
  ps::ConstraintSet c;
  auto flag = [&](const char* k, bool dflt) {
    return o.contains(k) ? o.at(k).get<bool>() : dflt;
  };
  c.pi = flag("pi", false);
  c.zero_beta01 = flag("zero_beta01", false);
  c.shared_baseline = flag("shared_baseline", false);
  c.same_sign_arm0 = flag("same_sign_arm0", false);
  c.same_sign_arm1 = flag("same_sign_arm1", false);
  c.dominant_effect = flag("dominant_effect", false);
  c.sign_positive = flag("sign_positive", false);
  c.sigma_y2_floor_frac = jget(o, "sigma_y2_floor_frac", c.sigma_y2_floor_frac);
  if (o.contains("rho_fixed") && !o.at("rho_fixed").is_null())
    c.rho_fixed = o.at("rho_fixed").get<double>();
  c.equal_sigma_s = flag("equal_sigma_s", false);
  c.validate();
  return c;
}

ps::ChainConfig parse_chain(const json& o, ps::ChainConfig c) {
  check_keys(o, "chain",
             {"n_iter", "burn_in", "thin", "rho_proposal_sd", "sigma_s_proposal_sd",
              "p11_grid_points"});
  if (o.contains("n_iter")) c.n_iter = o.at("n_iter").get<int>();
  if (o.contains("burn_in")) c.burn_in = o.at("burn_in").get<int>();
  if (o.contains("thin")) c.thin = o.at("thin").get<int>();
  c.rho_proposal_sd = jget(o, "rho_proposal_sd", c.rho_proposal_sd);
  c.sigma_s_proposal_sd = jget(o, "sigma_s_proposal_sd", c.sigma_s_proposal_sd);
  if (o.contains("p11_grid_points")) c.p11_grid_points = o.at("p11_grid_points").get<int>();
  return c;
}

std::vector<ps::PrincipalStratum> parse_strata(const json& o) {
  std::vector<ps::PrincipalStratum> out;
  if (!o.is_array()) throw ps::ConfigError("strata: expected an array of [s0, s1] pairs");
  for (const auto& e : o) {
    if (!e.is_array() || e.size() != 2)
      throw ps::ConfigError("strata: each entry must be [s0, s1]");
    out.push_back({e[0].get<double>(), e[1].get<double>()});
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw ps::DataError("cannot write file: " + path);
  f << text;
  if (!f) throw ps::DataError("failed writing file: " + path);
}

json summary_json(const ps::PosteriorDraws& d, const json& config_echo) {
  json cols;
  for (const auto& name : d.names) {
    json c;
    c["mean"] = d.mean(name);
    c["sd"] = d.sd(name);
    c["q025"] = d.quantile(name, 0.025);
    c["q975"] = d.quantile(name, 0.975);
    cols[name] = c;
  }
  json accept;
  accept["rho"] = d.accept_rho ? json(*d.accept_rho) : json(nullptr);
  accept["sigma_s0"] = d.accept_sigma_s0 ? json(*d.accept_sigma_s0) : json(nullptr);
  accept["sigma_s1"] = d.accept_sigma_s1 ? json(*d.accept_sigma_s1) : json(nullptr);
  json strata = json::array();
  for (const auto& u : d.strata) strata.push_back({u.s0, u.s1});
  json o;
  o["columns"] = cols;
  o["acceptance"] = accept;
  o["sigma_y2_floor"] = d.sigma_y2_floor;
  o["frac_at_floor"] = d.frac_at_floor;
  o["pce_strata"] = strata;
  o["retained"] = d.draws.rows();
  o["config"] = config_echo;
  return o;
}

int run_simulate(const json& cfg) {
  check_keys(cfg, "config",
             {"command", "seed", "threads", "model", "truth", "n", "out"});
  const std::string model = cfg.contains("model") ? cfg.at("model").get<std::string>()
                                                  : std::string("continuous");
  if (!cfg.contains("truth")) throw ps::ConfigError("simulate: 'truth' is required");
  if (!cfg.contains("out")) throw ps::ConfigError("simulate: 'out' is required");
  const int n = cfg.contains("n") ? cfg.at("n").get<int>() : 0;
  if (n < 1) throw ps::ConfigError("simulate: 'n' must be >= 1");
  const std::uint64_t seed = cfg.contains("seed") ? cfg.at("seed").get<std::uint64_t>() : 0;
  ps::RngStream rng(seed, 0);

  ps::Dataset data;
  if (model == "continuous") {
    const ps::JointParams truth = parse_joint(cfg.at("truth"));
    if (truth.gamma.size() > 0) {
      const int p = static_cast<int>(truth.gamma.size());
      ps::CovariateGen gen = [p](ps::RngStream& r) {
        Eigen::VectorXd x(p);
        for (int j = 0; j < p; ++j) x(j) = r.normal();
        return x;
      };
      data = ps::simulate(truth, n, &gen, rng);
    } else {
      data = ps::simulate(truth, n, nullptr, rng);
    }
  } else if (model == "binary") {
    data = ps::simulate_binary(parse_binary(cfg.at("truth")), n, rng);
  } else {
    throw ps::ConfigError("simulate: model must be 'continuous' or 'binary'");
  }
  ps::write_dataset_csv(data, cfg.at("out").get<std::string>());

  // summary moments per arm
  for (int arm = 0; arm < 2; ++arm) {
    double my = 0.0, ms = 0.0, n_arm = 0.0;
    for (int i = 0; i < data.n(); ++i) {
      if (data.t(i) != arm) continue;
      my += data.y(i);
      ms += data.s(i);
      n_arm += 1.0;
    }
    std::cout << "arm " << arm << ": n=" << static_cast<int>(n_arm)
              << " mean(y)=" << (n_arm > 0 ? my / n_arm : 0.0)
              << " mean(s)=" << (n_arm > 0 ? ms / n_arm : 0.0) << "\n";
  }
  std::cout << "wrote " << data.n() << " rows to " << cfg.at("out").get<std::string>()
            << "\n";
  return 0;
}

bool looks_binary(const ps::Dataset& d) {
  for (int i = 0; i < d.n(); ++i)
    if (d.s(i) != 0.0 && d.s(i) != 1.0) return false;
  return true;
}

int run_fit(const json& cfg) {
  check_keys(cfg, "config",
             {"command", "seed", "threads", "data", "model", "prior", "constraints",
              "chain", "strata", "rho", "out_draws", "out_summary"});
  if (!cfg.contains("data")) throw ps::ConfigError("fit: 'data' is required");
  ps::Dataset data = ps::read_dataset_csv(cfg.at("data").get<std::string>());
  data.validate(true);

  std::string model = cfg.contains("model") ? cfg.at("model").get<std::string>() : "auto";
  if (model == "auto") model = looks_binary(data) ? "binary" : "continuous";
  if (model == "binary" && !looks_binary(data))
    throw ps::DataError("fit: binary model requested but s is not 0/1");

  ps::PriorSpec prior = cfg.contains("prior") ? parse_prior(cfg.at("prior")) : ps::PriorSpec{};
  ps::ConstraintSet cons = cfg.contains("constraints")
                               ? parse_constraints(cfg.at("constraints"))
                               : ps::ConstraintSet{};
  if (cfg.contains("rho") && !cfg.at("rho").is_null())
    cons.rho_fixed = cfg.at("rho").get<double>();
  ps::ChainConfig chain = model == "binary" ? ps::binary_chain_defaults() : ps::ChainConfig{};
  if (cfg.contains("chain")) chain = parse_chain(cfg.at("chain"), chain);
  chain.seed = cfg.contains("seed") ? cfg.at("seed").get<std::uint64_t>() : 0;

  std::vector<ps::PrincipalStratum> strata;
  if (cfg.contains("strata")) {
    strata = parse_strata(cfg.at("strata"));
  } else if (model == "binary") {
    strata = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  } else {
    // default targets: quartile combinations of the observed intermediate
    // per arm
    std::vector<double> s0v, s1v;
    for (int i = 0; i < data.n(); ++i)
      (data.t(i) == 0 ? s0v : s1v).push_back(data.s(i));
    for (double q0 : {0.25, 0.5, 0.75})
      for (double q1 : {0.25, 0.5, 0.75})
        strata.push_back({ps::quantile_type7(s0v, q0), ps::quantile_type7(s1v, q1)});
  }

  ps::PosteriorDraws draws;
  if (model == "binary") {
    draws = ps::gibbs_binary(data, prior, cons, chain, strata);
  } else {
    draws = ps::run_chain(data, prior, cons, chain, strata);
  }

  json echo = cfg;
  echo["model"] = model;
  if (cfg.contains("out_draws"))
    ps::write_table_csv(draws.names, draws.draws, cfg.at("out_draws").get<std::string>());
  const json summary = summary_json(draws, echo);
  if (cfg.contains("out_summary"))
    write_text(cfg.at("out_summary").get<std::string>(), summary.dump(2) + "\n");

  std::cout << "retained draws: " << draws.draws.rows() << "\n";
  std::cout << "parameter posterior summaries (mean [2.5%, 97.5%]):\n";
  for (const auto& name : draws.names) {
    std::cout << "  " << name << ": " << draws.mean(name) << " ["
              << draws.quantile(name, 0.025) << ", " << draws.quantile(name, 0.975)
              << "]\n";
  }
  return 0;
}

ps::ObservedMoments parse_moments(const json& o) {
  check_keys(o, "moments", {"var_y_given_s", "var_s", "var_y", "sign_beta_tt"});
  ps::ObservedMoments m;
  auto arr2 = [&](const char* key, std::array<double, 2>& dst) {
    if (!o.contains(key)) throw ps::ConfigError(std::string("moments: missing '") + key + "'");
    const auto& a = o.at(key);
    if (!a.is_array() || a.size() != 2)
      throw ps::ConfigError(std::string("moments: '") + key + "' must be length-2");
    dst[0] = a[0].get<double>();
    dst[1] = a[1].get<double>();
  };
  arr2("var_y_given_s", m.var_y_given_s);
  arr2("var_s", m.var_s);
  arr2("var_y", m.var_y);
  if (o.contains("sign_beta_tt")) {
    m.sign_beta_tt[0] = o.at("sign_beta_tt")[0].get<int>();
    m.sign_beta_tt[1] = o.at("sign_beta_tt")[1].get<int>();
  }
  for (int t = 0; t < 2; ++t)
    m.cor_ys[t] = std::sqrt(std::max(1.0 - m.var_y_given_s[t] / m.var_y[t], 0.0)) *
                  m.sign_beta_tt[t];
  m.validate();
  return m;
}

int run_pir(const json& cfg) {
  check_keys(cfg, "config",
             {"command", "seed", "threads", "data", "moments", "truth", "rho", "rho_sweep",
              "assumptions", "strata", "band_grid_points", "out"});
  std::optional<ps::ObservedMoments> moments;
  std::optional<ps::MarginalParams> marginal;
  if (cfg.contains("truth")) {
    const ps::JointParams truth = parse_joint(cfg.at("truth"));
    marginal = ps::marginalize(truth);
    moments = ps::moments_from_marginal(*marginal);
  } else if (cfg.contains("moments")) {
    moments = parse_moments(cfg.at("moments"));
  } else if (cfg.contains("data")) {
    ps::Dataset data = ps::read_dataset_csv(cfg.at("data").get<std::string>());
    const ps::Dataset resid = ps::residualize(data).data;
    moments = ps::moments_from_data(resid);
    // plug-in marginal parameters for the effect bands
    ps::MarginalParams m;
    for (int arm = 0; arm < 2; ++arm) {
      double my = 0.0, ms = 0.0, cnt = 0.0;
      for (int i = 0; i < resid.n(); ++i) {
        if (resid.t(i) != arm) continue;
        my += resid.y(i);
        ms += resid.s(i);
        cnt += 1.0;
      }
      m.mu_y_prime[arm] = my / cnt;
      m.phi[arm] = ms / cnt;
      m.zeta[arm] = moments->var_y[arm];
      m.sigma_s[arm] = std::sqrt(moments->var_s[arm]);
      m.psi[arm] = moments->cor_ys[arm] * std::sqrt(moments->var_y[arm]);
    }
    marginal = m;
  } else {
    throw ps::ConfigError("pir: provide one of 'data', 'moments', or 'truth'");
  }

  std::vector<double> rhos;
  if (cfg.contains("rho_sweep"))
    for (const auto& r : cfg.at("rho_sweep")) rhos.push_back(r.get<double>());
  else if (cfg.contains("rho"))
    rhos.push_back(cfg.at("rho").get<double>());
  else
    throw ps::ConfigError("pir: provide 'rho' or 'rho_sweep'");

  std::vector<std::string> assumptions{"none", "same_sign", "dominant"};
  if (cfg.contains("assumptions")) {
    assumptions.clear();
    for (const auto& a : cfg.at("assumptions")) assumptions.push_back(a.get<std::string>());
  }
  const int band_pts =
      cfg.contains("band_grid_points") ? cfg.at("band_grid_points").get<int>() : 10000;

  json out;
  out["config"] = cfg;
  json reports = json::array();
  for (double rho : rhos) {
    for (const auto& aname : assumptions) {
      const ps::Assumption a = ps::assumption_from_name(aname);
      json rep;
      try {
        rep = ps::region_report(*moments, rho, a);
        if (cfg.contains("strata") && marginal) {
          json bands = json::array();
          for (const auto& u : parse_strata(cfg.at("strata"))) {
            const ps::Interval band = ps::pce_band(*moments, *marginal, rho, u, a, band_pts);
            bands.push_back({{"u", {u.s0, u.s1}}, {"band", {band.lo, band.hi}}});
          }
          rep["pce_bands"] = bands;
        }
      } catch (const ps::NumericalError& e) {
        rep["assumption"] = aname;
        rep["rho"] = rho;
        rep["error"] = e.what();
      }
      reports.push_back(rep);
    }
  }
  out["regions"] = reports;
  const std::string text = out.dump(2) + "\n";
  if (cfg.contains("out")) write_text(cfg.at("out").get<std::string>(), text);
  std::cout << text;
  return 0;
}

int run_asym(const json& cfg) {
  check_keys(cfg, "config",
             {"command", "seed", "threads", "t_bar", "beta10", "beta01", "sigma_s0",
              "sigma_s1", "sigma_y2", "rho", "n", "rate", "out"});
  json out;
  out["config"] = cfg;
  if (cfg.contains("rate")) {
    const auto& r = cfg.at("rate");
    check_keys(r, "rate", {"n_values", "var_values"});
    std::vector<double> ns, vars;
    for (const auto& v : r.at("n_values")) ns.push_back(v.get<double>());
    for (const auto& v : r.at("var_values")) vars.push_back(v.get<double>());
    out["slope"] = ps::rate_fit(ns, vars);
  } else {
    ps::AsymVarInputs in;
    in.t_bar = jget(cfg, "t_bar", 0.5);
    in.beta10 = jget(cfg, "beta10", 0.0);
    in.beta01 = jget(cfg, "beta01", 0.0);
    in.sigma_s0 = jget(cfg, "sigma_s0", 1.0);
    in.sigma_s1 = jget(cfg, "sigma_s1", 1.0);
    in.sigma_y2 = jget(cfg, "sigma_y2", 1.0);
    in.rho = jget(cfg, "rho", 0.0);
    in.n = cfg.contains("n") ? cfg.at("n").get<std::int64_t>() : 1;
    const std::optional<double> v = ps::posterior_var_approx(in);
    out["estimable"] = v.has_value();
    out["posterior_var"] = v ? json(*v) : json(nullptr);
    out["posterior_sd"] = v ? json(std::sqrt(*v)) : json(nullptr);
  }
  const std::string text = out.dump(2) + "\n";
  if (cfg.contains("out")) write_text(cfg.at("out").get<std::string>(), text);
  std::cout << text;
  return 0;
}

int run_scenario_cmd(const json& cfg, int threads) {
  check_keys(cfg, "config",
             {"command", "seed", "threads", "scenario", "n", "replicates", "regimes",
              "strata", "chain", "base_seed", "n_ladder", "rho_fixed", "equal_sigma_s",
              "truth", "binary_truth", "out_dir", "check", "format", "persist_draws"});
  if (!cfg.contains("scenario")) throw ps::ConfigError("scenario: 'scenario' id is required");
  const std::string id = cfg.at("scenario").get<std::string>();
  ps::ScenarioSpec spec = ps::scenario_defaults(id);
  if (cfg.contains("truth")) spec.truth = parse_joint(cfg.at("truth"));
  if (cfg.contains("binary_truth")) spec.binary_truth = parse_binary(cfg.at("binary_truth"));
  if (cfg.contains("n")) spec.n = cfg.at("n").get<int>();
  if (cfg.contains("replicates")) spec.n_replicates = cfg.at("replicates").get<int>();
  if (cfg.contains("regimes")) {
    spec.regimes.clear();
    for (const auto& r : cfg.at("regimes")) spec.regimes.push_back(r.get<std::string>());
  }
  if (cfg.contains("strata")) spec.strata = parse_strata(cfg.at("strata"));
  if (cfg.contains("chain")) spec.chain = parse_chain(cfg.at("chain"), spec.chain);
  if (cfg.contains("base_seed")) spec.base_seed = cfg.at("base_seed").get<std::uint64_t>();
  if (cfg.contains("n_ladder")) {
    spec.n_ladder.clear();
    for (const auto& v : cfg.at("n_ladder")) spec.n_ladder.push_back(v.get<int>());
  }
  if (cfg.contains("rho_fixed") && !cfg.at("rho_fixed").is_null())
    spec.rho_fixed = cfg.at("rho_fixed").get<double>();
  if (cfg.contains("equal_sigma_s")) spec.equal_sigma_s = cfg.at("equal_sigma_s").get<bool>();
  if (id == "rho_ident" || id == "rate_study")
    spec.prior.rho_interval = ps::Interval(0.0, 0.95);
  spec.validate();

  const bool check = cfg.contains("check") && cfg.at("check").get<bool>();
  std::string out_dir = cfg.contains("out_dir") ? cfg.at("out_dir").get<std::string>() : "";
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  auto opath = [&](const std::string& name) { return out_dir + "/" + name; };
  if (cfg.contains("persist_draws") && cfg.at("persist_draws").get<bool>()) {
    if (out_dir.empty())
      throw ps::ConfigError("scenario: persist_draws requires out_dir");
    spec.persist_draws_dir = out_dir;
  }

  std::vector<ps::GateResult> gates;
  if (id == "table1" || id == "custom") {
    const ps::ScenarioReport report = ps::run_scenario(spec, threads);
    if (!out_dir.empty()) {
      write_text(opath("report.json"), ps::emit_report(report, ps::ReportFormat::json));
      write_text(opath("report.csv"), ps::emit_report(report, ps::ReportFormat::csv));
      write_text(opath("report.md"), ps::emit_report(report, ps::ReportFormat::markdown));
    }
    std::cout << ps::emit_report(report, ps::ReportFormat::markdown);
    if (check && id == "table1") gates = ps::check_table1(report);
  } else if (id == "rho_ident") {
    const ps::RhoIdentResult res = ps::rho_ident_study(spec, threads);
    json o;
    o["config"] = res.config_echo;
    json cells = json::array();
    for (const auto& c : res.cells) {
      cells.push_back({{"n", c.n},
                       {"regime", c.regime},
                       {"mean", c.mean},
                       {"sd", c.sd},
                       {"seed", c.seed},
                       {"sim_stream", c.sim_stream},
                       {"chain_stream", c.chain_stream}});
      std::cout << "n=" << c.n << " regime=" << c.regime << " rho mean=" << c.mean
                << " sd=" << c.sd << "\n";
    }
    o["cells"] = cells;
    if (!out_dir.empty()) {
      write_text(opath("rho_ident.json"), o.dump(2) + "\n");
      // density points for plotting, one row per (n, regime, bin)
      std::ostringstream densities;
      densities << "n,regime,rho,density\n";
      const int bins = 100;
      for (const auto& c : res.cells) {
        std::vector<int> counts(bins, 0);
        const double lo = spec.prior.rho_interval.lo, hi = spec.prior.rho_interval.hi;
        for (double r : c.rho_draws) {
          int b = static_cast<int>((r - lo) / (hi - lo) * bins);
          b = std::clamp(b, 0, bins - 1);
          ++counts[static_cast<std::size_t>(b)];
        }
        for (int b = 0; b < bins; ++b) {
          const double mid = lo + (hi - lo) * (b + 0.5) / bins;
          const double dens = counts[static_cast<std::size_t>(b)] /
                              (c.rho_draws.size() * (hi - lo) / bins);
          densities << c.n << ',' << c.regime << ',' << ps::format_double(mid) << ','
                    << ps::format_double(dens) << "\n";
        }
      }
      write_text(opath("rho_density.csv"), densities.str());
    }
    if (check) gates = ps::check_rho_ident(res);
  } else if (id == "rate_study") {
    const ps::RateStudyResult res = ps::rate_study(spec, threads);
    json o;
    o["config"] = res.config_echo;
    o["slope"] = res.slope;
    json pts = json::array();
    std::ostringstream cs;
    cs << "n,var_empirical,var_theorem,log_n,log_var\n";
    for (const auto& pt : res.points) {
      pts.push_back({{"n", pt.n},
                     {"var_empirical", pt.var_empirical},
                     {"var_theorem", pt.var_theorem ? json(*pt.var_theorem) : json(nullptr)},
                     {"rho_mean", pt.rho_mean}});
      cs << pt.n << ',' << ps::format_double(pt.var_empirical) << ','
         << (pt.var_theorem ? ps::format_double(*pt.var_theorem) : "") << ','
         << ps::format_double(std::log(pt.n)) << ','
         << ps::format_double(std::log(pt.var_empirical)) << "\n";
      std::cout << "n=" << pt.n << " empirical var=" << pt.var_empirical
                << (pt.var_theorem ? " formula=" + std::to_string(*pt.var_theorem) : "")
                << "\n";
    }
    o["points"] = pts;
    std::cout << "log-log slope: " << res.slope << "\n";
    if (!out_dir.empty()) {
      write_text(opath("rate_study.json"), o.dump(2) + "\n");
      write_text(opath("rate_points.csv"), cs.str());
    }
    if (check) gates = ps::check_rate_study(res, spec);
  } else if (id == "binary_sign") {
    const ps::BinarySignResult res = ps::binary_sign_study(spec, threads);
    json o;
    o["config"] = res.config_echo;
    o["constrained"] = summary_json(res.constrained, res.config_echo)["columns"];
    o["unconstrained_beta10_sign_mass"] = {{"positive", res.frac_b10_positive},
                                           {"negative", res.frac_b10_negative}};
    std::cout << "constrained beta01 mean=" << res.constrained.mean("beta01")
              << " beta10 mean=" << res.constrained.mean("beta10") << "\n"
              << "unconstrained beta10 sign mass +" << res.frac_b10_positive << " / -"
              << res.frac_b10_negative << "\n";
    if (!out_dir.empty()) write_text(opath("binary_sign.json"), o.dump(2) + "\n");
    if (check) gates = ps::check_binary_sign(res);
  } else if (id == "binary_p11") {
    const ps::BinaryP11Result res = ps::binary_p11_study(spec, threads);
    json o;
    o["config"] = res.config_echo;
    o["p11_mean"] = res.p11_mean;
    o["summary"] = summary_json(res.draws, res.config_echo)["columns"];
    std::cout << "p11 posterior mean=" << res.p11_mean << "\n";
    if (!out_dir.empty()) write_text(opath("binary_p11.json"), o.dump(2) + "\n");
    if (check) gates = ps::check_binary_p11(res);
  } else {
    throw ps::ConfigError("unknown scenario '" + id + "'");
  }

  if (check) {
    bool all = true;
    for (const auto& g : gates) {
      std::cout << (g.pass ? "[PASS] " : "[FAIL] ") << g.name << ": " << g.detail << "\n";
      all = all && g.pass;
    }
    if (!all) return 5;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"principal-stratification analysis under violations of principal ignorability"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  int threads = 0;
  std::optional<int> n_override;
  std::optional<std::string> out_override, data_override, constraints_override;
  std::optional<double> rho_override;
  std::optional<std::string> scenario_override, out_dir_override;
  std::optional<int> replicates_override;
  bool check_flag = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed_override, "override config seed");
    sub->add_option("--threads", threads,
                    "worker cap (default: PRINSTRAT_THREADS or hardware)");
  };
  CLI::App* sim = app.add_subcommand("simulate", "generate a dataset CSV from a truth");
  add_common(sim);
  sim->add_option("--n", n_override, "rows to simulate");
  sim->add_option("--out", out_override, "output CSV path");
  CLI::App* fit = app.add_subcommand("fit", "run one Gibbs chain on a dataset");
  add_common(fit);
  fit->add_option("--data", data_override, "dataset CSV");
  fit->add_option("--rho", rho_override, "fix the strata association (binary: p11)");
  fit->add_option("--constraints", constraints_override,
                  "constraint preset (none|dominant|same_sign|zero_beta01|"
                  "two_constraints|pi|sign_positive)");
  CLI::App* pir = app.add_subcommand("pir", "partial identification regions and bands");
  add_common(pir);
  pir->add_option("--data", data_override, "dataset CSV");
  pir->add_option("--rho", rho_override, "strata correlation");
  pir->add_option("--out", out_override, "output JSON path");
  CLI::App* asym = app.add_subcommand("asym", "posterior-variance approximation / rate fit");
  add_common(asym);
  CLI::App* scen = app.add_subcommand("scenario", "run a simulation study scenario");
  add_common(scen);
  scen->add_option("--scenario", scenario_override, "scenario id");
  scen->add_option("--replicates", replicates_override, "replicate count");
  scen->add_option("--out-dir", out_dir_override, "report output directory");
  scen->add_flag("--check", check_flag, "evaluate the scenario's acceptance gates");

  CLI11_PARSE(app, argc, argv);

  try {
    json cfg = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ps::ConfigError("cannot open config file: " + config_path);
      try {
        cfg = json::parse(in);
      } catch (const std::exception& e) {
        throw ps::ConfigError(std::string("config parse error: ") + e.what());
      }
    }
    if (seed_override) cfg["seed"] = *seed_override;
    if (n_override) cfg["n"] = *n_override;
    if (out_override) cfg["out"] = *out_override;
    if (data_override) cfg["data"] = *data_override;
    if (rho_override) cfg["rho"] = *rho_override;
    if (constraints_override) cfg["constraints"] = *constraints_override;
    if (scenario_override) cfg["scenario"] = *scenario_override;
    if (replicates_override) cfg["replicates"] = *replicates_override;
    if (out_dir_override) cfg["out_dir"] = *out_dir_override;
    if (check_flag) cfg["check"] = true;
    if (threads > 0) cfg["threads"] = threads;
    const int n_threads =
        ps::resolve_threads(cfg.contains("threads") ? cfg.at("threads").get<int>() : 0);

    if (app.got_subcommand(sim)) return run_simulate(cfg);
    if (app.got_subcommand(fit)) return run_fit(cfg);
    if (app.got_subcommand(pir)) return run_pir(cfg);
    if (app.got_subcommand(asym)) return run_asym(cfg);
    if (app.got_subcommand(scen)) return run_scenario_cmd(cfg, n_threads);
    throw ps::ConfigError("no subcommand");
  } catch (const ps::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ps::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  }
}
