#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const char* cli_path() { return PRINSTRAT_CLI_PATH; }

struct TempDir {
  fs::path dir;
  TempDir() {
    dir = fs::temp_directory_path() / ("prinstrat_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(cli_path()) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path);
  f << j.dump(2);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json lrc_truth_json() {
  json t;
  t["beta0"] = {11.5, 0.0};
  t["beta1"] = {11.5, 96.0};
  t["lambda0"] = -0.5;
  t["lambda1"] = -0.5;
  t["sigma_y2"] = 196.0;
  t["phi0"] = 0.89;
  t["phi1"] = 0.70;
  t["sigma_s0"] = 0.25;
  t["sigma_s1"] = 0.25;
  t["rho"] = 0.75;
  return t;
}

}  // namespace

TEST_CASE("simulate: deterministic output files, exit codes for bad configs") {
  TempDir tmp;
  json cfg;
  cfg["model"] = "continuous";
  cfg["truth"] = lrc_truth_json();
  cfg["n"] = 120;
  cfg["seed"] = 7;
  cfg["out"] = tmp.path("a.csv");
  write_json(tmp.path("sim.json"), cfg);
  REQUIRE(run_cli("simulate --config " + tmp.path("sim.json")) == 0);
  const std::string first = slurp(tmp.path("a.csv"));
  CHECK(first.rfind("y,t,s,s0,s1", 0) == 0);

  // same config, same bytes
  REQUIRE(run_cli("simulate --config " + tmp.path("sim.json")) == 0);
  CHECK(slurp(tmp.path("a.csv")) == first);

  // different seed, different bytes
  REQUIRE(run_cli("simulate --config " + tmp.path("sim.json") + " --seed 8") == 0);
  CHECK(slurp(tmp.path("a.csv")) != first);

  // n = 0 is a config error
  json bad = cfg;
  bad["n"] = 0;
  write_json(tmp.path("bad.json"), bad);
  CHECK(run_cli("simulate --config " + tmp.path("bad.json")) == 2);

  // unknown keys are rejected before any computation
  json unknown = cfg;
  unknown["replications"] = 3;
  write_json(tmp.path("unknown.json"), unknown);
  CHECK(run_cli("simulate --config " + tmp.path("unknown.json")) == 2);
}

TEST_CASE("fit: constraint presets enforce exact zeros; outputs reproducible") {
  TempDir tmp;
  json sim;
  sim["model"] = "continuous";
  sim["truth"] = lrc_truth_json();
  sim["n"] = 150;
  sim["seed"] = 11;
  sim["out"] = tmp.path("d.csv");
  write_json(tmp.path("sim.json"), sim);
  REQUIRE(run_cli("simulate --config " + tmp.path("sim.json")) == 0);

  json fit;
  fit["data"] = tmp.path("d.csv");
  fit["rho"] = 0.75;
  fit["constraints"] = "pi";
  fit["chain"] = {{"n_iter", 600}, {"burn_in", 100}, {"thin", 2}};
  fit["seed"] = 12;
  fit["strata"] = {{0.89, 0.35}};
  fit["out_draws"] = tmp.path("draws.csv");
  fit["out_summary"] = tmp.path("summary.json");
  write_json(tmp.path("fit.json"), fit);
  REQUIRE(run_cli("fit --config " + tmp.path("fit.json")) == 0);

  const json summary = json::parse(slurp(tmp.path("summary.json")));
  CHECK(summary.at("columns").at("beta01").at("mean") == 0.0);
  CHECK(summary.at("columns").at("beta10").at("mean") == 0.0);
  CHECK(summary.at("config").at("data") == tmp.path("d.csv"));
  CHECK(summary.at("retained") == 250);

  const std::string draws1 = slurp(tmp.path("draws.csv"));
  REQUIRE(run_cli("fit --config " + tmp.path("fit.json")) == 0);
  CHECK(slurp(tmp.path("draws.csv")) == draws1);  // byte-identical rerun

  // missing data file is a data error
  json nofile = fit;
  nofile["data"] = tmp.path("missing.csv");
  write_json(tmp.path("nofile.json"), nofile);
  CHECK(run_cli("fit --config " + tmp.path("nofile.json")) == 3);
}

TEST_CASE("fit: binary data is auto-detected and sign constraint applies") {
  TempDir tmp;
  json sim;
  sim["model"] = "binary";
  json t;
  t["beta0"] = {1.2, 0.6};
  t["beta1"] = {0.8, 1.2};
  t["lambda0"] = 0.9;
  t["lambda1"] = 0.5;
  t["sigma_y2"] = 0.25;
  t["p"] = {0.1, 0.3, 0.2, 0.4};
  sim["truth"] = t;
  sim["n"] = 400;
  sim["seed"] = 13;
  sim["out"] = tmp.path("b.csv");
  write_json(tmp.path("sim.json"), sim);
  REQUIRE(run_cli("simulate --config " + tmp.path("sim.json")) == 0);

  json fit;
  fit["data"] = tmp.path("b.csv");
  fit["constraints"] = "sign_positive";
  fit["rho"] = 0.4;  // known p11
  fit["chain"] = {{"n_iter", 500}, {"burn_in", 100}, {"thin", 2}};
  fit["seed"] = 14;
  fit["out_summary"] = tmp.path("bsum.json");
  write_json(tmp.path("fit.json"), fit);
  REQUIRE(run_cli("fit --config " + tmp.path("fit.json")) == 0);
  const json summary = json::parse(slurp(tmp.path("bsum.json")));
  CHECK(summary.at("config").at("model") == "binary");
  CHECK(summary.at("columns").contains("p11"));
  CHECK(summary.at("columns").at("beta01").at("q025").get<double>() > 0.0);
  CHECK(summary.at("columns").at("beta10").at("q025").get<double>() > 0.0);
}

TEST_CASE("pir: population regions, sweeps, and orientation notes") {
  TempDir tmp;
  json cfg;
  cfg["truth"] = lrc_truth_json();
  cfg["rho"] = 0.75;
  cfg["strata"] = {{0.89, 0.35}};
  cfg["out"] = tmp.path("region.json");
  write_json(tmp.path("pir.json"), cfg);
  REQUIRE(run_cli("pir --config " + tmp.path("pir.json")) == 0);
  const json out = json::parse(slurp(tmp.path("region.json")));
  REQUIRE(out.at("regions").size() == 3);  // none, same_sign, dominant
  const auto& none = out.at("regions")[0];
  CHECK(none.at("assumption") == "none");
  CHECK(none.at("beta10").at("intervals").size() == 2);
  const double inner = none.at("beta10").at("intervals")[1][0].get<double>();
  CHECK(inner == doctest::Approx(11.5).epsilon(1e-6));
  CHECK(none.at("pce_bands")[0].at("band")[0].get<double>() <= 33.6);
  CHECK(none.at("pce_bands")[0].at("band")[1].get<double>() >= 33.6);

  // rho sweep: endpoint magnitudes increase with rho
  json sweep;
  sweep["truth"] = lrc_truth_json();
  sweep["rho_sweep"] = {0.0, 0.25, 0.5, 0.75};
  sweep["assumptions"] = {"none"};
  sweep["out"] = tmp.path("sweep.json");
  write_json(tmp.path("sweep.json.cfg"), sweep);
  REQUIRE(run_cli("pir --config " + tmp.path("sweep.json.cfg")) == 0);
  const json sw = json::parse(slurp(tmp.path("sweep.json")));
  double prev = 0.0;
  for (const auto& reg : sw.at("regions")) {
    const double hw = reg.at("beta01").at("intervals")[0][1].get<double>();
    CHECK(hw > prev);
    prev = hw;
  }
}

TEST_CASE("asym: formula value and rate slope through the CLI") {
  TempDir tmp;
  json cfg;
  cfg["t_bar"] = 0.5;
  cfg["beta10"] = 1.2;
  cfg["beta01"] = 0.0;
  cfg["sigma_s0"] = 1.0;
  cfg["sigma_s1"] = 1.0;
  cfg["sigma_y2"] = 0.25;
  cfg["rho"] = 0.75;
  cfg["n"] = 1200;
  cfg["out"] = tmp.path("asym.json");
  write_json(tmp.path("asym.cfg"), cfg);
  REQUIRE(run_cli("asym --config " + tmp.path("asym.cfg")) == 0);
  const json out = json::parse(slurp(tmp.path("asym.json")));
  CHECK(out.at("estimable") == true);
  CHECK(out.at("posterior_var").get<double>() ==
        doctest::Approx(3.585185185185185e-4).epsilon(1e-10));

  json rate;
  rate["rate"] = {{"n_values", {300, 600, 1200}}, {"var_values", {0.01, 0.005, 0.0025}}};
  rate["out"] = tmp.path("rate.json");
  write_json(tmp.path("rate.cfg"), rate);
  REQUIRE(run_cli("asym --config " + tmp.path("rate.cfg")) == 0);
  CHECK(json::parse(slurp(tmp.path("rate.json"))).at("slope").get<double>() ==
        doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("scenario: unknown id lists the valid ones; custom runs end to end") {
  TempDir tmp;
  CHECK(run_cli("scenario --scenario never_heard_of_it") == 2);

  json cfg;
  cfg["scenario"] = "custom";
  cfg["truth"] = lrc_truth_json();
  cfg["n"] = 100;
  cfg["replicates"] = 2;
  cfg["regimes"] = {"none"};
  cfg["strata"] = {{0.89, 0.35}};
  cfg["rho_fixed"] = 0.75;
  cfg["chain"] = {{"n_iter", 600}, {"burn_in", 100}, {"thin", 3}};
  cfg["base_seed"] = 99;
  cfg["out_dir"] = tmp.path("out");
  write_json(tmp.path("scen.cfg"), cfg);
  REQUIRE(run_cli("scenario --config " + tmp.path("scen.cfg")) == 0);
  CHECK(fs::exists(tmp.path("out") + "/report.json"));
  CHECK(fs::exists(tmp.path("out") + "/report.csv"));
  CHECK(fs::exists(tmp.path("out") + "/report.md"));
  const json rep = json::parse(slurp(tmp.path("out") + "/report.json"));
  CHECK(rep.at("config").at("base_seed") == 99);

  // byte-identical on rerun
  const std::string first = slurp(tmp.path("out") + "/report.json");
  REQUIRE(run_cli("scenario --config " + tmp.path("scen.cfg")) == 0);
  CHECK(slurp(tmp.path("out") + "/report.json") == first);
}
