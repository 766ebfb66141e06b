#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prinstrat/asymvar.hpp"
#include "prinstrat/binary.hpp"
#include "prinstrat/gibbs.hpp"
#include "prinstrat/model.hpp"

#include "json.hpp"

namespace prinstrat {

/// Scenario runner configuration. Built-in ids come with the settings used
/// by the corresponding simulation studies; `custom` takes everything from
/// the caller.
struct ScenarioSpec {
  std::string id = "custom";  // table1 | rho_ident | rate_study | binary_sign | binary_p11 | custom
  std::optional<JointParams> truth;
  std::optional<BinaryParams> binary_truth;
  int n = 300;
  int n_replicates = 50;
  std::vector<std::string> regimes;
  std::vector<PrincipalStratum> strata;
  ChainConfig chain;
  PriorSpec prior;
  std::optional<double> rho_fixed;  // continuous: known rho; binary: known p11
  bool equal_sigma_s = true;
  std::uint64_t base_seed = 20250801;
  std::vector<int> n_ladder;  // rho_ident / rate_study sample sizes
  // when nonempty, run_scenario persists each chain's retained draws under
  // {persist_draws_dir}/{scenario}/{regime}/rep{k}.csv
  std::string persist_draws_dir;
  void validate() const;
};

/// Settings for the named built-in scenarios.
ScenarioSpec scenario_defaults(const std::string& id);
std::vector<std::string> known_scenarios();

/// Map a regime name to its constraint set. Known names: none, dominant,
/// same_sign, zero_beta01, two_constraints, pi, sign_positive, unconstrained.
ConstraintSet regime_constraints(const std::string& name, std::optional<double> rho_fixed,
                                 bool equal_sigma_s);

struct StratumSummary {
  double post_mean = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct ReplicateRecord {
  int replicate = 0;
  std::string regime;
  bool ok = false;
  std::string error;
  std::vector<StratumSummary> strata;  // aligned with spec.strata
  double rho_mean = 0.0;
  double rho_sd = 0.0;
  double frac_at_floor = 0.0;
};

struct ScenarioReport {
  struct Cell {
    std::string regime;
    double u0 = 0.0, u1 = 0.0;
    double truth = 0.0;
    double avg_post_mean = 0.0;
    double ecr = 0.0;
    double avg_width = 0.0;
    int n_ok = 0;
  };
  struct RhoSummary {
    std::string regime;
    double avg_mean = 0.0;
    double avg_sd = 0.0;
  };
  std::string scenario_id;
  std::uint64_t base_seed = 0;
  int n = 0;
  int n_replicates = 0;
  std::vector<Cell> cells;
  std::vector<RhoSummary> rho;
  std::vector<ReplicateRecord> records;
  nlohmann::ordered_json config_echo;
};

/// Replicate x regime study: simulate, fit one chain per regime, record
/// equal-tailed 95% intervals for each target effect, aggregate coverage of
/// the truth and widths. Chain failures are recorded and the scenario
/// continues; more than 20% failures aborts.
ScenarioReport run_scenario(const ScenarioSpec& spec, int n_threads);

struct RhoIdentCell {
  int n = 0;
  std::string regime;
  std::vector<double> rho_draws;
  double mean = 0.0;
  double sd = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t sim_stream = 0;
  std::uint64_t chain_stream = 0;
};
struct RhoIdentResult {
  std::vector<RhoIdentCell> cells;
  nlohmann::ordered_json config_echo;
  const RhoIdentCell& cell(int n, const std::string& regime) const;
};
/// One dataset per sample size, one chain per regime, full rho draws kept.
RhoIdentResult rho_ident_study(const ScenarioSpec& spec, int n_threads);

struct RatePoint {
  int n = 0;
  double var_empirical = 0.0;
  std::optional<double> var_theorem;
  double rho_mean = 0.0;
};
struct RateStudyResult {
  std::vector<RatePoint> points;
  double slope = 0.0;
  nlohmann::ordered_json config_echo;
};
/// Two-constraint chains across the sample-size ladder; log-log slope of the
/// empirical posterior variance plus the closed-form value alongside.
RateStudyResult rate_study(const ScenarioSpec& spec, int n_threads);

struct BinarySignResult {
  PosteriorDraws constrained;    // sign constraint, p11 known
  PosteriorDraws unconstrained;  // p11 known only
  double frac_b10_positive = 0.0;
  double frac_b10_negative = 0.0;
  nlohmann::ordered_json config_echo;
};
BinarySignResult binary_sign_study(const ScenarioSpec& spec, int n_threads);

struct BinaryP11Result {
  PosteriorDraws draws;  // sign constraint, p11 free
  double p11_mean = 0.0;
  nlohmann::ordered_json config_echo;
};
BinaryP11Result binary_p11_study(const ScenarioSpec& spec, int n_threads);

enum class ReportFormat { csv, json, markdown };
ReportFormat report_format_from_name(const std::string& name);

std::string emit_report(const ScenarioReport& report, ReportFormat format);
/// Parse the cell-level CSV emitted by emit_report(csv).
std::vector<ScenarioReport::Cell> parse_report_cells_csv(const std::string& text);

struct GateResult {
  std::string name;
  bool pass = false;
  std::string detail;
};
std::vector<GateResult> check_table1(const ScenarioReport& report);
std::vector<GateResult> check_rho_ident(const RhoIdentResult& result);
std::vector<GateResult> check_rate_study(const RateStudyResult& result,
                                         const ScenarioSpec& spec);
std::vector<GateResult> check_binary_sign(const BinarySignResult& result);
std::vector<GateResult> check_binary_p11(const BinaryP11Result& result);

/// Kolmogorov-Smirnov distance of a sample against Uniform(lo, hi) and the
/// asymptotic p-value.
double ks_statistic_uniform(std::vector<double> draws, double lo, double hi);
double ks_asymptotic_pvalue(double statistic, std::size_t n);

/// Run fn(0..n_tasks-1) on up to n_threads workers; the first exception is
/// rethrown after all workers join.
void parallel_for(int n_tasks, int n_threads, const std::function<void(int)>& fn);
/// Requested worker count, PRINSTRAT_THREADS, then hardware concurrency.
int resolve_threads(int requested);

}  // namespace prinstrat
