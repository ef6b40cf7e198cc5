#ifndef EWOC_SIMULATOR_HPP
#define EWOC_SIMULATOR_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ewoc/serialization.hpp"
#include "ewoc/trial.hpp"

namespace ewoc {

/// Monotone dose-response curve, linearly interpolated and held flat outside the table.
struct TabulatedCurve {
  std::vector<double> doses;
  std::vector<double> probs;

  double operator()(double dose) const;
};

struct OneParamTruth {
  double beta = 1.0;
};

/// Covariate-model truth in the prior's parameterization; rho3 only for two covariates.
struct CovariateTruth {
  double gamma_max = 0.0;
  double rho1 = 0.0;
  double rho2 = 0.0;
  std::optional<double> rho3;
};

using Truth = std::variant<TwoParamState, OneParamTruth, CovariateTruth, TabulatedCurve>;

/// How covariates of simulated patients are drawn, one entry per covariate.
struct CovariateDraw {
  enum class Kind { uniform, bernoulli, fixed } kind = Kind::uniform;
  /// bernoulli: probability of the upper value; fixed: the value itself
  double value = 0.5;
};

struct Scenario {
  std::string id;
  std::string label;
  Truth truth;
  /// Required for tabulated truths; derived otherwise (at the reference covariates).
  std::optional<double> true_mtd;
  std::vector<CovariateDraw> covariate_sampler;
};

/// Throws InvalidParameter when the truth does not fit the model (bad curve, wrong covariate count).
void validate(const Scenario& scenario, const TrialConfig& config);
double true_prob(const Scenario& scenario, const TrialConfig& config, double dose, std::span<const double> w = {});
/// MTD at covariates w; for tabulated truths the supplied value.
double true_mtd(const Scenario& scenario, const TrialConfig& config, std::span<const double> w = {});

struct StepRecord {
  double dose = 0.0;
  double continuous = 0.0;
  double alpha = 0.0;
  /// Posterior Pr(MTD < continuous recommendation) when it was made.
  double overdose_probability = 0.0;
  double true_mtd = 0.0;
  std::vector<double> covariates;
};

struct ReplicateResult {
  std::vector<double> doses;
  std::vector<int> dlts;
  std::vector<StepRecord> steps;
  std::optional<MtdEstimate> estimate;
  bool halted = false;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  /// After k + 1 resolved patients, at the reference covariates.
  std::vector<double> posterior_sd;
  std::vector<double> hpd90;
  std::vector<double> hpd95;
};

struct RunOptions {
  /// Record posterior sd and HPD lengths after every resolved patient.
  bool trace_posterior = true;
};

/// Shared prior so replicates do not rebuild the grid.
std::shared_ptr<const PosteriorGrid> shared_prior(const TrialConfig& config);

ReplicateResult run_replicate(const Scenario& scenario, const TrialConfig& config, int n_patients, std::uint64_t seed,
                              std::uint64_t replicate = 0, RunOptions options = {},
                              std::shared_ptr<const PosteriorGrid> prior = nullptr);

/// Number of coherence violations in one replicate, beyond `tolerance` dose units.
int coherence_violations(const ReplicateResult& r, double tolerance);
/// Width of one cell on the MTD axis (or of the dose range over the atom count for Monte Carlo).
double mtd_cell_width(const ModelSpec& spec);

struct OperatingCharacteristics {
  std::string scenario;
  std::string label;
  double alpha = 0.0;
  int n = 0;
  int replicates = 0;
  double dlt_fraction = 0.0;
  double overdose_fraction = 0.0;
  double halted_fraction = 0.0;
  double mae = 0.0;
  double bias = 0.0;
  /// |estimate - true MTD| at the 25th, 50th, 75th and 90th percentiles.
  std::vector<double> abs_error_quantiles;
  /// Assigned dose by patient index: 10th, 50th and 90th percentiles.
  std::vector<std::vector<double>> trace_quantiles;
  std::vector<double> avg_sd;
  std::vector<double> avg_hpd90;
  std::vector<double> avg_hpd95;
  int coherence_violations = 0;
  int feasibility_violations = 0;
};

OperatingCharacteristics operating_chars(const Scenario& scenario, const TrialConfig& config, int n_patients,
                                         int n_replicates, std::uint64_t seed, RunOptions options = {});

std::string oc_csv_header(int n_patients);
std::string oc_csv_row(const OperatingCharacteristics& oc);
json oc_to_json(const OperatingCharacteristics& oc);

struct ConsistencyRow {
  int n = 0;
  double median_abs_error = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

/// Median |z_n - (-phi / beta0)| over replicates of a one-parameter trial, where
/// z_n is the log-standardized recommendation after n resolved patients.
std::vector<ConsistencyRow> consistency_check(double beta0_true, const TrialConfig& config,
                                              std::vector<int> n_list, int n_replicates, std::uint64_t seed);

struct SampleSizeRow {
  int n = 0;
  double avg_sd = 0.0;
  double avg_hpd90 = 0.0;
  double avg_hpd95 = 0.0;
};

struct SampleSizeTable {
  std::vector<SampleSizeRow> rows;
  double prior_sd = 0.0;
  /// Smallest n whose average sd is within the margin; empty when not reached.
  std::optional<int> smallest_n;
};

SampleSizeTable sample_size_table(const TrialConfig& config, const Scenario& scenario, std::vector<int> n_list,
                                  int n_replicates, std::uint64_t seed, std::optional<double> sd_margin = {});

/// gamma in {90, 200, 330, 500} x rho0 in {0.01, 0.05, 0.15}.
std::vector<Scenario> default_scenarios(const DesignConstants& constants);

Scenario scenario_from_json(const json& j);
json scenario_to_json(const Scenario& s);
std::vector<Scenario> load_scenarios(const std::filesystem::path& path);

}  // namespace ewoc

#endif  // EWOC_SIMULATOR_HPP
