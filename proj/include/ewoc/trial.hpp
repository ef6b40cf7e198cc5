#ifndef EWOC_TRIAL_HPP
#define EWOC_TRIAL_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ewoc/posterior.hpp"

namespace ewoc {

/// Feasibility bound that starts at `start`, holds for the first `hold_count`
/// resolved patients, then grows by `increment` per resolved patient up to `cap`.
struct AlphaSchedule {
  double start = 0.25;
  double increment = 0.0;
  double cap = 0.5;
  int hold_count = 0;

  bool operator==(const AlphaSchedule&) const = default;
};

double alpha_at(const AlphaSchedule& schedule, int resolved_count);

struct Tolerances {
  double t1 = 0.0;  ///< dose units a level may sit above the continuous recommendation
  double t2 = 0.0;  ///< overdose probability a level may exceed alpha by

  bool operator==(const Tolerances&) const = default;
};

struct TrialConfig {
  std::string name;
  std::string dose_units;
  ModelSpec model;
  AlphaSchedule alpha;
  /// Discrete dose levels d_1 < ... < d_r; empty for continuous dosing.
  std::vector<double> dose_levels;
  Tolerances tolerances;
  bool halt_on_first_dlt = true;

  bool operator==(const TrialConfig&) const = default;
};

/// Throws InvalidConfig listing every offending field.
void validate(const TrialConfig& config);

enum class PatientStatus { pending, resolved };

struct Patient {
  int id = 0;
  double dose = 0.0;
  /// Continuous recommendation before snapping to a dose level.
  std::optional<double> continuous_dose;
  std::vector<double> covariates;
  double alpha = 0.0;
  bool advisory = false;
  PatientStatus status = PatientStatus::pending;
  int dlt = 0;

  bool operator==(const Patient&) const = default;
};

inline constexpr const char* kFirstPatientDlt = "first_patient_dlt";

struct TrialState {
  TrialConfig config;
  std::vector<Patient> patients;
  /// Patient ids in the order their outcomes were resolved.
  std::vector<int> resolution_order;
  int resolved_count = 0;
  bool halted = false;
  std::string halt_reason;
  std::uint64_t version = 0;

  bool operator==(const TrialState&) const = default;

  const Patient* find(int patient_id) const;
  bool active() const { return !halted; }
};

struct AssignEvent {
  int patient_id = 0;
  double dose = 0.0;
  std::optional<double> continuous_dose;
  std::vector<double> covariates;
  double alpha = 0.0;
  bool advisory = false;

  bool operator==(const AssignEvent&) const = default;
};

struct ResolveEvent {
  int patient_id = 0;
  int dlt = 0;

  bool operator==(const ResolveEvent&) const = default;
};

struct HaltEvent {
  std::string reason;

  bool operator==(const HaltEvent&) const = default;
};

using TrialEvent = std::variant<AssignEvent, ResolveEvent, HaltEvent>;

/// A mutation: the new state and the event that produced it.
struct Transition {
  TrialState state;
  TrialEvent event;
};

TrialState initial_state(const TrialConfig& config);
/// The only way state changes; every call bumps the version by one.
TrialState apply(TrialState state, const TrialEvent& event);
TrialState replay(const TrialConfig& config, std::span<const TrialEvent> events);

/// Throws DomainError when w does not fit the configured covariates.
void check_covariates(const TrialConfig& config, std::span<const double> w);

Transition start_trial(const TrialConfig& config, std::vector<double> first_covariates = {});
double alpha_at(const TrialState& state);
Transition record_outcome(const TrialState& state, int patient_id, int dlt);
Transition halt_trial(const TrialState& state, std::string reason);

std::vector<Observation> resolved_observations(const TrialState& state);

/// Keeps the posterior of the resolved history and extends it incrementally
/// when the history grows by appending.
class PosteriorCache {
 public:
  PosteriorCache() = default;
  explicit PosteriorCache(std::shared_ptr<const PosteriorGrid> prior) : prior_(std::move(prior)) {}

  const PosteriorGrid& posterior(const TrialState& state);
  const PosteriorGrid& posterior(const ModelSpec& spec, std::span<const Observation> obs);

 private:
  std::shared_ptr<const PosteriorGrid> prior_;
  std::optional<PosteriorGrid> grid_;
  std::vector<Observation> absorbed_;
};

/// Posterior alpha-quantile of the (conditional) MTD over resolved data, clamped to the dose range.
double recommend_continuous(const TrialState& state, std::span<const double> w, PosteriorCache& cache);

struct SnapResult {
  double dose = 0.0;
  /// No level satisfied both tolerances; d_1 was returned.
  bool advisory = false;
};

/// Highest level d_i with d_i - x <= T1 and cdf(d_i) - alpha <= T2.
SnapResult snap_discrete(double x, const TrialConfig& config, const MtdMarginal& marginal, double alpha);
SnapResult snap_discrete(double x, const TrialState& state, std::span<const double> w, PosteriorCache& cache);

struct Recommendation {
  int next_patient = 0;
  double continuous = 0.0;
  double dose = 0.0;
  bool advisory = false;
  double alpha = 0.0;
  /// Posterior probability that the MTD lies below the recommended dose.
  double overdose_probability = 0.0;
  MtdSummary summary;
  Interval hpd95;
};

Recommendation next_recommendation(const TrialState& state, std::span<const double> w, PosteriorCache& cache);
/// Assigns the next patient at the recommended (and, if configured, snapped) dose.
Transition enroll_patient(const TrialState& state, std::vector<double> covariates, PosteriorCache& cache);

struct MtdEstimate {
  double point = 0.0;
  Interval hpd95;
  double alpha_used = 0.0;
  /// Posterior expected asymmetric loss at the point estimate.
  double loss_risk = 0.0;
};

/// The alpha-quantile of the final posterior, which minimizes expected l_alpha.
MtdEstimate final_mtd(const TrialState& state, PosteriorCache& cache, std::optional<double> alpha = std::nullopt,
                      std::span<const double> w = {});

}  // namespace ewoc

#endif  // EWOC_TRIAL_HPP
