#include "ewoc/trial.hpp"

#include <algorithm>
#include <cmath>

namespace ewoc {

double alpha_at(const AlphaSchedule& s, int resolved_count) {
  if (resolved_count <= s.hold_count) return s.start;
  return std::min(s.cap, s.start + s.increment * (resolved_count - s.hold_count));
}

void validate(const TrialConfig& config) {
  std::vector<FieldError> errors;
  try {
    validate(config.model);
  } catch (const InvalidConfig& e) {
    errors = e.errors();
  }
  auto fail = [&](const std::string& field, const std::string& msg) { errors.push_back({field, msg}); };

  const auto& a = config.alpha;
  if (!(a.start > 0 && a.start < 1)) fail("alpha.start", "must lie in (0, 1)");
  if (!(a.cap < 1)) fail("alpha.cap", "must be below 1");
  if (!(a.start <= a.cap)) fail("alpha.cap", "must be at least alpha.start");
  if (!(a.increment >= 0)) fail("alpha.increment", "must be nonnegative");
  if (a.hold_count < 0) fail("alpha.hold_count", "must be nonnegative");
  if (!(config.tolerances.t1 >= 0)) fail("tolerances.t1", "must be nonnegative");
  if (!(config.tolerances.t2 >= 0)) fail("tolerances.t2", "must be nonnegative");

  if (!config.dose_levels.empty() && errors.empty()) {
    const auto [lo, hi] = dose_bounds(config.model);
    const auto& d = config.dose_levels;
    if (!std::is_sorted(d.begin(), d.end()) || std::adjacent_find(d.begin(), d.end()) != d.end())
      fail("dose_levels", "must be strictly increasing");
    if (d.front() < lo || d.back() > hi) fail("dose_levels", "must lie within [x_min, x_max]");
  }
  if (!errors.empty()) throw InvalidConfig(std::move(errors));
}

const Patient* TrialState::find(int patient_id) const {
  if (patient_id < 1 || patient_id > static_cast<int>(patients.size())) return nullptr;
  return &patients[static_cast<std::size_t>(patient_id - 1)];
}

TrialState initial_state(const TrialConfig& config) {
  TrialState s;
  s.config = config;
  return s;
}

TrialState apply(TrialState state, const TrialEvent& event) {
  std::visit(
      [&](const auto& e) {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, AssignEvent>) {
          if (state.halted) throw TrialHalted("trial is halted: " + state.halt_reason);
          if (e.patient_id != static_cast<int>(state.patients.size()) + 1)
            throw ConflictError("patient ids must be assigned in sequence");
          Patient p;
          p.id = e.patient_id;
          p.dose = e.dose;
          p.continuous_dose = e.continuous_dose;
          p.covariates = e.covariates;
          p.alpha = e.alpha;
          p.advisory = e.advisory;
          state.patients.push_back(std::move(p));
        } else if constexpr (std::is_same_v<E, ResolveEvent>) {
          if (state.halted) throw TrialHalted("trial is halted: " + state.halt_reason);
          if (e.dlt != 0 && e.dlt != 1) throw std::invalid_argument("dlt must be 0 or 1");
          if (!state.find(e.patient_id)) throw ConflictError("unknown patient " + std::to_string(e.patient_id));
          Patient& p = state.patients[static_cast<std::size_t>(e.patient_id - 1)];
          if (p.status == PatientStatus::resolved)
            throw ConflictError("patient " + std::to_string(e.patient_id) + " is already resolved");
          p.status = PatientStatus::resolved;
          p.dlt = e.dlt;
          state.resolution_order.push_back(e.patient_id);
          ++state.resolved_count;
          if (e.patient_id == 1 && e.dlt == 1 && state.config.halt_on_first_dlt) {
            state.halted = true;
            state.halt_reason = kFirstPatientDlt;
          }
        } else {
          if (state.halted) throw ConflictError("trial is already halted");
          state.halted = true;
          state.halt_reason = e.reason;
        }
      },
      event);
  ++state.version;
  return state;
}

TrialState replay(const TrialConfig& config, std::span<const TrialEvent> events) {
  TrialState s = initial_state(config);
  for (const auto& e : events) s = apply(std::move(s), e);
  return s;
}

void check_covariates(const TrialConfig& config, std::span<const double> w) {
  const auto& covs = config.model.covariates;
  if (w.size() != covs.size()) {
    if (covs.empty()) throw DomainError("this trial has no covariates");
    throw DomainError("expected " + std::to_string(covs.size()) + " covariate value(s)");
  }
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (!std::isfinite(w[k]) || w[k] < covs[k].lo || w[k] > covs[k].hi)
      throw DomainError("covariate " + covs[k].name + " outside [" + std::to_string(covs[k].lo) + ", " +
                        std::to_string(covs[k].hi) + "]");
  }
}

Transition start_trial(const TrialConfig& config, std::vector<double> first_covariates) {
  validate(config);
  check_covariates(config, first_covariates);
  AssignEvent e;
  e.patient_id = 1;
  e.dose = config.dose_levels.empty() ? dose_bounds(config.model).first : config.dose_levels.front();
  e.covariates = std::move(first_covariates);
  e.alpha = alpha_at(config.alpha, 0);
  TrialState s = apply(initial_state(config), e);
  return {std::move(s), std::move(e)};
}

double alpha_at(const TrialState& state) { return alpha_at(state.config.alpha, state.resolved_count); }

Transition record_outcome(const TrialState& state, int patient_id, int dlt) {
  ResolveEvent e{patient_id, dlt};
  return {apply(state, e), e};
}

Transition halt_trial(const TrialState& state, std::string reason) {
  HaltEvent e{std::move(reason)};
  return {apply(state, e), e};
}

std::vector<Observation> resolved_observations(const TrialState& state) {
  std::vector<Observation> out;
  out.reserve(state.resolution_order.size());
  for (int id : state.resolution_order) {
    const Patient& p = *state.find(id);
    out.push_back({p.dose, p.dlt, p.covariates, p.id});
  }
  return out;
}

// ---------------------------------------------------------------------------

const PosteriorGrid& PosteriorCache::posterior(const TrialState& state) {
  const auto obs = resolved_observations(state);
  return posterior(state.config.model, obs);
}

const PosteriorGrid& PosteriorCache::posterior(const ModelSpec& spec, std::span<const Observation> obs) {
  if (!prior_ || !(prior_->spec == spec)) {
    prior_ = std::make_shared<const PosteriorGrid>(prior_grid(spec));
    grid_.reset();
  }
  const bool extends = grid_ && absorbed_.size() <= obs.size() &&
                       std::equal(absorbed_.begin(), absorbed_.end(), obs.begin());
  if (!extends) {
    grid_ = *prior_;
    absorbed_.clear();
  }
  for (std::size_t i = absorbed_.size(); i < obs.size(); ++i) {
    absorb(*grid_, obs[i]);
    absorbed_.push_back(obs[i]);
  }
  return *grid_;
}

namespace {

std::vector<double> reference_covariates(const TrialConfig& config) {
  std::vector<double> w;
  for (const auto& c : config.model.covariates) w.push_back(c.reference);
  return w;
}

double clamp_dose(const TrialConfig& config, double x) {
  const auto [lo, hi] = dose_bounds(config.model);
  return std::clamp(x, lo, hi);
}

}  // namespace

double recommend_continuous(const TrialState& state, std::span<const double> w, PosteriorCache& cache) {
  if (state.halted) throw TrialHalted("trial is halted: " + state.halt_reason);
  check_covariates(state.config, w);
  const auto m = mtd_marginal(cache.posterior(state), w);
  return clamp_dose(state.config, quantile(m, alpha_at(state)));
}

SnapResult snap_discrete(double x, const TrialConfig& config, const MtdMarginal& marginal, double alpha) {
  const auto& levels = config.dose_levels;
  if (levels.empty()) return {x, false};
  const double slack = 1e-9 * (levels.back() - levels.front() + 1.0);
  std::optional<double> best;
  for (double d : levels) {
    if (d - x <= config.tolerances.t1 + slack && cdf(marginal, d) - alpha <= config.tolerances.t2) best = d;
  }
  if (!best) return {levels.front(), true};
  return {*best, false};
}

SnapResult snap_discrete(double x, const TrialState& state, std::span<const double> w, PosteriorCache& cache) {
  check_covariates(state.config, w);
  const auto m = mtd_marginal(cache.posterior(state), w);
  return snap_discrete(x, state.config, m, alpha_at(state));
}

Recommendation next_recommendation(const TrialState& state, std::span<const double> w, PosteriorCache& cache) {
  if (state.halted) throw TrialHalted("trial is halted: " + state.halt_reason);
  check_covariates(state.config, w);
  const auto m = mtd_marginal(cache.posterior(state), w);
  Recommendation r;
  r.next_patient = static_cast<int>(state.patients.size()) + 1;
  r.alpha = alpha_at(state);
  r.continuous = clamp_dose(state.config, quantile(m, r.alpha));
  const auto snapped = snap_discrete(r.continuous, state.config, m, r.alpha);
  r.dose = snapped.dose;
  r.advisory = snapped.advisory;
  r.overdose_probability = cdf(m, r.dose);
  r.summary = summarize(m);
  r.hpd95 = hpd(m, 0.95);
  return r;
}

Transition enroll_patient(const TrialState& state, std::vector<double> covariates, PosteriorCache& cache) {
  if (state.halted) throw TrialHalted("trial is halted: " + state.halt_reason);
  const Patient* first = state.find(1);
  if (first && first->status == PatientStatus::pending)
    throw ConflictError("patient 1 must be resolved before enrolling further patients");
  check_covariates(state.config, covariates);

  AssignEvent e;
  e.patient_id = static_cast<int>(state.patients.size()) + 1;
  e.covariates = std::move(covariates);
  if (e.patient_id == 1) {
    e.dose = state.config.dose_levels.empty() ? dose_bounds(state.config.model).first : state.config.dose_levels.front();
    e.alpha = alpha_at(state);
  } else {
    const auto m = mtd_marginal(cache.posterior(state), e.covariates);
    e.alpha = alpha_at(state);
    const double x = clamp_dose(state.config, quantile(m, e.alpha));
    const auto snapped = snap_discrete(x, state.config, m, e.alpha);
    e.dose = snapped.dose;
    e.advisory = snapped.advisory;
    if (!state.config.dose_levels.empty()) e.continuous_dose = x;
  }
  return {apply(state, e), e};
}

MtdEstimate final_mtd(const TrialState& state, PosteriorCache& cache, std::optional<double> alpha,
                      std::span<const double> w) {
  if (state.halted && state.halt_reason == kFirstPatientDlt)
    throw TrialHalted("estimate unavailable: trial stopped after a DLT in patient 1");
  if (state.resolved_count < 1) throw ConflictError("estimate needs at least one resolved patient");
  std::vector<double> ref;
  if (w.empty() && state.config.model.has_covariates()) {
    ref = reference_covariates(state.config);
    w = ref;
  }
  check_covariates(state.config, w);
  const auto m = mtd_marginal(cache.posterior(state), w);
  MtdEstimate est;
  est.alpha_used = alpha.value_or(alpha_at(state));
  est.point = clamp_dose(state.config, quantile(m, est.alpha_used));
  est.hpd95 = hpd(m, 0.95);
  est.loss_risk = expected_loss(m, est.point, est.alpha_used);
  return est;
}

}  // namespace ewoc
