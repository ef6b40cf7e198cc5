#include "ewoc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ewoc/numeric.hpp"

namespace ewoc {

double TabulatedCurve::operator()(double dose) const {
  if (dose <= doses.front()) return probs.front();
  if (dose >= doses.back()) return probs.back();
  const auto it = std::upper_bound(doses.begin(), doses.end(), dose);
  const std::size_t j = static_cast<std::size_t>(it - doses.begin());
  const double t = (dose - doses[j - 1]) / (doses[j] - doses[j - 1]);
  return probs[j - 1] + t * (probs[j] - probs[j - 1]);
}

namespace {

Eigen::VectorXd scaled(const TrialConfig& config, std::span<const double> w) {
  const auto& covs = config.model.covariates;
  Eigen::VectorXd out(static_cast<Eigen::Index>(covs.size()));
  for (std::size_t k = 0; k < covs.size(); ++k) out[static_cast<Eigen::Index>(k)] = covs[k].scale(w[k]);
  return out;
}

NaturalParams covariate_truth_params(const CovariateTruth& t, const TrialConfig& config) {
  CovariateState cs;
  cs.gamma_max = t.gamma_max;
  cs.rho1 = t.rho1;
  cs.rho2 = t.rho2;
  cs.rho3 = t.rho3;
  return covariate_point(config.model, cs);
}

std::vector<double> reference_of(const TrialConfig& config) {
  std::vector<double> w;
  for (const auto& c : config.model.covariates) w.push_back(c.reference);
  return w;
}

/// Dose where a nondecreasing curve first reaches theta, by linear interpolation.
double crossing(const TabulatedCurve& c, double theta) {
  for (std::size_t j = 1; j < c.doses.size(); ++j) {
    if (c.probs[j] >= theta && c.probs[j - 1] < theta) {
      const double t = (theta - c.probs[j - 1]) / (c.probs[j] - c.probs[j - 1]);
      return c.doses[j - 1] + t * (c.doses[j] - c.doses[j - 1]);
    }
  }
  return c.probs.front() >= theta ? c.doses.front() : c.doses.back();
}

double sorted_quantile(std::vector<double> v, double p) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  return pairwise_sum(v.data(), v.size()) / static_cast<double>(v.size());
}

}  // namespace

void validate(const Scenario& s, const TrialConfig& config) {
  const PriorKind kind = config.model.prior.kind;
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, TwoParamState>) {
          if (kind != PriorKind::uniform_2p) throw InvalidParameter("two-parameter truth needs a uniform_2p model");
        } else if constexpr (std::is_same_v<T, OneParamTruth>) {
          if (kind != PriorKind::uniform_1p) throw InvalidParameter("one-parameter truth needs a uniform_1p model");
        } else if constexpr (std::is_same_v<T, CovariateTruth>) {
          if (kind != PriorKind::uniform_cov3 && kind != PriorKind::uniform_cov4)
            throw InvalidParameter("covariate truth needs a covariate model");
          if (t.rho3.has_value() != (kind == PriorKind::uniform_cov4))
            throw InvalidParameter("rho3 is required exactly for two-covariate models");
        } else {
          if (t.doses.size() < 2 || t.doses.size() != t.probs.size())
            throw InvalidParameter("tabulated curve needs at least two (dose, prob) pairs");
          for (std::size_t j = 0; j < t.doses.size(); ++j) {
            if (!(t.probs[j] >= 0 && t.probs[j] <= 1)) throw InvalidParameter("tabulated probabilities must lie in [0, 1]");
            if (j > 0 && !(t.doses[j] > t.doses[j - 1]))
              throw InvalidParameter("tabulated doses must be strictly increasing");
            if (j > 0 && t.probs[j] < t.probs[j - 1]) throw InvalidParameter("tabulated curve must be nondecreasing");
          }
        }
      },
      s.truth);
  if (!s.covariate_sampler.empty() && s.covariate_sampler.size() != config.model.covariate_count())
    throw InvalidParameter("covariate sampler needs one entry per covariate");
  if (!std::holds_alternative<TabulatedCurve>(s.truth)) {
    const auto ref = reference_of(config);
    const double g = true_mtd(s, config, ref);
    const auto [lo, hi] = dose_bounds(config.model);
    // the MTD may sit outside the dose range; only check the identity where the model is defined
    if (g >= lo && g <= hi) {
      const double p = true_prob(s, config, g, ref);
      if (std::abs(p - config.model.constants.theta) > 1e-6)
        throw InvalidParameter("truth does not reach theta at its MTD");
    }
  }
}

double true_prob(const Scenario& s, const TrialConfig& config, double dose, std::span<const double> w) {
  const auto& c = config.model.constants;
  return std::visit(
      [&](const auto& t) -> double {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, TwoParamState>) {
          return prob_dlt_two_param(dose, t, c);
        } else if constexpr (std::is_same_v<T, OneParamTruth>) {
          return prob_dlt_one_param(dose, t.beta, one_param_design(config.model), c);
        } else if constexpr (std::is_same_v<T, CovariateTruth>) {
          return prob_dlt_covariate<double>(dose, scaled(config, w), covariate_truth_params(t, config));
        } else {
          return t(dose);
        }
      },
      s.truth);
}

double true_mtd(const Scenario& s, const TrialConfig& config, std::span<const double> w) {
  if (s.true_mtd && std::holds_alternative<TabulatedCurve>(s.truth)) return *s.true_mtd;
  return std::visit(
      [&](const auto& t) -> double {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, TwoParamState>) {
          return t.gamma;
        } else if constexpr (std::is_same_v<T, OneParamTruth>) {
          return mtd_one_param(t.beta, one_param_design(config.model));
        } else if constexpr (std::is_same_v<T, CovariateTruth>) {
          std::vector<double> ref;
          if (w.empty()) {
            ref = reference_of(config);
            w = ref;
          }
          return conditional_mtd<double>(scaled(config, w), covariate_truth_params(t, config),
                                         config.model.constants.theta);
        } else {
          return crossing(t, config.model.constants.theta);
        }
      },
      s.truth);
}

std::shared_ptr<const PosteriorGrid> shared_prior(const TrialConfig& config) {
  return std::make_shared<const PosteriorGrid>(prior_grid(config.model));
}

double mtd_cell_width(const ModelSpec& spec) {
  const auto res = effective_resolution(spec);
  const auto [lo, hi] = dose_bounds(spec);
  switch (spec.prior.kind) {
    case PriorKind::uniform_2p: return (hi - lo) / res[1];
    case PriorKind::uniform_cov3: return (hi - lo) / res[0];
    case PriorKind::uniform_1p: {
      // cells are uniform in beta; report the widest one on the dose scale
      const auto d = one_param_design(spec);
      const GridAxis axis{"beta", d.beta_lo, d.beta_hi, res[0]};
      double widest = 0.0;
      for (int i = 0; i < axis.count; ++i)
        widest = std::max(widest, mtd_one_param(axis.edge(i + 1), d) - mtd_one_param(axis.edge(i), d));
      return widest;
    }
    case PriorKind::uniform_cov4: return (hi - lo) / std::sqrt(static_cast<double>(spec.mc_draws));
  }
  return 0.0;
}

namespace {

std::vector<double> draw_covariates(const Scenario& s, const TrialConfig& config, std::uint64_t seed,
                                    std::uint64_t replicate, std::uint64_t patient) {
  const auto& covs = config.model.covariates;
  std::vector<double> w(covs.size());
  for (std::size_t k = 0; k < covs.size(); ++k) {
    CovariateDraw d;
    if (k < s.covariate_sampler.size()) {
      d = s.covariate_sampler[k];
    } else if (k == 1) {
      d.kind = CovariateDraw::Kind::bernoulli;
    }
    const double u = rng::uniform(seed, replicate, patient, 1 + k);
    switch (d.kind) {
      case CovariateDraw::Kind::uniform: w[k] = covs[k].lo + u * (covs[k].hi - covs[k].lo); break;
      case CovariateDraw::Kind::bernoulli: w[k] = u < d.value ? covs[k].hi : covs[k].lo; break;
      case CovariateDraw::Kind::fixed: w[k] = d.value; break;
    }
  }
  return w;
}

}  // namespace

ReplicateResult run_replicate(const Scenario& scenario, const TrialConfig& config, int n_patients, std::uint64_t seed,
                              std::uint64_t replicate, RunOptions options,
                              std::shared_ptr<const PosteriorGrid> prior) {
  if (n_patients < 1) throw std::invalid_argument("run_replicate: n_patients must be at least 1");
  if (!prior) prior = shared_prior(config);
  PosteriorCache cache(prior);
  const auto ref = reference_of(config);

  ReplicateResult r;
  r.seed = seed;
  r.replicate = replicate;

  std::vector<double> w = draw_covariates(scenario, config, seed, replicate, 1);
  Transition t = start_trial(config, w);
  TrialState state = std::move(t.state);
  {
    const Patient& p = state.patients.back();
    const auto m = mtd_marginal(*prior, w);
    r.steps.push_back({p.dose, p.dose, p.alpha, cdf(m, p.dose), true_mtd(scenario, config, w), w});
  }

  for (int k = 1;; ++k) {
    const Patient& p = state.patients.back();
    const double u = rng::uniform(seed, replicate, static_cast<std::uint64_t>(k), 0);
    const int y = u < true_prob(scenario, config, p.dose, p.covariates) ? 1 : 0;
    r.doses.push_back(p.dose);
    r.dlts.push_back(y);
    state = record_outcome(state, k, y).state;

    if (options.trace_posterior && !state.halted) {
      const auto m = mtd_marginal(cache.posterior(state), ref);
      r.posterior_sd.push_back(summarize(m).sd);
      r.hpd90.push_back(hpd(m, 0.90).length());
      r.hpd95.push_back(hpd(m, 0.95).length());
    }
    if (state.halted) {
      r.halted = true;
      break;
    }
    if (k == n_patients) break;

    w = draw_covariates(scenario, config, seed, replicate, static_cast<std::uint64_t>(k + 1));
    const auto m = mtd_marginal(cache.posterior(state), w);
    t = enroll_patient(state, w, cache);
    state = std::move(t.state);
    const Patient& next = state.patients.back();
    const double x = next.continuous_dose.value_or(next.dose);
    r.steps.push_back({next.dose, x, next.alpha, cdf(m, x), true_mtd(scenario, config, w), w});
  }

  if (!r.halted || state.halt_reason != kFirstPatientDlt) {
    try {
      r.estimate = final_mtd(state, cache, std::nullopt, ref);
    } catch (const TrialHalted&) {
    }
  }
  return r;
}

int coherence_violations(const ReplicateResult& r, double tolerance) {
  int bad = 0;
  for (std::size_t k = 0; k + 1 < r.steps.size(); ++k) {
    const double cur = r.steps[k].continuous;
    const double next = r.steps[k + 1].continuous;
    if (r.dlts[k] == 0 && next < cur - tolerance) ++bad;
    if (r.dlts[k] == 1 && next > cur + tolerance) ++bad;
  }
  return bad;
}

OperatingCharacteristics operating_chars(const Scenario& scenario, const TrialConfig& config, int n_patients,
                                         int n_replicates, std::uint64_t seed, RunOptions options) {
  if (n_replicates < 2) throw std::invalid_argument("operating_chars: need at least two replicates");
  validate(scenario, config);
  const auto prior = shared_prior(config);
  std::vector<ReplicateResult> runs(static_cast<std::size_t>(n_replicates));
  parallel_for(runs.size(), [&](std::size_t i) {
    runs[i] = run_replicate(scenario, config, n_patients, seed, i, options, prior);
  });

  OperatingCharacteristics oc;
  oc.scenario = scenario.id;
  oc.label = scenario.label;
  oc.alpha = config.alpha.start;
  oc.n = n_patients;
  oc.replicates = n_replicates;

  const auto ref = reference_of(config);
  const double gamma_ref = true_mtd(scenario, config, ref);
  const auto res = effective_resolution(config.model);
  const double feas_slack = config.model.prior.kind == PriorKind::uniform_cov4 ? 1e-9 : 2.0 / res.front();
  const double coherence_tol = mtd_cell_width(config.model);

  std::vector<double> dlt_frac, over_frac, err, abs_err;
  std::vector<std::vector<double>> doses_at(static_cast<std::size_t>(n_patients));
  std::vector<std::vector<double>> sd_at(static_cast<std::size_t>(n_patients)), h90_at(sd_at), h95_at(sd_at);
  int halted = 0;
  for (const auto& r : runs) {
    const auto n = r.doses.size();
    int dlts = 0, over = 0;
    for (std::size_t k = 0; k < n; ++k) {
      dlts += r.dlts[k];
      if (r.steps[k].dose > r.steps[k].true_mtd) ++over;
      doses_at[k].push_back(r.doses[k]);
      if (r.steps[k].overdose_probability > r.steps[k].alpha + feas_slack) ++oc.feasibility_violations;
    }
    dlt_frac.push_back(static_cast<double>(dlts) / static_cast<double>(n));
    over_frac.push_back(static_cast<double>(over) / static_cast<double>(n));
    for (std::size_t k = 0; k < r.posterior_sd.size(); ++k) {
      sd_at[k].push_back(r.posterior_sd[k]);
      h90_at[k].push_back(r.hpd90[k]);
      h95_at[k].push_back(r.hpd95[k]);
    }
    if (r.estimate) {
      err.push_back(r.estimate->point - gamma_ref);
      abs_err.push_back(std::abs(r.estimate->point - gamma_ref));
    }
    if (r.halted) ++halted;
    if (config.alpha.increment == 0 && config.dose_levels.empty())
      oc.coherence_violations += coherence_violations(r, coherence_tol);
  }
  oc.dlt_fraction = mean_of(dlt_frac);
  oc.overdose_fraction = mean_of(over_frac);
  oc.halted_fraction = static_cast<double>(halted) / n_replicates;
  oc.mae = mean_of(abs_err);
  oc.bias = mean_of(err);
  for (double p : {0.25, 0.5, 0.75, 0.9}) oc.abs_error_quantiles.push_back(sorted_quantile(abs_err, p));
  for (const auto& d : doses_at)
    oc.trace_quantiles.push_back({sorted_quantile(d, 0.1), sorted_quantile(d, 0.5), sorted_quantile(d, 0.9)});
  for (std::size_t k = 0; k < sd_at.size(); ++k) {
    oc.avg_sd.push_back(mean_of(sd_at[k]));
    oc.avg_hpd90.push_back(mean_of(h90_at[k]));
    oc.avg_hpd95.push_back(mean_of(h95_at[k]));
  }
  return oc;
}

std::string oc_csv_header(int n_patients) {
  std::ostringstream out;
  out << "scenario,label,alpha,n,dlt_fraction,overdose_fraction,mae,bias";
  for (const char* col : {"avg_sd_", "hpd90_", "hpd95_"})
    for (int k = 1; k <= n_patients; ++k) out << ',' << col << k;
  return out.str();
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

}  // namespace

std::string oc_csv_row(const OperatingCharacteristics& oc) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << csv_field(oc.scenario) << ',' << csv_field(oc.label) << ',' << oc.alpha << ',' << oc.n << ','
      << oc.dlt_fraction << ',' << oc.overdose_fraction << ',' << oc.mae << ',' << oc.bias;
  for (const auto* col : {&oc.avg_sd, &oc.avg_hpd90, &oc.avg_hpd95})
    for (int k = 0; k < oc.n; ++k) {
      out << ',';
      if (k < static_cast<int>(col->size()) && std::isfinite((*col)[static_cast<std::size_t>(k)]))
        out << (*col)[static_cast<std::size_t>(k)];
    }
  return out.str();
}

json oc_to_json(const OperatingCharacteristics& oc) {
  auto finite = [](const std::vector<double>& v) {
    json out = json::array();
    for (double x : v) out.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return out;
  };
  json traces = json::array();
  for (const auto& q : oc.trace_quantiles) traces.push_back(finite(q));
  return {{"scenario", oc.scenario},
          {"label", oc.label},
          {"alpha", oc.alpha},
          {"n", oc.n},
          {"replicates", oc.replicates},
          {"dlt_fraction", oc.dlt_fraction},
          {"overdose_fraction", oc.overdose_fraction},
          {"halted_fraction", oc.halted_fraction},
          {"mae", std::isfinite(oc.mae) ? json(oc.mae) : json(nullptr)},
          {"bias", std::isfinite(oc.bias) ? json(oc.bias) : json(nullptr)},
          {"abs_error_quantiles", finite(oc.abs_error_quantiles)},
          {"dose_trace_quantiles", traces},
          {"avg_sd", finite(oc.avg_sd)},
          {"avg_hpd90", finite(oc.avg_hpd90)},
          {"avg_hpd95", finite(oc.avg_hpd95)},
          {"coherence_violations", oc.coherence_violations},
          {"feasibility_violations", oc.feasibility_violations}};
}

std::vector<ConsistencyRow> consistency_check(double beta0_true, const TrialConfig& config, std::vector<int> n_list,
                                              int n_replicates, std::uint64_t seed) {
  if (config.model.prior.kind != PriorKind::uniform_1p)
    throw InvalidParameter("consistency_check needs the one-parameter model");
  const auto& pr = config.model.prior;
  const bool point_prior = pr.beta_lo == pr.beta_hi;
  if (point_prior ? beta0_true != pr.beta_lo : !(beta0_true > pr.beta_lo && beta0_true < pr.beta_hi))
    throw InvalidParameter("beta0 must lie strictly inside the prior range");
  if (n_list.empty() || n_replicates < 1) throw std::invalid_argument("consistency_check: empty design");
  std::sort(n_list.begin(), n_list.end());

  TrialConfig cfg = config;
  cfg.halt_on_first_dlt = false;
  cfg.dose_levels.clear();
  const Scenario truth{"consistency", "one-parameter truth", OneParamTruth{beta0_true}, std::nullopt, {}};
  validate(truth, cfg);
  const auto d = one_param_design(cfg.model);
  const double target = -d.phi / beta0_true;
  const auto prior = shared_prior(cfg);
  const int n_max = n_list.back();

  std::vector<std::vector<double>> errors(static_cast<std::size_t>(n_replicates));
  parallel_for(errors.size(), [&](std::size_t i) {
    const auto r = run_replicate(truth, cfg, n_max + 1, seed, i, {.trace_posterior = false}, prior);
    for (int n : n_list) {
      // steps[n] was recommended from the first n outcomes
      const double z = log_standardized_dose(r.steps[static_cast<std::size_t>(n)].continuous, d);
      errors[i].push_back(std::abs(z - target));
    }
  });

  std::vector<ConsistencyRow> rows;
  for (std::size_t j = 0; j < n_list.size(); ++j) {
    std::vector<double> col;
    for (const auto& e : errors) col.push_back(e[j]);
    rows.push_back({n_list[j], sorted_quantile(col, 0.5), sorted_quantile(col, 0.25), sorted_quantile(col, 0.75)});
  }
  return rows;
}

SampleSizeTable sample_size_table(const TrialConfig& config, const Scenario& scenario, std::vector<int> n_list,
                                  int n_replicates, std::uint64_t seed, std::optional<double> sd_margin) {
  if (n_list.empty() || !std::is_sorted(n_list.begin(), n_list.end()) || n_list.front() < 1)
    throw std::invalid_argument("sample_size_table: n_list must be sorted ascending and positive");
  if (n_replicates < 1) throw std::invalid_argument("sample_size_table: need at least one replicate");
  TrialConfig cfg = config;
  cfg.halt_on_first_dlt = false;
  validate(scenario, cfg);
  const auto prior = shared_prior(cfg);
  const int n_max = n_list.back();

  std::vector<ReplicateResult> runs(static_cast<std::size_t>(n_replicates));
  parallel_for(runs.size(), [&](std::size_t i) { runs[i] = run_replicate(scenario, cfg, n_max, seed, i, {}, prior); });

  SampleSizeTable table;
  table.prior_sd = summarize(mtd_marginal(*prior, reference_of(cfg))).sd;
  for (int n : n_list) {
    std::vector<double> sd, h90, h95;
    for (const auto& r : runs) {
      const auto k = static_cast<std::size_t>(n - 1);
      sd.push_back(r.posterior_sd[k]);
      h90.push_back(r.hpd90[k]);
      h95.push_back(r.hpd95[k]);
    }
    SampleSizeRow row{n, mean_of(sd), mean_of(h90), mean_of(h95)};
    if (sd_margin && !table.smallest_n && row.avg_sd <= *sd_margin) table.smallest_n = n;
    table.rows.push_back(row);
  }
  return table;
}

std::vector<Scenario> default_scenarios(const DesignConstants& constants) {
  (void)constants;
  std::vector<Scenario> out;
  for (double gamma : {90.0, 200.0, 330.0, 500.0}) {
    for (double rho0 : {0.01, 0.05, 0.15}) {
      std::ostringstream id, label;
      id << "g" << gamma << "_r" << std::setw(2) << std::setfill('0') << std::lround(rho0 * 100);
      label << "gamma=" << gamma << " rho0=" << rho0;
      out.push_back({id.str(), label.str(), TwoParamState{rho0, gamma}, std::nullopt, {}});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Scenario scenario_from_json(const json& j) {
  Scenario s;
  s.id = j.value("id", std::string("scenario"));
  s.label = j.value("label", s.id);
  const json& t = j.at("truth");
  const std::string type = t.at("type").get<std::string>();
  if (type == "two_param") {
    s.truth = TwoParamState{t.at("rho0").get<double>(), t.at("gamma").get<double>()};
  } else if (type == "one_param") {
    s.truth = OneParamTruth{t.at("beta").get<double>()};
  } else if (type == "covariate") {
    CovariateTruth c{t.at("gamma_max").get<double>(), t.at("rho1").get<double>(), t.at("rho2").get<double>(), {}};
    if (t.contains("rho3")) c.rho3 = t["rho3"].get<double>();
    s.truth = c;
  } else if (type == "tabulated") {
    s.truth = TabulatedCurve{t.at("doses").get<std::vector<double>>(), t.at("probs").get<std::vector<double>>()};
  } else {
    throw std::invalid_argument("unknown truth type '" + type + "'");
  }
  if (j.contains("true_mtd")) s.true_mtd = j["true_mtd"].get<double>();
  if (j.contains("covariate_sampler")) {
    for (const auto& c : j["covariate_sampler"]) {
      CovariateDraw d;
      const std::string kind = c.at("type").get<std::string>();
      if (kind == "uniform") {
        d.kind = CovariateDraw::Kind::uniform;
      } else if (kind == "bernoulli") {
        d.kind = CovariateDraw::Kind::bernoulli;
        d.value = c.value("p", 0.5);
      } else if (kind == "fixed") {
        d.kind = CovariateDraw::Kind::fixed;
        d.value = c.at("value").get<double>();
      } else {
        throw std::invalid_argument("unknown covariate sampler '" + kind + "'");
      }
      s.covariate_sampler.push_back(d);
    }
  }
  return s;
}

json scenario_to_json(const Scenario& s) {
  json truth = std::visit(
      [](const auto& t) -> json {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, TwoParamState>) {
          return {{"type", "two_param"}, {"rho0", t.rho0}, {"gamma", t.gamma}};
        } else if constexpr (std::is_same_v<T, OneParamTruth>) {
          return {{"type", "one_param"}, {"beta", t.beta}};
        } else if constexpr (std::is_same_v<T, CovariateTruth>) {
          json c = {{"type", "covariate"}, {"gamma_max", t.gamma_max}, {"rho1", t.rho1}, {"rho2", t.rho2}};
          if (t.rho3) c["rho3"] = *t.rho3;
          return c;
        } else {
          return {{"type", "tabulated"}, {"doses", t.doses}, {"probs", t.probs}};
        }
      },
      s.truth);
  json j = {{"id", s.id}, {"label", s.label}, {"truth", truth}};
  if (s.true_mtd) j["true_mtd"] = *s.true_mtd;
  if (!s.covariate_sampler.empty()) {
    json samplers = json::array();
    for (const auto& d : s.covariate_sampler) {
      switch (d.kind) {
        case CovariateDraw::Kind::uniform: samplers.push_back({{"type", "uniform"}}); break;
        case CovariateDraw::Kind::bernoulli: samplers.push_back({{"type", "bernoulli"}, {"p", d.value}}); break;
        case CovariateDraw::Kind::fixed: samplers.push_back({{"type", "fixed"}, {"value", d.value}}); break;
      }
    }
    j["covariate_sampler"] = samplers;
  }
  return j;
}

std::vector<Scenario> load_scenarios(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const json j = json::parse(in);
  std::vector<Scenario> out;
  if (j.is_array()) {
    for (const auto& s : j) out.push_back(scenario_from_json(s));
  } else if (j.contains("scenarios")) {
    for (const auto& s : j["scenarios"]) out.push_back(scenario_from_json(s));
  } else {
    out.push_back(scenario_from_json(j));
  }
  return out;
}

}  // namespace ewoc
