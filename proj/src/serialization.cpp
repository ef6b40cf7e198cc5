#include "ewoc/serialization.hpp"

#include <cmath>
#include <fstream>

namespace ewoc {

namespace {

/// Reads typed fields out of one JSON object, collecting errors instead of throwing.
class Reader {
 public:
  Reader(const json& j, std::vector<FieldError>& errors, std::string prefix = "")
      : j_(j), errors_(errors), prefix_(std::move(prefix)) {
    if (!j_.is_object()) fail("", "must be an object");
  }

  bool has(const char* key) const { return j_.is_object() && j_.contains(key) && !j_.at(key).is_null(); }

  template <typename T>
  void get(const char* key, T& out, bool required = false) {
    if (!has(key)) {
      if (required) fail(key, "is required");
      return;
    }
    try {
      out = j_.at(key).template get<T>();
    } catch (const json::exception&) {
      fail(key, "has the wrong type");
    }
  }

  void number(const char* key, double& out, bool required = false) {
    if (!has(key)) {
      if (required) fail(key, "is required");
      return;
    }
    const json& v = j_.at(key);
    if (!v.is_number()) return fail(key, "must be a number");
    out = v.get<double>();
    if (!std::isfinite(out)) fail(key, "must be finite");
  }

  const json* child(const char* key) const { return has(key) ? &j_.at(key) : nullptr; }
  std::string path(const std::string& key) const { return prefix_ + key; }
  void fail(const std::string& key, const std::string& msg) {
    errors_.push_back({prefix_.empty() && key.empty() ? "(root)" : prefix_ + key, msg});
  }

 private:
  const json& j_;
  std::vector<FieldError>& errors_;
  std::string prefix_;
};

}  // namespace

json config_to_json(const TrialConfig& config) {
  const auto& m = config.model;
  const auto& c = m.constants;
  json constants = {{"theta", c.theta}, {"x_min", c.x_min}, {"x_max", c.x_max}, {"link", "logistic"}};
  if (c.epsilon) constants["epsilon"] = *c.epsilon;
  json prior = {{"kind", to_string(m.prior.kind)}};
  if (m.prior.kind == PriorKind::uniform_1p) {
    prior["beta_lo"] = m.prior.beta_lo;
    prior["beta_hi"] = m.prior.beta_hi;
    prior["x_star"] = m.prior.x_star;
    prior["x_star2"] = m.prior.x_star2;
  }
  json covs = json::array();
  for (const auto& cov : m.covariates)
    covs.push_back({{"name", cov.name}, {"lo", cov.lo}, {"hi", cov.hi}, {"reference", cov.reference}});
  json j = {{"name", config.name},
            {"dose_units", config.dose_units},
            {"constants", constants},
            {"prior", prior},
            {"covariates", covs},
            {"alpha",
             {{"start", config.alpha.start},
              {"increment", config.alpha.increment},
              {"cap", config.alpha.cap},
              {"hold_count", config.alpha.hold_count}}},
            {"dose_levels", config.dose_levels},
            {"tolerances", {{"t1", config.tolerances.t1}, {"t2", config.tolerances.t2}}},
            {"halt_on_first_dlt", config.halt_on_first_dlt}};
  if (!m.resolution.empty()) j["resolution"] = m.resolution;
  if (m.prior.kind == PriorKind::uniform_cov4) {
    j["mc_draws"] = m.mc_draws;
    j["mc_seed"] = m.mc_seed;
  }
  return j;
}

TrialConfig config_from_json(const json& j) {
  std::vector<FieldError> errors;
  TrialConfig config;
  Reader root(j, errors);
  if (!errors.empty()) throw InvalidConfig(std::move(errors));

  root.get("name", config.name);
  root.get("dose_units", config.dose_units);

  auto& model = config.model;
  if (const json* p = root.child("prior")) {
    Reader r(*p, errors, "prior.");
    std::string kind = "uniform_2p";
    r.get("kind", kind);
    try {
      model.prior.kind = prior_kind_from_string(kind);
    } catch (const std::invalid_argument& e) {
      r.fail("kind", e.what());
    }
    r.number("beta_lo", model.prior.beta_lo, model.prior.kind == PriorKind::uniform_1p);
    r.number("beta_hi", model.prior.beta_hi, model.prior.kind == PriorKind::uniform_1p);
    r.number("x_star", model.prior.x_star, model.prior.kind == PriorKind::uniform_1p);
    r.number("x_star2", model.prior.x_star2, model.prior.kind == PriorKind::uniform_1p);
  }
  const bool one_param = model.prior.kind == PriorKind::uniform_1p;

  bool need_bounds = false;
  if (const json* cj = root.child("constants")) {
    Reader r(*cj, errors, "constants.");
    auto& c = model.constants;
    r.number("theta", c.theta, true);
    r.number("x_min", c.x_min, !one_param);
    r.number("x_max", c.x_max, !one_param);
    need_bounds = one_param && !(r.has("x_min") && r.has("x_max"));
    if (r.has("epsilon")) {
      double eps = 0.0;
      r.number("epsilon", eps);
      c.epsilon = eps;
    }
    std::string link = "logistic";
    r.get("link", link);
    if (link != "logistic") r.fail("link", "only the logistic link is supported");
  } else {
    root.fail("constants", "is required");
  }

  if (const json* cv = root.child("covariates")) {
    if (!cv->is_array()) {
      root.fail("covariates", "must be an array");
    } else {
      for (std::size_t k = 0; k < cv->size(); ++k) {
        Reader r((*cv)[k], errors, "covariates[" + std::to_string(k) + "].");
        CovariateSpec cov;
        r.get("name", cov.name, true);
        r.number("lo", cov.lo, true);
        r.number("hi", cov.hi, true);
        cov.reference = cov.hi;
        r.number("reference", cov.reference);
        model.covariates.push_back(cov);
      }
    }
  }
  root.get("resolution", model.resolution);
  root.get("mc_draws", model.mc_draws);
  root.get("mc_seed", model.mc_seed);

  if (const json* a = root.child("alpha")) {
    if (a->is_number()) {
      // a bare number means a constant bound
      config.alpha.start = config.alpha.cap = a->get<double>();
    } else {
      Reader r(*a, errors, "alpha.");
      r.number("start", config.alpha.start, true);
      config.alpha.cap = std::max(config.alpha.cap, config.alpha.start);
      r.number("increment", config.alpha.increment);
      r.number("cap", config.alpha.cap);
      r.get("hold_count", config.alpha.hold_count);
    }
  }
  root.get("dose_levels", config.dose_levels);
  if (const json* t = root.child("tolerances")) {
    Reader r(*t, errors, "tolerances.");
    r.number("t1", config.tolerances.t1);
    r.number("t2", config.tolerances.t2);
  }
  root.get("halt_on_first_dlt", config.halt_on_first_dlt);

  if (!errors.empty()) throw InvalidConfig(std::move(errors));

  if (need_bounds) {
    // one-parameter dose range follows from the prior range of beta
    const auto& p = model.prior;
    if (model.constants.epsilon && p.beta_lo > 0 && p.beta_lo <= p.beta_hi && p.x_star < p.x_star2 &&
        model.constants.theta > 0 && model.constants.theta < 1 - *model.constants.epsilon) {
      const auto [lo, hi] = dose_bounds(model);
      model.constants.x_min = lo;
      model.constants.x_max = hi;
    }
  }
  validate(config);
  return config;
}

TrialConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidConfig({{"(root)", std::string("malformed JSON: ") + e.what()}});
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------

json event_to_json(const TrialEvent& event) {
  return std::visit(
      [](const auto& e) -> json {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, AssignEvent>) {
          json j = {{"type", "assign"},     {"patient_id", e.patient_id}, {"dose", e.dose},
                    {"covariates", e.covariates}, {"alpha", e.alpha},   {"advisory", e.advisory}};
          if (e.continuous_dose) j["continuous_dose"] = *e.continuous_dose;
          return j;
        } else if constexpr (std::is_same_v<E, ResolveEvent>) {
          return {{"type", "resolve"}, {"patient_id", e.patient_id}, {"dlt", e.dlt}};
        } else {
          return {{"type", "halt"}, {"reason", e.reason}};
        }
      },
      event);
}

TrialEvent event_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "assign") {
    AssignEvent e;
    e.patient_id = j.at("patient_id").get<int>();
    e.dose = j.at("dose").get<double>();
    e.covariates = j.value("covariates", std::vector<double>{});
    e.alpha = j.at("alpha").get<double>();
    e.advisory = j.value("advisory", false);
    if (j.contains("continuous_dose") && !j["continuous_dose"].is_null())
      e.continuous_dose = j["continuous_dose"].get<double>();
    return e;
  }
  if (type == "resolve") return ResolveEvent{j.at("patient_id").get<int>(), j.at("dlt").get<int>()};
  if (type == "halt") return HaltEvent{j.at("reason").get<std::string>()};
  throw std::invalid_argument("unknown event type '" + type + "'");
}

json patient_to_json(const Patient& p) {
  json j = {{"id", p.id},
            {"dose", p.dose},
            {"covariates", p.covariates},
            {"alpha", p.alpha},
            {"advisory", p.advisory},
            {"status", p.status == PatientStatus::pending ? "pending" : "resolved"},
            {"dlt", p.status == PatientStatus::pending ? json(nullptr) : json(p.dlt)}};
  j["continuous_dose"] = p.continuous_dose ? json(*p.continuous_dose) : json(nullptr);
  return j;
}

json state_to_json(const TrialState& state) {
  json patients = json::array();
  for (const auto& p : state.patients) patients.push_back(patient_to_json(p));
  return {{"config", config_to_json(state.config)},
          {"patients", patients},
          {"resolution_order", state.resolution_order},
          {"resolved_count", state.resolved_count},
          {"halted", state.halted},
          {"halt_reason", state.halt_reason},
          {"alpha", alpha_at(state)},
          {"version", state.version}};
}

json interval_to_json(const Interval& i) { return {{"lo", i.lo}, {"hi", i.hi}}; }

json summary_to_json(const MtdSummary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"mode", s.mode}, {"median", s.median}};
}

json recommendation_to_json(const Recommendation& r) {
  return {{"next_patient", r.next_patient},
          {"continuous_dose", r.continuous},
          {"dose", r.dose},
          {"advisory", r.advisory},
          {"alpha", r.alpha},
          {"overdose_probability", r.overdose_probability},
          {"summary", summary_to_json(r.summary)},
          {"hpd95", interval_to_json(r.hpd95)}};
}

json estimate_to_json(const MtdEstimate& e) {
  return {{"point", e.point},
          {"hpd95", interval_to_json(e.hpd95)},
          {"alpha_used", e.alpha_used},
          {"loss_risk", e.loss_risk}};
}

json posterior_to_json(const PosteriorGrid& grid) {
  json axes = json::array();
  for (const auto& a : grid.axes) axes.push_back({{"name", a.name}, {"lo", a.lo}, {"hi", a.hi}, {"count", a.count}});
  json out = {{"prior", to_string(grid.spec.prior.kind)},
              {"axes", axes},
              {"log_norm", grid.log_norm},
              {"n_obs", grid.n_obs}};
  std::vector<json> weights;
  if (grid.monte_carlo()) {
    weights.reserve(static_cast<std::size_t>(grid.support_size()));
    for (Eigen::Index i = 0; i < grid.support_size(); ++i) weights.emplace_back(grid.log_weights[i]);
    out["mc_draws"] = grid.spec.mc_draws;
    out["mc_seed"] = grid.spec.mc_seed;
  } else {
    weights.assign(static_cast<std::size_t>(grid.tensor_size()), json(nullptr));
    for (Eigen::Index i = 0; i < grid.support_size(); ++i)
      weights[static_cast<std::size_t>(grid.cloud->cell[i])] = grid.log_weights[i];
  }
  out["log_weights"] = std::move(weights);
  return out;
}

json field_errors_to_json(const std::vector<FieldError>& errors) {
  json out = json::array();
  for (const auto& e : errors) out.push_back({{"field", e.field}, {"message", e.message}});
  return out;
}

}  // namespace ewoc
