#ifndef EWOC_SERIALIZATION_HPP
#define EWOC_SERIALIZATION_HPP

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ewoc/trial.hpp"

namespace ewoc {

using json = nlohmann::json;

json config_to_json(const TrialConfig& config);
/// Parses and validates; shape and range problems are reported together as InvalidConfig.
TrialConfig config_from_json(const json& j);
TrialConfig load_config(const std::filesystem::path& path);

json event_to_json(const TrialEvent& event);
TrialEvent event_from_json(const json& j);

json patient_to_json(const Patient& p);
json state_to_json(const TrialState& state);

json interval_to_json(const Interval& i);
json summary_to_json(const MtdSummary& s);
json recommendation_to_json(const Recommendation& r);
json estimate_to_json(const MtdEstimate& e);

/// Axes plus the row-major log-weight tensor; cells outside the prior support are null.
json posterior_to_json(const PosteriorGrid& grid);

json field_errors_to_json(const std::vector<FieldError>& errors);

}  // namespace ewoc

#endif  // EWOC_SERIALIZATION_HPP
