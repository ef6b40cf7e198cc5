#include "ewoc/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

namespace ewoc {

std::string to_string(ApiCode code) {
  switch (code) {
    case ApiCode::not_found: return "not_found";
    case ApiCode::conflict: return "conflict";
    case ApiCode::invalid_config: return "invalid_config";
    case ApiCode::trial_halted: return "trial_halted";
    case ApiCode::bad_request: return "bad_request";
  }
  return "bad_request";
}

int http_status(ApiCode code) {
  switch (code) {
    case ApiCode::not_found: return 404;
    case ApiCode::conflict: return 409;
    case ApiCode::invalid_config: return 422;
    case ApiCode::trial_halted: return 409;
    case ApiCode::bad_request: return 400;
  }
  return 400;
}

json ApiError::envelope() const {
  json e = {{"code", to_string(code_)}, {"message", what()}};
  if (!detail_.is_null()) e["detail"] = detail_;
  return {{"error", e}};
}

std::string utc_now() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

// ---------------------------------------------------------------------------
// Store

namespace {

std::string new_id() {
  static std::mutex m;
  static std::mt19937_64 gen{std::random_device{}() ^
                             static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count())};
  std::lock_guard lock(m);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
  return buf;
}

void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
  const char* p = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error("write failed for " + path.string() + ": " + std::strerror(errno));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

/// Appends and fsyncs; the data is on disk when this returns.
void durable_append(const std::filesystem::path& path, const std::string& data, bool create) {
  const int flags = O_WRONLY | O_APPEND | O_CLOEXEC | (create ? O_CREAT | O_EXCL : 0);
  const int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) throw std::runtime_error("cannot open " + path.string() + ": " + std::strerror(errno));
  try {
    write_all(fd, data, path);
    if (::fsync(fd) != 0) throw std::runtime_error("fsync failed for " + path.string());
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  if (create) {
    // make the new directory entry durable too
    const int dfd = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (dfd >= 0) {
      ::fsync(dfd);
      ::close(dfd);
    }
  }
}

std::string event_line(const LoggedEvent& e) {
  return json{{"kind", "event"}, {"version", e.version}, {"at", e.at}, {"event", event_to_json(e.event)}}.dump() +
         "\n";
}

}  // namespace

TrialStore::TrialStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.path().extension() != ".jsonl") continue;
    auto slot = std::make_unique<Slot>();
    slot->record = load_file(entry.path());
    const std::string id = slot->record.id;
    slots_.emplace(id, std::move(slot));
  }
}

TrialRecord TrialStore::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  TrialRecord r;
  std::optional<TrialState> state;
  std::size_t pos = 0;
  std::size_t good_end = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool last = nl == std::string::npos;
    const std::string line = text.substr(pos, last ? std::string::npos : nl - pos);
    json j;
    try {
      if (last) throw std::runtime_error("unterminated line");
      j = json::parse(line);
    } catch (const std::exception&) {
      // only an interrupted final append may be incomplete
      if (last || text.find('\n', nl + 1) == std::string::npos) break;
      throw std::runtime_error("corrupt event log " + path.string());
    }
    if (!state) {
      if (j.value("kind", "") != "header") throw std::runtime_error("missing header in " + path.string());
      r.id = j.at("id").get<std::string>();
      r.created_at = j.at("created_at").get<std::string>();
      r.updated_at = r.created_at;
      r.config = config_from_json(j.at("config"));
      state = initial_state(r.config);
    } else {
      LoggedEvent e{j.at("version").get<std::uint64_t>(), j.at("at").get<std::string>(),
                    event_from_json(j.at("event"))};
      state = ewoc::apply(std::move(*state), e.event);
      if (state->version != e.version) throw std::runtime_error("version gap in " + path.string());
      r.updated_at = e.at;
      r.events.push_back(std::move(e));
    }
    pos = nl + 1;
    good_end = pos;
  }
  if (!state) throw std::runtime_error("empty event log " + path.string());
  if (good_end < text.size()) std::filesystem::resize_file(path, good_end);
  r.state = std::make_shared<const TrialState>(std::move(*state));
  return r;
}

TrialRecord TrialStore::create(const TrialConfig& config, std::vector<double> first_covariates) {
  Transition t = start_trial(config, std::move(first_covariates));
  TrialRecord r;
  r.id = new_id();
  r.config = config;
  r.created_at = utc_now();
  r.updated_at = r.created_at;
  r.events.push_back({t.state.version, r.created_at, t.event});
  r.state = std::make_shared<const TrialState>(std::move(t.state));

  const json header = {{"kind", "header"}, {"id", r.id}, {"created_at", r.created_at}, {"config", config_to_json(config)}};
  durable_append(file_of(r.id), header.dump() + "\n" + event_line(r.events.back()), true);

  auto slot = std::make_unique<Slot>();
  slot->record = r;
  std::lock_guard lock(index_mutex_);
  slots_.emplace(r.id, std::move(slot));
  return r;
}

TrialStore::Slot* TrialStore::find(const std::string& id) const {
  std::lock_guard lock(index_mutex_);
  const auto it = slots_.find(id);
  return it == slots_.end() ? nullptr : it->second.get();
}

void TrialStore::append(Slot& slot, const TrialRecord& next, const LoggedEvent& e) {
  durable_append(file_of(next.id), event_line(e), false);
  std::lock_guard lock(slot.read);
  slot.record = next;
}

std::optional<TrialRecord> TrialStore::get(const std::string& id) const {
  Slot* slot = find(id);
  if (!slot) return std::nullopt;
  std::lock_guard lock(slot->read);
  return slot->record;
}

std::vector<std::string> TrialStore::list() const {
  std::lock_guard lock(index_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, slot] : slots_) ids.push_back(id);
  return ids;
}

// ---------------------------------------------------------------------------
// API

namespace {

/// Maps domain exceptions onto API errors.
template <typename Fn>
auto guarded(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ApiError&) {
    throw;
  } catch (const InvalidConfig& e) {
    throw ApiError(ApiCode::invalid_config, e.what(), field_errors_to_json(e.errors()));
  } catch (const TrialHalted& e) {
    throw ApiError(ApiCode::trial_halted, e.what());
  } catch (const ConflictError& e) {
    throw ApiError(ApiCode::conflict, e.what());
  } catch (const DomainError& e) {
    throw ApiError(ApiCode::bad_request, e.what());
  } catch (const json::exception& e) {
    throw ApiError(ApiCode::bad_request, e.what());
  } catch (const std::invalid_argument& e) {
    throw ApiError(ApiCode::bad_request, e.what());
  }
}

std::vector<double> covariates_of(const json& body) {
  if (!body.is_object() || !body.contains("covariates") || body["covariates"].is_null()) return {};
  return body["covariates"].get<std::vector<double>>();
}

std::optional<std::uint64_t> version_of(const json& body) {
  if (!body.is_object() || !body.contains("expected_version") || body["expected_version"].is_null())
    return std::nullopt;
  return body["expected_version"].get<std::uint64_t>();
}

std::vector<double> reference_covariates(const TrialConfig& config) {
  std::vector<double> w;
  for (const auto& c : config.model.covariates) w.push_back(c.reference);
  return w;
}

}  // namespace

ApiService::ApiService(std::filesystem::path data_dir) : store_(std::move(data_dir)) {}

TrialRecord ApiService::require(const std::string& id) const {
  auto r = store_.get(id);
  if (!r) throw ApiError(ApiCode::not_found, "no trial '" + id + "'");
  return *r;
}

PosteriorCache& ApiService::cache_for(const std::string& id, std::unique_lock<std::mutex>& lock) {
  CacheSlot* slot;
  {
    std::lock_guard index(cache_index_mutex_);
    auto& p = caches_[id];
    if (!p) p = std::make_unique<CacheSlot>();
    slot = p.get();
  }
  lock = std::unique_lock(slot->mutex);
  return slot->cache;
}

json ApiService::trial_json(const TrialRecord& r) const {
  json j = state_to_json(*r.state);
  j["id"] = r.id;
  j["created_at"] = r.created_at;
  j["updated_at"] = r.updated_at;
  return j;
}

json ApiService::recommendation_json(const std::string& id, const TrialState& state,
                                     const std::vector<double>& covariates) {
  if (state.halted) return {{"status", "trial_halted"}, {"halt_reason", state.halt_reason}};
  const Patient* first = state.find(1);
  if (first && first->status == PatientStatus::pending) {
    // nothing can be recommended until patient 1 is resolved
    return {{"status", "awaiting_first_outcome"},
            {"next_patient", 1},
            {"dose", first->dose},
            {"continuous_dose", first->dose},
            {"alpha", first->alpha}};
  }
  std::unique_lock<std::mutex> lock;
  PosteriorCache& cache = cache_for(id, lock);
  const Recommendation rec = next_recommendation(state, covariates, cache);
  json j = recommendation_to_json(rec);
  j["status"] = "ready";
  j["covariates"] = covariates;
  if (state.config.model.has_covariates()) j["conditional_mtd_hpd95"] = j["hpd95"];
  return j;
}

json ApiService::create_trial(const json& body) {
  return guarded([&] {
    const json& cfg = body.contains("config") ? body["config"] : body;
    const TrialConfig config = config_from_json(cfg);
    const TrialRecord r = store_.create(config, covariates_of(body));
    json j = trial_json(r);
    j["first_dose"] = r.state->patients.front().dose;
    return j;
  });
}

json ApiService::list_trials() const {
  json out = json::array();
  for (const auto& id : store_.list()) {
    const auto r = store_.get(id);
    if (!r) continue;
    out.push_back({{"id", r->id},
                   {"name", r->config.name},
                   {"created_at", r->created_at},
                   {"updated_at", r->updated_at},
                   {"patients", r->state->patients.size()},
                   {"halted", r->state->halted},
                   {"version", r->state->version}});
  }
  return {{"trials", out}};
}

json ApiService::get_trial(const std::string& id) const { return trial_json(require(id)); }

json ApiService::enroll(const std::string& id, const json& body) {
  return guarded([&] {
    const auto w = covariates_of(body);
    const TrialRecord r = store_.mutate(id, version_of(body), [&](const TrialState& s) {
      std::unique_lock<std::mutex> lock;
      return enroll_patient(s, w, cache_for(id, lock));
    });
    json j = trial_json(r);
    j["patient"] = patient_to_json(r.state->patients.back());
    return j;
  });
}

json ApiService::post_outcome(const std::string& id, int patient_id, const json& body) {
  return guarded([&] {
    if (!body.is_object() || !body.contains("dlt")) throw ApiError(ApiCode::bad_request, "body needs 'dlt'");
    const json& d = body["dlt"];
    int dlt;
    if (d.is_boolean()) {
      dlt = d.get<bool>() ? 1 : 0;
    } else if (d.is_number_integer() && (d.get<int>() == 0 || d.get<int>() == 1)) {
      dlt = d.get<int>();
    } else {
      throw ApiError(ApiCode::bad_request, "dlt must be 0 or 1");
    }
    const TrialRecord r =
        store_.mutate(id, version_of(body), [&](const TrialState& s) { return record_outcome(s, patient_id, dlt); });
    json j = trial_json(r);
    std::vector<double> w = covariates_of(body);
    if (w.empty()) w = reference_covariates(r.config);
    j["recommendation"] = recommendation_json(id, *r.state, w);
    return j;
  });
}

json ApiService::recommendation(const std::string& id, const std::vector<double>& covariates) {
  return guarded([&] {
    const TrialRecord r = require(id);
    if (r.config.model.has_covariates() && covariates.empty())
      throw ApiError(ApiCode::bad_request, "covariates are required for this trial");
    check_covariates(r.config, covariates);
    json j = recommendation_json(id, *r.state, covariates);
    j["version"] = r.state->version;
    return j;
  });
}

json ApiService::posterior(const std::string& id, const std::vector<double>& covariates, int curve_points) {
  return guarded([&] {
    const TrialRecord r = require(id);
    const TrialState& state = *r.state;
    std::vector<double> w = covariates.empty() ? reference_covariates(r.config) : covariates;
    check_covariates(r.config, w);
    if (curve_points < 2 || curve_points > 1000) throw ApiError(ApiCode::bad_request, "curve_points must be in [2, 1000]");

    std::unique_lock<std::mutex> lock;
    PosteriorCache& cache = cache_for(id, lock);
    const PosteriorGrid& grid = cache.posterior(state);
    const auto m = mtd_marginal(grid, w);
    json density = json::array();
    for (const auto& [x, f] : density_steps(m)) density.push_back({x, f});
    json j = {{"n_obs", grid.n_obs},
              {"version", state.version},
              {"covariates", w},
              {"dose_units", r.config.dose_units},
              {"density", density},
              {"summary", summary_to_json(summarize(m))},
              {"hpd95", interval_to_json(hpd(m, 0.95))}};
    if (r.config.model.has_covariates()) {
      // conditional MTD across the first covariate, others held at w
      const auto& c = r.config.model.covariates.front();
      json curve = json::array();
      for (int i = 0; i < curve_points; ++i) {
        std::vector<double> v = w;
        v[0] = c.lo + (c.hi - c.lo) * i / (curve_points - 1);
        const auto mv = mtd_marginal(grid, v);
        const auto h = hpd(mv, 0.95);
        curve.push_back({{"w", v[0]}, {"median", quantile(mv, 0.5)}, {"lo", h.lo}, {"hi", h.hi}});
      }
      j["mtd_curve"] = {{"covariate", c.name}, {"points", curve}};
    }
    return j;
  });
}

json ApiService::export_log(const std::string& id) const {
  const TrialRecord r = require(id);
  json events = json::array();
  for (const auto& e : r.events)
    events.push_back({{"version", e.version}, {"at", e.at}, {"event", event_to_json(e.event)}});
  return {{"id", r.id}, {"created_at", r.created_at}, {"config", config_to_json(r.config)}, {"events", events}};
}

std::vector<double> parse_covariate_query(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size() || !std::isfinite(v))
      throw ApiError(ApiCode::bad_request, "covariates must be a comma-separated list of numbers");
    out.push_back(v);
  }
  return out;
}

}  // namespace ewoc
