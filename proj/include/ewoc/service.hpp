#ifndef EWOC_SERVICE_HPP
#define EWOC_SERVICE_HPP

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ewoc/serialization.hpp"
#include "ewoc/trial.hpp"

namespace ewoc {

enum class ApiCode { not_found, conflict, invalid_config, trial_halted, bad_request };

std::string to_string(ApiCode code);
int http_status(ApiCode code);

class ApiError : public std::runtime_error {
 public:
  ApiError(ApiCode code, const std::string& message, json detail = nullptr)
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ApiCode code() const noexcept { return code_; }
  const json& detail() const noexcept { return detail_; }
  json envelope() const;

 private:
  ApiCode code_;
  json detail_;
};

/// RFC 3339 UTC timestamp with millisecond precision.
std::string utc_now();

struct LoggedEvent {
  std::uint64_t version = 0;
  std::string at;
  TrialEvent event;
};

struct TrialRecord {
  std::string id;
  TrialConfig config;
  std::string created_at;
  std::string updated_at;
  std::vector<LoggedEvent> events;
  /// Current state; replaying `events` reproduces it.
  std::shared_ptr<const TrialState> state;
};

/// Append-only JSON-lines event log per trial. The first line holds the id and
/// config, each later line one event. Appends are fsync'ed before they return.
class TrialStore {
 public:
  explicit TrialStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  /// Validates, persists the header and the first assignment.
  TrialRecord create(const TrialConfig& config, std::vector<double> first_covariates = {});
  /// Applies the transition produced by `make` when the version still matches.
  template <typename Make>
  TrialRecord mutate(const std::string& id, std::optional<std::uint64_t> expected_version, Make&& make);

  std::optional<TrialRecord> get(const std::string& id) const;
  std::vector<std::string> list() const;

  /// Reads one trial file from disk; a torn trailing line is dropped.
  static TrialRecord load_file(const std::filesystem::path& path);

 private:
  struct Slot {
    std::mutex write;
    mutable std::mutex read;
    TrialRecord record;
  };

  Slot* find(const std::string& id) const;
  void append(Slot& slot, const TrialRecord& next, const LoggedEvent& e);
  std::filesystem::path file_of(const std::string& id) const { return dir_ / (id + ".jsonl"); }

  std::filesystem::path dir_;
  mutable std::mutex index_mutex_;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
};

/// Transport-independent API: every method returns the JSON body or throws ApiError.
class ApiService {
 public:
  explicit ApiService(std::filesystem::path data_dir);

  json create_trial(const json& body);
  json list_trials() const;
  json get_trial(const std::string& id) const;
  json enroll(const std::string& id, const json& body);
  json post_outcome(const std::string& id, int patient_id, const json& body);
  json recommendation(const std::string& id, const std::vector<double>& covariates);
  json posterior(const std::string& id, const std::vector<double>& covariates, int curve_points = 21);
  json export_log(const std::string& id) const;

  TrialStore& store() { return store_; }

 private:
  TrialRecord require(const std::string& id) const;
  json trial_json(const TrialRecord& r) const;
  json recommendation_json(const std::string& id, const TrialState& state, const std::vector<double>& covariates);
  PosteriorCache& cache_for(const std::string& id, std::unique_lock<std::mutex>& lock);

  TrialStore store_;
  std::mutex cache_index_mutex_;
  struct CacheSlot {
    std::mutex mutex;
    PosteriorCache cache;
  };
  std::map<std::string, std::unique_ptr<CacheSlot>> caches_;
};

/// Parses "a,b,c" into numbers; throws ApiError(bad_request).
std::vector<double> parse_covariate_query(const std::string& text);

struct ServeOptions {
  std::filesystem::path data_dir = "ewoc-data";
  std::string host = "0.0.0.0";
  int port = 8080;
  /// When set, requests need "Authorization: Bearer <token>".
  std::optional<std::string> token;
};

/// The HTTP API over an ApiService. listen() blocks until stop() is called from another thread.
class HttpServer {
 public:
  explicit HttpServer(ServeOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks serving the HTTP API.
int serve(const ServeOptions& options);

// ---------------------------------------------------------------------------

template <typename Make>
TrialRecord TrialStore::mutate(const std::string& id, std::optional<std::uint64_t> expected_version, Make&& make) {
  Slot* slot = find(id);
  if (!slot) throw ApiError(ApiCode::not_found, "no trial '" + id + "'");
  std::lock_guard lock(slot->write);
  const TrialRecord& cur = slot->record;
  if (expected_version && *expected_version != cur.state->version)
    throw ApiError(ApiCode::conflict, "version mismatch: expected " + std::to_string(*expected_version) +
                                          ", current " + std::to_string(cur.state->version),
                   json{{"current_version", cur.state->version}});
  Transition t = make(*cur.state);
  TrialRecord next = cur;
  LoggedEvent e{t.state.version, utc_now(), t.event};
  next.updated_at = e.at;
  next.events.push_back(e);
  next.state = std::make_shared<const TrialState>(std::move(t.state));
  append(*slot, next, e);
  return next;
}

}  // namespace ewoc

#endif  // EWOC_SERVICE_HPP
