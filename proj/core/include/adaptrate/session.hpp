#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "adaptrate/design.hpp"
#include "adaptrate/serialization.hpp"

namespace adaptrate {

enum class SessionMode { Manual, Simulated };
enum class SessionStatus { AwaitingObservation, Converged, Aborted };

std::string to_string(SessionMode mode);
std::string to_string(SessionStatus status);

/// Everything needed to start a session.
///
///   {"model": {...}, "prior": {...}, "grid": {...}, "config": {...},
///    "mode": {"kind": "manual"} | {"kind": "simulated", "rates": [1, 2], "seed": 7}}
///
/// grid and config are optional. A simulated session draws its observations
/// from the chain with `rates`, using a generator seeded with `seed`, exactly
/// like SimulatedSource in run_adaptive.
struct SessionRequest {
  ChainModel model = ChainModel::two_state_unidirectional();
  PriorSpec prior = GammaPrior{};
  GridSpec grid;
  DesignConfig config;
  SessionMode mode = SessionMode::Manual;
  RateVector h_true;
  std::uint64_t simulation_seed = 0;

  void validate() const;
};

SessionRequest session_request_from_json(const Json& j);
Json to_json(const SessionRequest& request);

/// Immutable state of one session after a committed update.
struct SessionSnapshot {
  std::string id;
  SessionRequest request;
  InferenceRun run;
  /// Simulated sessions only.
  std::optional<SimulatedSource> source;
  /// Present while awaiting an observation.
  std::optional<Recommendation> recommendation;
  /// Idempotency key -> (state, time) of the observation it committed.
  std::map<std::string, std::pair<State, double>> applied_keys;

  SessionStatus status() const;
};

Json snapshot_to_json(const SessionSnapshot& s);
SessionSnapshot snapshot_from_json(const Json& j);
/// Client-facing summary (no posterior arrays).
Json session_summary(const SessionSnapshot& s);

/// Posterior view for display. Grid posteriors: per-rate marginals and, for
/// two rates, the joint; each as {"nodes", "weights", "density"} with
/// sum(density * weights) = 1. `resolution` K below the grid size bins the
/// mass into K equal cells per axis; otherwise node values are returned.
/// Structure posteriors: per-edge probabilities and the MAP configuration.
/// Always includes mean, covariance, MAP, spread, threshold and the
/// objective-vs-offset curve over the candidate offsets.
Json posterior_view(const SessionSnapshot& s, std::optional<std::size_t> resolution);

/// Thread-safe session registry with optional file persistence: one
/// `<id>.json` snapshot per session in the data directory, rewritten after
/// every committed update. Updates to one session are serialized; reads see
/// the last committed snapshot without waiting for a writer.
class SessionStore {
 public:
  /// Empty path keeps sessions in memory only. Existing snapshots in the
  /// directory are loaded.
  explicit SessionStore(std::filesystem::path data_dir = {});
  ~SessionStore();

  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  Json create(const Json& request);
  Json list() const;
  Json get(const std::string& id) const;
  /// Body {"state": k, "time": t, "idempotency_key": "..."}; time defaults
  /// to the recommended time. A repeated key with the same payload returns
  /// the current summary without updating; with a different payload it is
  /// rejected.
  Json observe(const std::string& id, const Json& body);
  /// Simulated sessions: body {"steps": n} (default 1) or
  /// {"until_converged": true}; stops early once the run finishes.
  Json advance(const std::string& id, const Json& body);
  Json posterior(const std::string& id, std::optional<std::size_t> resolution) const;
  /// Returns whether a session was removed; deleting twice is not an error.
  bool remove(const std::string& id);

  std::shared_ptr<const SessionSnapshot> snapshot(const std::string& id) const;
  std::size_t size() const;

 private:
  struct Entry;

  std::shared_ptr<Entry> entry(const std::string& id) const;
  void commit(Entry& e, std::shared_ptr<const SessionSnapshot> next);
  void persist(const SessionSnapshot& s) const;

  std::filesystem::path data_dir_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

/// Transport-independent request/response pair for the session API.
struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  Json body;
};

/// Routes the documented endpoints onto a store. Errors come back as
/// {"error": {"code": "...", "message": "..."}} with 400 (bad input),
/// 404 (unknown session or route), 405 (wrong method), 409 (session state
/// forbids the call) or 500.
ApiResponse handle_request(SessionStore& store, const ApiRequest& request);

}  // namespace adaptrate
