#include "adaptrate/session.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "adaptrate/error.hpp"

namespace adaptrate {

namespace fs = std::filesystem;

namespace {

PriorSpec default_prior(const ChainModel& model) {
  switch (model.kind()) {
    case ChainKind::TwoStateUnidirectional: return GammaPrior{};
    case ChainKind::MM1Queue: return TruncatedBivariateGammaPrior{};
    case ChainKind::BinaryDigraph: return BernoulliStructurePrior{0.5, model.num_states()};
    default: return BivariateGammaPrior{};
  }
}

std::string new_session_id() {
  static std::mutex mutex;
  static std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(mutex);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(gen()),
                static_cast<unsigned long long>(gen()));
  return buf;
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; });
}

std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

Rng rng_from_state(const std::string& state) {
  Rng rng;
  std::istringstream in(state);
  in >> rng;
  require(!in.fail(), ErrorCode::InvalidArgument, "corrupt generator state in snapshot");
  return rng;
}

Json recommendation_json(const std::optional<Recommendation>& r) {
  if (!r) return nullptr;
  return {{"offset", r->offset}, {"time", r->time}, {"objective", r->objective}};
}

Json covariance_json(const CovarianceMatrix& c) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < c.cols(); ++j) row.push_back(c(i, j));
    out.push_back(row);
  }
  return out;
}

/// Node masses binned into `bins` equal cells over each axis's range.
struct Binning {
  std::vector<double> centers;
  double width = 0.0;
  std::vector<std::size_t> bin_of_node;
};

Binning make_binning(const GridAxis& axis, std::size_t bins) {
  Binning b;
  const double lo = axis.nodes.front();
  const double hi = axis.nodes.back();
  b.width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t k = 0; k < bins; ++k) b.centers.push_back(lo + (static_cast<double>(k) + 0.5) * b.width);
  for (double x : axis.nodes) {
    const auto k = static_cast<std::size_t>(std::floor((x - lo) / b.width));
    b.bin_of_node.push_back(std::min(k, bins - 1));
  }
  return b;
}

SessionSnapshot start_session(std::string id, SessionRequest request) {
  request.validate();
  Posterior prior = initial_posterior(request.prior, request.grid);
  SessionSnapshot s{std::move(id), request, InferenceRun(request.model, std::move(prior), request.config),
                    std::nullopt, std::nullopt, {}};
  if (request.mode == SessionMode::Simulated) {
    s.source.emplace(request.model, request.h_true, request.simulation_seed);
  }
  if (!s.run.finished()) s.recommendation = s.run.recommend();
  return s;
}

}  // namespace

std::string to_string(SessionMode mode) { return mode == SessionMode::Manual ? "manual" : "simulated"; }

std::string to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::AwaitingObservation: return "awaiting_observation";
    case SessionStatus::Converged: return "converged";
    case SessionStatus::Aborted: return "aborted";
  }
  return "unknown";
}

void SessionRequest::validate() const {
  config.validate();
  validate_prior_for_model(prior, model);
  require(grid.h_max > 0.0 && grid.nodes >= 2, ErrorCode::InvalidArgument, "grid needs h_max > 0 and nodes >= 2");
  if (mode == SessionMode::Simulated) {
    require(h_true.size() == model.rate_dim(), ErrorCode::DimensionMismatch, [&] {
      return "simulated mode needs " + std::to_string(model.rate_dim()) + " true rates, got " +
             std::to_string(h_true.size());
    });
    for (double v : h_true.values) {
      require(std::isfinite(v) && v >= 0.0, ErrorCode::NegativeRate, "true rates must be finite and >= 0");
    }
  }
}

SessionRequest session_request_from_json(const Json& j) {
  require(j.is_object(), ErrorCode::InvalidArgument, "session request must be a JSON object");
  require(j.contains("model"), ErrorCode::InvalidArgument, "session request needs a model");
  SessionRequest r;
  r.model = model_from_json(j.at("model"));
  r.prior = j.contains("prior") ? prior_from_json(j.at("prior")) : default_prior(r.model);
  if (j.contains("grid")) r.grid = grid_from_json(j.at("grid"));
  if (j.contains("config")) r.config = config_from_json(j.at("config"));
  if (j.contains("mode")) {
    const Json& m = j.at("mode");
    const std::string kind = json_string(m, "kind");
    if (kind == "manual") {
      r.mode = SessionMode::Manual;
    } else if (kind == "simulated") {
      r.mode = SessionMode::Simulated;
      require(m.contains("rates"), ErrorCode::InvalidArgument, "simulated mode needs 'rates'");
      r.h_true = rates_from_json(m.at("rates"));
      r.simulation_seed = json_unsigned(m, "seed", r.config.seed);
    } else {
      fail(ErrorCode::InvalidArgument, "unknown session mode '" + kind + "'");
    }
  }
  r.validate();
  return r;
}

Json to_json(const SessionRequest& r) {
  Json mode{{"kind", to_string(r.mode)}};
  if (r.mode == SessionMode::Simulated) {
    mode["rates"] = to_json(r.h_true);
    mode["seed"] = r.simulation_seed;
  }
  return {{"model", to_json(r.model)},
          {"prior", to_json(r.prior)},
          {"grid", to_json(r.grid)},
          {"config", to_json(r.config)},
          {"mode", mode}};
}

SessionStatus SessionSnapshot::status() const {
  if (run.converged()) return SessionStatus::Converged;
  if (run.finished()) return SessionStatus::Aborted;
  return SessionStatus::AwaitingObservation;
}

Json snapshot_to_json(const SessionSnapshot& s) {
  Json keys = Json::object();
  for (const auto& [k, v] : s.applied_keys) keys[k] = {{"state", v.first}, {"time", v.second}};
  Json j{{"id", s.id},
         {"request", to_json(s.request)},
         {"posterior", to_json(s.run.posterior())},
         {"trace", to_json(s.run.trace())},
         {"recommendation", recommendation_json(s.recommendation)},
         {"idempotency_keys", keys}};
  if (s.source) j["rng"] = rng_state(s.source->rng());
  return j;
}

SessionSnapshot snapshot_from_json(const Json& j) {
  const std::string id = json_string(j, "id");
  require(valid_id(id), ErrorCode::InvalidArgument, "snapshot has an invalid id");
  const SessionRequest request = session_request_from_json(j.at("request"));
  Posterior post = posterior_from_json(j.at("posterior"));
  Trace trace = trace_from_json(j.at("trace"));

  InferenceRun run(request.model, post, request.config);
  run.restore(std::move(post), std::move(trace));
  SessionSnapshot s{id, request, std::move(run), std::nullopt, std::nullopt, {}};
  if (request.mode == SessionMode::Simulated) {
    s.source.emplace(request.model, request.h_true, request.simulation_seed);
    s.source->rng() = rng_from_state(json_string(j, "rng"));
  }
  const Json& rec = j.at("recommendation");
  if (!rec.is_null()) {
    s.recommendation = Recommendation{json_number(rec, "offset"), json_number(rec, "time"), json_number(rec, "objective")};
  }
  if (j.contains("idempotency_keys")) {
    for (const auto& [k, v] : j.at("idempotency_keys").items()) {
      s.applied_keys[k] = {json_unsigned(v, "state"), json_number(v, "time")};
    }
  }
  return s;
}

Json session_summary(const SessionSnapshot& s) {
  const InferenceRun& run = s.run;
  const Trace& trace = run.trace();
  Json steps = Json::array();
  for (const TraceStep& st : trace.steps) {
    steps.push_back({{"n", st.n},
                     {"t", st.t},
                     {"dt", st.dt},
                     {"x", st.x},
                     {"objective", std::isfinite(st.objective) ? Json(st.objective) : Json(nullptr)},
                     {"spread", st.spread}});
  }
  const Json request = to_json(s.request);
  return {{"id", s.id},
          {"status", to_string(s.status())},
          {"mode", request.at("mode")},
          {"model", request.at("model")},
          {"prior", request.at("prior")},
          {"grid", request.at("grid")},
          {"config", request.at("config")},
          {"rate_labels", s.request.model.rate_labels()},
          {"num_states", s.request.model.num_states()},
          {"protocol", s.request.model.protocol() == Protocol::ResetEachSample ? "reset_each_sample"
                                                                                : "continuous_trajectory"},
          {"samples", trace.sample_count()},
          {"last_time", run.last_time()},
          {"from_state", run.from_state()},
          {"spread", run.spread()},
          {"threshold", run.threshold()},
          {"converged", run.converged()},
          {"hit_step_cap", trace.hit_step_cap},
          {"recommendation", recommendation_json(s.recommendation)},
          {"map", map_estimate(run.posterior()).values},
          {"mean", posterior_mean(run.posterior()).values},
          {"trace", steps}};
}

Json posterior_view(const SessionSnapshot& s, std::optional<std::size_t> resolution) {
  const Posterior& post = s.run.posterior();
  const ChainModel& model = s.request.model;
  const std::vector<std::string> labels = model.rate_labels();
  Json out{{"id", s.id},
           {"samples", s.run.trace().sample_count()},
           {"rate_labels", labels},
           {"mean", posterior_mean(post).values},
           {"map", map_estimate(post).values},
           {"covariance", covariance_json(posterior_covariance(post))},
           {"spread", s.run.spread()},
           {"threshold", s.run.threshold()}};

  if (post.kind() == SupportKind::Grid) {
    const RateGrid& grid = post.support().grid();
    const std::size_t d = post.dims();
    const bool binned = resolution && *resolution < grid.axis(0).nodes.size();
    Json marginals = Json::array();
    if (binned) {
      const std::size_t k = *resolution;
      std::vector<Binning> bins;
      for (std::size_t a = 0; a < d; ++a) bins.push_back(make_binning(grid.axis(a), k));
      const auto shape = grid.shape();
      std::vector<std::vector<double>> marginal_mass(d, std::vector<double>(k, 0.0));
      std::vector<double> joint_mass(d == 2 ? k * k : 0, 0.0);
      std::vector<std::size_t> idx(d, 0);
      for (std::size_t i = 0; i < post.size(); ++i) {
        const double m = post.mass(i);
        for (std::size_t a = 0; a < d; ++a) marginal_mass[a][bins[a].bin_of_node[idx[a]]] += m;
        if (d == 2) joint_mass[bins[0].bin_of_node[idx[0]] * k + bins[1].bin_of_node[idx[1]]] += m;
        for (std::size_t a = d; a-- > 0;) {
          if (++idx[a] < shape[a]) break;
          idx[a] = 0;
        }
      }
      for (std::size_t a = 0; a < d; ++a) {
        std::vector<double> density(k);
        for (std::size_t b = 0; b < k; ++b) density[b] = marginal_mass[a][b] / bins[a].width;
        marginals.push_back({{"label", labels[a]},
                             {"nodes", bins[a].centers},
                             {"weights", std::vector<double>(k, bins[a].width)},
                             {"density", density}});
      }
      if (d == 2) {
        Json rows = Json::array();
        for (std::size_t i = 0; i < k; ++i) {
          std::vector<double> row(k);
          for (std::size_t j = 0; j < k; ++j) row[j] = joint_mass[i * k + j] / (bins[0].width * bins[1].width);
          rows.push_back(row);
        }
        out["joint"] = {{"nodes", {bins[0].centers, bins[1].centers}},
                        {"weights", {std::vector<double>(k, bins[0].width), std::vector<double>(k, bins[1].width)}},
                        {"density", rows}};
      }
    } else {
      for (std::size_t a = 0; a < d; ++a) {
        marginals.push_back({{"label", labels[a]},
                             {"nodes", grid.axis(a).nodes},
                             {"weights", grid.axis(a).weights},
                             {"density", marginal_density(post, a)}});
      }
      if (d == 2) {
        const std::size_t n0 = grid.axis(0).nodes.size();
        const std::size_t n1 = grid.axis(1).nodes.size();
        Json rows = Json::array();
        for (std::size_t i = 0; i < n0; ++i) {
          rows.push_back(std::vector<double>(post.density().begin() + static_cast<std::ptrdiff_t>(i * n1),
                                             post.density().begin() + static_cast<std::ptrdiff_t>((i + 1) * n1)));
        }
        out["joint"] = {{"nodes", {grid.axis(0).nodes, grid.axis(1).nodes}},
                        {"weights", {grid.axis(0).weights, grid.axis(1).weights}},
                        {"density", rows}};
      }
    }
    out["marginals"] = marginals;
  } else {
    std::vector<double> edge(post.dims(), 0.0);
    for (std::size_t c = 0; c < post.size(); ++c) {
      for (std::size_t k = 0; k < post.dims(); ++k) edge[k] += post.mass(c) * post.support().point(c)[k];
    }
    out["edge_probabilities"] = edge;
  }

  const std::vector<double> offsets = candidate_offsets(s.request.config);
  out["objective_curve"] = {{"offsets", offsets},
                            {"values", objective_curve(post, model, s.run.from_state(), s.request.config)}};
  out["recommendation"] = recommendation_json(s.recommendation);
  return out;
}

struct SessionStore::Entry {
  std::mutex writer;
  mutable std::mutex pointer;
  std::shared_ptr<const SessionSnapshot> committed;
  bool deleted = false;

  std::shared_ptr<const SessionSnapshot> load() const {
    std::lock_guard lock(pointer);
    return committed;
  }
};

SessionStore::SessionStore(fs::path data_dir) : data_dir_(std::move(data_dir)) {
  if (data_dir_.empty()) return;
  std::error_code ec;
  fs::create_directories(data_dir_, ec);
  require(!ec && fs::is_directory(data_dir_), ErrorCode::Io,
          [&] { return "cannot use data directory " + data_dir_.string(); });
  for (const auto& file : fs::directory_iterator(data_dir_)) {
    if (!file.is_regular_file() || file.path().extension() != ".json") continue;
    auto snap = std::make_shared<const SessionSnapshot>(snapshot_from_json(read_json_file(file.path().string())));
    auto e = std::make_shared<Entry>();
    e->committed = snap;
    sessions_[snap->id] = std::move(e);
  }
}

SessionStore::~SessionStore() = default;

std::shared_ptr<SessionStore::Entry> SessionStore::entry(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  auto it = sessions_.find(id);
  require(it != sessions_.end(), ErrorCode::NotFound, [&] { return "no session '" + id + "'"; });
  return it->second;
}

void SessionStore::persist(const SessionSnapshot& s) const {
  if (data_dir_.empty()) return;
  const fs::path target = data_dir_ / (s.id + ".json");
  const fs::path temp = data_dir_ / (s.id + ".json.tmp");
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::Io, [&] { return "cannot write " + temp.string(); });
    out << snapshot_to_json(s).dump();
    out.flush();
    require(out.good(), ErrorCode::Io, [&] { return "write failed for " + temp.string(); });
  }
  std::error_code ec;
  fs::rename(temp, target, ec);
  require(!ec, ErrorCode::Io, [&] { return "cannot replace " + target.string(); });
}

void SessionStore::commit(Entry& e, std::shared_ptr<const SessionSnapshot> next) {
  persist(*next);
  std::lock_guard lock(e.pointer);
  e.committed = std::move(next);
}

Json SessionStore::create(const Json& request) {
  SessionRequest req = session_request_from_json(request);
  auto snap = std::make_shared<const SessionSnapshot>(start_session(new_session_id(), std::move(req)));
  persist(*snap);
  auto e = std::make_shared<Entry>();
  e->committed = snap;
  {
    std::unique_lock lock(map_mutex_);
    sessions_[snap->id] = e;
  }
  return session_summary(*snap);
}

Json SessionStore::list() const {
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::shared_lock lock(map_mutex_);
    for (const auto& [id, e] : sessions_) entries.push_back(e);
  }
  Json out = Json::array();
  for (const auto& e : entries) out.push_back(session_summary(*e->load()));
  return {{"sessions", out}};
}

Json SessionStore::get(const std::string& id) const { return session_summary(*entry(id)->load()); }

std::shared_ptr<const SessionSnapshot> SessionStore::snapshot(const std::string& id) const { return entry(id)->load(); }

std::size_t SessionStore::size() const {
  std::shared_lock lock(map_mutex_);
  return sessions_.size();
}

Json SessionStore::observe(const std::string& id, const Json& body) {
  require(body.is_object(), ErrorCode::InvalidArgument, "observation body must be a JSON object");
  auto e = entry(id);
  std::lock_guard writer(e->writer);
  require(!e->deleted, ErrorCode::NotFound, [&] { return "no session '" + id + "'"; });
  const auto current = e->load();

  const std::uint64_t state = json_unsigned(body, "state");
  std::optional<std::string> key;
  if (body.contains("idempotency_key") && !body.at("idempotency_key").is_null()) {
    key = json_string(body, "idempotency_key");
  }

  if (key) {
    auto it = current->applied_keys.find(*key);
    if (it != current->applied_keys.end()) {
      const bool same_state = it->second.first == state;
      const bool same_time = !body.contains("time") || json_number(body, "time") == it->second.second;
      require(same_state && same_time, ErrorCode::InvalidState,
              "idempotency key was already used for a different observation");
      return session_summary(*current);
    }
  }

  require(current->status() == SessionStatus::AwaitingObservation, ErrorCode::InvalidState,
          [&] { return "session is " + to_string(current->status()) + "; no observation expected"; });
  require(state < current->request.model.num_states(), ErrorCode::InvalidArgument, [&] {
    return "state " + std::to_string(state) + " is outside 0.." +
           std::to_string(current->request.model.num_states() - 1);
  });
  const Recommendation& rec = *current->recommendation;
  const double time = body.contains("time") ? json_number(body, "time") : rec.time;
  require(std::isfinite(time) && time > 0.0, ErrorCode::InvalidArgument, "observation time must be > 0");

  SessionSnapshot next = *current;
  const double offset =
      next.request.model.protocol() == Protocol::ResetEachSample ? time : time - next.run.last_time();
  require(offset > 0.0, ErrorCode::InvalidArgument, "observation time must be after the previous observation");
  const double objective = time == rec.time ? rec.objective : next.run.objective_at(offset);
  next.run.record(time, static_cast<State>(state), objective);
  next.recommendation.reset();
  if (!next.run.finished()) next.recommendation = next.run.recommend();
  if (key) next.applied_keys[*key] = {static_cast<State>(state), time};

  auto snap = std::make_shared<const SessionSnapshot>(std::move(next));
  commit(*e, snap);
  return session_summary(*snap);
}

Json SessionStore::advance(const std::string& id, const Json& body) {
  require(body.is_null() || body.is_object(), ErrorCode::InvalidArgument, "advance body must be a JSON object");
  auto e = entry(id);
  std::lock_guard writer(e->writer);
  require(!e->deleted, ErrorCode::NotFound, [&] { return "no session '" + id + "'"; });
  const auto current = e->load();
  require(current->request.mode == SessionMode::Simulated, ErrorCode::InvalidState,
          "advance is only available for simulated sessions");

  bool until_converged = false;
  std::uint64_t steps = 1;
  if (body.is_object()) {
    if (body.contains("until_converged")) {
      require(body.at("until_converged").is_boolean(), ErrorCode::InvalidArgument, "'until_converged' must be a boolean");
      until_converged = body.at("until_converged").get<bool>();
    }
    steps = json_unsigned(body, "steps", 1);
  }

  SessionSnapshot next = *current;
  std::uint64_t taken = 0;
  while (!next.run.finished() && (until_converged || taken < steps)) {
    const Recommendation rec = *next.recommendation;
    const State x = next.source->observe(next.run.from_state(), rec.offset, rec.time);
    next.run.record(rec.time, x, rec.objective);
    next.recommendation.reset();
    if (!next.run.finished()) next.recommendation = next.run.recommend();
    ++taken;
  }
  if (taken == 0) return session_summary(*current);
  auto snap = std::make_shared<const SessionSnapshot>(std::move(next));
  commit(*e, snap);
  return session_summary(*snap);
}

Json SessionStore::posterior(const std::string& id, std::optional<std::size_t> resolution) const {
  require(!resolution || *resolution >= 2, ErrorCode::InvalidArgument, "resolution must be >= 2");
  return posterior_view(*entry(id)->load(), resolution);
}

bool SessionStore::remove(const std::string& id) {
  std::shared_ptr<Entry> e;
  {
    std::unique_lock lock(map_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return false;
    e = it->second;
    sessions_.erase(it);
  }
  std::lock_guard writer(e->writer);
  e->deleted = true;
  if (!data_dir_.empty() && valid_id(id)) {
    std::error_code ec;
    fs::remove(data_dir_ / (id + ".json"), ec);
  }
  return true;
}

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

ApiResponse error_response(int status, std::string_view code, const std::string& message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::InvalidState: return 409;
    case ErrorCode::Io: return 500;
    default: return 400;
  }
}

Json parse_body(const std::string& body) {
  if (body.empty()) return Json::object();
  return parse_json(body);
}

}  // namespace

ApiResponse handle_request(SessionStore& store, const ApiRequest& request) {
  try {
    const std::vector<std::string> parts = split_path(request.path);
    if (parts.empty() || parts[0] != "sessions" || parts.size() > 3) {
      return error_response(404, "not_found", "no route for " + request.path);
    }
    const std::string& method = request.method;
    auto wrong_method = [&] { return error_response(405, "method_not_allowed", method + " not allowed on " + request.path); };

    if (parts.size() == 1) {
      if (method == "GET") return {200, store.list()};
      if (method == "POST") return {201, store.create(parse_body(request.body))};
      return wrong_method();
    }
    const std::string& id = parts[1];
    if (parts.size() == 2) {
      if (method == "GET") return {200, store.get(id)};
      if (method == "DELETE") {
        const bool existed = store.remove(id);
        return {200, {{"id", id}, {"deleted", existed}}};
      }
      return wrong_method();
    }
    const std::string& action = parts[2];
    if (action == "observations") {
      if (method != "POST") return wrong_method();
      Json body = parse_body(request.body);
      auto header = request.headers.find("Idempotency-Key");
      if (header != request.headers.end() && body.is_object() && !body.contains("idempotency_key")) {
        body["idempotency_key"] = header->second;
      }
      return {200, store.observe(id, body)};
    }
    if (action == "advance") {
      if (method != "POST") return wrong_method();
      return {200, store.advance(id, parse_body(request.body))};
    }
    if (action == "posterior") {
      if (method != "GET") return wrong_method();
      std::optional<std::size_t> resolution;
      auto it = request.query.find("resolution");
      if (it != request.query.end()) {
        const std::string& v = it->second;
        require(!v.empty() && v.size() <= 6 && v.find_first_not_of("0123456789") == std::string::npos,
                ErrorCode::InvalidArgument, "resolution must be a positive integer");
        resolution = std::stoul(v);
      }
      return {200, store.posterior(id, resolution)};
    }
    return error_response(404, "not_found", "no route for " + request.path);
  } catch (const Error& e) {
    return error_response(status_for(e.code()), to_string(e.code()), e.what());
  } catch (const Json::exception& e) {
    return error_response(400, to_string(ErrorCode::InvalidArgument), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

}  // namespace adaptrate
