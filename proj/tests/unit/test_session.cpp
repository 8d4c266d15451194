#include <doctest.h>

#include <filesystem>
#include <random>

#include "adaptrate/error.hpp"
#include "adaptrate/serialization.hpp"
#include "adaptrate/session.hpp"

using namespace adaptrate;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  std::random_device rd;
  const auto dir = std::filesystem::temp_directory_path() / ("adaptrate_" + name + "_" + std::to_string(rd()));
  std::filesystem::remove_all(dir);
  return dir;
}

Json simulated_request(std::uint64_t seed) {
  return {{"model", {{"kind", "two_state_bidirectional"}}},
          {"grid", {{"h_max", 10}, {"nodes", 21}}},
          {"config", {{"theta", 0.2}}},
          {"mode", {{"kind", "simulated"}, {"rates", {1.0, 2.0}}, {"seed", seed}}}};
}

Json manual_request() {
  return {{"model", {{"kind", "two_state_unidirectional"}}}, {"grid", {{"h_max", 10}, {"nodes", 51}}}};
}

ApiResponse call(SessionStore& store, std::string method, std::string path, const Json& body = nullptr,
                 std::map<std::string, std::string> query = {}, std::map<std::string, std::string> headers = {}) {
  ApiRequest r;
  r.method = std::move(method);
  r.path = std::move(path);
  r.body = body.is_null() ? "" : body.dump();
  r.query = std::move(query);
  r.headers = std::move(headers);
  return handle_request(store, r);
}

double joint_mass(const Json& joint) {
  const auto w0 = joint["weights"][0].get<std::vector<double>>();
  const auto w1 = joint["weights"][1].get<std::vector<double>>();
  double total = 0.0;
  for (std::size_t i = 0; i < w0.size(); ++i) {
    for (std::size_t j = 0; j < w1.size(); ++j) total += joint["density"][i][j].get<double>() * w0[i] * w1[j];
  }
  return total;
}

}  // namespace

TEST_CASE("create, list, get and delete") {
  SessionStore store;
  const ApiResponse created = call(store, "POST", "/sessions", manual_request());
  REQUIRE(created.status == 201);
  const std::string id = created.body["id"];
  CHECK(created.body["status"] == "awaiting_observation");
  CHECK(created.body["mode"]["kind"] == "manual");
  CHECK(created.body["samples"] == 0);
  CHECK(created.body["recommendation"]["time"].get<double>() > 0.0);

  const ApiResponse list = call(store, "GET", "/sessions");
  CHECK(list.status == 200);
  REQUIRE(list.body["sessions"].size() == 1);
  CHECK(list.body["sessions"][0]["id"] == id);

  CHECK(call(store, "GET", "/sessions/" + id).body["id"] == id);

  const ApiResponse del = call(store, "DELETE", "/sessions/" + id);
  CHECK(del.status == 200);
  CHECK(del.body["deleted"] == true);
  const ApiResponse again = call(store, "DELETE", "/sessions/" + id);
  CHECK(again.status == 200);
  CHECK(again.body["deleted"] == false);
  const ApiResponse gone = call(store, "GET", "/sessions/" + id);
  CHECK(gone.status == 404);
  CHECK(gone.body["error"]["code"] == "not_found");
}

TEST_CASE("manual observations update the posterior and honour idempotency keys") {
  SessionStore store;
  const std::string id = call(store, "POST", "/sessions", manual_request()).body["id"];
  const double t1 = call(store, "GET", "/sessions/" + id).body["recommendation"]["time"];

  const ApiResponse first =
      call(store, "POST", "/sessions/" + id + "/observations", Json{{"state", 1}}, {}, {{"Idempotency-Key", "obs-1"}});
  REQUIRE(first.status == 200);
  CHECK(first.body["samples"] == 1);
  CHECK(first.body["trace"][0]["t"].get<double>() == t1);

  const ApiResponse repeat =
      call(store, "POST", "/sessions/" + id + "/observations", Json{{"state", 1}}, {}, {{"Idempotency-Key", "obs-1"}});
  CHECK(repeat.status == 200);
  CHECK(repeat.body["samples"] == 1);

  const ApiResponse conflict = call(store, "POST", "/sessions/" + id + "/observations",
                                    Json{{"state", 0}, {"idempotency_key", "obs-1"}});
  CHECK(conflict.status == 409);
  CHECK(conflict.body["error"]["code"] == "invalid_state");

  const ApiResponse explicit_time =
      call(store, "POST", "/sessions/" + id + "/observations", Json{{"state", 0}, {"time", 0.25}});
  CHECK(explicit_time.status == 200);
  CHECK(explicit_time.body["samples"] == 2);
}

TEST_CASE("invalid inputs come back as structured errors") {
  SessionStore store;
  const std::string id = call(store, "POST", "/sessions", manual_request()).body["id"];
  const ApiResponse bad_state = call(store, "POST", "/sessions/" + id + "/observations", Json{{"state", 5}});
  CHECK(bad_state.status == 400);
  CHECK(bad_state.body["error"]["code"] == "invalid_argument");
  CHECK(bad_state.body["error"]["message"].get<std::string>().find("outside") != std::string::npos);

  ApiRequest raw{"POST", "/sessions", {}, {}, "{broken"};
  CHECK(handle_request(store, raw).status == 400);

  const Json mismatched = {{"model", {{"kind", "two_state_bidirectional"}}}, {"prior", {{"kind", "gamma"}}}};
  const ApiResponse rejected = call(store, "POST", "/sessions", mismatched);
  CHECK(rejected.status == 400);
  CHECK(rejected.body["error"]["code"] == "dimension_mismatch");

  CHECK(call(store, "POST", "/sessions/" + id + "/advance", Json::object()).status == 409);
  CHECK(call(store, "PUT", "/sessions/" + id).status == 405);
  CHECK(call(store, "GET", "/elsewhere").status == 404);
  CHECK(call(store, "GET", "/sessions/" + id + "/posterior", nullptr, {{"resolution", "x"}}).status == 400);
}

TEST_CASE("a converged session refuses further observations") {
  SessionStore store;
  const std::string id = call(store, "POST", "/sessions", simulated_request(3)).body["id"];
  const ApiResponse done = call(store, "POST", "/sessions/" + id + "/advance", Json{{"until_converged", true}});
  REQUIRE(done.status == 200);
  CHECK(done.body["status"] == "converged");
  CHECK(done.body["recommendation"].is_null());
  const ApiResponse more = call(store, "POST", "/sessions/" + id + "/observations", Json{{"state", 0}, {"time", 1e6}});
  CHECK(more.status == 409);
}

TEST_CASE("advance by steps matches a single run to convergence") {
  SessionStore store;
  const std::string a = call(store, "POST", "/sessions", simulated_request(11)).body["id"];
  const std::string b = call(store, "POST", "/sessions", simulated_request(11)).body["id"];
  call(store, "POST", "/sessions/" + a + "/advance", Json{{"until_converged", true}});
  for (int k = 0; k < 1000; ++k) {
    const ApiResponse r = call(store, "POST", "/sessions/" + b + "/advance", Json{{"steps", 1}});
    if (r.body["status"] != "awaiting_observation") break;
  }
  const auto sa = store.snapshot(a);
  const auto sb = store.snapshot(b);
  CHECK(trace_csv(sa->request.model, sa->run.trace()) == trace_csv(sb->request.model, sb->run.trace()));
}

TEST_CASE("posterior view integrates to one") {
  SessionStore store;
  const std::string id = call(store, "POST", "/sessions", simulated_request(5)).body["id"];
  call(store, "POST", "/sessions/" + id + "/advance", Json{{"steps", 4}});
  for (std::optional<std::size_t> k : {std::optional<std::size_t>{}, std::optional<std::size_t>{7}}) {
    std::map<std::string, std::string> query;
    if (k) query["resolution"] = std::to_string(*k);
    const ApiResponse view = call(store, "GET", "/sessions/" + id + "/posterior", nullptr, query);
    REQUIRE(view.status == 200);
    CHECK(std::abs(joint_mass(view.body["joint"]) - 1.0) < 1e-6);
    for (const Json& m : view.body["marginals"]) {
      const auto w = m["weights"].get<std::vector<double>>();
      const auto d = m["density"].get<std::vector<double>>();
      double total = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) total += w[i] * d[i];
      CHECK(std::abs(total - 1.0) < 1e-6);
      if (k) CHECK(w.size() == *k);
    }
    CHECK(view.body["objective_curve"]["offsets"].size() == 60);
  }
}

TEST_CASE("snapshots persist across store restarts") {
  const auto dir = fresh_dir("persist");
  std::string id;
  Json before;
  std::vector<double> density_before;
  {
    SessionStore store(dir);
    id = call(store, "POST", "/sessions", simulated_request(21)).body["id"];
    call(store, "POST", "/sessions/" + id + "/advance", Json{{"steps", 3}});
    before = call(store, "GET", "/sessions/" + id).body;
    const auto s = store.snapshot(id);
    density_before.assign(s->run.posterior().density().begin(), s->run.posterior().density().end());
    CHECK(std::filesystem::exists(dir / (id + ".json")));
  }
  {
    SessionStore store(dir);
    CHECK(store.size() == 1);
    CHECK(call(store, "GET", "/sessions/" + id).body == before);
    const auto s = store.snapshot(id);
    double worst = 0.0;
    for (std::size_t i = 0; i < density_before.size(); ++i) {
      worst = std::max(worst, std::abs(s->run.posterior().mass(i) - density_before[i] * s->run.posterior().support().weight(i)));
    }
    CHECK(worst <= 1e-12);
    // Continuing after a restart gives the same trajectory as an uninterrupted run.
    call(store, "POST", "/sessions/" + id + "/advance", Json{{"until_converged", true}});
    SessionStore memory;
    const std::string ref = call(memory, "POST", "/sessions", simulated_request(21)).body["id"];
    call(memory, "POST", "/sessions/" + ref + "/advance", Json{{"until_converged", true}});
    const auto a = store.snapshot(id);
    const auto b = memory.snapshot(ref);
    CHECK(trace_csv(a->request.model, a->run.trace()) == trace_csv(b->request.model, b->run.trace()));
    CHECK(store.remove(id));
    CHECK_FALSE(std::filesystem::exists(dir / (id + ".json")));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("structure sessions expose edge probabilities") {
  SessionStore store;
  const Json req = {{"model", {{"kind", "binary_digraph"}, {"m", 3}}},
                    {"config", {{"theta", 0.05}}},
                    {"mode", {{"kind", "simulated"}, {"rates", {1, 0, 0, 1, 1, 0}}, {"seed", 2}}}};
  const ApiResponse created = call(store, "POST", "/sessions", req);
  REQUIRE(created.status == 201);
  const std::string id = created.body["id"];
  call(store, "POST", "/sessions/" + id + "/advance", Json{{"steps", 3}});
  const ApiResponse view = call(store, "GET", "/sessions/" + id + "/posterior");
  REQUIRE(view.status == 200);
  REQUIRE(view.body["edge_probabilities"].size() == 6);
  for (const Json& p : view.body["edge_probabilities"]) {
    CHECK(p.get<double>() >= 0.0);
    CHECK(p.get<double>() <= 1.0);
  }
}
