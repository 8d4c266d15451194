#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "adaptrate/error.hpp"
#include "adaptrate/harness.hpp"
#include "adaptrate/http_service.hpp"
#include "adaptrate/serialization.hpp"
#include "adaptrate/session.hpp"
#include "adaptrate/validation.hpp"

namespace {

using namespace adaptrate;

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::string out;
};

/// Explicit --seed wins, then ADAPTRATE_SEED, then the file's own seed.
std::uint64_t resolve_seed(const GlobalOptions& g, std::uint64_t from_file) {
  if (g.seed) return *g.seed;
  return master_seed_from_env(from_file);
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::Io, [&] { return "cannot write " + path; });
  out << text;
  require(out.good(), ErrorCode::Io, [&] { return "write failed for " + path; });
}

int cmd_study(const GlobalOptions& g, const std::string& spec_path, std::optional<std::size_t> replicates, bool quiet) {
  StudySpec spec = load_study(spec_path);
  spec.master_seed = resolve_seed(g, spec.master_seed);
  if (replicates) spec.replicates = *replicates;
  spec.validate();

  StudyOptions options;
  options.threads = g.threads;
  if (!quiet) {
    options.progress = [](std::size_t done, std::size_t total) {
      if (done == total || done % 10 == 0) std::fprintf(stderr, "\r%zu/%zu replicate runs", done, total);
      if (done == total) std::fputc('\n', stderr);
    };
  }
  const StudyResult result = run_study(spec, options);
  std::ostringstream csv;
  write_study_csv(csv, result);
  const std::string path = !g.out.empty() ? g.out : spec.output;
  write_output(path, csv.str());
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    if (result.rows[i].nonconverged > 0) {
      std::fprintf(stderr, "note: row %zu has %zu non-converged replicates (step cap %zu)\n", i + 1,
                   result.rows[i].nonconverged, spec.config.step_cap);
    }
  }
  return 0;
}

struct RunFlags {
  std::string config_path;
  std::string model;
  std::optional<double> theta;
  std::vector<double> rates;
  std::optional<double> period;
  std::optional<std::size_t> nodes;
  std::optional<std::size_t> states;
};

int cmd_run(const GlobalOptions& g, const RunFlags& f) {
  Json j = f.config_path.empty() ? Json::object() : read_json_file(f.config_path);
  require(j.is_object(), ErrorCode::InvalidArgument, "run config must be a JSON object");
  if (!f.model.empty()) j["model"] = {{"kind", f.model}};
  if (!j.contains("model")) j["model"] = {{"kind", "two_state_unidirectional"}};
  if (f.states) j["model"][j["model"].value("kind", "") == "mm1_queue" ? "state_cap" : "m"] = *f.states;
  if (f.theta) j["config"]["theta"] = *f.theta;
  if (!f.rates.empty()) j["rates"] = f.rates;
  if (f.period) {
    j["algorithm"] = "periodic";
    j["period"] = *f.period;
  }
  if (f.nodes) j["grid"]["nodes"] = *f.nodes;

  // Reuse the session request parser for model/prior/grid/config defaults.
  Json request = {{"model", j["model"]}};
  for (const char* key : {"prior", "grid", "config"}) {
    if (j.contains(key)) request[key] = j[key];
  }
  const SessionRequest req = session_request_from_json(request);
  const std::uint64_t seed = resolve_seed(g, json_unsigned(j, "seed", req.config.seed));
  const Posterior prior = initial_posterior(req.prior, req.grid);

  RateVector h_true;
  if (j.contains("rates")) {
    h_true = rates_from_json(j["rates"]);
  } else {
    Rng rng(derive_seed(seed, 0, 0));
    h_true = req.model.kind() == ChainKind::BinaryDigraph ? sample_rates(prior, rng, false)
                                                           : draw_true_rates(prior, req.model, rng);
  }
  require(h_true.size() == req.model.rate_dim(), ErrorCode::DimensionMismatch, "rates do not match the model");

  const std::string algorithm = j.contains("algorithm") ? json_string(j, "algorithm") : "adaptive";
  SimulatedSource source(req.model, h_true, seed);
  RunResult result = [&] {
    if (algorithm == "adaptive") return run_adaptive(req.model, prior, req.config, source);
    if (algorithm == "periodic") return run_periodic(req.model, prior, req.config, json_number(j, "period"), source);
    fail(ErrorCode::InvalidArgument, "algorithm must be 'adaptive' or 'periodic'");
  }();

  write_output(g.out, trace_csv(req.model, result.trace));
  std::ostringstream rates;
  for (std::size_t i = 0; i < h_true.size(); ++i) rates << (i ? "," : "") << h_true[i];
  std::fprintf(stderr, "%s %s: true rates [%s], %zu samples, spread %.6g (threshold %.6g), %s\n",
               req.model.name().c_str(), algorithm.c_str(), rates.str().c_str(), result.trace.sample_count(),
               result.trace.final_spread, result.trace.threshold,
               result.trace.converged ? "converged" : "step cap reached");
  return 0;
}

HttpService* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

int cmd_serve(const std::string& host, int port, const std::string& data_dir) {
  SessionStore store(data_dir);
  HttpService service(store);
  const int bound = service.bind(host, port);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::fprintf(stderr, "serving %zu session(s) on http://%s:%d (data dir: %s)\n", store.size(), host.c_str(), bound,
               data_dir.empty() ? "<memory>" : data_dir.c_str());
  service.run();
  g_service = nullptr;
  return 0;
}

int cmd_validate(const GlobalOptions& g) {
  const std::uint64_t seed = resolve_seed(g, 1);
  std::ostringstream report;
  bool ok = true;
  for (const SuiteResult& r : run_validation_suites(seed)) {
    report << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ", tolerance " << r.tolerance << ")\n";
    ok = ok && r.passed;
  }
  write_output(g.out, report.str());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptrate: adaptive sampling-time design for Markov chain rate inference"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Master seed (overrides ADAPTRATE_SEED and file seeds)");
  app.add_option("--threads", g.threads, "Worker threads for studies (0 = all cores)");
  app.add_option("--out", g.out, "Output file (default: stdout or the study's own path)");

  auto* study = app.add_subcommand("study", "Run a study spec and write its CSV");
  std::string spec_path;
  std::optional<std::size_t> replicates;
  bool quiet = false;
  study->add_option("spec", spec_path, "Study spec (JSON)")->required()->check(CLI::ExistingFile);
  study->add_option("--replicates", replicates, "Override the study file's replicate count");
  study->add_flag("--quiet", quiet, "No progress output");

  auto* run = app.add_subcommand("run", "Single simulated run; writes the trace CSV");
  RunFlags rf;
  run->add_option("config", rf.config_path, "Run config (JSON): model, prior, grid, config, rates, algorithm, period, seed")
      ->check(CLI::ExistingFile);
  run->add_option("--model", rf.model, "Model kind, e.g. two_state_bidirectional");
  run->add_option("--theta", rf.theta, "Convergence threshold");
  run->add_option("--rates", rf.rates, "True rates (drawn from the prior when omitted)")->delimiter(',');
  run->add_option("--period", rf.period, "Use fixed-period sampling with this period");
  run->add_option("--nodes", rf.nodes, "Grid nodes per rate");
  run->add_option("--states", rf.states, "Ring or digraph size m, or the M/M/1 state cap");

  auto* serve = app.add_subcommand("serve", "Start the session HTTP service");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "TCP port (0 = any free port)");
  serve->add_option("--data-dir", data_dir, "Directory for session snapshots (default: memory only)");

  auto* validate = app.add_subcommand("validate", "Run the invariant suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (seed_opt->count() > 0) g.seed = seed_value;

  try {
    if (study->parsed()) return cmd_study(g, spec_path, replicates, quiet);
    if (run->parsed()) return cmd_run(g, rf);
    if (serve->parsed()) return cmd_serve(host, port, data_dir);
    if (validate->parsed()) return cmd_validate(g);
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
