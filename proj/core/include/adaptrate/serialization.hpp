#pragma once

#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>

#include "adaptrate/bayes.hpp"
#include "adaptrate/chain_models.hpp"
#include "adaptrate/design.hpp"

namespace adaptrate {

using Json = nlohmann::json;

/// Float formatting used by every emitted table: 17 significant digits,
/// "nan", "inf" and "-inf" for non-finite values.
std::string format_double(double value);

// JSON schemas (field names are the wire format):
//
//   model   {"kind": "two_state_unidirectional" | "two_state_bidirectional"}
//           {"kind": "mm1_queue", "state_cap": 50}
//           {"kind": "ring", "m": 4}
//           {"kind": "binary_digraph", "m": 3}
//   prior   {"kind": "gamma", "alpha": 2, "beta": 1}
//           {"kind": "bivariate_gamma", "a": 1, "b": 1, "mu1": 2, "mu2": 2}
//           {"kind": "truncated_bivariate_gamma", ...same fields...}
//           {"kind": "bernoulli_structure", "p": 0.5, "m": 3}
//   grid    {"h_max": 10, "nodes": 201}
//   config  {"theta": 0.1, "objective_weighting": "literal_squared",
//            "delta_min": 0.001, "delta_max": 100, "n_candidates": 60,
//            "refine": true, "step_cap": 500, "seed": 1}
//
// Missing optional fields take the library defaults; unknown kinds and
// malformed values raise Error(InvalidArgument).

Json to_json(const ChainModel& model);
ChainModel model_from_json(const Json& j);

Json to_json(const PriorSpec& prior);
PriorSpec prior_from_json(const Json& j);

Json to_json(const GridSpec& grid);
GridSpec grid_from_json(const Json& j);

Json to_json(const DesignConfig& config);
DesignConfig config_from_json(const Json& j);

std::string to_string(ObjectiveWeighting weighting);
ObjectiveWeighting weighting_from_string(const std::string& name);

Json to_json(const RateVector& rates);
RateVector rates_from_json(const Json& j);

/// Lossless trace encoding (NaN objectives become null).
Json to_json(const Trace& trace);
Trace trace_from_json(const Json& j);

/// Posterior density together with the support it lives on.
Json to_json(const Posterior& post);
Posterior posterior_from_json(const Json& j);

/// Trace CSV: n,t_n,x_n,objective,det_cov,map_<label>...,mean_<label>...
/// det_cov holds the variance for single-rate models.
std::string trace_csv_header(const ChainModel& model);
void write_trace_csv(std::ostream& out, const ChainModel& model, const Trace& trace);
std::string trace_csv(const ChainModel& model, const Trace& trace);

/// Typed accessors that turn json type errors into Error(InvalidArgument).
double json_number(const Json& j, const char* key);
double json_number(const Json& j, const char* key, double fallback);
std::uint64_t json_unsigned(const Json& j, const char* key);
std::uint64_t json_unsigned(const Json& j, const char* key, std::uint64_t fallback);
std::string json_string(const Json& j, const char* key);

/// Parses text, mapping parse errors to Error(InvalidArgument).
Json parse_json(const std::string& text);
Json read_json_file(const std::string& path);

}  // namespace adaptrate
