#include "adaptrate/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "adaptrate/error.hpp"

namespace adaptrate {

namespace {

const Json& field(const Json& j, const char* key) {
  require(j.is_object(), ErrorCode::InvalidArgument, "expected a JSON object");
  auto it = j.find(key);
  require(it != j.end(), ErrorCode::InvalidArgument, [&] { return std::string("missing field '") + key + "'"; });
  return *it;
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double number_or_nan(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  require(j.is_number(), ErrorCode::InvalidArgument, "expected a number or null");
  return j.get<double>();
}

std::vector<double> number_array(const Json& j, const char* what) {
  require(j.is_array(), ErrorCode::InvalidArgument, [&] { return std::string(what) + " must be an array"; });
  std::vector<double> out;
  out.reserve(j.size());
  for (const Json& v : j) {
    require(v.is_number(), ErrorCode::InvalidArgument, [&] { return std::string(what) + " must hold numbers"; });
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

double json_number(const Json& j, const char* key) {
  const Json& v = field(j, key);
  require(v.is_number(), ErrorCode::InvalidArgument, [&] { return std::string("field '") + key + "' must be a number"; });
  return v.get<double>();
}

double json_number(const Json& j, const char* key, double fallback) {
  require(j.is_object(), ErrorCode::InvalidArgument, "expected a JSON object");
  return j.contains(key) ? json_number(j, key) : fallback;
}

std::uint64_t json_unsigned(const Json& j, const char* key) {
  const Json& v = field(j, key);
  require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0), ErrorCode::InvalidArgument,
          [&] { return std::string("field '") + key + "' must be a non-negative integer"; });
  return v.get<std::uint64_t>();
}

std::uint64_t json_unsigned(const Json& j, const char* key, std::uint64_t fallback) {
  require(j.is_object(), ErrorCode::InvalidArgument, "expected a JSON object");
  return j.contains(key) ? json_unsigned(j, key) : fallback;
}

std::string json_string(const Json& j, const char* key) {
  const Json& v = field(j, key);
  require(v.is_string(), ErrorCode::InvalidArgument, [&] { return std::string("field '") + key + "' must be a string"; });
  return v.get<std::string>();
}

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::InvalidArgument, std::string("malformed JSON: ") + e.what());
  }
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, [&] { return "cannot open " + path; });
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_json(buf.str());
}

Json to_json(const ChainModel& model) {
  Json j{{"kind", model.name()}};
  switch (model.kind()) {
    case ChainKind::MM1Queue: j["state_cap"] = model.state_cap(); break;
    case ChainKind::Ring:
    case ChainKind::BinaryDigraph: j["m"] = model.num_states(); break;
    default: break;
  }
  return j;
}

ChainModel model_from_json(const Json& j) {
  const std::string kind = json_string(j, "kind");
  if (kind == "two_state_unidirectional") return ChainModel::two_state_unidirectional();
  if (kind == "two_state_bidirectional") return ChainModel::two_state_bidirectional();
  if (kind == "mm1_queue") return ChainModel::mm1_queue(json_unsigned(j, "state_cap", kDefaultStateCap));
  if (kind == "ring") return ChainModel::ring(json_unsigned(j, "m"));
  if (kind == "binary_digraph") return ChainModel::binary_digraph(json_unsigned(j, "m"));
  fail(ErrorCode::InvalidArgument, "unknown model kind '" + kind + "'");
}

Json to_json(const PriorSpec& prior) {
  return std::visit(
      [](const auto& p) -> Json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GammaPrior>) {
          return {{"kind", "gamma"}, {"alpha", p.alpha}, {"beta", p.beta}};
        } else if constexpr (std::is_same_v<T, BernoulliStructurePrior>) {
          return {{"kind", "bernoulli_structure"}, {"p", p.p}, {"m", p.m}};
        } else {
          const char* kind = std::is_same_v<T, BivariateGammaPrior> ? "bivariate_gamma" : "truncated_bivariate_gamma";
          return {{"kind", kind}, {"a", p.a}, {"b", p.b}, {"mu1", p.mu1}, {"mu2", p.mu2}};
        }
      },
      prior);
}

PriorSpec prior_from_json(const Json& j) {
  const std::string kind = json_string(j, "kind");
  PriorSpec out;
  if (kind == "gamma") {
    out = GammaPrior{json_number(j, "alpha", 2.0), json_number(j, "beta", 1.0)};
  } else if (kind == "bivariate_gamma") {
    out = BivariateGammaPrior{json_number(j, "a", 1.0), json_number(j, "b", 1.0), json_number(j, "mu1", 2.0),
                              json_number(j, "mu2", 2.0)};
  } else if (kind == "truncated_bivariate_gamma") {
    out = TruncatedBivariateGammaPrior{json_number(j, "a", 1.0), json_number(j, "b", 1.0), json_number(j, "mu1", 2.0),
                                       json_number(j, "mu2", 2.0)};
  } else if (kind == "bernoulli_structure") {
    out = BernoulliStructurePrior{json_number(j, "p", 0.5), json_unsigned(j, "m", 3)};
  } else {
    fail(ErrorCode::InvalidArgument, "unknown prior kind '" + kind + "'");
  }
  validate_prior(out);
  return out;
}

Json to_json(const GridSpec& grid) { return {{"h_max", grid.h_max}, {"nodes", grid.nodes}}; }

GridSpec grid_from_json(const Json& j) {
  GridSpec g;
  g.h_max = json_number(j, "h_max", g.h_max);
  g.nodes = json_unsigned(j, "nodes", g.nodes);
  require(std::isfinite(g.h_max) && g.h_max > 0.0, ErrorCode::InvalidArgument, "grid h_max must be > 0");
  require(g.nodes >= 2, ErrorCode::InvalidArgument, "grid needs at least two nodes per dimension");
  return g;
}

std::string to_string(ObjectiveWeighting weighting) {
  return weighting == ObjectiveWeighting::LiteralSquared ? "literal_squared" : "standard_predictive";
}

ObjectiveWeighting weighting_from_string(const std::string& name) {
  if (name == "literal_squared") return ObjectiveWeighting::LiteralSquared;
  if (name == "standard_predictive") return ObjectiveWeighting::StandardPredictive;
  fail(ErrorCode::InvalidArgument, "unknown objective_weighting '" + name + "'");
}

Json to_json(const DesignConfig& c) {
  return {{"theta", c.theta},         {"objective_weighting", to_string(c.weighting)},
          {"delta_min", c.delta_min}, {"delta_max", c.delta_max},
          {"n_candidates", c.n_candidates}, {"refine", c.refine},
          {"step_cap", c.step_cap},   {"seed", c.seed}};
}

DesignConfig config_from_json(const Json& j) {
  DesignConfig c;
  c.theta = json_number(j, "theta", c.theta);
  if (j.contains("objective_weighting")) c.weighting = weighting_from_string(json_string(j, "objective_weighting"));
  c.delta_min = json_number(j, "delta_min", c.delta_min);
  c.delta_max = json_number(j, "delta_max", c.delta_max);
  c.n_candidates = json_unsigned(j, "n_candidates", c.n_candidates);
  if (j.contains("refine")) {
    require(j["refine"].is_boolean(), ErrorCode::InvalidArgument, "field 'refine' must be a boolean");
    c.refine = j["refine"].get<bool>();
  }
  c.step_cap = json_unsigned(j, "step_cap", c.step_cap);
  c.seed = json_unsigned(j, "seed", c.seed);
  c.validate();
  return c;
}

Json to_json(const RateVector& rates) { return Json(rates.values); }

RateVector rates_from_json(const Json& j) { return RateVector(number_array(j, "rates")); }

Json to_json(const Trace& trace) {
  Json steps = Json::array();
  for (const TraceStep& s : trace.steps) {
    steps.push_back({{"n", s.n},
                     {"t", s.t},
                     {"dt", s.dt},
                     {"x", s.x},
                     {"objective", number_or_null(s.objective)},
                     {"spread", s.spread},
                     {"map", s.map.values},
                     {"mean", s.mean.values}});
  }
  return {{"steps", steps},
          {"threshold", trace.threshold},
          {"initial_spread", trace.initial_spread},
          {"final_spread", trace.final_spread},
          {"converged", trace.converged},
          {"hit_step_cap", trace.hit_step_cap}};
}

Trace trace_from_json(const Json& j) {
  Trace t;
  const Json& steps = field(j, "steps");
  require(steps.is_array(), ErrorCode::InvalidArgument, "trace steps must be an array");
  for (const Json& s : steps) {
    TraceStep step;
    step.n = json_unsigned(s, "n");
    step.t = json_number(s, "t");
    step.dt = json_number(s, "dt");
    step.x = json_unsigned(s, "x");
    step.objective = number_or_nan(field(s, "objective"));
    step.spread = json_number(s, "spread");
    step.map = RateVector(number_array(field(s, "map"), "map"));
    step.mean = RateVector(number_array(field(s, "mean"), "mean"));
    t.steps.push_back(std::move(step));
  }
  t.threshold = json_number(j, "threshold");
  t.initial_spread = json_number(j, "initial_spread");
  t.final_spread = json_number(j, "final_spread");
  t.converged = field(j, "converged").get<bool>();
  t.hit_step_cap = field(j, "hit_step_cap").get<bool>();
  return t;
}

Json to_json(const Posterior& post) {
  Json j;
  if (post.kind() == SupportKind::Grid) {
    Json axes = Json::array();
    const RateGrid& grid = post.support().grid();
    for (std::size_t d = 0; d < grid.dims(); ++d) axes.push_back(grid.axis(d).nodes);
    j["support"] = "grid";
    j["axes"] = std::move(axes);
  } else {
    j["support"] = "configurations";
    j["rate_dim"] = post.dims();
  }
  j["density"] = std::vector<double>(post.density().begin(), post.density().end());
  return j;
}

Posterior posterior_from_json(const Json& j) {
  const std::string kind = json_string(j, "support");
  std::vector<double> density = number_array(field(j, "density"), "density");
  if (kind == "grid") {
    const Json& axes = field(j, "axes");
    require(axes.is_array(), ErrorCode::InvalidArgument, "axes must be an array");
    std::vector<std::vector<double>> nodes;
    for (const Json& a : axes) nodes.push_back(number_array(a, "axis"));
    return Posterior::from_normalized(std::make_shared<const Support>(RateGrid(std::move(nodes))), std::move(density));
  }
  if (kind == "configurations") {
    return Posterior::from_normalized(Support::configurations(json_unsigned(j, "rate_dim")), std::move(density));
  }
  fail(ErrorCode::InvalidArgument, "unknown posterior support '" + kind + "'");
}

std::string trace_csv_header(const ChainModel& model) {
  std::string out = "n,t_n,x_n,objective,det_cov";
  const std::vector<std::string> labels = model.rate_labels();
  for (const auto& l : labels) out += ",map_" + l;
  for (const auto& l : labels) out += ",mean_" + l;
  return out;
}

void write_trace_csv(std::ostream& out, const ChainModel& model, const Trace& trace) {
  out << trace_csv_header(model) << '\n';
  for (const TraceStep& s : trace.steps) {
    out << s.n << ',' << format_double(s.t) << ',' << s.x << ',' << format_double(s.objective) << ','
        << format_double(s.spread);
    for (double v : s.map.values) out << ',' << format_double(v);
    for (double v : s.mean.values) out << ',' << format_double(v);
    out << '\n';
  }
}

std::string trace_csv(const ChainModel& model, const Trace& trace) {
  std::ostringstream out;
  write_trace_csv(out, model, trace);
  return out.str();
}

}  // namespace adaptrate
