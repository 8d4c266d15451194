#include "adaptrate/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "adaptrate/error.hpp"
#include "adaptrate/stats.hpp"

namespace adaptrate {

namespace {

constexpr std::uint64_t kTruthStream = 0;
constexpr std::uint64_t kObservationStream = 1;
constexpr std::uint64_t kStructureStreamBase = 100;

struct Cell {
  StudyRow row;
  ChainModel model;
  std::size_t prior_index = 0;
  DesignConfig config;
  std::optional<double> period;
  std::optional<RateVector> fixed_rates;
  std::optional<std::size_t> structure_edges;
};

template <typename T>
std::vector<T> list_or_empty(const Json& j, const char* key) {
  if (!j.contains(key)) return {};
  const Json& v = j.at(key);
  require(v.is_array(), ErrorCode::InvalidArgument, [&] { return std::string("field '") + key + "' must be an array"; });
  std::vector<T> out;
  for (const Json& e : v) {
    if constexpr (std::is_same_v<T, double>) {
      require(e.is_number(), ErrorCode::InvalidArgument, [&] { return std::string(key) + " must hold numbers"; });
    } else {
      require(e.is_number_unsigned(), ErrorCode::InvalidArgument,
              [&] { return std::string(key) + " must hold non-negative integers"; });
    }
    out.push_back(e.get<T>());
  }
  return out;
}

ReplicateRecord make_record(const RunResult& result, const RateVector& h_true) {
  ReplicateRecord rec;
  rec.samples = result.trace.sample_count();
  rec.converged = result.trace.converged;
  rec.hit_step_cap = result.trace.hit_step_cap;
  rec.h_true = h_true;
  if (result.posterior.kind() == SupportKind::Grid) {
    for (std::size_t k = 0; k < h_true.size(); ++k) rec.mse.push_back(mse(result.posterior, h_true, k));
  } else {
    rec.mae = mae(map_estimate(result.posterior), h_true, h_true.size());
  }
  return rec;
}

std::string optional_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }
std::string optional_cell(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), ErrorCode::InvalidArgument, [&] { return "bad number in CSV: '" + s + "'"; });
  return v;
}

std::size_t parse_size(const std::string& s) {
  require(!s.empty() && s.find_first_not_of("0123456789") == std::string::npos, ErrorCode::InvalidArgument,
          [&] { return "bad integer in CSV: '" + s + "'"; });
  return std::stoull(s);
}

std::optional<double> parse_optional_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_double(s);
}

std::optional<std::size_t> parse_optional_size(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_size(s);
}

std::vector<Cell> build_cells(const StudySpec& spec, std::vector<PriorSpec>& priors) {
  std::vector<Cell> cells;
  auto base = [&](const ChainModel& model, const char* algorithm) {
    Cell c{StudyRow{}, model, 0, spec.config, std::nullopt, std::nullopt, std::nullopt};
    c.row.study = spec.name;
    c.row.algorithm = algorithm;
    c.row.theta = spec.config.theta;
    if (model.kind() == ChainKind::Ring || model.kind() == ChainKind::BinaryDigraph) c.row.m = model.num_states();
    return c;
  };
  auto add_periodic = [&](const Cell& adaptive) {
    for (double t : spec.periods) {
      Cell c = adaptive;
      c.row.algorithm = "periodic";
      c.row.period = t;
      c.period = t;
      cells.push_back(std::move(c));
    }
  };

  priors.push_back(spec.prior);
  switch (spec.kind) {
    case StudyKind::PeriodicVsAdaptive: {
      Cell c = base(spec.model, "adaptive");
      cells.push_back(c);
      add_periodic(c);
      break;
    }
    case StudyKind::FixedRateHeatmap: {
      const std::size_t dims = spec.lattice.size();
      std::vector<std::size_t> idx(dims, 0);
      std::size_t total = 1;
      for (const auto& axis : spec.lattice) total *= axis.size();
      std::vector<Cell> adaptive;
      for (std::size_t flat = 0; flat < total; ++flat) {
        Cell c = base(spec.model, "adaptive");
        RateVector h;
        for (std::size_t k = 0; k < dims; ++k) h.values.push_back(spec.lattice[k][idx[k]]);
        c.row.h0 = h[0];
        if (dims > 1) c.row.h1 = h[1];
        c.fixed_rates = h;
        adaptive.push_back(c);
        for (std::size_t k = dims; k-- > 0;) {
          if (++idx[k] < spec.lattice[k].size()) break;
          idx[k] = 0;
        }
      }
      for (const Cell& c : adaptive) cells.push_back(c);
      for (const Cell& c : adaptive) add_periodic(c);
      break;
    }
    case StudyKind::ToleranceSweep:
      for (double theta : spec.thetas) {
        Cell c = base(spec.model, "adaptive");
        c.config.theta = theta;
        c.row.theta = theta;
        cells.push_back(std::move(c));
      }
      break;
    case StudyKind::RingSizeSweep:
      for (std::size_t m : spec.ring_sizes) cells.push_back(base(ChainModel::ring(m), "adaptive"));
      break;
    case StudyKind::BinaryStructureSweep: {
      priors.clear();
      const std::size_t m = spec.model.num_states();
      for (double p : spec.probabilities) {
        priors.push_back(BernoulliStructurePrior{p, m});
        for (std::size_t d : spec.edge_counts) {
          Cell c = base(spec.model, "adaptive");
          c.prior_index = priors.size() - 1;
          c.row.p = p;
          c.row.d = d;
          c.structure_edges = d;
          cells.push_back(std::move(c));
        }
      }
      break;
    }
  }
  return cells;
}

}  // namespace

std::string to_string(StudyKind kind) {
  switch (kind) {
    case StudyKind::PeriodicVsAdaptive: return "periodic_vs_adaptive";
    case StudyKind::FixedRateHeatmap: return "fixed_rate_heatmap";
    case StudyKind::ToleranceSweep: return "tolerance_sweep";
    case StudyKind::RingSizeSweep: return "ring_size_sweep";
    case StudyKind::BinaryStructureSweep: return "binary_structure_sweep";
  }
  return "unknown";
}

StudyKind study_kind_from_string(const std::string& name) {
  for (StudyKind k : {StudyKind::PeriodicVsAdaptive, StudyKind::FixedRateHeatmap, StudyKind::ToleranceSweep,
                      StudyKind::RingSizeSweep, StudyKind::BinaryStructureSweep}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorCode::InvalidArgument, "unknown study kind '" + name + "'");
}

void StudySpec::validate() const {
  require(!name.empty() && name.find_first_of(",\"\r\n") == std::string::npos, ErrorCode::InvalidArgument,
          "study name must be non-empty and free of commas, quotes and newlines");
  require(replicates >= 1, ErrorCode::InvalidArgument, "replicate count must be >= 1");
  config.validate();
  for (double t : periods) {
    require(std::isfinite(t) && t > 0.0, ErrorCode::InvalidArgument, "sampling periods must be > 0");
  }
  switch (kind) {
    case StudyKind::PeriodicVsAdaptive:
      require(!periods.empty(), ErrorCode::InvalidArgument, "periodic_vs_adaptive needs periods");
      validate_prior_for_model(prior, model);
      require(model.kind() != ChainKind::BinaryDigraph, ErrorCode::InvalidArgument,
              "periodic_vs_adaptive draws continuous rates; use binary_structure_sweep for structures");
      break;
    case StudyKind::FixedRateHeatmap:
      validate_prior_for_model(prior, model);
      require(lattice.size() == model.rate_dim(), ErrorCode::DimensionMismatch,
              "lattice needs one value list per rate");
      for (const auto& axis : lattice) {
        require(!axis.empty(), ErrorCode::InvalidArgument, "lattice value lists must be non-empty");
        for (double v : axis) require(std::isfinite(v) && v >= 0.0, ErrorCode::NegativeRate, "lattice rates must be >= 0");
      }
      if (model.kind() == ChainKind::MM1Queue) {
        for (double lambda : lattice[0]) {
          for (double mu : lattice[1]) {
            require(lambda < mu, ErrorCode::InvalidArgument, "mm1 lattice needs lambda < mu at every point");
          }
        }
      }
      break;
    case StudyKind::ToleranceSweep:
      require(!thetas.empty(), ErrorCode::InvalidArgument, "tolerance_sweep needs thetas");
      for (double t : thetas) require(std::isfinite(t) && t > 0.0, ErrorCode::InvalidArgument, "thetas must be > 0");
      validate_prior_for_model(prior, model);
      require(model.kind() != ChainKind::BinaryDigraph, ErrorCode::InvalidArgument,
              "tolerance_sweep draws continuous rates");
      break;
    case StudyKind::RingSizeSweep:
      require(!ring_sizes.empty(), ErrorCode::InvalidArgument, "ring_size_sweep needs ring_sizes");
      for (std::size_t m : ring_sizes) validate_prior_for_model(prior, ChainModel::ring(m));
      break;
    case StudyKind::BinaryStructureSweep:
      require(model.kind() == ChainKind::BinaryDigraph, ErrorCode::InvalidArgument,
              "binary_structure_sweep needs a binary_digraph model");
      require(!probabilities.empty() && !edge_counts.empty(), ErrorCode::InvalidArgument,
              "binary_structure_sweep needs probabilities and edge_counts");
      for (double p : probabilities) validate_prior(BernoulliStructurePrior{p, model.num_states()});
      for (std::size_t d : edge_counts) {
        require(d <= model.rate_dim(), ErrorCode::InvalidArgument, "edge count exceeds m(m-1)");
      }
      break;
  }
}

StudySpec study_from_json(const Json& j) {
  StudySpec s;
  require(j.is_object(), ErrorCode::InvalidArgument, "study file must hold a JSON object");
  if (j.contains("name")) s.name = json_string(j, "name");
  s.kind = study_kind_from_string(json_string(j, "kind"));
  s.model = model_from_json(j.at("model"));
  if (j.contains("prior")) s.prior = prior_from_json(j.at("prior"));
  if (j.contains("grid")) s.grid = grid_from_json(j.at("grid"));
  if (j.contains("config")) s.config = config_from_json(j.at("config"));
  s.replicates = json_unsigned(j, "replicates", s.replicates);
  s.periods = list_or_empty<double>(j, "periods");
  if (j.contains("lattice")) {
    require(j.at("lattice").is_array(), ErrorCode::InvalidArgument, "field 'lattice' must be an array of arrays");
    for (const Json& axis : j.at("lattice")) {
      require(axis.is_array(), ErrorCode::InvalidArgument, "field 'lattice' must be an array of arrays");
      std::vector<double> values;
      for (const Json& v : axis) {
        require(v.is_number(), ErrorCode::InvalidArgument, "lattice must hold numbers");
        values.push_back(v.get<double>());
      }
      s.lattice.push_back(std::move(values));
    }
  }
  s.thetas = list_or_empty<double>(j, "thetas");
  s.ring_sizes = list_or_empty<std::size_t>(j, "ring_sizes");
  s.probabilities = list_or_empty<double>(j, "probabilities");
  s.edge_counts = list_or_empty<std::size_t>(j, "edge_counts");
  s.master_seed = json_unsigned(j, "seed", s.master_seed);
  if (j.contains("output")) s.output = json_string(j, "output");
  s.validate();
  return s;
}

Json to_json(const StudySpec& s) {
  Json j{{"name", s.name},
         {"kind", to_string(s.kind)},
         {"model", to_json(s.model)},
         {"prior", to_json(s.prior)},
         {"grid", to_json(s.grid)},
         {"config", to_json(s.config)},
         {"replicates", s.replicates},
         {"seed", s.master_seed}};
  if (!s.periods.empty()) j["periods"] = s.periods;
  if (!s.lattice.empty()) j["lattice"] = s.lattice;
  if (!s.thetas.empty()) j["thetas"] = s.thetas;
  if (!s.ring_sizes.empty()) j["ring_sizes"] = s.ring_sizes;
  if (!s.probabilities.empty()) j["probabilities"] = s.probabilities;
  if (!s.edge_counts.empty()) j["edge_counts"] = s.edge_counts;
  if (!s.output.empty()) j["output"] = s.output;
  return j;
}

StudySpec load_study(const std::string& path) { return study_from_json(read_json_file(path)); }

void aggregate_row(StudyRow& row, std::span<const ReplicateRecord> records) {
  require(!records.empty(), ErrorCode::InvalidArgument, "cannot aggregate zero replicates");
  row.replicates = records.size();
  row.nonconverged = 0;
  std::vector<double> ns, mse0, mse1, errors;
  for (const ReplicateRecord& r : records) {
    if (!r.converged) ++row.nonconverged;
    ns.push_back(static_cast<double>(r.samples));
    if (r.mse.size() > 0) mse0.push_back(r.mse[0]);
    if (r.mse.size() > 1) mse1.push_back(r.mse[1]);
    if (!std::isnan(r.mae)) errors.push_back(r.mae);
  }
  row.mean_ns = mean(ns);
  row.se_ns = standard_error(ns);
  auto fill = [&](const std::vector<double>& v, std::optional<double>& m, std::optional<double>& se) {
    if (v.size() == records.size()) {
      m = mean(v);
      se = standard_error(v);
    } else {
      m.reset();
      se.reset();
    }
  };
  fill(mse0, row.mean_mse0, row.se_mse0);
  fill(mse1, row.mean_mse1, row.se_mse1);
  fill(errors, row.mean_mae, row.se_mae);
}

const StudyRow* StudyResult::find(const std::function<bool(const StudyRow&)>& pred) const {
  for (const StudyRow& r : rows) {
    if (pred(r)) return &r;
  }
  return nullptr;
}

std::size_t StudyResult::index_of(const std::function<bool(const StudyRow&)>& pred) const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (pred(rows[i])) return i;
  }
  fail(ErrorCode::NotFound, "no study row matches");
}

RateVector draw_true_rates(const Posterior& prior, const ChainModel& model, Rng& rng) {
  require(prior.kind() == SupportKind::Grid, ErrorCode::InvalidArgument, "true rates are drawn from grid priors");
  for (int attempt = 0; attempt < 10000; ++attempt) {
    RateVector h = sample_rates(prior, rng, true);
    if (model.kind() != ChainKind::MM1Queue || h[0] < h[1]) return h;
  }
  fail(ErrorCode::ConvergenceFailure, "could not draw rates with lambda < mu");
}

RateVector draw_structure(std::size_t rate_dim, std::size_t edges, Rng& rng) {
  require(edges <= rate_dim, ErrorCode::InvalidArgument, "edge count exceeds the rate dimension");
  std::vector<std::size_t> order(rate_dim);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates with the library's own uniform draw.
  for (std::size_t i = 0; i < edges; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(rate_dim - i));
    std::swap(order[i], order[j]);
  }
  RateVector h(std::vector<double>(rate_dim, 0.0));
  for (std::size_t i = 0; i < edges; ++i) h[order[i]] = 1.0;
  return h;
}

StudyResult run_study(const StudySpec& spec, const StudyOptions& options) {
  spec.validate();
  std::vector<PriorSpec> prior_specs;
  std::vector<Cell> cells = build_cells(spec, prior_specs);
  std::vector<Posterior> priors;
  for (const PriorSpec& p : prior_specs) priors.push_back(initial_posterior(p, spec.grid));

  const std::size_t reps = spec.replicates;
  const std::size_t total = cells.size() * reps;
  std::vector<ReplicateRecord> records(total);
  std::vector<std::exception_ptr> errors(total);

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  auto work = [&] {
    for (;;) {
      const std::size_t item = next.fetch_add(1);
      if (item >= total) return;
      const Cell& cell = cells[item / reps];
      const std::size_t r = item % reps;
      try {
        const Posterior& prior = priors[cell.prior_index];
        RateVector h_true;
        if (cell.fixed_rates) {
          h_true = *cell.fixed_rates;
        } else if (cell.structure_edges) {
          Rng rng(derive_seed(spec.master_seed, r, kStructureStreamBase + *cell.structure_edges));
          h_true = draw_structure(cell.model.rate_dim(), *cell.structure_edges, rng);
        } else {
          Rng rng(derive_seed(spec.master_seed, r, kTruthStream));
          h_true = draw_true_rates(prior, cell.model, rng);
        }
        SimulatedSource source(cell.model, h_true, derive_seed(spec.master_seed, r, kObservationStream));
        const RunResult result = cell.period ? run_periodic(cell.model, prior, cell.config, *cell.period, source)
                                             : run_adaptive(cell.model, prior, cell.config, source);
        records[item] = make_record(result, h_true);
      } catch (...) {
        errors[item] = std::current_exception();
      }
      const std::size_t finished = done.fetch_add(1) + 1;
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        options.progress(finished, total);
      }
    }
  };

  std::size_t threads = options.threads == 0 ? std::thread::hardware_concurrency() : options.threads;
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(total, 1));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  StudyResult result;
  result.study = spec.name;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<ReplicateRecord> cell_records(records.begin() + static_cast<std::ptrdiff_t>(c * reps),
                                              records.begin() + static_cast<std::ptrdiff_t>((c + 1) * reps));
    StudyRow row = cells[c].row;
    aggregate_row(row, cell_records);
    result.rows.push_back(std::move(row));
    result.records.push_back(std::move(cell_records));
  }
  return result;
}

void write_study_csv(std::ostream& out, const StudyResult& result) {
  out << kStudyCsvHeader << '\n';
  for (const StudyRow& r : result.rows) {
    out << r.study << ',' << r.algorithm << ',' << optional_cell(r.m) << ',' << optional_cell(r.period) << ','
        << optional_cell(r.theta) << ',' << optional_cell(r.p) << ',' << optional_cell(r.d) << ','
        << optional_cell(r.h0) << ',' << optional_cell(r.h1) << ',' << r.replicates << ',' << r.nonconverged << ','
        << format_double(r.mean_ns) << ',' << format_double(r.se_ns) << ',' << optional_cell(r.mean_mse0) << ','
        << optional_cell(r.se_mse0) << ',' << optional_cell(r.mean_mse1) << ',' << optional_cell(r.se_mse1) << ','
        << optional_cell(r.mean_mae) << ',' << optional_cell(r.se_mae) << '\n';
  }
}

void emit_csv(const StudyResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::Io, [&] { return "cannot write " + path; });
  write_study_csv(out, result);
  out.flush();
  require(out.good(), ErrorCode::Io, [&] { return "write failed for " + path; });
}

std::vector<StudyRow> read_study_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::InvalidArgument, "CSV is empty");
  require(line == kStudyCsvHeader, ErrorCode::InvalidArgument, "CSV header does not match the study schema");
  std::vector<StudyRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    require(f.size() == 19, ErrorCode::InvalidArgument, "CSV row does not have 19 columns");
    StudyRow r;
    r.study = f[0];
    r.algorithm = f[1];
    r.m = parse_optional_size(f[2]);
    r.period = parse_optional_double(f[3]);
    r.theta = parse_optional_double(f[4]);
    r.p = parse_optional_double(f[5]);
    r.d = parse_optional_size(f[6]);
    r.h0 = parse_optional_double(f[7]);
    r.h1 = parse_optional_double(f[8]);
    r.replicates = parse_size(f[9]);
    r.nonconverged = parse_size(f[10]);
    r.mean_ns = parse_double(f[11]);
    r.se_ns = parse_double(f[12]);
    r.mean_mse0 = parse_optional_double(f[13]);
    r.se_mse0 = parse_optional_double(f[14]);
    r.mean_mse1 = parse_optional_double(f[15]);
    r.se_mse1 = parse_optional_double(f[16]);
    r.mean_mae = parse_optional_double(f[17]);
    r.se_mae = parse_optional_double(f[18]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<StudyRow> read_study_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, [&] { return "cannot open " + path; });
  return read_study_csv(in);
}

}  // namespace adaptrate
