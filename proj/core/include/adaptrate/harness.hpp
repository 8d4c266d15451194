#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adaptrate/bayes.hpp"
#include "adaptrate/chain_models.hpp"
#include "adaptrate/design.hpp"
#include "adaptrate/serialization.hpp"

namespace adaptrate {

enum class StudyKind { PeriodicVsAdaptive, FixedRateHeatmap, ToleranceSweep, RingSizeSweep, BinaryStructureSweep };

std::string to_string(StudyKind kind);
StudyKind study_kind_from_string(const std::string& name);

/// A batch Monte-Carlo study. Which sweep lists are read depends on `kind`:
///
///   PeriodicVsAdaptive    rates drawn from the prior; one adaptive row plus
///                         one periodic row per entry of `periods`
///   FixedRateHeatmap      fixed true rates on the tensor lattice `lattice`
///                         (one value list per rate); adaptive rows, plus
///                         periodic rows when `periods` is non-empty
///   ToleranceSweep        rates drawn from the prior; adaptive row per `thetas`
///   RingSizeSweep         ring model of each size in `ring_sizes`
///   BinaryStructureSweep  for each p in `probabilities` and d in
///                         `edge_counts`, structures with d present edges
///                         drawn uniformly, Bernoulli(p) prior
///
/// Replicate r uses the same true rates (or structure) and the same
/// observation stream in every row, so rows can be compared pairwise.
struct StudySpec {
  std::string name = "study";
  StudyKind kind = StudyKind::PeriodicVsAdaptive;
  ChainModel model = ChainModel::two_state_unidirectional();
  PriorSpec prior = GammaPrior{};
  GridSpec grid;
  DesignConfig config;
  std::size_t replicates = 200;
  std::vector<double> periods;
  std::vector<std::vector<double>> lattice;
  std::vector<double> thetas;
  std::vector<std::size_t> ring_sizes;
  std::vector<double> probabilities;
  std::vector<std::size_t> edge_counts;
  std::uint64_t master_seed = 1;
  /// CSV destination; empty means "caller decides".
  std::string output;

  void validate() const;
};

/// Study file schema: {"name", "kind" (snake_case of StudyKind), "model",
/// "prior", "grid", "config", "replicates", "periods", "lattice", "thetas",
/// "ring_sizes", "probabilities", "edge_counts", "seed", "output"}.
StudySpec study_from_json(const Json& j);
Json to_json(const StudySpec& spec);
StudySpec load_study(const std::string& path);

struct ReplicateRecord {
  std::size_t samples = 0;
  bool converged = false;
  bool hit_step_cap = false;
  RateVector h_true;
  /// Posterior MSE per rate (grid posteriors only).
  std::vector<double> mse;
  /// MAP error over d_max rates (structure posteriors only), NaN otherwise.
  double mae = std::numeric_limits<double>::quiet_NaN();
};

/// One CSV row: sweep coordinates plus aggregates. Absent coordinates and
/// metrics are empty cells in the CSV.
struct StudyRow {
  std::string study;
  std::string algorithm;
  std::optional<std::size_t> m;
  std::optional<double> period;
  std::optional<double> theta;
  std::optional<double> p;
  std::optional<std::size_t> d;
  std::optional<double> h0;
  std::optional<double> h1;
  std::size_t replicates = 0;
  std::size_t nonconverged = 0;
  double mean_ns = 0.0;
  double se_ns = 0.0;
  std::optional<double> mean_mse0;
  std::optional<double> se_mse0;
  std::optional<double> mean_mse1;
  std::optional<double> se_mse1;
  std::optional<double> mean_mae;
  std::optional<double> se_mae;

  bool operator==(const StudyRow&) const = default;
};

/// Fills the replicate count and aggregate columns of `row` from records.
void aggregate_row(StudyRow& row, std::span<const ReplicateRecord> records);

struct StudyResult {
  std::string study;
  std::vector<StudyRow> rows;
  /// records[i] are the replicates behind rows[i], in replicate order.
  std::vector<std::vector<ReplicateRecord>> records;

  const StudyRow* find(const std::function<bool(const StudyRow&)>& pred) const;
  std::size_t index_of(const std::function<bool(const StudyRow&)>& pred) const;
};

struct StudyOptions {
  /// Worker count; 0 means hardware concurrency.
  std::size_t threads = 0;
  /// Called after each finished replicate with (done, total). Serialized.
  std::function<void(std::size_t, std::size_t)> progress;
};

StudyResult run_study(const StudySpec& spec, const StudyOptions& options = {});

/// Fixed column order, identical for every study kind.
inline constexpr const char* kStudyCsvHeader =
    "study,algorithm,m,T,theta,p,d,h_0,h_1,replicates,nonconverged,mean_ns,se_ns,"
    "mean_mse_0,se_mse_0,mean_mse_1,se_mse_1,mean_mae,se_mae";

void write_study_csv(std::ostream& out, const StudyResult& result);
void emit_csv(const StudyResult& result, const std::string& path);
std::vector<StudyRow> read_study_csv(std::istream& in);
std::vector<StudyRow> read_study_csv(const std::string& path);

/// Draws one rate vector from a continuous prior posterior; M/M/1 draws are
/// repeated until lambda < mu.
RateVector draw_true_rates(const Posterior& prior, const ChainModel& model, Rng& rng);

/// Binary structure with exactly `edges` rates equal to 1, uniformly chosen.
RateVector draw_structure(std::size_t rate_dim, std::size_t edges, Rng& rng);

}  // namespace adaptrate
