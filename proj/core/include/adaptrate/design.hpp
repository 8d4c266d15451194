#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "adaptrate/bayes.hpp"
#include "adaptrate/chain_models.hpp"

namespace adaptrate {

/// How the expected covariance weights the current posterior.
///
/// LiteralSquared follows the displayed multi-rate update, which weights each
/// branch by p(k | x_prev, h) * p(h)^2 and does not normalize by the branch
/// probability. StandardPredictive is the usual preposterior expectation
/// sum_k Pr(k) Cov(h | k). Both agree for one rate, where the single-factor
/// expected variance is always used.
enum class ObjectiveWeighting { LiteralSquared, StandardPredictive };

struct DesignConfig {
  /// Convergence threshold: absolute for continuous rates, a multiplier of
  /// the initial covariance determinant for binary structure.
  double theta = 0.1;
  ObjectiveWeighting weighting = ObjectiveWeighting::LiteralSquared;
  double delta_min = 1e-3;
  double delta_max = 1e2;
  std::size_t n_candidates = 60;
  bool refine = true;
  std::size_t step_cap = 500;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TraceStep {
  std::size_t n = 0;
  double t = 0.0;
  double dt = 0.0;
  State x = 0;
  /// Objective at the chosen offset (NaN for fixed-period sampling).
  double objective = std::numeric_limits<double>::quiet_NaN();
  /// Posterior variance (d = 1) or covariance determinant after the update.
  double spread = 0.0;
  RateVector map;
  RateVector mean;
};

struct Trace {
  std::vector<TraceStep> steps;
  double threshold = 0.0;
  double initial_spread = 0.0;
  double final_spread = 0.0;
  bool converged = false;
  bool hit_step_cap = false;

  std::size_t sample_count() const noexcept { return steps.size(); }
};

struct RunResult {
  Trace trace;
  Posterior posterior;
};

/// Branch-marginalized objectives for one posterior and starting state.
/// Constructing it once and evaluating many offsets amortizes the setup of
/// the active support.
class PredictiveEvaluator {
 public:
  PredictiveEvaluator(const Posterior& post, const ChainModel& model, State x_prev, ObjectiveWeighting weighting);

  /// Expected posterior variance after one sample at offset dt (d = 1).
  double expected_variance(double dt) const;
  CovarianceMatrix expected_covariance(double dt) const;
  /// Expected variance for one rate, determinant of the expected covariance otherwise.
  double objective(double dt) const;

 private:
  CovarianceMatrix accumulate(double dt, bool squared_weights) const;

  ChainModel model_;
  State x_prev_;
  ObjectiveWeighting weighting_;
  std::size_t dims_;
  std::vector<double> rates_;     // active node coordinates, row-major
  std::vector<double> centered_;  // same, minus the posterior mean
  std::vector<double> mass_;
  std::vector<double> squared_;   // mass * density
};

/// Expected variance for the reset-each-sample single-rate chain.
double expected_variance(const Posterior& post, double t);
double expected_variance(const Posterior& post, const ChainModel& model, State x_prev, double t);
CovarianceMatrix expected_covariance(const Posterior& post, const ChainModel& model, State x_prev, double dt,
                                     ObjectiveWeighting weighting);
double objective(const Posterior& post, const ChainModel& model, State x_prev, double dt, const DesignConfig& config);

/// Log-spaced candidate offsets on [delta_min, delta_max].
std::vector<double> candidate_offsets(const DesignConfig& config);

struct TimeChoice {
  double offset = 0.0;
  double objective = 0.0;
  std::size_t candidate_index = 0;
};

/// Global sweep over the candidate offsets, then (if enabled) golden-section
/// refinement inside the bracketing candidates. Ties go to the smallest offset.
TimeChoice choose_next_time(const Posterior& post, const ChainModel& model, State x_prev, const DesignConfig& config);

/// Objective at every candidate offset.
std::vector<double> objective_curve(const Posterior& post, const ChainModel& model, State x_prev,
                                    const DesignConfig& config);

/// Supplies X(t) for a requested sample.
class ObservationSource {
 public:
  virtual ~ObservationSource() = default;
  /// x_prev is the state the interval starts from (state 0 after a reset);
  /// dt the interval; t the absolute sample time.
  virtual State observe(State x_prev, double dt, double t) = 0;
};

/// Draws observations from the chain with known rates.
class SimulatedSource final : public ObservationSource {
 public:
  SimulatedSource(ChainModel model, RateVector h_true, std::uint64_t seed);
  State observe(State x_prev, double dt, double t) override;
  Rng& rng() noexcept { return rng_; }
  const Rng& rng() const noexcept { return rng_; }
  const RateVector& true_rates() const noexcept { return h_true_; }

 private:
  ChainModel model_;
  RateVector h_true_;
  Rng rng_;
};

class CallbackSource final : public ObservationSource {
 public:
  using Callback = std::function<State(State x_prev, double dt, double t)>;
  explicit CallbackSource(Callback callback) : callback_(std::move(callback)) {}
  State observe(State x_prev, double dt, double t) override { return callback_(x_prev, dt, t); }

 private:
  Callback callback_;
};

struct Recommendation {
  double offset = 0.0;
  double time = 0.0;
  double objective = 0.0;
};

/// One inference run advanced a sample at a time. run_adaptive and the
/// session service both drive this, so they share every step.
class InferenceRun {
 public:
  InferenceRun(ChainModel model, Posterior prior, DesignConfig config);

  const ChainModel& model() const noexcept { return model_; }
  const DesignConfig& config() const noexcept { return config_; }
  const Posterior& posterior() const noexcept { return posterior_; }
  const Trace& trace() const noexcept { return trace_; }

  double spread() const noexcept { return spread_; }
  double threshold() const noexcept { return trace_.threshold; }
  bool converged() const noexcept { return spread_ <= trace_.threshold; }
  bool finished() const noexcept { return converged() || trace_.steps.size() >= config_.step_cap; }

  /// State the next interval starts from.
  State from_state() const noexcept;
  double last_time() const noexcept { return last_time_; }

  Recommendation recommend() const;
  /// Absolute time of a sample taken `offset` after the previous one.
  double time_for_offset(double offset) const noexcept;
  double objective_at(double offset) const;

  /// Bayes update with X(time) = x. Leaves the run unchanged on error.
  void record(double time, State x, double objective);

  /// Replace state wholesale (used when restoring a snapshot).
  void restore(Posterior posterior, Trace trace);

 private:
  void refresh();

  ChainModel model_;
  DesignConfig config_;
  Posterior posterior_;
  Trace trace_;
  double spread_ = 0.0;
  double last_time_ = 0.0;
  State last_state_ = 0;
};

RunResult run_adaptive(const ChainModel& model, const Posterior& prior, const DesignConfig& config,
                       ObservationSource& source);

/// Fixed-period baseline: samples every `period` (after each reset, or along
/// the trajectory) with the same convergence rule.
RunResult run_periodic(const ChainModel& model, const Posterior& prior, const DesignConfig& config, double period,
                       ObservationSource& source);

}  // namespace adaptrate
