#include "adaptrate/design.hpp"

#include <algorithm>
#include <cmath>

#include "adaptrate/error.hpp"

namespace adaptrate {

namespace {

// Nodes below this fraction of the largest mass are left out of the
// predictive sums; their total contribution is below 1e-16 * support size.
constexpr double kActiveMassFraction = 1e-16;
constexpr double kNegligibleBranch = 1e-300;
constexpr double kGoldenRelativeWidth = 1e-3;

}  // namespace

void DesignConfig::validate() const {
  require(std::isfinite(theta) && theta > 0.0, ErrorCode::InvalidArgument, "theta must be > 0");
  require(std::isfinite(delta_min) && delta_min > 0.0, ErrorCode::InvalidArgument, "delta_min must be > 0");
  require(std::isfinite(delta_max) && delta_max > delta_min, ErrorCode::InvalidArgument,
          "delta_max must exceed delta_min");
  require(n_candidates >= 1, ErrorCode::InvalidArgument, "n_candidates must be >= 1");
}

PredictiveEvaluator::PredictiveEvaluator(const Posterior& post, const ChainModel& model, State x_prev,
                                         ObjectiveWeighting weighting)
    : model_(model), x_prev_(x_prev), weighting_(weighting), dims_(post.dims()) {
  require(post.dims() == model.rate_dim(), ErrorCode::DimensionMismatch, "posterior dimension does not match model");
  require(x_prev < model.num_states(), ErrorCode::InvalidArgument, "previous state outside the model's state space");
  const RateVector mean = posterior_mean(post);
  double max_mass = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) max_mass = std::max(max_mass, post.mass(i));
  const double cutoff = max_mass * kActiveMassFraction;
  for (std::size_t i = 0; i < post.size(); ++i) {
    const double m = post.mass(i);
    if (m <= 0.0 || m < cutoff) continue;
    const auto pt = post.support().point(i);
    for (std::size_t k = 0; k < dims_; ++k) {
      rates_.push_back(pt[k]);
      centered_.push_back(pt[k] - mean[k]);
    }
    mass_.push_back(m);
    squared_.push_back(m * post.density(i));
  }
}

CovarianceMatrix PredictiveEvaluator::accumulate(double dt, bool squared_weights) const {
  const std::size_t d = dims_;
  const std::size_t states = model_.num_states();
  const std::size_t tri = d * (d + 1) / 2;
  const std::size_t stride = 1 + d + tri;
  std::vector<double> sums(states * stride, 0.0);
  std::vector<double> row(states);
  const std::vector<double>& weights = squared_weights ? squared_ : mass_;

  for (std::size_t g = 0; g < weights.size(); ++g) {
    transition_row(model_, std::span<const double>(rates_.data() + g * d, d), x_prev_, dt, row);
    const double* c = centered_.data() + g * d;
    for (std::size_t k = 0; k < states; ++k) {
      if (row[k] <= 0.0) continue;
      const double w = weights[g] * row[k];
      double* s = sums.data() + k * stride;
      s[0] += w;
      for (std::size_t a = 0; a < d; ++a) s[1 + a] += w * c[a];
      std::size_t idx = 1 + d;
      for (std::size_t a = 0; a < d; ++a) {
        const double wc = w * c[a];
        for (std::size_t b = a; b < d; ++b) s[idx++] += wc * c[b];
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(d);
  CovarianceMatrix out = CovarianceMatrix::Zero(n, n);
  for (std::size_t k = 0; k < states; ++k) {
    const double* s = sums.data() + k * stride;
    if (s[0] < kNegligibleBranch) continue;
    std::size_t idx = 1 + d;
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) {
        // sum w (c - m_k)(c - m_k)^T with m_k = s1 / s0
        out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += s[idx++] - s[1 + a] * s[1 + b] / s[0];
      }
    }
  }
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < a; ++b) out(a, b) = out(b, a);
  }
  return out;
}

double PredictiveEvaluator::expected_variance(double dt) const {
  require(dims_ == 1, ErrorCode::DimensionMismatch, "expected_variance needs a single-rate posterior");
  require(dt > 0.0 && std::isfinite(dt), ErrorCode::InvalidArgument, "sample offset must be > 0");
  return accumulate(dt, false)(0, 0);
}

CovarianceMatrix PredictiveEvaluator::expected_covariance(double dt) const {
  require(dt > 0.0 && std::isfinite(dt), ErrorCode::InvalidArgument, "sample offset must be > 0");
  return accumulate(dt, weighting_ == ObjectiveWeighting::LiteralSquared);
}

double PredictiveEvaluator::objective(double dt) const {
  if (dims_ == 1) return expected_variance(dt);
  return expected_covariance(dt).determinant();
}

double expected_variance(const Posterior& post, double t) {
  const ChainModel model = ChainModel::two_state_unidirectional();
  return PredictiveEvaluator(post, model, model.initial_state(), ObjectiveWeighting::StandardPredictive)
      .expected_variance(t);
}

double expected_variance(const Posterior& post, const ChainModel& model, State x_prev, double t) {
  return PredictiveEvaluator(post, model, x_prev, ObjectiveWeighting::StandardPredictive).expected_variance(t);
}

CovarianceMatrix expected_covariance(const Posterior& post, const ChainModel& model, State x_prev, double dt,
                                     ObjectiveWeighting weighting) {
  require(post.dims() >= 2, ErrorCode::DimensionMismatch, "expected_covariance needs at least two rates");
  return PredictiveEvaluator(post, model, x_prev, weighting).expected_covariance(dt);
}

double objective(const Posterior& post, const ChainModel& model, State x_prev, double dt, const DesignConfig& config) {
  return PredictiveEvaluator(post, model, x_prev, config.weighting).objective(dt);
}

std::vector<double> candidate_offsets(const DesignConfig& config) {
  config.validate();
  std::vector<double> out(config.n_candidates);
  if (config.n_candidates == 1) {
    out[0] = config.delta_min;
    return out;
  }
  const double lo = std::log(config.delta_min);
  const double hi = std::log(config.delta_max);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(out.size() - 1));
  }
  out.front() = config.delta_min;
  out.back() = config.delta_max;
  return out;
}

std::vector<double> objective_curve(const Posterior& post, const ChainModel& model, State x_prev,
                                    const DesignConfig& config) {
  const PredictiveEvaluator eval(post, model, x_prev, config.weighting);
  const std::vector<double> offsets = candidate_offsets(config);
  std::vector<double> values(offsets.size());
  for (std::size_t i = 0; i < offsets.size(); ++i) values[i] = eval.objective(offsets[i]);
  return values;
}

TimeChoice choose_next_time(const Posterior& post, const ChainModel& model, State x_prev, const DesignConfig& config) {
  const PredictiveEvaluator eval(post, model, x_prev, config.weighting);
  const std::vector<double> offsets = candidate_offsets(config);

  TimeChoice best{offsets[0], eval.objective(offsets[0]), 0};
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    const double v = eval.objective(offsets[i]);
    if (v < best.objective) best = {offsets[i], v, i};
  }
  if (!config.refine || offsets.size() < 2) return best;

  // Golden-section search in log-offset between the neighbouring candidates.
  const std::size_t i = best.candidate_index;
  double a = std::log(offsets[i == 0 ? 0 : i - 1]);
  double b = std::log(offsets[std::min(i + 1, offsets.size() - 1)]);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = eval.objective(std::exp(x1));
  double f2 = eval.objective(std::exp(x2));
  while (b - a > kGoldenRelativeWidth) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = eval.objective(std::exp(x1));
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = eval.objective(std::exp(x2));
    }
  }
  const double x_best = f1 <= f2 ? x1 : x2;
  const double f_best = std::min(f1, f2);
  if (f_best < best.objective) {
    best.offset = std::exp(x_best);
    best.objective = f_best;
  }
  return best;
}

SimulatedSource::SimulatedSource(ChainModel model, RateVector h_true, std::uint64_t seed)
    : model_(std::move(model)), h_true_(std::move(h_true)), rng_(seed) {
  require(h_true_.size() == model_.rate_dim(), ErrorCode::DimensionMismatch, "true rates do not match the model");
}

State SimulatedSource::observe(State x_prev, double dt, double /*t*/) {
  return sample_transition(model_, h_true_, x_prev, dt, rng_);
}

InferenceRun::InferenceRun(ChainModel model, Posterior prior, DesignConfig config)
    : model_(std::move(model)), config_(config), posterior_(std::move(prior)) {
  config_.validate();
  require(posterior_.dims() == model_.rate_dim(), ErrorCode::DimensionMismatch,
          "prior dimension does not match the model");
  spread_ = posterior_spread(posterior_);
  trace_.initial_spread = spread_;
  trace_.threshold = model_.kind() == ChainKind::BinaryDigraph ? config_.theta * spread_ : config_.theta;
  last_state_ = model_.initial_state();
  refresh();
}

void InferenceRun::refresh() {
  trace_.final_spread = spread_;
  trace_.converged = spread_ <= trace_.threshold;
  trace_.hit_step_cap = !trace_.converged && trace_.steps.size() >= config_.step_cap;
}

State InferenceRun::from_state() const noexcept {
  return model_.protocol() == Protocol::ResetEachSample ? model_.initial_state() : last_state_;
}

double InferenceRun::time_for_offset(double offset) const noexcept {
  return model_.protocol() == Protocol::ResetEachSample ? offset : last_time_ + offset;
}

Recommendation InferenceRun::recommend() const {
  const TimeChoice choice = choose_next_time(posterior_, model_, from_state(), config_);
  return {choice.offset, time_for_offset(choice.offset), choice.objective};
}

double InferenceRun::objective_at(double offset) const {
  return objective(posterior_, model_, from_state(), offset, config_);
}

void InferenceRun::record(double time, State x, double objective) {
  require(std::isfinite(time), ErrorCode::InvalidArgument, "sample time must be finite");
  require(x < model_.num_states(), ErrorCode::InvalidArgument,
          "observed state " + std::to_string(x) + " is outside 0.." + std::to_string(model_.num_states() - 1));
  double dt = 0.0;
  if (model_.protocol() == Protocol::ResetEachSample) {
    require(time > 0.0, ErrorCode::InvalidArgument, "sample time after reset must be > 0");
    dt = time;
  } else {
    require(time > last_time_, ErrorCode::InvalidArgument, "sample times must increase along the trajectory");
    dt = time - last_time_;
  }
  Posterior next = bayes_update(posterior_, model_, from_state(), dt, x);
  const double next_spread = posterior_spread(next);

  TraceStep step;
  step.n = trace_.steps.size() + 1;
  step.t = time;
  step.dt = dt;
  step.x = x;
  step.objective = objective;
  step.spread = next_spread;
  step.map = map_estimate(next);
  step.mean = posterior_mean(next);

  posterior_ = std::move(next);
  spread_ = next_spread;
  last_time_ = time;
  last_state_ = x;
  trace_.steps.push_back(std::move(step));
  refresh();
}

void InferenceRun::restore(Posterior posterior, Trace trace) {
  require(posterior.dims() == model_.rate_dim(), ErrorCode::DimensionMismatch, "restored posterior does not match");
  posterior_ = std::move(posterior);
  trace_ = std::move(trace);
  spread_ = posterior_spread(posterior_);
  if (!trace_.steps.empty()) {
    last_time_ = trace_.steps.back().t;
    last_state_ = trace_.steps.back().x;
  } else {
    last_time_ = 0.0;
    last_state_ = model_.initial_state();
  }
  refresh();
}

RunResult run_adaptive(const ChainModel& model, const Posterior& prior, const DesignConfig& config,
                       ObservationSource& source) {
  InferenceRun run(model, prior, config);
  while (!run.finished()) {
    const Recommendation rec = run.recommend();
    const State x = source.observe(run.from_state(), rec.offset, rec.time);
    run.record(rec.time, x, rec.objective);
  }
  return {run.trace(), run.posterior()};
}

RunResult run_periodic(const ChainModel& model, const Posterior& prior, const DesignConfig& config, double period,
                       ObservationSource& source) {
  require(std::isfinite(period) && period > 0.0, ErrorCode::InvalidArgument, "sampling period must be > 0");
  InferenceRun run(model, prior, config);
  while (!run.finished()) {
    const double time = run.time_for_offset(period);
    const State x = source.observe(run.from_state(), period, time);
    run.record(time, x, std::numeric_limits<double>::quiet_NaN());
  }
  return {run.trace(), run.posterior()};
}

}  // namespace adaptrate
