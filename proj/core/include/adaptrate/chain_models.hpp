#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "adaptrate/random.hpp"

namespace adaptrate {

using State = std::size_t;
using Matrix = Eigen::MatrixXd;
using GeneratorMatrix = Eigen::MatrixXd;

enum class ChainKind { TwoStateUnidirectional, TwoStateBidirectional, MM1Queue, Ring, BinaryDigraph };

/// How successive observations relate: the unidirectional chain is reset to
/// state 0 before every sample, every other family is observed along one
/// trajectory.
enum class Protocol { ResetEachSample, ContinuousTrajectory };

struct Edge {
  State from = 0;
  State to = 0;
  bool operator==(const Edge&) const = default;
};

inline constexpr std::size_t kDefaultStateCap = 50;
inline constexpr std::size_t kMaxBinaryStates = 4;

/// A chain family with its rate layout. Immutable after construction.
///
/// Rate order per family:
///   TwoStateUnidirectional  (h0)
///   TwoStateBidirectional   (h0: 0->1, h1: 1->0)
///   MM1Queue                (lambda: birth, mu: death)
///   Ring                    (h+: i->i+1, h-: i->i-1, indices mod m)
///   BinaryDigraph           one rate per ordered pair, row-major:
///                           0->1, 0->2, ..., 1->0, 1->2, ...
class ChainModel {
 public:
  static ChainModel two_state_unidirectional();
  static ChainModel two_state_bidirectional();
  static ChainModel mm1_queue(std::size_t state_cap = kDefaultStateCap);
  static ChainModel ring(std::size_t states);
  static ChainModel binary_digraph(std::size_t states);

  ChainKind kind() const noexcept { return kind_; }
  /// Count of free rates d.
  std::size_t rate_dim() const noexcept { return rate_dim_; }
  /// Observable states; the M/M/1 chain is truncated to 0..state_cap.
  std::size_t num_states() const noexcept { return num_states_; }
  Protocol protocol() const noexcept { return protocol_; }
  State initial_state() const noexcept { return 0; }
  std::size_t state_cap() const noexcept { return kind_ == ChainKind::MM1Queue ? num_states_ - 1 : 0; }
  /// Directed pairs carrying each rate, BinaryDigraph only.
  std::span<const Edge> edges() const noexcept { return edges_; }
  std::vector<std::string> rate_labels() const;
  std::string name() const;

  bool operator==(const ChainModel&) const = default;

 private:
  ChainModel(ChainKind kind, std::size_t rate_dim, std::size_t num_states, Protocol protocol)
      : kind_(kind), rate_dim_(rate_dim), num_states_(num_states), protocol_(protocol) {}

  ChainKind kind_;
  std::size_t rate_dim_;
  std::size_t num_states_;
  Protocol protocol_;
  std::vector<Edge> edges_;
};

/// Unknown rates h, in units of 1/time.
struct RateVector {
  std::vector<double> values;

  RateVector() = default;
  RateVector(std::initializer_list<double> v) : values(v) {}
  explicit RateVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  std::span<const double> span() const noexcept { return values; }
  bool operator==(const RateVector&) const = default;
};

/// A point sample: state x observed at time t.
struct Observation {
  double t = 0.0;
  State x = 0;
};

GeneratorMatrix build_generator(const ChainModel& model, std::span<const double> rates);
inline GeneratorMatrix build_generator(const ChainModel& model, const RateVector& h) {
  return build_generator(model, h.span());
}

/// Row-stochastic P with P(i, j) = p(X(t+dt) = j | X(t) = i, h).
Matrix transition_matrix(const ChainModel& model, std::span<const double> rates, double dt);
inline Matrix transition_matrix(const ChainModel& model, const RateVector& h, double dt) {
  return transition_matrix(model, h.span(), dt);
}

/// Single row of the transition matrix, written into `row` (size
/// num_states). This is the path used by the inference loops; it avoids the
/// dense matrix exponential wherever a closed form exists.
void transition_row(const ChainModel& model, std::span<const double> rates, State from, double dt,
                    std::span<double> row);

/// M/M/1 transient probability p(X(t+dt)=j | X(t)=i) as a
/// modified-Bessel series, untruncated in the state space.
double mm1_transition_prob(State i, State j, double lambda, double mu, double dt);

/// Exact series probabilities for j = 0..max_state from state i. Throws
/// NonFinite / ConvergenceFailure when the series cannot be evaluated.
std::vector<double> mm1_transition_row(State i, double lambda, double mu, double dt, std::size_t max_state);

/// Matrix exponential exp(A * dt) by scaling and squaring.
Matrix expm(const Matrix& generator, double dt);

/// Draw X(t+dt) given X(t) = x_prev.
State sample_transition(const ChainModel& model, std::span<const double> rates, State x_prev, double dt,
                        Rng& rng);
inline State sample_transition(const ChainModel& model, const RateVector& h, State x_prev, double dt,
                               Rng& rng) {
  return sample_transition(model, h.span(), x_prev, dt, rng);
}

/// Index of the rate for directed pair from -> to in a BinaryDigraph of m states.
std::size_t binary_edge_index(std::size_t states, State from, State to);

}  // namespace adaptrate
