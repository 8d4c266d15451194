#include "adaptrate/chain_models.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <unsupported/Eigen/MatrixFunctions>

#include "adaptrate/error.hpp"
#include "adaptrate/special_functions.hpp"

namespace adaptrate {

namespace {

constexpr std::size_t kMaxSeriesTerms = 10000;

void check_rates(const ChainModel& model, std::span<const double> rates) {
  require(rates.size() == model.rate_dim(), ErrorCode::DimensionMismatch, [&] {
    return model.name() + ": expected " + std::to_string(model.rate_dim()) + " rates, got " +
           std::to_string(rates.size());
  });
  for (double r : rates) {
    require(std::isfinite(r), ErrorCode::NonFinite, "non-finite rate");
    require(r >= 0.0, ErrorCode::NegativeRate, "negative rate");
  }
}

void check_interval(double dt) {
  require(std::isfinite(dt) && dt >= 0.0, ErrorCode::InvalidArgument, "time interval must be finite and >= 0");
}

struct RingTables {
  std::size_t m = 0;
  std::vector<double> cosine;
  std::vector<double> sine;
};

const RingTables& ring_tables(std::size_t m) {
  thread_local RingTables tables;
  if (tables.m != m) {
    tables.m = m;
    tables.cosine.resize(m);
    tables.sine.resize(m);
    for (std::size_t q = 0; q < m; ++q) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(q) / static_cast<double>(m);
      tables.cosine[q] = std::cos(angle);
      tables.sine[q] = std::sin(angle);
    }
  }
  return tables;
}

// Circulant generator: exp(A dt) from its Fourier eigenvalues,
//   p(offset) = (1/m) sum_k exp(-s (1 - cos th_k) dt) cos(drift sin th_k - offset th_k).
// Modes k and m-k contribute equal real parts.
void ring_row(std::size_t m, double h_plus, double h_minus, State from, double dt, std::span<double> row) {
  const double total = h_plus + h_minus;
  std::fill(row.begin(), row.end(), 0.0);
  if (dt == 0.0 || total == 0.0) {
    row[from] = 1.0;
    return;
  }
  const RingTables& t = ring_tables(m);
  const double drift = (h_plus - h_minus) * dt;
  for (std::size_t k = 0; 2 * k <= m; ++k) {
    const double multiplicity = (k == 0 || 2 * k == m) ? 1.0 : 2.0;
    const double amp = multiplicity * std::exp(-total * (1.0 - t.cosine[k]) * dt);
    const double phase = drift * t.sine[k];
    const double cp = amp * std::cos(phase);
    const double sp = amp * std::sin(phase);
    for (std::size_t offset = 0; offset < m; ++offset) {
      const std::size_t q = (offset * k) % m;
      // cos(phase - q th) = cos(phase) cos(q th) + sin(phase) sin(q th)
      row[(from + offset) % m] += cp * t.cosine[q] + sp * t.sine[q];
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  for (double& p : row) p = std::clamp(p * inv_m, 0.0, 1.0);
}

void truncated_mm1_row(const ChainModel& model, std::span<const double> rates, State from, double dt,
                       std::span<double> row) {
  const Matrix p = expm(build_generator(model, rates), dt);
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = std::clamp(p(static_cast<Eigen::Index>(from), j), 0.0, 1.0);
}

}  // namespace

ChainModel ChainModel::two_state_unidirectional() {
  return ChainModel(ChainKind::TwoStateUnidirectional, 1, 2, Protocol::ResetEachSample);
}

ChainModel ChainModel::two_state_bidirectional() {
  return ChainModel(ChainKind::TwoStateBidirectional, 2, 2, Protocol::ContinuousTrajectory);
}

ChainModel ChainModel::mm1_queue(std::size_t state_cap) {
  require(state_cap >= 10, ErrorCode::InvalidArgument, "mm1_queue: state_cap must be >= 10");
  return ChainModel(ChainKind::MM1Queue, 2, state_cap + 1, Protocol::ContinuousTrajectory);
}

ChainModel ChainModel::ring(std::size_t states) {
  require(states >= 2, ErrorCode::InvalidArgument, "ring: needs at least 2 states");
  return ChainModel(ChainKind::Ring, 2, states, Protocol::ContinuousTrajectory);
}

ChainModel ChainModel::binary_digraph(std::size_t states) {
  require(states >= 2 && states <= kMaxBinaryStates, ErrorCode::InvalidArgument,
          "binary_digraph: states must be in [2, " + std::to_string(kMaxBinaryStates) + "]");
  ChainModel model(ChainKind::BinaryDigraph, states * (states - 1), states, Protocol::ContinuousTrajectory);
  for (State from = 0; from < states; ++from) {
    for (State to = 0; to < states; ++to) {
      if (from != to) model.edges_.push_back({from, to});
    }
  }
  return model;
}

std::vector<std::string> ChainModel::rate_labels() const {
  switch (kind_) {
    case ChainKind::TwoStateUnidirectional: return {"h0"};
    case ChainKind::TwoStateBidirectional: return {"h0", "h1"};
    case ChainKind::MM1Queue: return {"lambda", "mu"};
    case ChainKind::Ring: return {"h_plus", "h_minus"};
    case ChainKind::BinaryDigraph: {
      std::vector<std::string> labels;
      for (const Edge& e : edges_) labels.push_back("h_" + std::to_string(e.from) + "_" + std::to_string(e.to));
      return labels;
    }
  }
  return {};
}

std::string ChainModel::name() const {
  switch (kind_) {
    case ChainKind::TwoStateUnidirectional: return "two_state_unidirectional";
    case ChainKind::TwoStateBidirectional: return "two_state_bidirectional";
    case ChainKind::MM1Queue: return "mm1_queue";
    case ChainKind::Ring: return "ring";
    case ChainKind::BinaryDigraph: return "binary_digraph";
  }
  return "unknown";
}

std::size_t binary_edge_index(std::size_t states, State from, State to) {
  require(from < states && to < states && from != to, ErrorCode::InvalidArgument, "binary_edge_index: bad pair");
  return from * (states - 1) + (to < from ? to : to - 1);
}

GeneratorMatrix build_generator(const ChainModel& model, std::span<const double> rates) {
  check_rates(model, rates);
  const auto n = static_cast<Eigen::Index>(model.num_states());
  GeneratorMatrix a = GeneratorMatrix::Zero(n, n);
  switch (model.kind()) {
    case ChainKind::TwoStateUnidirectional:
      a(0, 1) = rates[0];
      break;
    case ChainKind::TwoStateBidirectional:
      a(0, 1) = rates[0];
      a(1, 0) = rates[1];
      break;
    case ChainKind::MM1Queue:
      // Birth out of the cap state is dropped (reflecting boundary).
      for (Eigen::Index i = 0; i + 1 < n; ++i) a(i, i + 1) = rates[0];
      for (Eigen::Index i = 1; i < n; ++i) a(i, i - 1) = rates[1];
      break;
    case ChainKind::Ring:
      for (Eigen::Index i = 0; i < n; ++i) {
        a(i, (i + 1) % n) += rates[0];
        a(i, (i + n - 1) % n) += rates[1];
      }
      break;
    case ChainKind::BinaryDigraph: {
      const auto edges = model.edges();
      for (std::size_t k = 0; k < edges.size(); ++k) {
        a(static_cast<Eigen::Index>(edges[k].from), static_cast<Eigen::Index>(edges[k].to)) = rates[k];
      }
      break;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) = 0.0;
    a(i, i) = -a.row(i).sum();
  }
  return a;
}

Matrix expm(const Matrix& generator, double dt) {
  check_interval(dt);
  if (dt == 0.0) return Matrix::Identity(generator.rows(), generator.cols());
  const Matrix scaled = generator * dt;
  Matrix out = scaled.exp();
  if (!out.allFinite()) fail(ErrorCode::NonFinite, "expm: non-finite result");
  return out;
}

namespace {

struct SeriesScratch {
  std::vector<double> ratio;
  std::vector<double> c;
  std::vector<double> suffix;
};

// Writes P(i -> j) for j < out.size(). Returns false when the series does
// not converge within the term cap.
bool mm1_series_row(State i, double lambda, double mu, double dt, std::span<double> out) {
  const std::size_t max_state = out.size() - 1;
  std::fill(out.begin(), out.end(), 0.0);
  if (dt == 0.0) {
    if (i <= max_state) out[i] = 1.0;
    return true;
  }

  if (lambda == 0.0) {
    // Pure death: the number of deaths is Poisson(mu dt) until 0 absorbs.
    const double mean = mu * dt;
    for (State j = 1; j <= std::min(i, max_state); ++j) {
      const double deaths = static_cast<double>(i - j);
      out[j] = std::exp(deaths * std::log(mean) - mean - std::lgamma(deaths + 1.0));
    }
    out[0] = (i == 0) ? 1.0 : boost::math::gamma_p(static_cast<double>(i), mean);
    return true;
  }

  // Series terms c_k = e^{-(lambda+mu)dt} rho^{-k/2} I_k(a dt). They are
  // anchored in log space at the largest term and filled outwards with Bessel
  // ratios, so neither end overflows for large a dt.
  thread_local SeriesScratch scratch;
  const double rho = lambda / mu;
  const double sqrt_rho = std::sqrt(rho);
  const double log_rho = std::log(rho);
  const double x = 2.0 * std::sqrt(lambda * mu) * dt;
  const double base = -(lambda + mu) * dt;
  const std::size_t first_tail = i + 2;
  const std::size_t last_needed = max_state + i + 2;
  const double scale = mu * dt;
  std::size_t tail_len = static_cast<std::size_t>(std::ceil(scale + 8.0 * std::sqrt(scale + 1.0) + 16.0));

  for (;;) {
    if (tail_len > kMaxSeriesTerms) return false;
    const std::size_t top = last_needed + tail_len;
    scratch.ratio.resize(top + 1);
    scratch.c.assign(top + 1, 0.0);
    scratch.suffix.assign(top - first_tail + 2, 0.0);
    const std::span<double> ratio(scratch.ratio);
    std::vector<double>& c = scratch.c;
    std::vector<double>& suffix = scratch.suffix;
    bessel_i_ratios(x, ratio);

    std::size_t peak = 0;
    while (peak < top && ratio[peak] > sqrt_rho) ++peak;
    double log_i = log_bessel_i0(x);
    double product = 1.0;
    for (std::size_t n = 0; n < peak; ++n) {
      product *= ratio[n];
      if (product < 1e-200) {
        log_i += std::log(product);
        product = 1.0;
      }
    }
    log_i += std::log(product);

    c[peak] = std::exp(base - 0.5 * static_cast<double>(peak) * log_rho + log_i);
    const double inv_sqrt_rho = 1.0 / sqrt_rho;
    for (std::size_t k = peak; k < top; ++k) c[k + 1] = c[k] * ratio[k] * inv_sqrt_rho;
    for (std::size_t k = peak; k > 0; --k) c[k - 1] = c[k] * sqrt_rho / ratio[k - 1];

    // suffix[k - first_tail] = sum_{q >= k} c_q
    for (std::size_t k = top + 1; k-- > first_tail;) suffix[k - first_tail] = suffix[k - first_tail + 1] + c[k];

    const double decay = ratio[top] * inv_sqrt_rho;
    const double remainder = decay < 1.0 ? c[top] * decay / (1.0 - decay) : INFINITY;
    if (!(remainder <= 1e-14 * suffix[last_needed - first_tail]) && c[top] != 0.0) {
      tail_len *= 2;
      continue;
    }

    double rho_j = 1.0;     // rho^j
    double rho_diff = 1.0;  // rho^(j - i) once j >= i
    for (std::size_t j = 0; j <= max_state; ++j) {
      double near = 0.0;
      if (j >= i) {
        near = rho_diff * c[j - i];
        rho_diff *= rho;
      } else {
        near = c[i - j];
      }
      const double p = near + rho_j * (c[j + i + 1] + (1.0 - rho) * suffix[j + i + 2 - first_tail]);
      if (!std::isfinite(p)) return false;
      out[j] = std::clamp(p, 0.0, 1.0);
      rho_j *= rho;
    }
    return true;
  }
}

}  // namespace

std::vector<double> mm1_transition_row(State i, double lambda, double mu, double dt, std::size_t max_state) {
  require(std::isfinite(lambda) && std::isfinite(mu), ErrorCode::NonFinite, "mm1: non-finite rate");
  require(mu > 0.0, ErrorCode::InvalidArgument, "mm1: requires mu > 0");
  require(lambda >= 0.0 && lambda < mu, ErrorCode::InvalidArgument, "mm1: requires 0 <= lambda < mu");
  check_interval(dt);
  std::vector<double> out(max_state + 1, 0.0);
  if (!mm1_series_row(i, lambda, mu, dt, out)) {
    fail(ErrorCode::ConvergenceFailure, "mm1: Bessel series did not converge within the term cap");
  }
  return out;
}

double mm1_transition_prob(State i, State j, double lambda, double mu, double dt) {
  return mm1_transition_row(i, lambda, mu, dt, j)[j];
}

void transition_row(const ChainModel& model, std::span<const double> rates, State from, double dt,
                    std::span<double> row) {
  check_interval(dt);
  require(row.size() == model.num_states(), ErrorCode::DimensionMismatch, "transition_row: row size mismatch");
  require(from < model.num_states(), ErrorCode::InvalidArgument, "transition_row: state out of range");
  check_rates(model, rates);

  switch (model.kind()) {
    case ChainKind::TwoStateUnidirectional: {
      if (from == 1) {
        row[0] = 0.0;
        row[1] = 1.0;
      } else {
        row[0] = std::exp(-rates[0] * dt);
        row[1] = -std::expm1(-rates[0] * dt);
      }
      return;
    }
    case ChainKind::TwoStateBidirectional: {
      const double total = rates[0] + rates[1];
      if (total == 0.0 || dt == 0.0) {
        row[from] = 1.0;
        row[1 - from] = 0.0;
        return;
      }
      const double decay = -std::expm1(-total * dt);
      if (from == 0) {
        row[1] = rates[0] / total * decay;
        row[0] = 1.0 - row[1];
      } else {
        row[0] = rates[1] / total * decay;
        row[1] = 1.0 - row[0];
      }
      return;
    }
    case ChainKind::Ring:
      ring_row(model.num_states(), rates[0], rates[1], from, dt, row);
      return;
    case ChainKind::MM1Queue: {
      const std::size_t cap = model.state_cap();
      if (rates[1] > 0.0 && rates[0] >= 0.0 && rates[0] < rates[1]) {
        if (mm1_series_row(from, rates[0], rates[1], dt, row.first(cap))) {
          double total = 0.0;
          for (std::size_t j = 0; j < cap; ++j) total += row[j];
          // The cap state stands for "cap or more".
          row[cap] = std::max(0.0, 1.0 - total);
          return;
        }
      }
      truncated_mm1_row(model, rates, from, dt, row);
      return;
    }
    case ChainKind::BinaryDigraph: {
      const Matrix p = expm(build_generator(model, rates), dt);
      for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] = std::clamp(p(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(j)), 0.0, 1.0);
      }
      return;
    }
  }
}

Matrix transition_matrix(const ChainModel& model, std::span<const double> rates, double dt) {
  check_rates(model, rates);
  check_interval(dt);
  const auto n = static_cast<Eigen::Index>(model.num_states());
  Matrix p(n, n);
  switch (model.kind()) {
    case ChainKind::Ring:
    case ChainKind::BinaryDigraph:
      p = expm(build_generator(model, rates), dt);
      break;
    default: {
      std::vector<double> row(model.num_states());
      for (Eigen::Index i = 0; i < n; ++i) {
        transition_row(model, rates, static_cast<State>(i), dt, row);
        for (Eigen::Index j = 0; j < n; ++j) p(i, j) = row[static_cast<std::size_t>(j)];
      }
    }
  }
  if (!p.allFinite()) fail(ErrorCode::NonFinite, "transition_matrix: non-finite result");
  return p;
}

State sample_transition(const ChainModel& model, std::span<const double> rates, State x_prev, double dt, Rng& rng) {
  check_rates(model, rates);
  std::vector<double> row(model.num_states());
  transition_row(model, rates, x_prev, dt, row);
  const double u = uniform01(rng);
  double cumulative = 0.0;
  State last_possible = x_prev;
  for (State j = 0; j < row.size(); ++j) {
    if (row[j] <= 0.0) continue;
    cumulative += row[j];
    last_possible = j;
    if (u < cumulative) return j;
  }
  return last_possible;
}

}  // namespace adaptrate
