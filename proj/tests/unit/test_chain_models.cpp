#include <doctest.h>

#include <cmath>
#include <numeric>

#include "adaptrate/chain_models.hpp"
#include "adaptrate/error.hpp"
#include "oracles.hpp"

using namespace adaptrate;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

std::vector<double> row_of(const ChainModel& model, const RateVector& h, State from, double dt) {
  std::vector<double> row(model.num_states());
  transition_row(model, h.span(), from, dt, row);
  return row;
}

}  // namespace

TEST_CASE("model shapes and labels") {
  CHECK(ChainModel::two_state_unidirectional().rate_dim() == 1);
  CHECK(ChainModel::two_state_unidirectional().protocol() == Protocol::ResetEachSample);
  CHECK(ChainModel::two_state_bidirectional().rate_dim() == 2);
  CHECK(ChainModel::two_state_bidirectional().protocol() == Protocol::ContinuousTrajectory);
  CHECK(ChainModel::mm1_queue().num_states() == kDefaultStateCap + 1);
  CHECK(ChainModel::mm1_queue(12).state_cap() == 12);
  CHECK_THROWS_AS(ChainModel::mm1_queue(3), Error);
  CHECK(ChainModel::ring(5).num_states() == 5);
  CHECK(ChainModel::ring(5).rate_dim() == 2);
  const ChainModel binary = ChainModel::binary_digraph(3);
  CHECK(binary.rate_dim() == 6);
  REQUIRE(binary.edges().size() == 6);
  CHECK(binary.edges()[0] == Edge{0, 1});
  CHECK(binary.edges()[2] == Edge{1, 0});
  CHECK(binary.edges()[5] == Edge{2, 1});
  CHECK(binary_edge_index(3, 2, 1) == 5);
  CHECK(binary.rate_labels().size() == 6);
  CHECK_THROWS_AS(ChainModel::ring(1), Error);
  CHECK_THROWS_AS(ChainModel::binary_digraph(kMaxBinaryStates + 1), Error);
}

TEST_CASE("generators match the textbook construction") {
  const std::vector<std::pair<ChainModel, RateVector>> cases = {
      {ChainModel::two_state_unidirectional(), {1.3}},
      {ChainModel::two_state_bidirectional(), {0.4, 2.0}},
      {ChainModel::mm1_queue(10), {0.7, 1.9}},
      {ChainModel::ring(5), {1.0, 2.5}},
      {ChainModel::binary_digraph(3), {1, 0, 0, 1, 1, 0}},
  };
  for (const auto& [model, h] : cases) {
    CAPTURE(model.name());
    const Matrix q = build_generator(model, h);
    CHECK(max_abs_diff(q, oracle::generator(model, h)) == 0.0);
    CHECK(q.rowwise().sum().cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("ring m=3 rows are permutations of (-3, 1, 2)") {
  const Matrix q = build_generator(ChainModel::ring(3), RateVector{1.0, 2.0});
  for (Eigen::Index i = 0; i < 3; ++i) {
    std::vector<double> row = {q(i, 0), q(i, 1), q(i, 2)};
    std::sort(row.begin(), row.end());
    CHECK(row == std::vector<double>{-3.0, 1.0, 2.0});
  }
}

TEST_CASE("rates are validated") {
  const ChainModel bi = ChainModel::two_state_bidirectional();
  std::vector<double> row(2);
  CHECK_THROWS_AS(transition_row(bi, RateVector{-1.0, 1.0}.span(), 0, 1.0, row), Error);
  CHECK_THROWS_AS(transition_row(bi, RateVector{NAN, 1.0}.span(), 0, 1.0, row), Error);
  CHECK_THROWS_AS(transition_row(bi, RateVector{1.0}.span(), 0, 1.0, row), Error);
  try {
    transition_row(bi, RateVector{-1.0, 1.0}.span(), 0, 1.0, row);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NegativeRate);
  }
}

TEST_CASE("two-state closed forms agree with an independent formula and with uniformization") {
  const double rates[] = {0.0, 0.3, 1.0, 2.5, 7.0};
  const double times[] = {0.001, 0.1, 1.0, 3.0, 20.0};
  const ChainModel bi = ChainModel::two_state_bidirectional();
  const ChainModel uni = ChainModel::two_state_unidirectional();
  double worst = 0.0;
  for (double h0 : rates) {
    for (double dt : times) {
      const auto u = row_of(uni, RateVector{h0}, 0, dt);
      worst = std::max(worst, std::abs(u[1] - oracle::two_state(0, 1, h0, 0.0, dt)));
      for (double h1 : rates) {
        const Matrix exact = oracle::uniformized_expm(oracle::generator(bi, {h0, h1}), dt);
        for (State i = 0; i < 2; ++i) {
          const auto r = row_of(bi, RateVector{h0, h1}, i, dt);
          for (State j = 0; j < 2; ++j) {
            worst = std::max(worst, std::abs(r[j] - oracle::two_state(i, j, h0, h1, dt)));
            worst = std::max(worst, std::abs(r[j] - exact(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
          }
        }
      }
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("unidirectional chain after reset") {
  const ChainModel uni = ChainModel::two_state_unidirectional();
  const auto r = row_of(uni, RateVector{2.0}, 0, 0.5);
  CHECK(r[1] == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-15));
  CHECK(row_of(uni, RateVector{0.0}, 0, 5.0)[0] == 1.0);
  CHECK(row_of(uni, RateVector{3.0}, 0, 1e-12)[1] == doctest::Approx(3e-12).epsilon(1e-9));
}

TEST_CASE("library expm agrees with uniformization") {
  const ChainModel ring = ChainModel::ring(6);
  const ChainModel binary = ChainModel::binary_digraph(4);
  RateVector hb(std::vector<double>(12, 0.0));
  for (std::size_t k = 0; k < 12; k += 3) hb[k] = 1.0;
  for (double dt : {0.01, 0.7, 4.0}) {
    CHECK(max_abs_diff(expm(build_generator(ring, RateVector{0.8, 1.7}), dt),
                       oracle::uniformized_expm(oracle::generator(ring, {0.8, 1.7}), dt)) < 1e-12);
    CHECK(max_abs_diff(expm(build_generator(binary, hb), dt),
                       oracle::uniformized_expm(oracle::generator(binary, hb), dt)) < 1e-12);
  }
}

TEST_CASE("ring spectral rows match uniformization") {
  for (std::size_t m : {2, 3, 4, 7, 8}) {
    const ChainModel ring = ChainModel::ring(m);
    for (const RateVector& h : {RateVector{0.5, 1.5}, RateVector{2.0, 0.0}, RateVector{0.0, 0.0}}) {
      for (double dt : {0.05, 1.0, 6.0}) {
        const Matrix exact = oracle::uniformized_expm(oracle::generator(ring, h), dt);
        for (State i = 0; i < m; ++i) {
          const auto r = row_of(ring, h, i, dt);
          for (State j = 0; j < m; ++j) {
            CHECK(std::abs(r[j] - exact(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) < 1e-12);
          }
        }
      }
    }
  }
}

TEST_CASE("ring with equal rates relaxes to uniform") {
  const ChainModel ring = ChainModel::ring(4);
  for (State i = 0; i < 4; ++i) {
    for (double p : row_of(ring, RateVector{1.0, 1.0}, i, 50.0)) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("M/M/1 series matches a wide truncated generator") {
  const ChainModel wide = ChainModel::mm1_queue(120);
  double worst = 0.0;
  for (double rho : {0.0, 0.25, 0.5, 0.9}) {
    const double mu = 2.0;
    for (double dt : {0.1, 1.0, 5.0}) {
      const Matrix exact = oracle::uniformized_expm(oracle::generator(wide, {rho * mu, mu}), dt);
      for (State i = 0; i <= 10; ++i) {
        const auto row = mm1_transition_row(i, rho * mu, mu, dt, 10);
        for (State j = 0; j <= 10; ++j) {
          worst = std::max(worst, std::abs(row[j] - exact(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
          CHECK(mm1_transition_prob(i, j, rho * mu, mu, dt) == doctest::Approx(row[j]).epsilon(1e-12));
        }
      }
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("M/M/1 special cases") {
  // Pure death from state i: Poisson thinning with absorption at 0.
  const double mu = 1.5;
  const double dt = 0.8;
  const auto row = mm1_transition_row(3, 0.0, mu, dt, 5);
  const double m = mu * dt;
  CHECK(row[3] == doctest::Approx(std::exp(-m)).epsilon(1e-12));
  CHECK(row[2] == doctest::Approx(m * std::exp(-m)).epsilon(1e-12));
  CHECK(row[1] == doctest::Approx(m * m / 2 * std::exp(-m)).epsilon(1e-12));
  CHECK(row[4] == doctest::Approx(0.0));
  // The series needs a positive death rate.
  CHECK_THROWS_AS(mm1_transition_row(0, 1.2, 0.0, 1.0, 4), Error);
  // Tiny interval: nearly the identity.
  CHECK(mm1_transition_prob(4, 4, 1.0, 2.0, 1e-9) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("M/M/1 rows on the capped chain lump the tail into the cap state") {
  const ChainModel q = ChainModel::mm1_queue(12);
  const auto row = row_of(q, RateVector{1.0, 1.1}, 10, 30.0);
  double below = 0.0;
  for (State j = 0; j < 12; ++j) {
    below += row[j];
    CHECK(row[j] == doctest::Approx(mm1_transition_prob(10, j, 1.0, 1.1, 30.0)).epsilon(1e-10));
  }
  CHECK(row[12] == doctest::Approx(1.0 - below).epsilon(1e-12));
  CHECK(row[12] > 0.0);
}

TEST_CASE("sampling follows the transition row") {
  const ChainModel ring = ChainModel::ring(3);
  const RateVector h{1.0, 0.5};
  const auto row = row_of(ring, h, 0, 0.7);
  Rng rng(7);
  std::vector<double> counts(3, 0.0);
  const int n = 60000;
  for (int k = 0; k < n; ++k) counts[sample_transition(ring, h, 0, 0.7, rng)] += 1.0;
  for (State j = 0; j < 3; ++j) {
    const double se = std::sqrt(row[j] * (1 - row[j]) / n);
    CHECK(std::abs(counts[j] / n - row[j]) < 5 * se);
  }
}

TEST_CASE("transition_matrix stacks transition rows") {
  const ChainModel bi = ChainModel::two_state_bidirectional();
  const Matrix p = transition_matrix(bi, RateVector{1.0, 3.0}, 0.4);
  for (State i = 0; i < 2; ++i) {
    const auto r = row_of(bi, RateVector{1.0, 3.0}, i, 0.4);
    CHECK(p(static_cast<Eigen::Index>(i), 0) == r[0]);
    CHECK(p(static_cast<Eigen::Index>(i), 1) == r[1]);
  }
}
