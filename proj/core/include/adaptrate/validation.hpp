#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace adaptrate {

/// Outcome of one invariant suite: the worst deviation seen over all checks
/// against its tolerance.
struct SuiteResult {
  std::string name;
  bool passed = false;
  std::size_t checks = 0;
  double worst = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// Two-state bidirectional closed form against the 2x2 matrix exponential on
/// a 5x5x5 lattice of (h0, h1, dt). Tolerance 1e-10.
SuiteResult check_bidirectional_closed_form();

/// P(s + t) = P(s) P(t) for rings with m = 2..8, using the row path the
/// inference loop uses. Tolerance 1e-8.
SuiteResult check_ring_chapman_kolmogorov();

/// M/M/1 Bessel series against the exponential of the generator truncated
/// at 100 states, for i, j <= 10, lambda/mu in {0, 0.25, 0.5, 0.9} and
/// dt in {0.1, 1, 5}. Tolerance 1e-6.
SuiteResult check_mm1_cross_validation();

/// Every model's transition rows are nonnegative and sum to one. Tolerance 1e-12.
SuiteResult check_row_stochasticity();

/// Expected variance never exceeds the current variance (single rate), and
/// under standard predictive weighting the expected covariance determinant
/// never exceeds the current one, over `count` random posteriors and times.
/// Tolerance 1e-10.
SuiteResult check_total_variance(std::uint64_t seed, std::size_t count = 1000);

/// All suites above in a fixed order.
std::vector<SuiteResult> run_validation_suites(std::uint64_t seed);

}  // namespace adaptrate
