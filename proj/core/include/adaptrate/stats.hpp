#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace adaptrate {

double mean(std::span<const double> values);
/// Standard error of the mean (sample standard deviation / sqrt(n)); 0 for n < 2.
double standard_error(std::span<const double> values);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap interval for the mean at the given two-sided level.
/// Resampling uses its own generator seeded with `seed`.
Interval bootstrap_mean_ci(std::span<const double> values, double level, std::size_t resamples, std::uint64_t seed);

/// Elementwise a[i] - b[i].
std::vector<double> paired_differences(std::span<const double> a, std::span<const double> b);

/// Ranks starting at 1, ties get their average rank.
std::vector<double> average_ranks(std::span<const double> values);

struct Correlation {
  double rho = 0.0;
  /// Two-sided p-value from the t approximation with n - 2 degrees of freedom.
  double p_value = 1.0;
};

Correlation spearman(std::span<const double> x, std::span<const double> y);

}  // namespace adaptrate
