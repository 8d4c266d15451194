#include "adaptrate/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>

#include "adaptrate/error.hpp"
#include "adaptrate/random.hpp"

namespace adaptrate {

double mean(std::span<const double> values) {
  require(!values.empty(), ErrorCode::InvalidArgument, "mean of an empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double standard_error(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

Interval bootstrap_mean_ci(std::span<const double> values, double level, std::size_t resamples, std::uint64_t seed) {
  require(!values.empty(), ErrorCode::InvalidArgument, "bootstrap of an empty sample");
  require(level > 0.0 && level < 1.0, ErrorCode::InvalidArgument, "confidence level must lie in (0, 1)");
  require(resamples >= 10, ErrorCode::InvalidArgument, "bootstrap needs at least 10 resamples");
  Rng rng(seed);
  const std::size_t n = values.size();
  std::vector<double> means(resamples);
  for (double& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += values[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n))];
    }
    m = sum / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double tail = 0.5 * (1.0 - level);
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, resamples - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  return {quantile(tail), quantile(1.0 - tail)};
}

std::vector<double> paired_differences(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::DimensionMismatch, "paired samples differ in length");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::DimensionMismatch, "spearman: samples differ in length");
  require(x.size() >= 3, ErrorCode::InvalidArgument, "spearman: needs at least 3 pairs");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double mx = mean(rx);
  const double my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  Correlation out;
  if (sxx == 0.0 || syy == 0.0) return out;
  out.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = static_cast<double>(x.size() - 2);
  if (std::abs(out.rho) >= 1.0) {
    out.p_value = 0.0;
    return out;
  }
  const double t = out.rho * std::sqrt(dof / (1.0 - out.rho * out.rho));
  const boost::math::students_t dist(dof);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return out;
}

}  // namespace adaptrate
