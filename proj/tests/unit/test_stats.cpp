#include <doctest.h>

#include <cmath>
#include <numeric>

#include "adaptrate/error.hpp"
#include "adaptrate/random.hpp"
#include "adaptrate/stats.hpp"

using namespace adaptrate;

TEST_CASE("mean and standard error") {
  const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  CHECK(mean(v) == 2.5);
  // Sample sd = sqrt(5/3); SE = sd / 2.
  CHECK(standard_error(v) == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0).epsilon(1e-15));
  CHECK(standard_error(std::vector<double>{7.0}) == 0.0);
}

TEST_CASE("average ranks share ties") {
  const auto r = average_ranks(std::vector<double>{3, 1, 4, 1, 5, 9, 2, 6});
  CHECK(r == std::vector<double>{4, 1.5, 5, 1.5, 6, 8, 3, 7});
}

TEST_CASE("spearman correlation and its t-approximation p-value") {
  const auto c = spearman(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{2, 1, 4, 3, 5});
  CHECK(c.rho == doctest::Approx(0.8).epsilon(1e-14));
  // 2 * P(T_3 > 0.8 sqrt(3 / 0.36)), from an independent statistics package.
  CHECK(c.p_value == doctest::Approx(0.10408803866182778).epsilon(1e-10));
  const auto perfect = spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{40, 30, 20, 10});
  CHECK(perfect.rho == doctest::Approx(-1.0));
  CHECK(perfect.p_value < 1e-12);
  const auto flat = spearman(std::vector<double>{1, 2, 3}, std::vector<double>{5, 5, 5});
  CHECK(flat.p_value == 1.0);
  CHECK_THROWS_AS(spearman(std::vector<double>{1, 2}, std::vector<double>{1}), Error);
}

TEST_CASE("bootstrap interval covers the mean and is reproducible") {
  Rng rng(4);
  std::vector<double> v(300);
  for (double& x : v) x = 2.0 + uniform01(rng);
  const Interval a = bootstrap_mean_ci(v, 0.95, 2000, 9);
  const Interval b = bootstrap_mean_ci(v, 0.95, 2000, 9);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  const double m = mean(v);
  CHECK(a.lo < m);
  CHECK(a.hi > m);
  // Width close to the normal-theory 2 * 1.96 * SE.
  CHECK((a.hi - a.lo) == doctest::Approx(2 * 1.96 * standard_error(v)).epsilon(0.15));
  const Interval constant = bootstrap_mean_ci(std::vector<double>(10, 3.0), 0.95, 500, 1);
  CHECK(constant.lo == 3.0);
  CHECK(constant.hi == 3.0);
}

TEST_CASE("paired differences") {
  CHECK(paired_differences(std::vector<double>{3, 5}, std::vector<double>{1, 7}) == std::vector<double>{2, -2});
  CHECK_THROWS_AS(paired_differences(std::vector<double>{1}, std::vector<double>{1, 2}), Error);
}

TEST_CASE("derived seeds are distinct per stream and index") {
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 1, 0));
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 0, 1));
  CHECK(derive_seed(1, 0, 0) != derive_seed(2, 0, 0));
  CHECK(derive_seed(5, 3, 2) == derive_seed(5, 3, 2));
}
