#include "adaptrate/special_functions.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "adaptrate/error.hpp"

namespace adaptrate {

double whittaker_w(double kappa, double mu, double z) {
  const double shape = mu - kappa + 0.5;
  require(shape > 0.0, ErrorCode::InvalidArgument, "whittaker_w: requires mu - kappa + 1/2 > 0");
  require(z > 0.0 && std::isfinite(z), ErrorCode::InvalidArgument, "whittaker_w: requires z > 0");

  const double p = mu - kappa - 0.5;
  const double q = mu + kappa - 0.5;
  auto integrand = [&](double u) -> double {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    const double one_minus = 1.0 - u;
    const double t = u / one_minus;
    const double log_value = p * std::log(t) + q * std::log1p(t) - z * t - 2.0 * std::log(one_minus);
    return std::exp(log_value);
  };

  double error_estimate = 0.0;
  double l1 = 0.0;
  const double integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, 0.0, 1.0, 20, 1e-11, &error_estimate, &l1);
  if (!std::isfinite(integral) || error_estimate > 1e-8 * std::abs(integral)) {
    fail(ErrorCode::ConvergenceFailure, "whittaker_w: quadrature did not converge");
  }
  const double log_prefactor = (mu + 0.5) * std::log(z) - 0.5 * z - std::lgamma(shape);
  return std::exp(log_prefactor) * integral;
}

double log_bessel_i0(double x) {
  x = std::abs(x);
  if (x < 600.0) return std::log(std::cyl_bessel_i(0.0, x));
  // Hankel asymptotic expansion; the truncated terms are below 1e-16 here.
  const double inv = 1.0 / x;
  const double series = 1.0 + inv / 8.0 + 9.0 * inv * inv / 128.0 + 225.0 * inv * inv * inv / 3072.0;
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(series);
}

void bessel_i_ratios(double x, std::span<double> ratio) {
  require(x > 0.0 && std::isfinite(x), ErrorCode::InvalidArgument, "bessel_i_ratios: requires x > 0");
  // ratio[n] = I_{n+1}(x) / I_n(x), from I_n - I_{n+2} = (2(n+1)/x) I_{n+1}.
  // The recurrence needs a start well above both count and x.
  const std::size_t count = ratio.size();
  const std::size_t start = count + 16 + static_cast<std::size_t>(x + 8.0 * std::sqrt(x + 1.0));
  double r = 0.0;
  for (std::size_t n = start; n > count; --n) r = x / (2.0 * static_cast<double>(n) + x * r);
  for (std::size_t n = count; n-- > 0;) {
    r = x / (2.0 * static_cast<double>(n + 1) + x * r);
    ratio[n] = r;
  }
}

std::vector<double> bessel_i_ratios(double x, std::size_t count) {
  std::vector<double> ratio(count);
  bessel_i_ratios(x, std::span<double>(ratio));
  return ratio;
}

std::vector<double> log_bessel_i_sequence(double x, std::size_t max_order) {
  std::vector<double> out(max_order + 1);
  if (x <= 0.0) {
    out[0] = 0.0;
    for (std::size_t n = 1; n <= max_order; ++n) out[n] = -std::numeric_limits<double>::infinity();
    return out;
  }
  const std::vector<double> ratio = bessel_i_ratios(x, max_order);
  out[0] = log_bessel_i0(x);
  for (std::size_t n = 1; n <= max_order; ++n) out[n] = out[n - 1] + std::log(ratio[n - 1]);
  return out;
}

}  // namespace adaptrate
