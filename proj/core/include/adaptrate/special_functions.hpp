#pragma once

#include <span>
#include <vector>

namespace adaptrate {

/// Whittaker function W_{kappa,mu}(z) from its integral representation
///
///   W = z^{mu+1/2} e^{-z/2} / Gamma(mu-kappa+1/2)
///       * int_0^inf t^{mu-kappa-1/2} (1+t)^{mu+kappa-1/2} e^{-zt} dt,
///
/// integrated adaptively after mapping t = u/(1-u) onto [0, 1).
/// Requires mu - kappa + 1/2 > 0 and z > 0. Relative accuracy about 1e-8.
double whittaker_w(double kappa, double mu, double z);

/// Ratios I_{n+1}(x) / I_n(x) for n = 0..count-1, x > 0, by backward
/// recurrence (stable in the direction of decreasing order).
std::vector<double> bessel_i_ratios(double x, std::size_t count);
void bessel_i_ratios(double x, std::span<double> ratio);

/// log I_n(x) for n = 0..max_order, for x > 0, without overflow.
std::vector<double> log_bessel_i_sequence(double x, std::size_t max_order);

/// log I_0(x) for x >= 0 without overflow.
double log_bessel_i0(double x);

}  // namespace adaptrate
