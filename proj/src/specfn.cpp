#include "shrinkhs/specfn.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace shrinkhs::specfn {
namespace {

void require_positive(double x, const char* fn) {
  if (!(x > 0.0)) {
    throw std::domain_error(std::string(fn) + ": argument must be positive, got " +
                            std::to_string(x));
  }
}

// Power series: E1(x) = -gamma - log x - sum_{k>=1} (-x)^k / (k k!).
// Used for x <= 1 where the alternating terms stay below 1 in magnitude.
double e1_series(double x) {
  double sum = 0.0;
  double term = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= -x / k;
    const double contrib = term / k;
    sum += contrib;
    if (std::abs(contrib) < 1e-17 * std::abs(sum)) break;
  }
  return -kEulerGamma - std::log(x) - sum;
}

// Continued fraction for exp(x) E1(x), modified Lentz, valid for x > 1:
//   exp(x) E1(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...)))
// depth k drops the first k levels, so depth 1 yields the remainder r in
// exp(x) E1(x) = 1/(x+1-r).
double e1_fraction(double x, int depth) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 + 2.0 * depth;
  double f = b;
  double c = f;
  double d = 0.0;
  for (int i = 1; i < 10000; ++i) {
    const double k = static_cast<double>(i + depth);
    const double a = -k * k;
    b += 2.0;
    d = b + a * d;
    if (std::abs(d) < tiny) d = tiny;
    c = b + a / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 / f;
}

}  // namespace

double e1(double x) {
  require_positive(x, "e1");
  if (x <= 1.0) return e1_series(x);
  return e1_fraction(x, 0) * std::exp(-x);
}

double scaled_e1(double x) {
  require_positive(x, "scaled_e1");
  if (x <= 1.0) return std::exp(x) * e1_series(x);
  return e1_fraction(x, 0);
}

double scaled_e1_remainder(double x) {
  if (!(x > 1.0)) throw std::domain_error("scaled_e1_remainder: argument must exceed 1");
  return e1_fraction(x, 1);
}

double digamma(double x) {
  require_positive(x, "digamma");
  double shift = 0.0;
  while (x < 6.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli tail: -sum B_{2k} / (2k x^{2k})
  const double tail =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 -
                                      inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))));
  return shift + std::log(x) - 0.5 * inv - tail;
}

double log_gamma(double x) {
  require_positive(x, "log_gamma");
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  // 1 - p is exact here; the refinement below needs the small tail probability.
  if (p > 0.5) return -normal_quantile(1.0 - p);
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace shrinkhs::specfn
