#include "oracles.hpp"
#include "shrinkhs/specfn.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

using namespace shrinkhs;

namespace {
double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }
}  // namespace

TEST_CASE("e1 matches quadrature") {
  for (double x : {1e-8, 1e-6, 1e-3, 0.1, 0.5, 1.0, 1.5, 2.0, 5.0, 20.0, 80.0}) {
    CAPTURE(x);
    CHECK(rel(specfn::e1(x), oracle::e1(x)) < 1e-10);
  }
  CHECK(specfn::e1(1.0) == doctest::Approx(0.219383934395520).epsilon(1e-12));
  CHECK(specfn::e1(10.0) == doctest::Approx(4.156968929685324e-6).epsilon(1e-12));
}

TEST_CASE("e1 small-argument behaviour") {
  const double x = 1e-6;
  CHECK(specfn::e1(x) / (-specfn::kEulerGamma - std::log(x)) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("e1 domain") {
  CHECK_THROWS_AS(specfn::e1(0.0), std::domain_error);
  CHECK_THROWS_AS(specfn::e1(-1.0), std::domain_error);
  CHECK_THROWS_AS(specfn::e1(std::nan("")), std::domain_error);
  CHECK_THROWS_AS(specfn::scaled_e1(0.0), std::domain_error);
  CHECK_THROWS_AS(specfn::digamma(0.0), std::domain_error);
}

TEST_CASE("scaled_e1 consistency and asymptotics") {
  for (double x : {1e-6, 0.01, 0.3, 1.0, 2.5, 10.0, 30.0, 50.0}) {
    CAPTURE(x);
    CHECK(rel(specfn::scaled_e1(x), std::exp(x) * specfn::e1(x)) < 1e-12);
  }
  CHECK(specfn::scaled_e1(1.0) == doctest::Approx(0.596347362323194).epsilon(1e-12));
  CHECK(specfn::scaled_e1(1e6) * 1e6 == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(rel(specfn::scaled_e1(1e6), 1e-6 - 1e-12 + 2e-18) < 1e-12);
  CHECK(std::isfinite(specfn::scaled_e1(1e8)));
  CHECK(std::isfinite(specfn::scaled_e1(1e300)));
}

TEST_CASE("scaled_e1_remainder reproduces the scaled value") {
  for (double x : {1.01, 2.0, 7.0, 40.0, 1e3, 1e7}) {
    CAPTURE(x);
    const double r = specfn::scaled_e1_remainder(x);
    CHECK(rel(1.0 / (x + 1.0 - r), specfn::scaled_e1(x)) < 1e-13);
  }
}

TEST_CASE("digamma identities and quadrature") {
  const double g = specfn::kEulerGamma;
  CHECK(std::abs(specfn::digamma(1.0) + g) < 1e-12);
  CHECK(std::abs(specfn::digamma(2.0) - (1.0 - g)) < 1e-12);
  CHECK(std::abs(specfn::digamma(0.5) - (-g - 2.0 * std::numbers::ln2)) < 1e-12);
  for (double x : {1e-3, 0.01, 0.37, 1.3, 4.0, 9.5, 33.0, 250.0, 1e5}) {
    CAPTURE(x);
    CHECK(std::abs(specfn::digamma(x) - oracle::digamma(x)) < 1e-10);
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 100.0);
  for (int i = 0; i < 100; ++i) {
    const double x = u(rng);
    CAPTURE(x);
    CHECK(std::abs(specfn::digamma(x + 1.0) - specfn::digamma(x) - 1.0 / x) < 1e-10);
  }
}

TEST_CASE("log_gamma") {
  CHECK(specfn::log_gamma(5.0) == doctest::Approx(std::log(24.0)).epsilon(1e-14));
  CHECK(specfn::log_gamma(0.5) == doctest::Approx(0.5 * std::log(std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("normal_quantile against bisection") {
  for (double p : {1e-12, 1e-6, 0.01, 0.025, 0.3, 0.5, 0.55, 0.8, 0.975, 0.99995, 1 - 1e-10}) {
    CAPTURE(p);
    CHECK(std::abs(specfn::normal_quantile(p) - oracle::normal_quantile(p)) < 1e-9);
  }
  CHECK(specfn::normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK_THROWS_AS(specfn::normal_quantile(0.0), std::domain_error);
  CHECK_THROWS_AS(specfn::normal_quantile(1.0), std::domain_error);
}
