#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "qla/errors.hpp"
#include "qla/likelihood.hpp"
#include "test_util.hpp"

using namespace qla;
using qla::testing::rel_err;

TEST_CASE("construction validates beta") {
  CHECK_THROWS_AS(GaussianLikelihood(0.0), InvalidArgument);
  CHECK_THROWS_AS(GaussianLikelihood(-1.0), InvalidArgument);
  CHECK_THROWS_AS(GaussianLikelihood(std::nan("")), InvalidArgument);
  CHECK_THROWS_AS(GaussianLikelihood(std::numeric_limits<double>::infinity()), InvalidArgument);
  CHECK(GaussianLikelihood(2.5).noise_precision() == 2.5);
}

TEST_CASE("log_density") {
  const double half_log_2pi = 0.5 * std::log(2 * M_PI);
  CHECK(log_density(GaussianLikelihood(1), 0.3, 0.3) == doctest::Approx(-half_log_2pi).epsilon(1e-15));
  CHECK(log_density(GaussianLikelihood(1), 1.0, 0.0) ==
        doctest::Approx(-0.5 - half_log_2pi).epsilon(1e-15));
  // Direct evaluation of the normal pdf with variance 1/4.
  const double sd = 0.5;
  const double pdf = std::exp(-0.5 * (0.5 / sd) * (0.5 / sd)) / (sd * std::sqrt(2 * M_PI));
  CHECK(std::abs(log_density(GaussianLikelihood(4), 1.5, 1.0) - std::log(pdf)) <= 1e-12);
}

TEST_CASE("residual and noise") {
  CHECK(residual(GaussianLikelihood(1), 2, 1) == 1.0);
  CHECK(residual(GaussianLikelihood(3), 0.7, 0.7) == 0.0);
  CHECK(residual(GaussianLikelihood(2), 0, 1) == -2.0);
  CHECK(noise(GaussianLikelihood(1)) == 1.0);
  CHECK(noise(GaussianLikelihood(0.25)) == 0.25);
}

TEST_CASE("derivatives of the log density") {
  for (double beta : {0.3, 1.0, 4.0}) {
    const GaussianLikelihood lik(beta);
    for (double f : {-1.0, 0.2, 2.0}) {
      const double y = 0.4;
      const double h = 1e-4;
      const double d1 = (log_density(lik, y, f + h) - log_density(lik, y, f - h)) / (2 * h);
      CHECK(rel_err(d1, residual(lik, y, f)) <= 1e-8);
      const double d2 =
          (log_density(lik, y, f + h) - 2 * log_density(lik, y, f) + log_density(lik, y, f - h)) /
          (h * h);
      CHECK(std::abs(d2 + noise(lik)) <= 1e-6 * std::max(1.0, beta));
    }
  }
}

TEST_CASE("density integrates to one") {
  for (double beta : {0.5, 1.0, 9.0}) {
    const GaussianLikelihood lik(beta);
    const double sd = 1 / std::sqrt(beta);
    const double lo = -12 * sd;
    const double hi = 12 * sd;
    const int n = 20000;
    const double h = (hi - lo) / n;
    double acc = 0.0;  // Simpson's rule
    for (int i = 0; i <= n; ++i) {
      const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
      acc += w * std::exp(log_density(lik, lo + i * h, 0.0));
    }
    CHECK(std::abs(acc * h / 3 - 1.0) <= 1e-8);
  }
}
