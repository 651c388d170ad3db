#include "qla/likelihood.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "qla/errors.hpp"

namespace qla {

GaussianLikelihood::GaussianLikelihood(double noise_precision) : beta_(noise_precision) {
  if (!std::isfinite(beta_) || beta_ <= 0.0) {
    throw InvalidArgument("noise precision must be finite and positive, got " +
                          std::to_string(beta_));
  }
}

double log_density(const GaussianLikelihood& lik, double y, double f) {
  const double r = y - f;
  const double beta = lik.noise_precision();
  return -0.5 * beta * r * r + 0.5 * std::log(beta) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double residual(const GaussianLikelihood& lik, double y, double f) {
  return lik.noise_precision() * (y - f);
}

double noise(const GaussianLikelihood& lik) { return lik.noise_precision(); }

}  // namespace qla
