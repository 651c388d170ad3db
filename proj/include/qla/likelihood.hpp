#pragma once

namespace qla {

// Gaussian observation model y ~ N(f, 1/beta).
class GaussianLikelihood {
 public:
  // Throws InvalidArgument unless beta is finite and strictly positive.
  explicit GaussianLikelihood(double noise_precision);

  double noise_precision() const { return beta_; }

 private:
  double beta_;
};

double log_density(const GaussianLikelihood& lik, double y, double f);

// d/df log p(y | f) = beta (y - f); scales the network Hessian in the per-datum curvature.
double residual(const GaussianLikelihood& lik, double y, double f);

// -d^2/df^2 log p(y | f) = beta, independent of y and f.
double noise(const GaussianLikelihood& lik);

}  // namespace qla
