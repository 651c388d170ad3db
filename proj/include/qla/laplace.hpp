#pragma once

#include <Eigen/Cholesky>

#include <vector>

#include "qla/curvature.hpp"
#include "qla/likelihood.hpp"
#include "qla/nnet.hpp"

namespace qla {

// Isotropic Gaussian prior N(0, variance * I) on the parameters.
struct IsotropicPrior {
  double variance = 1.0;

  // Throws InvalidArgument unless finite and positive.
  void validate() const;
};

// Gaussian posterior N(theta*, Sigma) with precision
//   Sigma^{-1} = Z^T Z + I / s0^2,
// Z the N x P matrix of per-datum precision factors. Sigma is never formed: the
// N x N core M = I + s0^2 Z Z^T is factorized once and Sigma is applied through
// the Woodbury identity
//   Sigma = s0^2 I - s0^4 Z^T M^{-1} Z.
// Immutable after construction.
class LowRankPosterior {
 public:
  LowRankPosterior(ParamVector theta_star, IsotropicPrior prior, Matrix factors);

  const ParamVector& theta_star() const { return theta_star_; }
  const IsotropicPrior& prior() const { return prior_; }
  const Matrix& factors() const { return factors_; }
  Eigen::Index num_params() const { return theta_star_.size(); }
  Eigen::Index num_factors() const { return factors_.rows(); }

  // v^T Sigma v.
  double quadform(const ParamVector& v) const;
  // Quadratic forms of every column of V (P x T).
  Vector quadforms(const Matrix& columns) const;
  // Sigma v.
  ParamVector covariance_times(const ParamVector& v) const;

  // Dense Sigma^{-1} and Sigma; throw CapacityError when P > cap.
  Matrix dense_precision(Eigen::Index cap = kDefaultDenseCap) const;
  Matrix dense_covariance(Eigen::Index cap = kDefaultDenseCap) const;

 private:
  ParamVector theta_star_;
  IsotropicPrior prior_;
  Matrix factors_;
  Eigen::LLT<Matrix> core_;
};

// Gauss-Newton factors: row n = sqrt(beta) * J(x_n).
Matrix lla_factors(const NetworkSpec& spec, const ParamVector& theta_star,
                   const GaussianLikelihood& lik, const Matrix& inputs);

LowRankPosterior build_lla_posterior(const NetworkSpec& spec, const ParamVector& theta_star,
                                     const GaussianLikelihood& lik, const IsotropicPrior& prior,
                                     const Matrix& inputs);

struct QlaPosterior {
  LowRankPosterior posterior;
  std::vector<double> rayleigh;
  std::vector<bool> clamped;
  int num_clamped = 0;
};

// Posterior whose factors are the power-iteration refined factors of each datum.
QlaPosterior build_qla_posterior(const NetworkSpec& spec, const ParamVector& theta_star,
                                 const GaussianLikelihood& lik, const IsotropicPrior& prior,
                                 const Matrix& inputs, const Vector& targets,
                                 int iterations = kDefaultPowerIterations,
                                 ScalingMode mode = ScalingMode::kRayleigh, int workers = 0);

struct PredictiveGaussian {
  double mean = 0.0;
  double variance = 0.0;
  bool includes_observation_noise = false;
};

double posterior_quadform(const LowRankPosterior& post, const ParamVector& v);

// Predictive of the network linearized at theta*: mean f(x, theta*), variance
// J^T Sigma J (+ 1/beta when with_noise).
PredictiveGaussian glm_predictive(const LowRankPosterior& post, const NetworkSpec& spec,
                                  const Vector& x, const GaussianLikelihood& lik,
                                  bool with_noise);

// glm_predictive for every row of `inputs`.
std::vector<PredictiveGaussian> glm_predictive_batch(const LowRankPosterior& post,
                                                     const NetworkSpec& spec,
                                                     const Matrix& inputs,
                                                     const GaussianLikelihood& lik,
                                                     bool with_noise);

// Moments of the quadratic Taylor model under the posterior:
//   mean     = f + tr(Sigma H) / 2
//   variance = J^T Sigma J + tr((H Sigma)^2) / 2.
// Dense; diagnostic only.
PredictiveGaussian qte_predictive_diagnostic(const LowRankPosterior& post,
                                             const NetworkSpec& spec, const Vector& x,
                                             Eigen::Index cap = kDefaultDenseCap);

// Log evidence of the network linearized at theta*:
//   yt ~ N(0, C),  yt_n = y_n - f(x_n) + J_n^T theta*,  C = I / beta + s0^2 J J^T,
// evaluated through a Cholesky factorization of the N x N matrix C.
double log_marginal_likelihood(const NetworkSpec& spec, const ParamVector& theta_star,
                               const Matrix& inputs, const Vector& targets, double prior_var,
                               double noise_prec);

// Same evidence from precomputed Jacobian rows and linearized targets.
double log_marginal_likelihood(const Matrix& jac, const Vector& lin_targets, double prior_var,
                               double noise_prec);

// Linearized targets yt_n = y_n - f(x_n) + J_n^T theta*.
Vector linearized_targets(const NetworkSpec& spec, const ParamVector& theta_star,
                          const Matrix& inputs, const Vector& targets, const Matrix& jac);

// Spectral cache of J J^T (or J^T J, whichever is smaller) so the evidence can be
// evaluated in O(min(N, P)) per hyperparameter pair.
class EvidenceSurface {
 public:
  EvidenceSurface(const Matrix& jac, const Vector& lin_targets);
  double operator()(double prior_var, double noise_prec) const;

 private:
  Eigen::Index n_ = 0;
  Vector eigenvalues_;    // nonzero Gram eigenvalues
  Vector projections2_;   // squared projections of the targets on their eigenvectors
  double residual2_ = 0;  // squared norm of the targets outside the Gram range
};

struct HyperGrid {
  double prior_var_log10_lo = -3.0;
  double prior_var_log10_hi = 3.0;
  double noise_prec_log10_lo = -2.0;
  double noise_prec_log10_hi = 2.0;
  int points = 61;
  int refinements = 3;
  double shrink = 10.0;
};

struct HyperFit {
  double prior_var = 1.0;
  double noise_prec = 1.0;
  double log_evidence = 0.0;
  // Final (log10) grid windows; the returned point beats every grid point on
  // both axes through it.
  double prior_var_log10_lo = 0.0, prior_var_log10_hi = 0.0;
  double noise_prec_log10_lo = 0.0, noise_prec_log10_hi = 0.0;
};

// Coordinate ascent on log-spaced grids that shrink around the incumbent.
HyperFit fit_hyperparameters(const EvidenceSurface& surface, const HyperGrid& grid = {});
HyperFit fit_hyperparameters(const NetworkSpec& spec, const ParamVector& theta_star,
                             const Matrix& inputs, const Vector& targets,
                             const HyperGrid& grid = {});

}  // namespace qla
