#include "qla/laplace.hpp"

#include <cmath>
#include <string>

#include "qla/errors.hpp"
#include "qla/parallel.hpp"

namespace qla {

void IsotropicPrior::validate() const {
  if (!std::isfinite(variance) || variance <= 0.0) {
    throw InvalidArgument("prior variance must be finite and positive, got " +
                          std::to_string(variance));
  }
}

LowRankPosterior::LowRankPosterior(ParamVector theta_star, IsotropicPrior prior, Matrix factors)
    : theta_star_(std::move(theta_star)), prior_(prior), factors_(std::move(factors)) {
  prior_.validate();
  if (factors_.rows() > 0 && factors_.cols() != theta_star_.size()) {
    throw InvalidArgument("factor matrix has " + std::to_string(factors_.cols()) +
                          " columns, expected " + std::to_string(theta_star_.size()));
  }
  if (factors_.rows() == 0) factors_.resize(0, theta_star_.size());
  const Eigen::Index n = factors_.rows();
  Matrix core = Matrix::Identity(n, n);
  core.selfadjointView<Eigen::Lower>().rankUpdate(factors_, prior_.variance);
  core_.compute(core);
  if (core_.info() != Eigen::Success) {
    throw NumericalError("posterior core matrix is not positive definite");
  }
}

double LowRankPosterior::quadform(const ParamVector& v) const {
  const double s2 = prior_.variance;
  const double prior_part = s2 * v.squaredNorm();
  if (factors_.rows() == 0) return prior_part;
  const Vector zv = factors_ * v;
  return prior_part - s2 * s2 * zv.dot(core_.solve(zv));
}

Vector LowRankPosterior::quadforms(const Matrix& columns) const {
  const double s2 = prior_.variance;
  Vector out = s2 * columns.colwise().squaredNorm().transpose();
  if (factors_.rows() == 0) return out;
  const Matrix zv = factors_ * columns;
  const Matrix solved = core_.solve(zv);
  out -= s2 * s2 * zv.cwiseProduct(solved).colwise().sum().transpose();
  return out;
}

ParamVector LowRankPosterior::covariance_times(const ParamVector& v) const {
  const double s2 = prior_.variance;
  ParamVector out = s2 * v;
  if (factors_.rows() == 0) return out;
  const Vector zv = factors_ * v;
  out -= s2 * s2 * (factors_.transpose() * core_.solve(zv));
  return out;
}

Matrix LowRankPosterior::dense_precision(Eigen::Index cap) const {
  const Eigen::Index p = num_params();
  if (p > cap) throw CapacityError("dense precision needs P <= " + std::to_string(cap));
  Matrix prec = Matrix::Identity(p, p) / prior_.variance;
  prec.noalias() += factors_.transpose() * factors_;
  return prec;
}

Matrix LowRankPosterior::dense_covariance(Eigen::Index cap) const {
  const Eigen::Index p = num_params();
  if (p > cap) throw CapacityError("dense covariance needs P <= " + std::to_string(cap));
  const double s2 = prior_.variance;
  Matrix cov = s2 * Matrix::Identity(p, p);
  if (factors_.rows() > 0) {
    cov.noalias() -= s2 * s2 * (factors_.transpose() * core_.solve(factors_));
  }
  return 0.5 * (cov + cov.transpose());
}

Matrix lla_factors(const NetworkSpec& spec, const ParamVector& theta_star,
                   const GaussianLikelihood& lik, const Matrix& inputs) {
  check_params(spec, theta_star);
  return std::sqrt(noise(lik)) * jacobian_rows(spec, theta_star, inputs);
}

LowRankPosterior build_lla_posterior(const NetworkSpec& spec, const ParamVector& theta_star,
                                     const GaussianLikelihood& lik, const IsotropicPrior& prior,
                                     const Matrix& inputs) {
  return LowRankPosterior(theta_star, prior, lla_factors(spec, theta_star, lik, inputs));
}

QlaPosterior build_qla_posterior(const NetworkSpec& spec, const ParamVector& theta_star,
                                 const GaussianLikelihood& lik, const IsotropicPrior& prior,
                                 const Matrix& inputs, const Vector& targets, int iterations,
                                 ScalingMode mode, int workers) {
  RefinedFactorSet set =
      refined_factors(spec, theta_star, lik, inputs, targets, iterations, mode, workers);
  const int clamped = set.num_clamped();
  return QlaPosterior{LowRankPosterior(theta_star, prior, std::move(set.factors)),
                      std::move(set.rayleigh), std::move(set.clamped), clamped};
}

double posterior_quadform(const LowRankPosterior& post, const ParamVector& v) {
  if (v.size() != post.num_params()) {
    throw InvalidArgument("quadratic form needs a vector of length " +
                          std::to_string(post.num_params()));
  }
  return post.quadform(v);
}

PredictiveGaussian glm_predictive(const LowRankPosterior& post, const NetworkSpec& spec,
                                  const Vector& x, const GaussianLikelihood& lik,
                                  bool with_noise) {
  double f = 0.0;
  GradWorkspace ws(spec);
  const ParamVector j = jacobian(spec, post.theta_star(), x, ws, &f);
  PredictiveGaussian out;
  out.mean = f;
  out.variance = std::max(post.quadform(j), 0.0);
  if (with_noise) out.variance += 1.0 / noise(lik);
  out.includes_observation_noise = with_noise;
  return out;
}

std::vector<PredictiveGaussian> glm_predictive_batch(const LowRankPosterior& post,
                                                     const NetworkSpec& spec,
                                                     const Matrix& inputs,
                                                     const GaussianLikelihood& lik,
                                                     bool with_noise) {
  const Eigen::Index t = inputs.rows();
  Matrix jac_cols(post.num_params(), t);
  std::vector<PredictiveGaussian> out(t);
  GradWorkspace ws(spec);
  for (Eigen::Index i = 0; i < t; ++i) {
    double f = 0.0;
    jac_cols.col(i) = jacobian(spec, post.theta_star(), inputs.row(i).transpose(), ws, &f);
    out[i].mean = f;
  }
  const Vector q = post.quadforms(jac_cols);
  const double noise_var = with_noise ? 1.0 / noise(lik) : 0.0;
  for (Eigen::Index i = 0; i < t; ++i) {
    out[i].variance = std::max(q[i], 0.0) + noise_var;
    out[i].includes_observation_noise = with_noise;
  }
  return out;
}

PredictiveGaussian qte_predictive_diagnostic(const LowRankPosterior& post,
                                             const NetworkSpec& spec, const Vector& x,
                                             Eigen::Index cap) {
  const Matrix sigma = post.dense_covariance(cap);
  const Matrix h = dense_hessian(spec, post.theta_star(), x, cap);
  double f = 0.0;
  GradWorkspace ws(spec);
  const ParamVector j = jacobian(spec, post.theta_star(), x, ws, &f);
  const Matrix hs = h * sigma;
  PredictiveGaussian out;
  out.mean = f + 0.5 * hs.trace();
  out.variance = j.dot(sigma * j) + 0.5 * (hs.cwiseProduct(hs.transpose())).sum();
  out.includes_observation_noise = false;
  return out;
}

}  // namespace qla
