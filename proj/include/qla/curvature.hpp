#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "qla/likelihood.hpp"
#include "qla/nnet.hpp"

namespace qla {

// How the dominant eigenvector of the per-datum curvature becomes a precision factor.
//  kRayleigh: sqrt(max(-lambda, 0)) * z, so a zero-Hessian network reproduces the
//             Gauss-Newton factor sqrt(beta) * J exactly.
//  kUnit:     z itself (unit norm).
enum class ScalingMode { kRayleigh, kUnit };

std::string to_string(ScalingMode m);
ScalingMode scaling_mode_from_string(const std::string& name);

// Per-datum curvature of the log-likelihood under the second-order expansion of
// the network at theta*:
//   A = r(y; f*) H(x) - J(x) beta J(x)^T.
// apply() is matrix-free; the operator owns a workspace, so one instance must not
// be shared between threads.
class CurvatureOperator {
 public:
  CurvatureOperator(const NetworkSpec& spec, const ParamVector& theta_star,
                    const GaussianLikelihood& lik, const Vector& x, double y);

  ParamVector apply(const ParamVector& v) const;
  ParamVector operator()(const ParamVector& v) const { return apply(v); }

  const ParamVector& jacobian() const { return jacobian_; }
  double output() const { return output_; }
  double residual() const { return residual_; }
  double noise() const { return noise_; }
  Eigen::Index size() const { return jacobian_.size(); }

 private:
  const NetworkSpec* spec_;
  const ParamVector* theta_;
  Vector x_;
  ParamVector jacobian_;
  double output_ = 0.0;
  double residual_ = 0.0;
  double noise_ = 0.0;
  mutable HvpWorkspace ws_;
};

struct RefinedFactor {
  ParamVector z_hat;          // unit vector, or zero when the start vector is zero
  double rayleigh = 0.0;      // z_hat^T A z_hat
  ParamVector scaled_factor;  // row contributed to the posterior precision
  bool clamped = false;       // rayleigh >= 0: no positive curvature to contribute
};

inline constexpr int kDefaultPowerIterations = 10;
inline constexpr double kAnnihilationThreshold = 1e-300;

// Flip the sign so the first nonzero coordinate is positive.
void canonicalize_sign(ParamVector& z);

// Orient z along the start vector (z . z0 > 0), which keeps a converged factor equal
// to the Gauss-Newton row rather than its negation; falls back to canonicalize_sign
// when z is orthogonal to z0.
void orient_like(ParamVector& z, const ParamVector& z0);

void apply_scaling(RefinedFactor& f, ScalingMode mode);

// Exactly `iterations` steps of z <- A z / |A z| from z0, for any callable
// `op: ParamVector -> ParamVector`. No convergence test.
template <class Op>
RefinedFactor power_iteration(const Op& op, const ParamVector& z0, int iterations,
                              ScalingMode mode = ScalingMode::kRayleigh) {
  RefinedFactor out;
  const double n0 = z0.norm();
  if (n0 == 0.0) {
    out.z_hat = ParamVector::Zero(z0.size());
    out.scaled_factor = ParamVector::Zero(z0.size());
    out.clamped = true;
    return out;
  }
  ParamVector z = z0 / n0;
  for (int k = 0; k < iterations; ++k) {
    ParamVector az = op(z);
    const double norm = az.norm();
    if (!(norm >= kAnnihilationThreshold)) break;
    z = az / norm;
  }
  orient_like(z, z0);
  out.rayleigh = z.dot(op(z));
  out.z_hat = std::move(z);
  apply_scaling(out, mode);
  return out;
}

// Builds the curvature operator for (x, y), starts power iteration at J(x).
RefinedFactor refined_factor(const NetworkSpec& spec, const ParamVector& theta_star,
                             const GaussianLikelihood& lik, const Vector& x, double y,
                             int iterations = kDefaultPowerIterations,
                             ScalingMode mode = ScalingMode::kRayleigh);

struct RefinedFactorSet {
  Matrix factors;  // N x P, row n is the scaled factor of datum n
  std::vector<double> rayleigh;
  std::vector<bool> clamped;
  int num_clamped() const;
};

// refined_factor over every row of `inputs`, in parallel, with output in row order.
RefinedFactorSet refined_factors(const NetworkSpec& spec, const ParamVector& theta_star,
                                 const GaussianLikelihood& lik, const Matrix& inputs,
                                 const Vector& targets, int iterations, ScalingMode mode,
                                 int workers = 0);

}  // namespace qla
