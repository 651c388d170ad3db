#include "qla/curvature.hpp"

#include <algorithm>

#include "qla/errors.hpp"
#include "qla/parallel.hpp"

namespace qla {

std::string to_string(ScalingMode m) { return m == ScalingMode::kUnit ? "unit" : "rayleigh"; }

ScalingMode scaling_mode_from_string(const std::string& name) {
  if (name == "rayleigh") return ScalingMode::kRayleigh;
  if (name == "unit") return ScalingMode::kUnit;
  throw InvalidArgument("unknown scaling mode '" + name + "' (expected rayleigh or unit)");
}

CurvatureOperator::CurvatureOperator(const NetworkSpec& spec, const ParamVector& theta_star,
                                     const GaussianLikelihood& lik, const Vector& x, double y)
    : spec_(&spec), theta_(&theta_star), x_(x), ws_(spec) {
  GradWorkspace gws(spec);
  jacobian_ = qla::jacobian(spec, theta_star, x, gws, &output_);
  // The quadratic model agrees with the network at theta*, so its residual is the MAP one.
  residual_ = qla::residual(lik, y, output_);
  noise_ = qla::noise(lik);
}

ParamVector CurvatureOperator::apply(const ParamVector& v) const {
  if (v.size() != jacobian_.size()) {
    throw InvalidArgument("curvature operator expects a vector of length " +
                          std::to_string(jacobian_.size()));
  }
  ParamVector out = -(noise_ * jacobian_.dot(v)) * jacobian_;
  if (residual_ != 0.0) out += residual_ * hvp(*spec_, *theta_, x_, v, ws_);
  return out;
}

void canonicalize_sign(ParamVector& z) {
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z[i] != 0.0) {
      if (z[i] < 0.0) z = -z;
      return;
    }
  }
}

void orient_like(ParamVector& z, const ParamVector& z0) {
  const double d = z.dot(z0);
  if (d < 0.0) {
    z = -z;
  } else if (d == 0.0) {
    canonicalize_sign(z);
  }
}

void apply_scaling(RefinedFactor& f, ScalingMode mode) {
  f.clamped = f.rayleigh >= 0.0;
  if (mode == ScalingMode::kUnit) {
    f.scaled_factor = f.z_hat;
  } else {
    f.scaled_factor = std::sqrt(std::max(-f.rayleigh, 0.0)) * f.z_hat;
  }
}

RefinedFactor refined_factor(const NetworkSpec& spec, const ParamVector& theta_star,
                             const GaussianLikelihood& lik, const Vector& x, double y,
                             int iterations, ScalingMode mode) {
  if (iterations < 1) throw InvalidArgument("power iteration needs at least one step");
  CurvatureOperator op(spec, theta_star, lik, x, y);
  return power_iteration(op, op.jacobian(), iterations, mode);
}

int RefinedFactorSet::num_clamped() const {
  return static_cast<int>(std::count(clamped.begin(), clamped.end(), true));
}

RefinedFactorSet refined_factors(const NetworkSpec& spec, const ParamVector& theta_star,
                                 const GaussianLikelihood& lik, const Matrix& inputs,
                                 const Vector& targets, int iterations, ScalingMode mode,
                                 int workers) {
  if (inputs.rows() != targets.size()) {
    throw InvalidArgument("inputs and targets disagree on the number of rows");
  }
  check_params(spec, theta_star);
  const auto n = static_cast<std::size_t>(inputs.rows());
  RefinedFactorSet out;
  out.factors.resize(inputs.rows(), spec.num_params());
  out.rayleigh.assign(n, 0.0);
  std::vector<char> clamped(n, 0);
  parallel_for(n, workers, [&](std::size_t i, int) {
    const auto row = static_cast<Eigen::Index>(i);
    RefinedFactor f = refined_factor(spec, theta_star, lik, inputs.row(row).transpose(),
                                     targets[row], iterations, mode);
    out.factors.row(row) = f.scaled_factor.transpose();
    out.rayleigh[i] = f.rayleigh;
    clamped[i] = f.clamped ? 1 : 0;
  });
  out.clamped.assign(clamped.begin(), clamped.end());
  return out;
}

}  // namespace qla
