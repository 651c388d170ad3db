#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

#include "qla/errors.hpp"
#include "qla/laplace.hpp"

namespace qla {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_hyper(double prior_var, double noise_prec) {
  IsotropicPrior{prior_var}.validate();
  GaussianLikelihood{noise_prec};
}

}  // namespace

Vector linearized_targets(const NetworkSpec& spec, const ParamVector& theta_star,
                          const Matrix& inputs, const Vector& targets, const Matrix& jac) {
  if (inputs.rows() != targets.size() || jac.rows() != targets.size()) {
    throw InvalidArgument("inputs, targets and Jacobian rows disagree in length");
  }
  Vector out(targets.size());
  for (Eigen::Index n = 0; n < targets.size(); ++n) {
    const double f = forward(spec, theta_star, inputs.row(n).transpose());
    out[n] = targets[n] - f + jac.row(n).dot(theta_star);
  }
  return out;
}

double log_marginal_likelihood(const Matrix& jac, const Vector& lin_targets, double prior_var,
                               double noise_prec) {
  check_hyper(prior_var, noise_prec);
  const Eigen::Index n = lin_targets.size();
  if (n == 0) return 0.0;
  Matrix c = Matrix::Identity(n, n) / noise_prec;
  c.selfadjointView<Eigen::Lower>().rankUpdate(jac, prior_var);
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("evidence covariance is not positive definite");
  }
  const Vector solved = llt.matrixL().solve(lin_targets);
  const double logdet = 2.0 * llt.matrixL().nestedExpression().diagonal().array().log().sum();
  return -0.5 * solved.squaredNorm() - 0.5 * logdet - 0.5 * static_cast<double>(n) * kLog2Pi;
}

double log_marginal_likelihood(const NetworkSpec& spec, const ParamVector& theta_star,
                               const Matrix& inputs, const Vector& targets, double prior_var,
                               double noise_prec) {
  check_params(spec, theta_star);
  const Matrix jac = jacobian_rows(spec, theta_star, inputs);
  const Vector yt = linearized_targets(spec, theta_star, inputs, targets, jac);
  return log_marginal_likelihood(jac, yt, prior_var, noise_prec);
}

EvidenceSurface::EvidenceSurface(const Matrix& jac, const Vector& lin_targets)
    : n_(lin_targets.size()) {
  if (jac.rows() != n_) throw InvalidArgument("Jacobian rows and targets disagree in length");
  const double total2 = lin_targets.squaredNorm();
  if (n_ == 0) return;
  // Eigenpairs of the smaller Gram matrix; for J^T J the target projections on
  // the left singular vectors are (J v)^T y / sqrt(lambda).
  const bool sample_space = jac.rows() <= jac.cols();
  Matrix gram = sample_space ? Matrix(jac * jac.transpose()) : Matrix(jac.transpose() * jac);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalError("Gram eigendecomposition failed");
  const Vector& lam = eig.eigenvalues();
  const double cutoff = std::max(lam.cwiseAbs().maxCoeff(), 1.0) * 1e-13 * gram.rows();
  Vector proj = sample_space ? Vector(eig.eigenvectors().transpose() * lin_targets)
                             : Vector(eig.eigenvectors().transpose() * (jac.transpose() * lin_targets));
  std::vector<double> keep_lam, keep_p2;
  double inside2 = 0.0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam[i] <= cutoff) continue;
    const double p2 = sample_space ? proj[i] * proj[i] : proj[i] * proj[i] / lam[i];
    keep_lam.push_back(lam[i]);
    keep_p2.push_back(p2);
    inside2 += p2;
  }
  eigenvalues_ = Eigen::Map<Vector>(keep_lam.data(), keep_lam.size());
  projections2_ = Eigen::Map<Vector>(keep_p2.data(), keep_p2.size());
  residual2_ = std::max(total2 - inside2, 0.0);
}

double EvidenceSurface::operator()(double prior_var, double noise_prec) const {
  const double noise_var = 1.0 / noise_prec;
  const auto r = eigenvalues_.size();
  double quad = residual2_ * noise_prec;
  double logdet = static_cast<double>(n_ - r) * std::log(noise_var);
  for (Eigen::Index i = 0; i < r; ++i) {
    const double c = noise_var + prior_var * eigenvalues_[i];
    quad += projections2_[i] / c;
    logdet += std::log(c);
  }
  return -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(n_) * kLog2Pi;
}

namespace {

struct Axis {
  double lo, hi;
  double at(int i, int points) const {
    return points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (points - 1);
  }
};

// Window of width (hi - lo) / shrink centered at `center`, kept inside [lo0, hi0].
Axis shrink_around(const Axis& cur, double center, double shrink, double lo0, double hi0) {
  const double half = 0.5 * (cur.hi - cur.lo) / shrink;
  double lo = center - half;
  double hi = center + half;
  if (lo < lo0) {
    hi += lo0 - lo;
    lo = lo0;
  }
  if (hi > hi0) {
    lo -= hi - hi0;
    hi = hi0;
  }
  return {std::max(lo, lo0), std::min(hi, hi0)};
}

}  // namespace

HyperFit fit_hyperparameters(const EvidenceSurface& surface, const HyperGrid& grid) {
  if (grid.points < 1 || grid.refinements < 0 || grid.shrink <= 1.0) {
    throw InvalidArgument("hyperparameter grid needs points >= 1, refinements >= 0, shrink > 1");
  }
  const int m = grid.points;
  Axis s_axis{grid.prior_var_log10_lo, grid.prior_var_log10_hi};
  Axis b_axis{grid.noise_prec_log10_lo, grid.noise_prec_log10_hi};
  double s_log = s_axis.at(m / 2, m);
  double b_log = b_axis.at(m / 2, m);
  auto eval = [&](double sl, double bl) { return surface(std::pow(10.0, sl), std::pow(10.0, bl)); };

  double best = eval(s_log, b_log);
  for (int round = 0; round <= grid.refinements; ++round) {
    if (round > 0) {
      s_axis = shrink_around(s_axis, s_log, grid.shrink, grid.prior_var_log10_lo,
                             grid.prior_var_log10_hi);
      b_axis = shrink_around(b_axis, b_log, grid.shrink, grid.noise_prec_log10_lo,
                             grid.noise_prec_log10_hi);
    }
    // Coordinate ascent until neither axis moves. Ties keep the incumbent, so the
    // sweep terminates.
    for (int sweep = 0; sweep < 1000; ++sweep) {
      bool moved = false;
      for (int i = 0; i < m; ++i) {
        const double cand = s_axis.at(i, m);
        const double v = eval(cand, b_log);
        if (v > best) {
          best = v;
          s_log = cand;
          moved = true;
        }
      }
      for (int i = 0; i < m; ++i) {
        const double cand = b_axis.at(i, m);
        const double v = eval(s_log, cand);
        if (v > best) {
          best = v;
          b_log = cand;
          moved = true;
        }
      }
      if (!moved) break;
    }
  }
  HyperFit fit;
  fit.prior_var = std::pow(10.0, s_log);
  fit.noise_prec = std::pow(10.0, b_log);
  fit.log_evidence = best;
  fit.prior_var_log10_lo = s_axis.lo;
  fit.prior_var_log10_hi = s_axis.hi;
  fit.noise_prec_log10_lo = b_axis.lo;
  fit.noise_prec_log10_hi = b_axis.hi;
  return fit;
}

HyperFit fit_hyperparameters(const NetworkSpec& spec, const ParamVector& theta_star,
                             const Matrix& inputs, const Vector& targets, const HyperGrid& grid) {
  check_params(spec, theta_star);
  const Matrix jac = jacobian_rows(spec, theta_star, inputs);
  const Vector yt = linearized_targets(spec, theta_star, inputs, targets, jac);
  return fit_hyperparameters(EvidenceSurface(jac, yt), grid);
}

}  // namespace qla
