#include "qla/metrics.hpp"

#include <cmath>
#include <numbers>

#include "qla/errors.hpp"

namespace qla {

namespace {

void check_variance(const PredictiveGaussian& pred) {
  if (!(pred.variance > 0.0) || !std::isfinite(pred.variance)) {
    throw InvalidArgument("predictive variance must be positive and finite, got " +
                          std::to_string(pred.variance));
  }
}

}  // namespace

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double standard_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double nll(const PredictiveGaussian& pred, double y) {
  check_variance(pred);
  const double r = y - pred.mean;
  return 0.5 * std::log(2.0 * std::numbers::pi * pred.variance) + 0.5 * r * r / pred.variance;
}

double crps(const PredictiveGaussian& pred, double y) {
  check_variance(pred);
  const double sigma = std::sqrt(pred.variance);
  const double z = (y - pred.mean) / sigma;
  return sigma * (z * (2.0 * standard_normal_cdf(z) - 1.0) + 2.0 * standard_normal_pdf(z) -
                  std::numbers::inv_sqrtpi);
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

SplitMetrics score_predictions(const std::vector<PredictiveGaussian>& preds,
                               const Vector& targets, const TargetScale& scale) {
  if (preds.empty()) throw InvalidArgument("cannot score an empty test set");
  if (static_cast<Eigen::Index>(preds.size()) != targets.size()) {
    throw InvalidArgument("predictions and targets disagree in length");
  }
  CompensatedSum nll_sum, crps_sum;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    PredictiveGaussian p = preds[i];
    p.mean = p.mean * scale.std + scale.mean;
    p.variance *= scale.std * scale.std;
    const double y = targets[static_cast<Eigen::Index>(i)] * scale.std + scale.mean;
    nll_sum.add(nll(p, y));
    crps_sum.add(crps(p, y));
  }
  const double n = static_cast<double>(preds.size());
  return {nll_sum.value() / n, crps_sum.value() / n, preds.size()};
}

SplitMetrics evaluate_split(const LowRankPosterior& post, const NetworkSpec& spec,
                            const GaussianLikelihood& lik, const Matrix& test_inputs,
                            const Vector& test_targets, bool with_noise,
                            const TargetScale& scale) {
  if (test_inputs.rows() == 0) throw InvalidArgument("cannot evaluate an empty test set");
  return score_predictions(glm_predictive_batch(post, spec, test_inputs, lik, with_noise),
                           test_targets, scale);
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate out;
  out.count = values.size();
  if (values.empty()) return out;
  CompensatedSum s;
  for (double v : values) s.add(v);
  out.mean = s.value() / static_cast<double>(values.size());
  if (values.size() > 1) {
    CompensatedSum ss;
    for (double v : values) ss.add((v - out.mean) * (v - out.mean));
    const double var = ss.value() / static_cast<double>(values.size() - 1);
    out.std_error = std::sqrt(var / static_cast<double>(values.size()));
  }
  return out;
}

}  // namespace qla
