#pragma once

#include <string>
#include <vector>

#include "qla/laplace.hpp"

namespace qla {

// Negative log density of y under N(mean, variance).
double nll(const PredictiveGaussian& pred, double y);

// Closed-form CRPS of N(mean, variance) at y:
//   sigma * (z (2 Phi(z) - 1) + 2 phi(z) - 1 / sqrt(pi)),  z = (y - mean) / sigma.
double crps(const PredictiveGaussian& pred, double y);

double standard_normal_cdf(double z);
double standard_normal_pdf(double z);

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct SplitMetrics {
  double nll_mean = 0.0;
  double crps_mean = 0.0;
  std::size_t count = 0;
};

// Affine map from standardized to reported target units.
struct TargetScale {
  double mean = 0.0;
  double std = 1.0;
};

// Mean NLL and CRPS over paired predictives and targets, summed in index order.
// Both are expressed in `scale` units: means shift, variances scale by std^2.
SplitMetrics score_predictions(const std::vector<PredictiveGaussian>& preds,
                               const Vector& targets, const TargetScale& scale = {});

// Linearized predictive at every test row, scored against the test targets.
// Throws InvalidArgument on an empty test set.
SplitMetrics evaluate_split(const LowRankPosterior& post, const NetworkSpec& spec,
                            const GaussianLikelihood& lik, const Matrix& test_inputs,
                            const Vector& test_targets, bool with_noise,
                            const TargetScale& scale = {});

struct Aggregate {
  double mean = 0.0;
  double std_error = 0.0;  // sample std / sqrt(count); 0 for a single value
  std::size_t count = 0;
};

Aggregate aggregate(const std::vector<double>& values);

}  // namespace qla
