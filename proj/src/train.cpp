#include "qla/train.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "qla/errors.hpp"
#include "qla/parallel.hpp"
#include "qla/random.hpp"

namespace qla {

void TrainConfig::validate() const {
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw InvalidArgument("weight decay must be finite and >= 0");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning rate must be finite and positive");
  }
  if (epochs <= 0) throw InvalidArgument("epochs must be positive");
  if (early_stop_patience < 0) throw InvalidArgument("early_stop_patience must be >= 0");
}

namespace {

using ConstWeights = Eigen::Map<const RowMatrix>;
using Weights = Eigen::Map<RowMatrix>;

// Row-per-sample activations of every layer; a[0] is the input.
struct BatchActivations {
  std::vector<Matrix> a;
};

void check_batch(const NetworkSpec& spec, const ParamVector& theta, const Matrix& inputs) {
  check_params(spec, theta);
  if (inputs.cols() != spec.input_dim) {
    throw InvalidArgument("inputs have " + std::to_string(inputs.cols()) +
                          " columns, network expects " + std::to_string(spec.input_dim));
  }
}

Vector batch_forward(const NetworkSpec& spec, const ParamVector& theta, const Matrix& inputs,
                     BatchActivations& acts) {
  const int layers = spec.num_layers();
  acts.a.resize(layers);
  acts.a[0] = inputs;
  Matrix z;
  for (int l = 0; l < layers; ++l) {
    ConstWeights w(theta.data() + spec.weight_offset(l), spec.fan_out(l), spec.fan_in(l));
    Eigen::Map<const Vector> b(theta.data() + spec.bias_offset(l), spec.fan_out(l));
    z.noalias() = acts.a[l] * w.transpose();
    z.rowwise() += b.transpose();
    if (l + 1 == layers) break;
    if (spec.activation == Activation::kTanh) {
      acts.a[l + 1] = z.array().tanh().matrix();
    } else {
      acts.a[l + 1] = z.cwiseMax(0.0);
    }
  }
  return z.col(0);
}

}  // namespace

Vector predict(const NetworkSpec& spec, const ParamVector& theta, const Matrix& inputs) {
  check_batch(spec, theta, inputs);
  BatchActivations acts;
  return batch_forward(spec, theta, inputs, acts);
}

double training_loss(const NetworkSpec& spec, const ParamVector& theta, const Matrix& inputs,
                     const Vector& targets, double weight_decay, ParamVector* gradient) {
  check_batch(spec, theta, inputs);
  if (inputs.rows() != targets.size() || targets.size() == 0) {
    throw InvalidArgument("training needs matching, non-empty inputs and targets");
  }
  const double n = static_cast<double>(targets.size());
  BatchActivations acts;
  const Vector err = batch_forward(spec, theta, inputs, acts) - targets;
  const double loss = err.squaredNorm() / n + weight_decay * theta.squaredNorm();
  if (!gradient) return loss;

  ParamVector& g = *gradient;
  g = 2.0 * weight_decay * theta;
  Matrix delta = (2.0 / n) * err;  // d loss / d z of the current layer, N x fan_out
  for (int l = spec.num_layers() - 1; l >= 0; --l) {
    Weights gw(g.data() + spec.weight_offset(l), spec.fan_out(l), spec.fan_in(l));
    Eigen::Map<Vector> gb(g.data() + spec.bias_offset(l), spec.fan_out(l));
    gw.noalias() += delta.transpose() * acts.a[l];
    gb += delta.colwise().sum().transpose();
    if (l == 0) break;
    ConstWeights w(theta.data() + spec.weight_offset(l), spec.fan_out(l), spec.fan_in(l));
    Matrix back = delta * w;
    const Matrix& a = acts.a[l];
    if (spec.activation == Activation::kTanh) {
      back.array() *= 1.0 - a.array().square();
    } else {
      back.array() *= (a.array() > 0.0).cast<double>();
    }
    delta = std::move(back);
  }
  return loss;
}

TrainResult train_map(const NetworkSpec& spec, const Matrix& inputs, const Vector& targets,
                      const TrainConfig& cfg) {
  cfg.validate();
  spec.validate();
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  TrainResult out;
  out.theta = init_params(spec, cfg.seed);
  out.loss_history.reserve(cfg.epochs);
  const Eigen::Index p = out.theta.size();
  ParamVector m = ParamVector::Zero(p);
  ParamVector v = ParamVector::Zero(p);
  ParamVector grad(p);
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  double b1t = 1.0;
  double b2t = 1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = training_loss(spec, out.theta, inputs, targets, cfg.weight_decay, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch));
    }
    out.loss_history.push_back(loss);
    out.epochs_run = epoch + 1;
    if (cfg.early_stop_patience > 0) {
      if (loss < best) {
        best = loss;
        since_best = 0;
      } else if (++since_best >= cfg.early_stop_patience) {
        break;
      }
    }
    b1t *= kBeta1;
    b2t *= kBeta2;
    m = kBeta1 * m + (1.0 - kBeta1) * grad;
    v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseAbs2();
    const double step = cfg.learning_rate / (1.0 - b1t);
    const double v_scale = 1.0 / (1.0 - b2t);
    out.theta.array() -= step * m.array() / ((v.array() * v_scale).sqrt() + kEps);
  }
  return out;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
  if (n / static_cast<std::size_t>(k) < 2) {
    throw InvalidArgument("fold too small: " + std::to_string(n) + " samples for " +
                          std::to_string(k) + " folds");
  }
  const std::vector<std::size_t> order = shuffled_indices(n, seed);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<CvCandidate> cartesian_grid(const std::vector<NetworkSpec>& specs,
                                        const std::vector<TrainConfig>& configs) {
  std::vector<CvCandidate> out;
  out.reserve(specs.size() * configs.size());
  for (const auto& s : specs) {
    for (const auto& c : configs) out.push_back({s, c});
  }
  return out;
}

namespace {

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

Vector take(const Vector& v, const std::vector<std::size_t>& idx) {
  Vector out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

bool better(const CvScore& a, const CvScore& b) {
  if (a.mean_val_mse != b.mean_val_mse) return a.mean_val_mse < b.mean_val_mse;
  const auto pa = a.candidate.spec.num_params();
  const auto pb = b.candidate.spec.num_params();
  if (pa != pb) return pa < pb;
  return a.candidate.config.weight_decay < b.candidate.config.weight_decay;
}

}  // namespace

CvSelection inner_cv_select(const std::vector<CvCandidate>& candidates, const Matrix& inputs,
                            const Vector& targets, int folds, std::uint64_t seed, int workers) {
  if (candidates.empty()) throw InvalidArgument("empty hyperparameter grid");
  if (inputs.rows() != targets.size()) {
    throw InvalidArgument("inputs and targets disagree on the number of rows");
  }
  const auto partition = kfold_partition(static_cast<std::size_t>(targets.size()), folds, seed);
  const std::size_t k = partition.size();
  const std::size_t jobs = candidates.size() * k;
  std::vector<double> val_mse(jobs, 0.0);

  parallel_for(jobs, workers, [&](std::size_t job, int) {
    const std::size_t c = job / k;
    const std::size_t f = job % k;
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) train_idx.insert(train_idx.end(), partition[g].begin(), partition[g].end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    TrainConfig cfg = candidates[c].config;
    cfg.seed = mix_seed(seed, job);
    try {
      const TrainResult fit =
          train_map(candidates[c].spec, take_rows(inputs, train_idx), take(targets, train_idx), cfg);
      const Vector err = predict(candidates[c].spec, fit.theta, take_rows(inputs, partition[f])) -
                         take(targets, partition[f]);
      val_mse[job] = err.squaredNorm() / static_cast<double>(err.size());
    } catch (const DivergenceError&) {
      val_mse[job] = std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(val_mse[job])) val_mse[job] = std::numeric_limits<double>::infinity();
  });

  CvSelection out;
  out.scores.reserve(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double sum = 0.0;
    for (std::size_t f = 0; f < k; ++f) sum += val_mse[c * k + f];
    out.scores.push_back({candidates[c], sum / static_cast<double>(k)});
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < out.scores.size(); ++c) {
    if (better(out.scores[c], out.scores[best])) best = c;
  }
  out.best = out.scores[best].candidate;
  return out;
}

}  // namespace qla
