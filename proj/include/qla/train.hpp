#pragma once

#include <cstdint>
#include <vector>

#include "qla/nnet.hpp"

namespace qla {

struct TrainConfig {
  double weight_decay = 0.0;
  double learning_rate = 1e-3;
  int epochs = 5000;
  std::uint64_t seed = 0;
  // Stop once the loss has not improved for this many epochs; 0 disables.
  int early_stop_patience = 0;

  void validate() const;
};

struct TrainResult {
  ParamVector theta;
  std::vector<double> loss_history;  // objective at the start of every epoch
  int epochs_run = 0;
};

// Full-batch objective  mean((f(x_n) - y_n)^2) + weight_decay * |theta|^2
// and its gradient, evaluated with batched matrix products.
double training_loss(const NetworkSpec& spec, const ParamVector& theta, const Matrix& inputs,
                     const Vector& targets, double weight_decay, ParamVector* gradient = nullptr);

// Batched forward pass over the rows of `inputs`.
Vector predict(const NetworkSpec& spec, const ParamVector& theta, const Matrix& inputs);

// Full-batch Adam from a seeded Glorot initialization. Deterministic given the
// seed. Throws DivergenceError on a non-finite loss.
TrainResult train_map(const NetworkSpec& spec, const Matrix& inputs, const Vector& targets,
                      const TrainConfig& cfg);

// Disjoint cover of [0, n) by k folds of near-equal size after a seeded shuffle.
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, int k, std::uint64_t seed);

struct CvCandidate {
  NetworkSpec spec;
  TrainConfig config;
};

struct CvScore {
  CvCandidate candidate;
  double mean_val_mse = 0.0;
};

struct CvSelection {
  CvCandidate best;
  std::vector<CvScore> scores;  // same order as the candidates
};

// Every (spec, config) pair from the two grids, specs outermost.
std::vector<CvCandidate> cartesian_grid(const std::vector<NetworkSpec>& specs,
                                        const std::vector<TrainConfig>& configs);

// k-fold cross-validation over the candidates; lowest mean validation MSE wins,
// ties go to fewer parameters, then to lower weight decay. Each (candidate,
// fold) job trains with its own derived seed, so results do not depend on the
// worker count.
CvSelection inner_cv_select(const std::vector<CvCandidate>& candidates, const Matrix& inputs,
                            const Vector& targets, int folds, std::uint64_t seed,
                            int workers = 0);

}  // namespace qla
