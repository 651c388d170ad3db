#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qla/curvature.hpp"
#include "qla/laplace.hpp"
#include "qla/nnet.hpp"

namespace qla {

enum class MetricUnits { kOriginal, kStandardized };

struct ExperimentConfig {
  std::vector<std::string> datasets;  // CSV paths, resolved against the config file's directory
  std::vector<std::string> methods{"lla", "qla"};
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  int workers = 0;        // threads inside one split (CV jobs, factors); 0 = all cores
  int split_workers = 1;  // splits processed concurrently
  std::vector<int> splits;  // input dimensions to run; empty = all

  Activation activation = Activation::kTanh;
  std::vector<double> weight_decays{0.0, 1e-4, 1e-3};
  std::vector<int> units{20, 30, 50};
  std::vector<int> layers{1, 2, 3};
  int cv_folds = 5;

  double learning_rate = 1e-3;
  int epochs = 5000;
  double cv_learning_rate = 1e-3;  // inner-CV runs; defaults to learning_rate when omitted
  int cv_epochs = 5000;
  int early_stop_patience = 0;

  int power_iterations = kDefaultPowerIterations;
  ScalingMode scaling_mode = ScalingMode::kRayleigh;
  bool with_noise = true;
  Eigen::Index dense_cap = kDefaultDenseCap;
  HyperGrid evidence_grid;

  MetricUnits metric_units = MetricUnits::kOriginal;
  bool save_posteriors = false;

  bool has_method(const std::string& m) const;
};

// Parses the JSON config text. Unknown keys and malformed values raise ConfigError.
// Relative dataset paths are resolved against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = "");
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});

// Applies "dotted.key=value" overrides to the JSON text before parsing. Values are
// read as JSON, falling back to a plain string.
std::string apply_overrides(const std::string& text, const std::vector<std::string>& overrides);

// Canonical JSON of the effective configuration.
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace qla
