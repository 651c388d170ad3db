#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "qla/config.hpp"
#include "qla/data.hpp"
#include "qla/metrics.hpp"

namespace qla {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartialFailure = 1;
inline constexpr int kExitConfigError = 2;

// Output layout under cfg.output_dir:
//   <dataset>/splits/split_DD.json    gap-split manifests
//   <dataset>/split_DD/               per-split artifacts (theta, logs, predictions, metrics.json)
//   report.md, report.json            aggregated table
std::string split_name(int dimension);
std::string dataset_dir(const std::string& output_dir, const std::string& dataset);
std::string manifest_path(const std::string& output_dir, const std::string& dataset, int dimension);
std::string split_dir(const std::string& output_dir, const std::string& dataset, int dimension);

// Manifests for every gap split of one dataset file (nothing is written).
std::vector<SplitManifest> make_manifests(const std::string& dataset_path);

struct MethodMetrics {
  double nll = 0.0;
  double crps = 0.0;
  int num_clamped = 0;
};

struct SplitResult {
  std::string dataset;
  int dimension = 0;
  NetworkSpec spec;
  double weight_decay = 0.0;
  double prior_var = 0.0;
  double noise_prec = 0.0;
  double log_evidence = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::map<std::string, MethodMetrics> methods;
};

// One full split: inner-CV selection, MAP training, evidence fit, LLA/QLA
// posteriors, and test metrics. Writes artifacts into `out_dir` when non-empty.
SplitResult run_split(const ExperimentConfig& cfg, const RegressionDataset& raw,
                      const SplitManifest& manifest, const std::string& out_dir);

// Verbs. Each returns a process exit code and reports progress/errors to `log`.
int cmd_split(const ExperimentConfig& cfg, std::ostream& log);
int cmd_run(const ExperimentConfig& cfg, std::ostream& log);
// Aggregates per-split metrics into report.md / report.json. `only` restricts the
// expected splits to those input dimensions.
int cmd_report(const std::string& output_dir, std::ostream& log, const std::vector<int>& only = {});

}  // namespace qla
