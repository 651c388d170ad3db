#include "qla/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>

#include <json.hpp>

#include "qla/errors.hpp"
#include "qla/laplace.hpp"
#include "qla/parallel.hpp"
#include "qla/random.hpp"
#include "qla/serialize.hpp"
#include "qla/train.hpp"

namespace qla {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string split_name(int dimension) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "split_%02d", dimension);
  return buf;
}

std::string dataset_dir(const std::string& output_dir, const std::string& dataset) {
  return (fs::path(output_dir) / dataset).string();
}

std::string manifest_path(const std::string& output_dir, const std::string& dataset, int dimension) {
  return (fs::path(output_dir) / dataset / "splits" / (split_name(dimension) + ".json")).string();
}

std::string split_dir(const std::string& output_dir, const std::string& dataset, int dimension) {
  return (fs::path(output_dir) / dataset / split_name(dimension)).string();
}

std::vector<SplitManifest> make_manifests(const std::string& dataset_path) {
  const RegressionDataset ds = load_csv(dataset_path);
  const std::string checksum = file_sha256(dataset_path);
  std::vector<SplitManifest> out;
  for (const GapSplit& s : gap_splits(ds)) {
    out.push_back({ds.name, s.dimension, s.train_indices, s.test_indices, checksum});
  }
  return out;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<CvCandidate> build_grid(const ExperimentConfig& cfg, int input_dim) {
  std::vector<NetworkSpec> specs;
  for (int depth : cfg.layers) {
    for (int width : cfg.units) {
      NetworkSpec s;
      s.input_dim = input_dim;
      s.hidden_layers.assign(depth, width);
      s.activation = cfg.activation;
      specs.push_back(s);
      if (depth == 0) break;  // width is irrelevant without hidden layers
    }
  }
  std::vector<TrainConfig> configs;
  for (double wd : cfg.weight_decays) {
    TrainConfig t;
    t.weight_decay = wd;
    t.learning_rate = cfg.cv_learning_rate;
    t.epochs = cfg.cv_epochs;
    t.early_stop_patience = cfg.early_stop_patience;
    configs.push_back(t);
  }
  return cartesian_grid(specs, configs);
}

std::string predictions_csv(const std::vector<std::size_t>& ids,
                            const std::vector<PredictiveGaussian>& preds, const TargetScale& scale) {
  std::string out = "id,mean,variance\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out += std::to_string(ids[i]) + "," + fmt17(preds[i].mean * scale.std + scale.mean) + "," +
           fmt17(preds[i].variance * scale.std * scale.std) + "\n";
  }
  return out;
}

std::string metrics_json(const SplitResult& r) {
  ojson j;
  j["dataset"] = r.dataset;
  j["split"] = split_name(r.dimension);
  j["dimension"] = r.dimension;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["selected"]["hidden_layers"] = r.spec.hidden_layers;
  j["selected"]["weight_decay"] = r.weight_decay;
  j["selected"]["num_params"] = r.spec.num_params();
  j["prior_var"] = r.prior_var;
  j["noise_prec"] = r.noise_prec;
  j["log_evidence"] = r.log_evidence;
  for (const auto& [name, m] : r.methods) {
    j["methods"][name]["nll"] = m.nll;
    j["methods"][name]["crps"] = m.crps;
    if (name == "qla") j["methods"][name]["num_clamped"] = m.num_clamped;
  }
  return j.dump(2) + "\n";
}

}  // namespace

SplitResult run_split(const ExperimentConfig& cfg, const RegressionDataset& raw,
                      const SplitManifest& manifest, const std::string& out_dir) {
  const bool write = !out_dir.empty();
  GapSplit split{manifest.dimension, manifest.train_indices, manifest.test_indices};
  const StandardizedSplit data = standardize(raw, split);
  const Matrix& x_train = data.train.X;
  const Vector& y_train = data.train.y;

  const std::uint64_t base = mix_seed(cfg.seed, hash_name(raw.name));
  const std::uint64_t cv_seed = mix_seed(base, 2 * static_cast<std::uint64_t>(manifest.dimension));
  const std::uint64_t fit_seed = mix_seed(base, 2 * static_cast<std::uint64_t>(manifest.dimension) + 1);

  // Model selection on the training rows only.
  const CvSelection sel = inner_cv_select(build_grid(cfg, static_cast<int>(raw.dim())), x_train,
                                          y_train, cfg.cv_folds, cv_seed, cfg.workers);
  const NetworkSpec spec = sel.best.spec;
  TrainConfig tc = sel.best.config;
  tc.learning_rate = cfg.learning_rate;
  tc.epochs = cfg.epochs;
  tc.seed = fit_seed;
  const TrainResult fit = train_map(spec, x_train, y_train, tc);
  const ParamVector& theta = fit.theta;

  SplitResult r;
  r.dataset = raw.name;
  r.dimension = manifest.dimension;
  r.spec = spec;
  r.weight_decay = tc.weight_decay;
  r.n_train = split.train_indices.size();
  r.n_test = split.test_indices.size();

  // Evidence on the linearized model; QLA reuses the fitted values.
  const Matrix jac = jacobian_rows(spec, theta, x_train);
  const Vector yt = linearized_targets(spec, theta, x_train, y_train, jac);
  const HyperFit hyper = fit_hyperparameters(EvidenceSurface(jac, yt), cfg.evidence_grid);
  r.prior_var = hyper.prior_var;
  r.noise_prec = hyper.noise_prec;
  r.log_evidence = hyper.log_evidence;
  const GaussianLikelihood lik(hyper.noise_prec);
  const IsotropicPrior prior{hyper.prior_var};

  const TargetScale scale = cfg.metric_units == MetricUnits::kOriginal
                                ? TargetScale{data.train.target_mean, data.train.target_std}
                                : TargetScale{};

  if (write) {
    save_params((fs::path(out_dir) / "theta").string(), spec, theta);
    ojson log;
    log["epochs_run"] = fit.epochs_run;
    log["seed"] = tc.seed;
    log["loss"] = fit.loss_history;
    write_file_atomic((fs::path(out_dir) / "train_log.json").string(), log.dump() + "\n");
    ojson cv;
    for (const auto& s : sel.scores) {
      ojson row;
      row["hidden_layers"] = s.candidate.spec.hidden_layers;
      row["weight_decay"] = s.candidate.config.weight_decay;
      row["mean_val_mse"] = s.mean_val_mse;
      cv.push_back(row);
    }
    write_file_atomic((fs::path(out_dir) / "cv_scores.json").string(), cv.dump(2) + "\n");
  }

  auto score = [&](const std::string& method, const LowRankPosterior& post) {
    const auto preds = glm_predictive_batch(post, spec, data.test.X, lik, cfg.with_noise);
    const SplitMetrics m = score_predictions(preds, data.test.y, scale);
    if (write) {
      write_file_atomic((fs::path(out_dir) / ("predictions_" + method + ".csv")).string(),
                        predictions_csv(split.test_indices, preds, scale));
      if (cfg.save_posteriors) {
        save_posterior((fs::path(out_dir) / ("posterior_" + method + ".bin")).string(), post,
                       hyper.noise_prec);
      }
    }
    return MethodMetrics{m.nll_mean, m.crps_mean, 0};
  };

  if (cfg.has_method("lla")) {
    const LowRankPosterior lla(theta, prior, std::sqrt(noise(lik)) * jac);
    r.methods["lla"] = score("lla", lla);
  }
  if (cfg.has_method("qla")) {
    const QlaPosterior qla = build_qla_posterior(spec, theta, lik, prior, x_train, y_train,
                                                 cfg.power_iterations, cfg.scaling_mode, cfg.workers);
    MethodMetrics m = score("qla", qla.posterior);
    m.num_clamped = qla.num_clamped;
    r.methods["qla"] = m;
    if (write && cfg.save_posteriors) {
      save_factors((fs::path(out_dir) / "factors_qla").string(), qla.posterior.factors(),
                   qla.rayleigh, qla.clamped);
    }
  }
  if (write) write_file_atomic((fs::path(out_dir) / "metrics.json").string(), metrics_json(r));
  return r;
}

int cmd_split(const ExperimentConfig& cfg, std::ostream& log) {
  int code = kExitOk;
  for (const auto& path : cfg.datasets) {
    try {
      // Everything is computed before the first write, so a bad file leaves nothing behind.
      const auto manifests = make_manifests(path);
      std::vector<std::pair<std::string, std::string>> files;
      for (const auto& m : manifests) {
        files.emplace_back(manifest_path(cfg.output_dir, m.dataset, m.dimension), manifest_to_json(m));
      }
      for (const auto& [p, text] : files) write_file_atomic(p, text);
      log << "split: " << path << " -> " << manifests.size() << " manifests\n";
    } catch (const std::exception& e) {
      log << "split: " << path << ": " << e.what() << "\n";
      code = kExitPartialFailure;
    }
  }
  return code;
}

namespace {

std::vector<SplitManifest> read_or_make_manifests(const ExperimentConfig& cfg, const std::string& path,
                                                  const RegressionDataset& ds, std::ostream& log) {
  const fs::path dir = fs::path(dataset_dir(cfg.output_dir, ds.name)) / "splits";
  if (!fs::exists(dir)) {
    log << "run: no manifests for " << ds.name << ", creating them\n";
    for (const auto& m : make_manifests(path)) {
      write_file_atomic(manifest_path(cfg.output_dir, m.dataset, m.dimension), manifest_to_json(m));
    }
  }
  std::vector<SplitManifest> out;
  for (int d = 0; d < ds.dim(); ++d) {
    const std::string p = manifest_path(cfg.output_dir, ds.name, d);
    if (!fs::exists(p)) throw IoError("missing manifest " + p);
    out.push_back(manifest_from_json(read_file(p)));
  }
  return out;
}

}  // namespace

int cmd_run(const ExperimentConfig& cfg, std::ostream& log) {
  fs::create_directories(cfg.output_dir);
  write_file_atomic((fs::path(cfg.output_dir) / "effective_config.json").string(), config_to_json(cfg));

  struct Job {
    const RegressionDataset* data;
    SplitManifest manifest;
  };
  std::vector<RegressionDataset> datasets;
  datasets.reserve(cfg.datasets.size());
  std::vector<Job> jobs;
  int code = kExitOk;
  for (const auto& path : cfg.datasets) {
    try {
      RegressionDataset ds = load_csv(path);
      const std::string checksum = file_sha256(path);
      auto manifests = read_or_make_manifests(cfg, path, ds, log);
      datasets.push_back(std::move(ds));
      for (auto& m : manifests) {
        if (m.checksum != checksum) {
          throw FormatError("manifest " + split_name(m.dimension) + " was made from a different file");
        }
        if (!cfg.splits.empty() &&
            std::find(cfg.splits.begin(), cfg.splits.end(), m.dimension) == cfg.splits.end()) {
          continue;
        }
        jobs.push_back({nullptr, std::move(m)});
        jobs.back().data = &datasets.back();
      }
    } catch (const std::exception& e) {
      log << "run: " << path << ": " << e.what() << "\n";
      code = kExitPartialFailure;
    }
  }

  std::mutex log_mutex;
  std::vector<char> failed(jobs.size(), 0);
  parallel_for(jobs.size(), cfg.split_workers, [&](std::size_t i, int) {
    const Job& job = jobs[i];
    const std::string dir = split_dir(cfg.output_dir, job.data->name, job.manifest.dimension);
    const std::string label = job.data->name + "/" + split_name(job.manifest.dimension);
    if (fs::exists(fs::path(dir) / "metrics.json")) {
      std::lock_guard lock(log_mutex);
      log << "run: " << label << " already done\n";
      return;
    }
    try {
      fs::remove(fs::path(dir) / "error.txt");
      const SplitResult r = run_split(cfg, *job.data, job.manifest, dir);
      std::lock_guard lock(log_mutex);
      log << "run: " << label << " layers=" << r.spec.hidden_layers.size()
          << " units=" << (r.spec.hidden_layers.empty() ? 0 : r.spec.hidden_layers[0])
          << " wd=" << r.weight_decay << " s0^2=" << r.prior_var << " beta=" << r.noise_prec;
      for (const auto& [name, m] : r.methods) log << " " << name << ".nll=" << m.nll;
      log << "\n";
    } catch (const std::exception& e) {
      failed[i] = 1;
      try {
        write_file_atomic((fs::path(dir) / "error.txt").string(), std::string(e.what()) + "\n");
      } catch (...) {
      }
      std::lock_guard lock(log_mutex);
      log << "run: " << label << " failed: " << e.what() << "\n";
    }
  });
  if (std::find(failed.begin(), failed.end(), 1) != failed.end()) code = kExitPartialFailure;

  const int report_code = cmd_report(cfg.output_dir, log, cfg.splits);
  return code != kExitOk ? code : report_code;
}

}  // namespace qla
