#include "qla/config.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "qla/errors.hpp"
#include "qla/serialize.hpp"

namespace qla {

namespace fs = std::filesystem;
using nlohmann::json;

bool ExperimentConfig::has_method(const std::string& m) const {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

namespace {

void require_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + (where.empty() ? std::string(key) : where + "." + key) + "'");
  }
}

void read_range(const json& j, const char* key, double& lo, double& hi, const std::string& where) {
  std::vector<double> r{lo, hi};
  read(j, key, r, where);
  if (r.size() != 2 || !(r[0] <= r[1])) {
    throw ConfigError("'" + where + "." + key + "' must be [lo, hi] with lo <= hi");
  }
  lo = r[0];
  hi = r[1];
}

void validate(const ExperimentConfig& c) {
  if (c.datasets.empty()) throw ConfigError("config lists no datasets");
  if (c.methods.empty()) throw ConfigError("config lists no methods");
  for (const auto& m : c.methods) {
    if (m != "lla" && m != "qla") throw ConfigError("unknown method '" + m + "' (expected lla or qla)");
  }
  if (c.weight_decays.empty() || c.units.empty() || c.layers.empty()) {
    throw ConfigError("hyperparameter grid axes must be non-empty");
  }
  for (double wd : c.weight_decays) {
    if (!(wd >= 0.0)) throw ConfigError("weight decay values must be >= 0");
  }
  for (int u : c.units) {
    if (u <= 0) throw ConfigError("unit counts must be positive");
  }
  for (int l : c.layers) {
    if (l < 0) throw ConfigError("layer counts must be >= 0");
  }
  if (c.cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
  if (!(c.learning_rate > 0.0) || !(c.cv_learning_rate > 0.0) || c.epochs <= 0 ||
      c.cv_epochs <= 0 || c.early_stop_patience < 0) {
    throw ConfigError("training settings must be positive");
  }
  if (c.power_iterations < 1) throw ConfigError("power_iterations must be >= 1");
  if (c.evidence_grid.points < 1 || c.evidence_grid.refinements < 0) {
    throw ConfigError("evidence grid needs points >= 1 and refinements >= 0");
  }
  if (c.split_workers < 1) throw ConfigError("split_workers must be >= 1");
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require_keys(j, "", {"datasets", "methods", "seed", "output_dir", "workers", "split_workers",
                       "splits", "model", "grid", "train", "laplace", "eval"});
  ExperimentConfig c;
  read(j, "datasets", c.datasets, "");
  read(j, "methods", c.methods, "");
  read(j, "seed", c.seed, "");
  read(j, "output_dir", c.output_dir, "");
  read(j, "workers", c.workers, "");
  read(j, "split_workers", c.split_workers, "");
  read(j, "splits", c.splits, "");

  if (j.contains("model")) {
    const json& m = j["model"];
    require_keys(m, "model", {"activation"});
    std::string act = to_string(c.activation);
    read(m, "activation", act, "model");
    try {
      c.activation = activation_from_string(act);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    require_keys(g, "grid", {"weight_decay", "units", "layers", "cv_folds"});
    read(g, "weight_decay", c.weight_decays, "grid");
    read(g, "units", c.units, "grid");
    read(g, "layers", c.layers, "grid");
    read(g, "cv_folds", c.cv_folds, "grid");
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    require_keys(t, "train", {"learning_rate", "epochs", "cv_learning_rate", "cv_epochs",
                                     "early_stop_patience"});
    read(t, "learning_rate", c.learning_rate, "train");
    read(t, "epochs", c.epochs, "train");
    c.cv_learning_rate = c.learning_rate;
    read(t, "cv_learning_rate", c.cv_learning_rate, "train");
    c.cv_epochs = c.epochs;
    read(t, "cv_epochs", c.cv_epochs, "train");
    read(t, "early_stop_patience", c.early_stop_patience, "train");
  }
  if (j.contains("laplace")) {
    const json& l = j["laplace"];
    require_keys(l, "laplace",
                 {"power_iterations", "scaling_mode", "with_noise", "dense_cap", "evidence_grid",
                  "save_posteriors"});
    read(l, "power_iterations", c.power_iterations, "laplace");
    std::string mode = to_string(c.scaling_mode);
    read(l, "scaling_mode", mode, "laplace");
    try {
      c.scaling_mode = scaling_mode_from_string(mode);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    read(l, "with_noise", c.with_noise, "laplace");
    read(l, "dense_cap", c.dense_cap, "laplace");
    read(l, "save_posteriors", c.save_posteriors, "laplace");
    if (l.contains("evidence_grid")) {
      const json& e = l["evidence_grid"];
      const std::string where = "laplace.evidence_grid";
      require_keys(e, where, {"prior_var_log10", "noise_prec_log10", "points", "refinements"});
      read_range(e, "prior_var_log10", c.evidence_grid.prior_var_log10_lo,
                 c.evidence_grid.prior_var_log10_hi, where);
      read_range(e, "noise_prec_log10", c.evidence_grid.noise_prec_log10_lo,
                 c.evidence_grid.noise_prec_log10_hi, where);
      read(e, "points", c.evidence_grid.points, where);
      read(e, "refinements", c.evidence_grid.refinements, where);
    }
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    require_keys(e, "eval", {"metric_units"});
    std::string units = "original";
    read(e, "metric_units", units, "eval");
    if (units == "original") {
      c.metric_units = MetricUnits::kOriginal;
    } else if (units == "standardized") {
      c.metric_units = MetricUnits::kStandardized;
    } else {
      throw ConfigError("eval.metric_units must be 'original' or 'standardized'");
    }
  }

  if (!base_dir.empty()) {
    for (auto& d : c.datasets) {
      if (fs::path(d).is_relative()) d = (fs::path(base_dir) / d).lexically_normal().string();
    }
    if (fs::path(c.output_dir).is_relative()) {
      c.output_dir = (fs::path(base_dir) / c.output_dir).lexically_normal().string();
    }
  }
  validate(c);
  return c;
}

std::string apply_overrides(const std::string& text, const std::vector<std::string>& overrides) {
  if (overrides.empty()) return text;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const std::string key = o.substr(0, eq);
    const std::string raw = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return j.dump();
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  const fs::path parent = fs::path(path).parent_path();
  return parse_config(apply_overrides(text, overrides), parent.empty() ? "." : parent.string());
}

std::string config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["datasets"] = c.datasets;
  j["methods"] = c.methods;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  j["split_workers"] = c.split_workers;
  j["splits"] = c.splits;
  j["model"]["activation"] = to_string(c.activation);
  j["grid"]["weight_decay"] = c.weight_decays;
  j["grid"]["units"] = c.units;
  j["grid"]["layers"] = c.layers;
  j["grid"]["cv_folds"] = c.cv_folds;
  j["train"]["learning_rate"] = c.learning_rate;
  j["train"]["epochs"] = c.epochs;
  j["train"]["cv_learning_rate"] = c.cv_learning_rate;
  j["train"]["cv_epochs"] = c.cv_epochs;
  j["train"]["early_stop_patience"] = c.early_stop_patience;
  auto& l = j["laplace"];
  l["power_iterations"] = c.power_iterations;
  l["scaling_mode"] = to_string(c.scaling_mode);
  l["with_noise"] = c.with_noise;
  l["dense_cap"] = c.dense_cap;
  l["save_posteriors"] = c.save_posteriors;
  l["evidence_grid"]["prior_var_log10"] = {c.evidence_grid.prior_var_log10_lo,
                                           c.evidence_grid.prior_var_log10_hi};
  l["evidence_grid"]["noise_prec_log10"] = {c.evidence_grid.noise_prec_log10_lo,
                                            c.evidence_grid.noise_prec_log10_hi};
  l["evidence_grid"]["points"] = c.evidence_grid.points;
  l["evidence_grid"]["refinements"] = c.evidence_grid.refinements;
  j["eval"]["metric_units"] = c.metric_units == MetricUnits::kOriginal ? "original" : "standardized";
  return j.dump(2) + "\n";
}

}  // namespace qla
