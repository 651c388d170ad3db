// Command-line front end: `qla split|run|report`.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "qla/config.hpp"
#include "qla/errors.hpp"
#include "qla/experiment.hpp"

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

qla::ExperimentConfig resolve(const Options& o) {
  std::vector<std::string> overrides = o.overrides;
  if (!o.out_dir.empty()) {
    // An explicit --out is taken relative to the working directory, not the config file.
    overrides.push_back("output_dir=" + std::filesystem::absolute(o.out_dir).string());
  }
  return qla::load_config(o.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Laplace approximations (linearized and quadratic) for small regression networks"};
  app.require_subcommand(1);

  Options opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", opts.config_path, "experiment config (JSON)")->required();
    sub->add_option("-s,--set", opts.overrides, "override a config key, e.g. train.epochs=200");
    sub->add_option("-o,--out", opts.out_dir, "output directory (overrides output_dir)");
  };
  CLI::App* split = app.add_subcommand("split", "write gap-split manifests for each dataset");
  add_common(split);
  CLI::App* run = app.add_subcommand("run", "train, fit both posteriors and evaluate every split");
  add_common(run);
  CLI::App* report = app.add_subcommand("report", "aggregate per-split metrics into report.md/json");
  std::string report_dir;
  report->add_option("dir", report_dir, "output directory of a previous run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? qla::kExitOk : qla::kExitConfigError;
  }

  try {
    if (*report) return qla::cmd_report(report_dir, std::cerr);
    const qla::ExperimentConfig cfg = resolve(opts);
    if (*split) return qla::cmd_split(cfg, std::cerr);
    return qla::cmd_run(cfg, std::cerr);
  } catch (const qla::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return qla::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return qla::kExitPartialFailure;
  }
}
