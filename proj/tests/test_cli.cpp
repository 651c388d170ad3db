#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "qla/config.hpp"
#include "qla/errors.hpp"
#include "qla/experiment.hpp"
#include "qla/serialize.hpp"
#include "test_util.hpp"

using namespace qla;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::absolute(name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_metrics(const fs::path& out, const std::string& ds, int dim,
                   const std::vector<std::pair<std::string, std::pair<double, double>>>& methods) {
  nlohmann::json j;
  for (const auto& [m, v] : methods) {
    j["methods"][m]["nll"] = v.first;
    j["methods"][m]["crps"] = v.second;
  }
  write_file_atomic((fs::path(split_dir(out.string(), ds, dim)) / "metrics.json").string(), j.dump());
  write_file_atomic(manifest_path(out.string(), ds, dim), "{}");
}

// A small dataset with two informative features, written next to the test.
std::string synthetic_csv(const fs::path& dir, int n) {
  qla::testing::Rng rng(99);
  std::string text = "a,b,t\n";
  for (int i = 0; i < n; ++i) {
    const double a = rng.normal();
    const double b = rng.normal();
    text += std::to_string(a) + "," + std::to_string(b) + "," +
            std::to_string(std::sin(a) + 0.5 * b + 0.1 * rng.normal()) + "\n";
  }
  const fs::path p = dir / "toy.csv";
  write_file_atomic(p.string(), text);
  return p.string();
}

std::string tiny_config(const std::string& data, const fs::path& out) {
  nlohmann::json j;
  j["datasets"] = {data};
  j["output_dir"] = out.string();
  j["grid"]["weight_decay"] = {0.0, 1e-3};
  j["grid"]["units"] = {5};
  j["grid"]["layers"] = {1};
  j["grid"]["cv_folds"] = 3;
  j["train"]["learning_rate"] = 0.01;
  j["train"]["epochs"] = 150;
  j["train"]["cv_epochs"] = 50;
  j["laplace"]["evidence_grid"]["points"] = 21;
  j["laplace"]["save_posteriors"] = true;
  return j.dump();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(QLA_CLI_PATH) + " " + args + " > cli_out.txt 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config: defaults, sections and rejection of unknown keys") {
  const ExperimentConfig c = parse_config(R"({"datasets": ["d.csv"]})", "/base");
  CHECK(c.datasets[0] == "/base/d.csv");
  CHECK(c.output_dir == "/base/runs/default");
  CHECK(c.power_iterations == 10);
  CHECK(c.scaling_mode == ScalingMode::kRayleigh);
  CHECK(c.with_noise);
  CHECK(c.weight_decays == std::vector<double>{0.0, 1e-4, 1e-3});
  CHECK(c.units == std::vector<int>{20, 30, 50});
  CHECK(c.layers == std::vector<int>{1, 2, 3});
  CHECK(c.cv_folds == 5);
  CHECK(c.has_method("lla"));
  CHECK(c.has_method("qla"));

  CHECK_THROWS_AS(parse_config(R"({"datasets": ["d"], "bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"datasets": ["d"], "laplace": {"k": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"datasets": ["d"], "methods": ["mc"]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"datasets": ["d"], "train": {"epochs": "many"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"datasets": []})"), ConfigError);
  CHECK_THROWS_AS(parse_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"datasets": ["d"], "laplace": {"scaling_mode": "x"}})"), ConfigError);

  const ExperimentConfig u = parse_config(
      R"({"datasets": ["d"], "laplace": {"scaling_mode": "unit", "power_iterations": 4},
          "model": {"activation": "relu"}, "eval": {"metric_units": "standardized"}})");
  CHECK(u.scaling_mode == ScalingMode::kUnit);
  CHECK(u.power_iterations == 4);
  CHECK(u.activation == Activation::kRelu);
  CHECK(u.metric_units == MetricUnits::kStandardized);
}

TEST_CASE("config: overrides and canonical echo") {
  const std::string text = apply_overrides(R"({"datasets": ["d"]})",
                                           {"train.epochs=77", "methods=[\"lla\"]", "output_dir=out"});
  const ExperimentConfig c = parse_config(text);
  CHECK(c.epochs == 77);
  CHECK(c.methods == std::vector<std::string>{"lla"});
  CHECK(c.output_dir == "out");
  CHECK_THROWS_AS(apply_overrides("{}", {"novalue"}), ConfigError);
  // The echoed config parses back to the same echo.
  CHECK(config_to_json(parse_config(config_to_json(c))) == config_to_json(c));
}

TEST_CASE("split verb: Boston manifests, idempotent, bad input leaves nothing") {
  const fs::path out = fresh_dir("cli_split");
  ExperimentConfig cfg;
  cfg.datasets = {QLA_DATA_DIR "/boston.csv"};
  cfg.output_dir = out.string();
  std::ostringstream log;
  CHECK(cmd_split(cfg, log) == kExitOk);
  int count = 0;
  for (const auto& e : fs::directory_iterator(out / "boston" / "splits")) count += e.is_regular_file();
  CHECK(count == 13);
  const std::string first = read_file(manifest_path(out.string(), "boston", 7));
  CHECK(cmd_split(cfg, log) == kExitOk);
  CHECK(read_file(manifest_path(out.string(), "boston", 7)) == first);

  const fs::path tiny = out / "tiny.csv";
  write_file_atomic(tiny.string(), "a,t\n1,2\n3,4\n");
  ExperimentConfig bad = cfg;
  bad.datasets = {tiny.string()};
  CHECK(cmd_split(bad, log) != kExitOk);
  CHECK_FALSE(fs::exists(out / "tiny"));
}

TEST_CASE("report verb: aggregation, bolding, missing splits") {
  SUBCASE("three splits, two methods") {
    const fs::path out = fresh_dir("cli_report_a");
    write_metrics(out, "toy", 0, {{"lla", {1.0, 0.5}}, {"qla", {1.0, 0.4}}});
    write_metrics(out, "toy", 1, {{"lla", {2.0, 0.5}}, {"qla", {2.0, 0.6}}});
    write_metrics(out, "toy", 2, {{"lla", {3.0, 0.5}}, {"qla", {3.0, 0.5}}});
    std::ostringstream log;
    REQUIRE(cmd_report(out.string(), log) == kExitOk);
    const std::string md = read_file((out / "report.md").string());
    CHECK(md.find("| Dataset | NLL LLA | NLL QLA | CRPS LLA | CRPS QLA |") != std::string::npos);
    // NLL tie: both bold. CRPS: both means 0.5000 as well.
    CHECK(md.find("**2.0000 ± 0.5774** | **2.0000 ± 0.5774**") != std::string::npos);
    const auto j = nlohmann::json::parse(read_file((out / "report.json").string()));
    CHECK(j["datasets"][0]["methods"]["lla"]["nll"]["mean"] == 2.0);
    CHECK(j["datasets"][0]["per_split"].size() == 3);
  }
  SUBCASE("one split, one better method") {
    const fs::path out = fresh_dir("cli_report_b");
    write_metrics(out, "toy", 0, {{"lla", {1.5, 0.7}}, {"qla", {1.25, 0.8}}});
    std::ostringstream log;
    REQUIRE(cmd_report(out.string(), log) == kExitOk);
    const std::string md = read_file((out / "report.md").string());
    CHECK(md.find("| 1.5000 ± 0.0000 | **1.2500 ± 0.0000** | **0.7000 ± 0.0000** | 0.8000 ± 0.0000 |") !=
          std::string::npos);
  }
  SUBCASE("single method has no bold and no second column") {
    const fs::path out = fresh_dir("cli_report_c");
    write_metrics(out, "toy", 0, {{"lla", {1.5, 0.7}}});
    std::ostringstream log;
    REQUIRE(cmd_report(out.string(), log) == kExitOk);
    const std::string md = read_file((out / "report.md").string());
    CHECK(md.find("QLA") == std::string::npos);
    CHECK(md.find("**") == std::string::npos);
  }
  SUBCASE("missing split is listed") {
    const fs::path out = fresh_dir("cli_report_d");
    write_metrics(out, "toy", 0, {{"lla", {1.5, 0.7}}});
    write_file_atomic(manifest_path(out.string(), "toy", 1), "{}");
    std::ostringstream log;
    CHECK(cmd_report(out.string(), log) == kExitPartialFailure);
    CHECK(log.str().find("toy/split_01") != std::string::npos);
    CHECK(cmd_report(out.string(), log, {0}) == kExitOk);
  }
}

TEST_CASE("run verb: artifacts, determinism, resumability, exit codes") {
  const fs::path dir = fresh_dir("cli_run");
  const std::string data = synthetic_csv(dir, 60);
  const fs::path cfg_path = dir / "config.json";
  write_file_atomic(cfg_path.string(), tiny_config(data, dir / "out"));

  REQUIRE(run_cli("run --config " + cfg_path.string()) == 0);
  const fs::path split0 = dir / "out" / "toy" / "split_00";
  for (const char* f : {"theta.bin", "theta.json", "train_log.json", "cv_scores.json", "metrics.json",
                        "predictions_lla.csv", "predictions_qla.csv", "posterior_lla.bin",
                        "posterior_qla.bin", "factors_qla.bin", "factors_qla.json"}) {
    CHECK_MESSAGE(fs::exists(split0 / f), f);
  }
  CHECK(fs::exists(dir / "out" / "effective_config.json"));
  const std::string report = read_file((dir / "out" / "report.md").string());
  const std::string preds = read_file((split0 / "predictions_qla.csv").string());
  CHECK(preds.rfind("id,mean,variance\n", 0) == 0);

  // Same seed into a second directory gives the same report bytes.
  REQUIRE(run_cli("run --config " + cfg_path.string() + " --out " + (dir / "out2").string()) == 0);
  CHECK(read_file((dir / "out2" / "report.md").string()) == report);
  CHECK(read_file((dir / "out2" / "report.json").string()) ==
        read_file((dir / "out" / "report.json").string()));

  // Deleting one split's outputs recomputes exactly that split.
  const auto stamp1 = fs::last_write_time(dir / "out" / "toy" / "split_01" / "metrics.json");
  fs::remove_all(split0);
  REQUIRE(run_cli("run --config " + cfg_path.string()) == 0);
  CHECK(fs::exists(split0 / "metrics.json"));
  CHECK(fs::last_write_time(dir / "out" / "toy" / "split_01" / "metrics.json") == stamp1);
  CHECK(read_file((split0 / "predictions_qla.csv").string()) == preds);
  CHECK(read_file((dir / "out" / "report.md").string()) == report);

  // LLA only: no QLA columns.
  REQUIRE(run_cli("run --config " + cfg_path.string() + " --set 'methods=[\"lla\"]' --out " +
                  (dir / "out_lla").string()) == 0);
  CHECK(read_file((dir / "out_lla" / "report.md").string()).find("QLA") == std::string::npos);

  // Report verb on its own.
  CHECK(run_cli("report " + (dir / "out").string()) == 0);

  // Config errors exit with 2; a failing dataset exits with 1.
  CHECK(run_cli("run --config " + (dir / "missing.json").string()) == 2);
  CHECK(run_cli("run --config " + cfg_path.string() + " --set bogus=1") == 2);
  CHECK(run_cli("frobnicate") == 2);
  write_file_atomic((dir / "broken.csv").string(), "a,t\n1,x\n2,3\n4,5\n");
  CHECK(run_cli("run --config " + cfg_path.string() + " --set 'datasets=[\"" + (dir / "broken.csv").string() +
                "\"]' --out " + (dir / "out_bad").string()) == 1);
}
