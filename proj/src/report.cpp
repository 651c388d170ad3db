#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "qla/errors.hpp"
#include "qla/experiment.hpp"
#include "qla/serialize.hpp"

namespace qla {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kMethodOrder{"lla", "qla"};
const std::vector<std::string> kMetrics{"nll", "crps"};

struct DatasetTable {
  std::string name;
  std::vector<ojson> per_split;
  std::vector<std::string> methods;
  // metric -> method -> aggregate
  std::map<std::string, std::map<std::string, Aggregate>> cells;
};

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::vector<int> manifest_dimensions(const fs::path& splits_dir) {
  std::vector<int> dims;
  for (const auto& entry : fs::directory_iterator(splits_dir)) {
    const std::string f = entry.path().filename().string();
    int d = 0;
    if (std::sscanf(f.c_str(), "split_%d.json", &d) == 1 && f == split_name(d) + ".json") dims.push_back(d);
  }
  std::sort(dims.begin(), dims.end());
  return dims;
}

}  // namespace

int cmd_report(const std::string& output_dir, std::ostream& log, const std::vector<int>& only) {
  if (!fs::is_directory(output_dir)) {
    log << "report: " << output_dir << " is not a directory\n";
    return kExitConfigError;
  }
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(output_dir)) {
    if (entry.is_directory() && fs::is_directory(entry.path() / "splits")) {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());

  std::vector<std::string> missing;
  std::vector<DatasetTable> tables;
  for (const auto& name : names) {
    DatasetTable t;
    t.name = name;
    std::set<std::string> methods;
    std::map<std::string, std::map<std::string, std::vector<double>>> values;
    for (int d : manifest_dimensions(fs::path(output_dir) / name / "splits")) {
      if (!only.empty() && std::find(only.begin(), only.end(), d) == only.end()) continue;
      const fs::path metrics = fs::path(split_dir(output_dir, name, d)) / "metrics.json";
      if (!fs::exists(metrics)) {
        missing.push_back(name + "/" + split_name(d));
        continue;
      }
      const auto j = nlohmann::json::parse(read_file(metrics.string()));
      ojson row;
      row["split"] = split_name(d);
      for (const char* key : {"prior_var", "noise_prec"}) {
        if (j.contains(key)) row[key] = j[key];
      }
      for (const auto& [method, m] : j.at("methods").items()) {
        methods.insert(method);
        for (const auto& metric : kMetrics) {
          values[metric][method].push_back(m.at(metric).get<double>());
          row[method][metric] = m.at(metric);
        }
      }
      t.per_split.push_back(row);
    }
    for (const auto& m : kMethodOrder) {
      if (methods.contains(m)) t.methods.push_back(m);
    }
    for (const auto& metric : kMetrics) {
      for (const auto& m : t.methods) t.cells[metric][m] = aggregate(values[metric][m]);
    }
    tables.push_back(std::move(t));
  }

  if (!missing.empty()) {
    log << "report: missing metrics for";
    for (const auto& m : missing) log << " " << m;
    log << "\n";
    return kExitPartialFailure;
  }
  if (tables.empty()) {
    log << "report: no datasets under " << output_dir << "\n";
    return kExitPartialFailure;
  }

  std::vector<std::string> methods;
  for (const auto& m : kMethodOrder) {
    for (const auto& t : tables) {
      if (std::find(t.methods.begin(), t.methods.end(), m) != t.methods.end()) {
        methods.push_back(m);
        break;
      }
    }
  }

  // Markdown: datasets x {NLL, CRPS} x methods, lowest printed mean in bold.
  std::string md = "| Dataset |";
  std::string rule = "|---|";
  for (const auto& metric : kMetrics) {
    for (const auto& m : methods) {
      md += " " + upper(metric) + " " + upper(m) + " |";
      rule += "---|";
    }
  }
  md += "\n" + rule + "\n";
  ojson json_out;
  for (const auto& t : tables) {
    md += "| " + t.name + " |";
    ojson jd;
    jd["name"] = t.name;
    jd["num_splits"] = t.per_split.size();
    for (const auto& metric : kMetrics) {
      std::string best;
      for (const auto& m : t.methods) {
        const std::string v = fixed4(t.cells.at(metric).at(m).mean);
        if (best.empty() || std::stod(v) < std::stod(best)) best = v;
      }
      for (const auto& m : methods) {
        const auto it = t.cells.at(metric).find(m);
        if (it == t.cells.at(metric).end()) {
          md += " - |";
          continue;
        }
        const std::string mean = fixed4(it->second.mean);
        std::string cell = mean + " ± " + fixed4(it->second.std_error);
        if (t.methods.size() > 1 && mean == best) cell = "**" + cell + "**";
        md += " " + cell + " |";
        jd["methods"][m][metric]["mean"] = it->second.mean;
        jd["methods"][m][metric]["std_error"] = it->second.std_error;
      }
    }
    md += "\n";
    jd["per_split"] = t.per_split;
    json_out["datasets"].push_back(jd);
  }
  write_file_atomic((fs::path(output_dir) / "report.md").string(), md);
  write_file_atomic((fs::path(output_dir) / "report.json").string(), json_out.dump(2) + "\n");
  log << md;
  return kExitOk;
}

}  // namespace qla
