#include "qla/data.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "qla/errors.hpp"

namespace qla {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

}  // namespace

RegressionDataset parse_csv(const std::string& text, const std::string& name) {
  std::vector<std::string_view> lines;
  {
    std::string_view rest(text);
    while (!rest.empty()) {
      const std::size_t nl = rest.find('\n');
      lines.push_back(rest.substr(0, nl));
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw EmptyDatasetError("CSV has no header row");

  const auto header = split_cells(lines[0]);
  if (header.size() < 2) throw FormatError("CSV needs at least one feature and a target column");
  const std::size_t cols = header.size();

  std::vector<double> values;
  std::size_t rows = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) throw FormatError("blank line " + std::to_string(li + 1) + " inside data");
    const auto cells = split_cells(lines[li]);
    if (cells.size() != cols) {
      throw FormatError("row on line " + std::to_string(li + 1) + " has " +
                        std::to_string(cells.size()) + " cells, header has " + std::to_string(cols));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      const auto cell = cells[c];
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError(li + 1, c + 1,
                         "non-numeric cell '" + std::string(cell) + "' at line " +
                             std::to_string(li + 1) + ", column " + std::to_string(c + 1));
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw EmptyDatasetError("CSV has a header but no data rows");

  RegressionDataset ds;
  ds.name = name;
  for (std::size_t c = 0; c + 1 < cols; ++c) ds.feature_names.push_back(unquote(header[c]));
  const auto d = static_cast<Eigen::Index>(cols - 1);
  ds.X.resize(rows, d);
  ds.y.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) ds.X(r, c) = values[r * cols + c];
    ds.y[r] = values[r * cols + cols - 1];
  }
  ds.feature_means = Vector::Zero(d);
  ds.feature_stds = Vector::Ones(d);
  return ds;
}

RegressionDataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string stem = path;
  if (const auto slash = stem.find_last_of('/'); slash != std::string::npos) stem = stem.substr(slash + 1);
  if (const auto dot = stem.find_last_of('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  try {
    return parse_csv(buf.str(), stem);
  } catch (const ParseError& e) {
    throw ParseError(e.row(), e.column(), path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  } catch (const EmptyDatasetError& e) {
    throw EmptyDatasetError(path + ": " + e.what());
  }
}

GapSplit gap_split(const RegressionDataset& ds, int dimension) {
  const auto n = static_cast<std::size_t>(ds.size());
  if (n < 3) throw InvalidArgument("gap splits need at least 3 rows, got " + std::to_string(n));
  if (dimension < 0 || dimension >= ds.dim()) throw InvalidArgument("split dimension out of range");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ds.X(a, dimension) < ds.X(b, dimension);
  });
  GapSplit s;
  s.dimension = dimension;
  const std::size_t lo = n / 3;
  const std::size_t hi = 2 * n / 3;
  for (std::size_t r = 0; r < n; ++r) {
    (r >= lo && r < hi ? s.test_indices : s.train_indices).push_back(order[r]);
  }
  std::sort(s.train_indices.begin(), s.train_indices.end());
  std::sort(s.test_indices.begin(), s.test_indices.end());
  return s;
}

std::vector<GapSplit> gap_splits(const RegressionDataset& ds) {
  if (ds.size() < 3) throw InvalidArgument("gap splits need at least 3 rows, got " + std::to_string(ds.size()));
  std::vector<GapSplit> out;
  for (int d = 0; d < ds.dim(); ++d) out.push_back(gap_split(ds, d));
  return out;
}

RegressionDataset subset(const RegressionDataset& ds, const std::vector<std::size_t>& rows) {
  RegressionDataset out;
  out.name = ds.name;
  out.feature_names = ds.feature_names;
  out.X.resize(rows.size(), ds.dim());
  out.y.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(ds.size())) throw InvalidArgument("row index out of range");
    out.X.row(i) = ds.X.row(rows[i]);
    out.y[i] = ds.y[rows[i]];
  }
  out.feature_means = ds.feature_means;
  out.feature_stds = ds.feature_stds;
  out.target_mean = ds.target_mean;
  out.target_std = ds.target_std;
  return out;
}

namespace {

void check_split(const RegressionDataset& ds, const GapSplit& split) {
  const auto n = static_cast<std::size_t>(ds.size());
  std::vector<char> seen(n, 0);
  for (const auto* list : {&split.train_indices, &split.test_indices}) {
    for (std::size_t i : *list) {
      if (i >= n || seen[i]) throw InvalidArgument("split indices must be a disjoint cover of the rows");
      seen[i] = 1;
    }
  }
  if (split.train_indices.size() + split.test_indices.size() != n) {
    throw InvalidArgument("split indices must cover every row");
  }
  if (split.train_indices.empty()) throw InvalidArgument("split has no training rows");
}

std::pair<double, double> population_stats(const Eigen::Ref<const Vector>& v) {
  const double mean = v.mean();
  const double var = (v.array() - mean).square().mean();
  const double sd = std::sqrt(var);
  return {mean, sd > 0.0 ? sd : 1.0};
}

}  // namespace

StandardizedSplit standardize(const RegressionDataset& ds, const GapSplit& split) {
  check_split(ds, split);
  StandardizedSplit out{subset(ds, split.train_indices), subset(ds, split.test_indices)};
  const Eigen::Index d = ds.dim();
  Vector means(d), stds(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    std::tie(means[c], stds[c]) = population_stats(out.train.X.col(c));
  }
  const auto [ym, ys] = population_stats(out.train.y);
  for (RegressionDataset* part : {&out.train, &out.test}) {
    part->X = (part->X.rowwise() - means.transpose()).array().rowwise() / stds.transpose().array();
    part->y = (part->y.array() - ym) / ys;
    part->feature_means = means;
    part->feature_stds = stds;
    part->target_mean = ym;
    part->target_std = ys;
  }
  return out;
}

Vector unstandardize_targets(const RegressionDataset& standardized, const Vector& y) {
  return (y.array() * standardized.target_std + standardized.target_mean).matrix();
}

Matrix unstandardize_inputs(const RegressionDataset& standardized, const Matrix& x) {
  Matrix out = x.array().rowwise() * standardized.feature_stds.transpose().array();
  out.rowwise() += standardized.feature_means.transpose();
  return out;
}

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string manifest_to_json(const SplitManifest& m) {
  nlohmann::ordered_json j;
  j["dataset"] = m.dataset;
  j["dimension"] = m.dimension;
  j["checksum"] = m.checksum;
  j["train_indices"] = m.train_indices;
  j["test_indices"] = m.test_indices;
  return j.dump() + "\n";
}

SplitManifest manifest_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SplitManifest m;
    m.dataset = j.at("dataset").get<std::string>();
    m.dimension = j.at("dimension").get<int>();
    m.checksum = j.at("checksum").get<std::string>();
    m.train_indices = j.at("train_indices").get<std::vector<std::size_t>>();
    m.test_indices = j.at("test_indices").get<std::vector<std::size_t>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed split manifest: ") + e.what());
  }
}

}  // namespace qla
