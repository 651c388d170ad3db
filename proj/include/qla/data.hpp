#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qla/nnet.hpp"

namespace qla {

struct RegressionDataset {
  std::string name;
  std::vector<std::string> feature_names;
  Matrix X;  // N x D
  Vector y;  // N
  // Statistics used to standardize X and y; identity (0 / 1) for raw data.
  Vector feature_means;
  Vector feature_stds;
  double target_mean = 0.0;
  double target_std = 1.0;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
};

// Header row, then numeric rows; the last column is the target. Header cells
// may be double-quoted. Throws ParseError, FormatError, EmptyDatasetError, IoError.
RegressionDataset load_csv(const std::string& path);
RegressionDataset parse_csv(const std::string& text, const std::string& name = "");

// In-between split along one input dimension: the middle third of the rows,
// ranked by that feature, is held out.
struct GapSplit {
  int dimension = 0;
  std::vector<std::size_t> train_indices;  // ascending
  std::vector<std::size_t> test_indices;   // ascending
};

// One split per input dimension. Ties are ranked by original row index.
// Throws InvalidArgument when N < 3.
std::vector<GapSplit> gap_splits(const RegressionDataset& ds);
GapSplit gap_split(const RegressionDataset& ds, int dimension);

RegressionDataset subset(const RegressionDataset& ds, const std::vector<std::size_t>& rows);

struct StandardizedSplit {
  RegressionDataset train;
  RegressionDataset test;
};

// Population mean/std of the training rows, applied to both sides. Columns
// with zero spread keep std 1.
StandardizedSplit standardize(const RegressionDataset& ds, const GapSplit& split);

// Maps standardized targets back to original units.
Vector unstandardize_targets(const RegressionDataset& standardized, const Vector& y);
Matrix unstandardize_inputs(const RegressionDataset& standardized, const Matrix& x);

// Lowercase hex SHA-256 of a file's bytes.
std::string file_sha256(const std::string& path);

struct SplitManifest {
  std::string dataset;
  int dimension = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::string checksum;
};

std::string manifest_to_json(const SplitManifest& m);
SplitManifest manifest_from_json(const std::string& text);

}  // namespace qla
