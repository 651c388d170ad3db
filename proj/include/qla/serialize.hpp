#pragma once

#include <string>
#include <vector>

#include "qla/laplace.hpp"
#include "qla/nnet.hpp"

namespace qla {

// Writes `bytes` to a temporary file next to `path` and renames it into place.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

// Packed little-endian IEEE-754 doubles.
std::string encode_f64(const double* data, std::size_t count);
std::vector<double> decode_f64(const std::string& bytes);

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);

// theta as <stem>.bin plus the network description in <stem>.json.
void save_params(const std::string& stem, const NetworkSpec& spec, const ParamVector& theta);
struct LoadedParams {
  NetworkSpec spec;
  ParamVector theta;
};
LoadedParams load_params(const std::string& stem);

// N x P factor rows as <stem>.bin (row-major) plus per-row metadata in <stem>.json.
void save_factors(const std::string& stem, const Matrix& factors,
                  const std::vector<double>& rayleigh, const std::vector<bool>& clamped);
Matrix load_factors(const std::string& stem);

// Single-file posterior archive:
//   "QLAPOST1" | u64 P | u64 N | f64 prior_var | f64 noise_prec | theta[P] | factors[N*P]
// Integers and doubles little-endian; factors row-major.
void save_posterior(const std::string& path, const LowRankPosterior& post, double noise_prec);
struct LoadedPosterior {
  LowRankPosterior posterior;
  double noise_prec;
};
LoadedPosterior load_posterior(const std::string& path);

}  // namespace qla
