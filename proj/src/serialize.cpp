#include "qla/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qla/errors.hpp"

namespace qla {

namespace fs = std::filesystem;

namespace {

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return r;
  }
  return v;
}

void put_u64(std::string& out, std::uint64_t v) {
  v = to_le(v);
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(const std::string& in, std::size_t offset) {
  if (offset + 8 > in.size()) throw FormatError("truncated binary file");
  std::uint64_t v = 0;
  std::memcpy(&v, in.data() + offset, 8);
  return to_le(v);
}

double get_f64(const std::string& in, std::size_t offset) {
  return std::bit_cast<double>(get_u64(in, offset));
}

constexpr char kPosteriorMagic[8] = {'Q', 'L', 'A', 'P', 'O', 'S', 'T', '1'};

}  // namespace

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string encode_f64(const double* data, std::size_t count) {
  std::string out;
  out.reserve(count * 8);
  for (std::size_t i = 0; i < count; ++i) put_u64(out, std::bit_cast<std::uint64_t>(data[i]));
  return out;
}

std::vector<double> decode_f64(const std::string& bytes) {
  if (bytes.size() % 8 != 0) throw FormatError("binary length is not a multiple of 8 bytes");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_f64(bytes, 8 * i);
  return out;
}

std::string spec_to_json(const NetworkSpec& spec) {
  nlohmann::ordered_json j;
  j["input_dim"] = spec.input_dim;
  j["hidden_layers"] = spec.hidden_layers;
  j["activation"] = to_string(spec.activation);
  j["output_dim"] = NetworkSpec::output_dim;
  j["num_params"] = spec.num_params();
  return j.dump(2) + "\n";
}

NetworkSpec spec_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    NetworkSpec spec;
    spec.input_dim = j.at("input_dim").get<int>();
    spec.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
    spec.activation = activation_from_string(j.at("activation").get<std::string>());
    if (j.contains("output_dim") && j["output_dim"].get<int>() != 1) {
      throw FormatError("only scalar-output networks are supported");
    }
    spec.validate();
    if (j.contains("num_params") && j["num_params"].get<Eigen::Index>() != spec.num_params()) {
      throw FormatError("num_params does not match the layer sizes");
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed network description: ") + e.what());
  }
}

void save_params(const std::string& stem, const NetworkSpec& spec, const ParamVector& theta) {
  check_params(spec, theta);
  write_file_atomic(stem + ".bin", encode_f64(theta.data(), theta.size()));
  write_file_atomic(stem + ".json", spec_to_json(spec));
}

LoadedParams load_params(const std::string& stem) {
  LoadedParams out{spec_from_json(read_file(stem + ".json")), {}};
  const auto values = decode_f64(read_file(stem + ".bin"));
  out.theta = Eigen::Map<const ParamVector>(values.data(), static_cast<Eigen::Index>(values.size()));
  check_params(out.spec, out.theta);
  return out;
}

void save_factors(const std::string& stem, const Matrix& factors,
                  const std::vector<double>& rayleigh, const std::vector<bool>& clamped) {
  const RowMatrix rows = factors;
  write_file_atomic(stem + ".bin", encode_f64(rows.data(), rows.size()));
  nlohmann::ordered_json j;
  j["rows"] = factors.rows();
  j["cols"] = factors.cols();
  j["rayleigh"] = rayleigh;
  j["clamped"] = clamped;
  write_file_atomic(stem + ".json", j.dump() + "\n");
}

Matrix load_factors(const std::string& stem) {
  const auto meta = nlohmann::json::parse(read_file(stem + ".json"));
  const auto rows = meta.at("rows").get<Eigen::Index>();
  const auto cols = meta.at("cols").get<Eigen::Index>();
  const auto values = decode_f64(read_file(stem + ".bin"));
  if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
    throw FormatError("factor file size does not match its metadata");
  }
  return Eigen::Map<const RowMatrix>(values.data(), rows, cols);
}

void save_posterior(const std::string& path, const LowRankPosterior& post, double noise_prec) {
  std::string out(kPosteriorMagic, 8);
  put_u64(out, static_cast<std::uint64_t>(post.num_params()));
  put_u64(out, static_cast<std::uint64_t>(post.num_factors()));
  put_u64(out, std::bit_cast<std::uint64_t>(post.prior().variance));
  put_u64(out, std::bit_cast<std::uint64_t>(noise_prec));
  out += encode_f64(post.theta_star().data(), post.theta_star().size());
  const RowMatrix rows = post.factors();
  out += encode_f64(rows.data(), rows.size());
  write_file_atomic(path, out);
}

LoadedPosterior load_posterior(const std::string& path) {
  const std::string in = read_file(path);
  if (in.size() < 40 || std::memcmp(in.data(), kPosteriorMagic, 8) != 0) {
    throw FormatError(path + " is not a posterior archive");
  }
  const auto p = static_cast<Eigen::Index>(get_u64(in, 8));
  const auto n = static_cast<Eigen::Index>(get_u64(in, 16));
  const double prior_var = get_f64(in, 24);
  const double noise_prec = get_f64(in, 32);
  const std::size_t expected = 40 + 8 * static_cast<std::size_t>(p + n * p);
  if (in.size() != expected) throw FormatError(path + " has the wrong size for its header");
  ParamVector theta(p);
  for (Eigen::Index i = 0; i < p; ++i) theta[i] = get_f64(in, 40 + 8 * i);
  RowMatrix factors(n, p);
  for (Eigen::Index i = 0; i < n * p; ++i) factors.data()[i] = get_f64(in, 40 + 8 * (p + i));
  return {LowRankPosterior(std::move(theta), IsotropicPrior{prior_var}, Matrix(factors)), noise_prec};
}

}  // namespace qla
