#include "qla/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qla/errors.hpp"
#include "qla/random.hpp"

namespace qla {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
  }
  return "tanh";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw InvalidArgument("unknown activation '" + name + "' (expected tanh or relu)");
}

int NetworkSpec::fan_in(int layer) const {
  return layer == 0 ? input_dim : hidden_layers[layer - 1];
}

int NetworkSpec::fan_out(int layer) const {
  return layer + 1 == num_layers() ? output_dim : hidden_layers[layer];
}

Eigen::Index NetworkSpec::num_params() const {
  Eigen::Index p = 0;
  for (int l = 0; l < num_layers(); ++l) p += static_cast<Eigen::Index>(fan_in(l) + 1) * fan_out(l);
  return p;
}

Eigen::Index NetworkSpec::weight_offset(int layer) const {
  Eigen::Index off = 0;
  for (int l = 0; l < layer; ++l) off += static_cast<Eigen::Index>(fan_in(l) + 1) * fan_out(l);
  return off;
}

Eigen::Index NetworkSpec::bias_offset(int layer) const {
  return weight_offset(layer) + static_cast<Eigen::Index>(fan_in(layer)) * fan_out(layer);
}

int NetworkSpec::max_width() const {
  int w = std::max(input_dim, output_dim);
  for (int h : hidden_layers) w = std::max(w, h);
  return w;
}

void NetworkSpec::validate() const {
  if (input_dim <= 0) throw InvalidArgument("input_dim must be positive");
  for (int h : hidden_layers) {
    if (h <= 0) throw InvalidArgument("hidden layer widths must be positive");
  }
}

template <class S>
void SweepBuffers<S>::reserve(const NetworkSpec& spec) {
  const auto p = static_cast<std::size_t>(spec.num_params());
  std::size_t total_act = spec.input_dim;
  std::size_t total_hidden = 0;
  for (int h : spec.hidden_layers) {
    total_act += h;
    total_hidden += h;
  }
  total_act += NetworkSpec::output_dim;
  theta.resize(p);
  grad.resize(p);
  activations.resize(total_act);
  slopes.resize(total_hidden);
  adjoint.resize(spec.max_width());
  adjoint_next.resize(spec.max_width());
}

template struct SweepBuffers<double>;
template struct SweepBuffers<Dual>;

namespace {

// Dual arithmetic: just what the sweep needs.
inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual& operator+=(Dual& a, Dual b) {
  a.v += b.v;
  a.d += b.d;
  return a;
}

inline double value_of(double s) { return s; }
inline double value_of(Dual s) { return s.v; }

template <class S>
S from_double(double x) {
  if constexpr (std::is_same_v<S, Dual>) {
    return Dual{x, 0.0};
  } else {
    return x;
  }
}

// Writes the activation into `a` and its derivative into `slope`.
template <class S>
void activate(Activation kind, S z, S& a, S& slope) {
  if (kind == Activation::kTanh) {
    if constexpr (std::is_same_v<S, Dual>) {
      const double t = std::tanh(z.v);
      a = Dual{t, (1.0 - t * t) * z.d};
    } else {
      a = std::tanh(z);
    }
    slope = from_double<S>(1.0) - a * a;
  } else {
    // relu'' is taken as zero: the slope carries no tangent.
    const bool on = value_of(z) > 0.0;
    a = on ? z : from_double<S>(0.0);
    slope = from_double<S>(on ? 1.0 : 0.0);
  }
}

// One forward pass and, when `want_grad`, one reverse pass accumulating the
// gradient of the scalar output into buf.grad. Parameters are read from buf.theta.
template <class S>
S sweep(const NetworkSpec& spec, const double* x, SweepBuffers<S>& buf, bool want_grad) {
  const int layers = spec.num_layers();
  const S* theta = buf.theta.data();
  S* act = buf.activations.data();
  for (int i = 0; i < spec.input_dim; ++i) act[i] = from_double<S>(x[i]);

  // Forward.
  std::size_t in_off = 0;
  std::size_t out_off = spec.input_dim;
  std::size_t slope_off = 0;
  for (int l = 0; l < layers; ++l) {
    const int n_in = spec.fan_in(l);
    const int n_out = spec.fan_out(l);
    const S* w = theta + spec.weight_offset(l);
    const S* b = theta + spec.bias_offset(l);
    const bool hidden = l + 1 < layers;
    for (int o = 0; o < n_out; ++o) {
      S z = b[o];
      const S* row = w + static_cast<std::size_t>(o) * n_in;
      for (int i = 0; i < n_in; ++i) z += row[i] * act[in_off + i];
      if (hidden) {
        activate(spec.activation, z, act[out_off + o], buf.slopes[slope_off + o]);
      } else {
        act[out_off + o] = z;
      }
    }
    in_off = out_off;
    out_off += n_out;
    if (hidden) slope_off += n_out;
  }
  const S output = act[in_off];
  if (!want_grad) return output;

  // Reverse. adjoint holds d(output)/d(z_l) for the current layer.
  S* delta = buf.adjoint.data();
  S* delta_prev = buf.adjoint_next.data();
  delta[0] = from_double<S>(1.0);
  std::size_t act_end = in_off;  // start of a_L (the output)
  for (int l = layers - 1; l >= 0; --l) {
    const int n_in = spec.fan_in(l);
    const int n_out = spec.fan_out(l);
    const std::size_t a_in = act_end - n_in;
    const S* w = theta + spec.weight_offset(l);
    S* gw = buf.grad.data() + spec.weight_offset(l);
    S* gb = buf.grad.data() + spec.bias_offset(l);
    for (int o = 0; o < n_out; ++o) {
      gb[o] = delta[o];
      S* grow = gw + static_cast<std::size_t>(o) * n_in;
      for (int i = 0; i < n_in; ++i) grow[i] = delta[o] * act[a_in + i];
    }
    if (l > 0) {
      slope_off -= n_in;
      for (int i = 0; i < n_in; ++i) delta_prev[i] = from_double<S>(0.0);
      for (int o = 0; o < n_out; ++o) {
        const S* row = w + static_cast<std::size_t>(o) * n_in;
        for (int i = 0; i < n_in; ++i) delta_prev[i] += row[i] * delta[o];
      }
      for (int i = 0; i < n_in; ++i) delta_prev[i] = delta_prev[i] * buf.slopes[slope_off + i];
      std::swap(delta, delta_prev);
    }
    act_end = a_in;
  }
  return output;
}

void check_input(const NetworkSpec& spec, const ParamVector& theta, const Vector& x) {
  if (theta.size() != spec.num_params()) {
    throw InvalidArgument("parameter vector has length " + std::to_string(theta.size()) +
                          ", network expects " + std::to_string(spec.num_params()));
  }
  if (x.size() != spec.input_dim) {
    throw InvalidArgument("input has length " + std::to_string(x.size()) + ", network expects " +
                          std::to_string(spec.input_dim));
  }
  if (!theta.allFinite()) throw InvalidArgument("parameter vector has non-finite entries");
}

}  // namespace

double forward(const NetworkSpec& spec, const ParamVector& theta, const Vector& x) {
  check_input(spec, theta, x);
  GradWorkspace ws(spec);
  std::copy(theta.data(), theta.data() + theta.size(), ws.theta.begin());
  return sweep(spec, x.data(), ws, false);
}

ParamVector jacobian(const NetworkSpec& spec, const ParamVector& theta, const Vector& x,
                     GradWorkspace& ws, double* value) {
  check_input(spec, theta, x);
  ws.reserve(spec);
  std::copy(theta.data(), theta.data() + theta.size(), ws.theta.begin());
  const double f = sweep(spec, x.data(), ws, true);
  if (value) *value = f;
  return Eigen::Map<const Vector>(ws.grad.data(), theta.size());
}

ParamVector jacobian(const NetworkSpec& spec, const ParamVector& theta, const Vector& x) {
  GradWorkspace ws(spec);
  return jacobian(spec, theta, x, ws);
}

Matrix jacobian_rows(const NetworkSpec& spec, const ParamVector& theta, const Matrix& inputs) {
  Matrix out(inputs.rows(), spec.num_params());
  GradWorkspace ws(spec);
  Vector x(inputs.cols());
  for (Eigen::Index n = 0; n < inputs.rows(); ++n) {
    x = inputs.row(n).transpose();
    out.row(n) = jacobian(spec, theta, x, ws).transpose();
  }
  return out;
}

ParamVector hvp(const NetworkSpec& spec, const ParamVector& theta, const Vector& x,
                const ParamVector& v, HvpWorkspace& ws) {
  check_input(spec, theta, x);
  if (v.size() != theta.size()) {
    throw InvalidArgument("direction has length " + std::to_string(v.size()) + ", expected " +
                          std::to_string(theta.size()));
  }
  ws.reserve(spec);
  for (Eigen::Index i = 0; i < theta.size(); ++i) ws.theta[i] = Dual{theta[i], v[i]};
  sweep(spec, x.data(), ws, true);
  ParamVector out(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) out[i] = ws.grad[i].d;
  return out;
}

ParamVector hvp(const NetworkSpec& spec, const ParamVector& theta, const Vector& x,
                const ParamVector& v) {
  HvpWorkspace ws(spec);
  return hvp(spec, theta, x, v, ws);
}

Matrix dense_hessian(const NetworkSpec& spec, const ParamVector& theta, const Vector& x,
                     Eigen::Index cap) {
  const Eigen::Index p = spec.num_params();
  if (p > cap) {
    throw CapacityError("dense Hessian needs P=" + std::to_string(p) + " <= cap " +
                        std::to_string(cap));
  }
  Matrix h(p, p);
  HvpWorkspace ws(spec);
  ParamVector e = ParamVector::Zero(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    e[i] = 1.0;
    h.col(i) = hvp(spec, theta, x, e, ws);
    e[i] = 0.0;
  }
  return 0.5 * (h + h.transpose());
}

ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector theta = ParamVector::Zero(spec.num_params());
  std::mt19937_64 gen(seed);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const double limit = std::sqrt(6.0 / (spec.fan_in(l) + spec.fan_out(l)));
    const Eigen::Index off = spec.weight_offset(l);
    const Eigen::Index count = static_cast<Eigen::Index>(spec.fan_in(l)) * spec.fan_out(l);
    for (Eigen::Index i = 0; i < count; ++i) theta[off + i] = limit * (2.0 * uniform01(gen) - 1.0);
  }
  return theta;
}

void check_params(const NetworkSpec& spec, const ParamVector& theta) {
  spec.validate();
  if (theta.size() != spec.num_params()) {
    throw InvalidArgument("parameter vector has length " + std::to_string(theta.size()) +
                          ", network expects " + std::to_string(spec.num_params()));
  }
  if (!theta.allFinite()) throw InvalidArgument("parameter vector has non-finite entries");
}

}  // namespace qla
