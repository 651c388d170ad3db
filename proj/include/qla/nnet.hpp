#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace qla {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Flattened network parameters: for each affine layer in forward order, the
// row-major (fan_out x fan_in) weight matrix followed by the bias vector.
using ParamVector = Eigen::VectorXd;

enum class Activation { kTanh, kRelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Fully-connected network with a scalar output. `hidden_layers` may be empty,
// in which case the model is affine in its input and linear in its parameters.
struct NetworkSpec {
  int input_dim = 1;
  std::vector<int> hidden_layers;
  Activation activation = Activation::kTanh;
  static constexpr int output_dim = 1;

  // Number of affine layers (hidden layers plus the output layer).
  int num_layers() const { return static_cast<int>(hidden_layers.size()) + 1; }
  int fan_in(int layer) const;
  int fan_out(int layer) const;
  Eigen::Index num_params() const;
  Eigen::Index weight_offset(int layer) const;
  Eigen::Index bias_offset(int layer) const;
  // Largest layer width including input and output.
  int max_width() const;

  // Throws InvalidArgument on a non-positive dimension.
  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

// Forward-mode number used to differentiate the reverse sweep.
struct Dual {
  double v = 0.0;
  double d = 0.0;
};

// Scratch buffers for one forward/reverse sweep. A workspace belongs to one
// thread at a time; results never depend on what a previous call left behind.
template <class S>
struct SweepBuffers {
  std::vector<S> theta;        // parameter copy in the sweep's scalar type
  std::vector<S> grad;         // gradient output
  std::vector<S> activations;  // a_0 (input) .. a_L, concatenated
  std::vector<S> slopes;       // activation derivatives of the hidden layers
  std::vector<S> adjoint;      // backpropagated signal, sized by max width
  std::vector<S> adjoint_next;

  SweepBuffers() = default;
  explicit SweepBuffers(const NetworkSpec& spec) { reserve(spec); }
  void reserve(const NetworkSpec& spec);
};

using HvpWorkspace = SweepBuffers<Dual>;
using GradWorkspace = SweepBuffers<double>;

double forward(const NetworkSpec& spec, const ParamVector& theta, const Vector& x);

// Gradient of the scalar output with respect to all parameters (one reverse sweep).
ParamVector jacobian(const NetworkSpec& spec, const ParamVector& theta, const Vector& x);
ParamVector jacobian(const NetworkSpec& spec, const ParamVector& theta, const Vector& x,
                     GradWorkspace& ws, double* value = nullptr);

// Jacobian rows for every row of `inputs` (N x D) -> N x P.
Matrix jacobian_rows(const NetworkSpec& spec, const ParamVector& theta, const Matrix& inputs);

// H(x) v with H the parameter Hessian of the output, by forward-over-reverse
// differentiation. Never forms H.
ParamVector hvp(const NetworkSpec& spec, const ParamVector& theta, const Vector& x,
                const ParamVector& v, HvpWorkspace& ws);
ParamVector hvp(const NetworkSpec& spec, const ParamVector& theta, const Vector& x,
                const ParamVector& v);

inline constexpr Eigen::Index kDefaultDenseCap = 2000;

// Materialized Hessian, columns H e_i, returned symmetrized. Test oracle and
// diagnostic only; throws CapacityError when P exceeds `cap`.
Matrix dense_hessian(const NetworkSpec& spec, const ParamVector& theta, const Vector& x,
                     Eigen::Index cap = kDefaultDenseCap);

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed);

// Throws InvalidArgument if `theta` does not match `spec` or holds non-finite values.
void check_params(const NetworkSpec& spec, const ParamVector& theta);

}  // namespace qla
