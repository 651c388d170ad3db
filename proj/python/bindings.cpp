// Python bindings for the network, posterior, evidence, metric and split layers.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <vector>

#include "qla/data.hpp"
#include "qla/laplace.hpp"
#include "qla/metrics.hpp"
#include "qla/nnet.hpp"
#include "qla/train.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

// Means and variances of a batch of predictives as two arrays.
py::tuple split_predictives(const std::vector<qla::PredictiveGaussian>& preds) {
  qla::Vector mean(preds.size()), var(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    mean[i] = preds[i].mean;
    var[i] = preds[i].variance;
  }
  return py::make_tuple(mean, var);
}

qla::RegressionDataset as_dataset(const qla::Matrix& x, const qla::Vector& y) {
  qla::RegressionDataset ds;
  ds.X = x;
  ds.y = y;
  return ds;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Linearized and quadratic Laplace approximations for MLP regression";

  py::class_<qla::NetworkSpec>(m, "NetworkSpec")
      .def(py::init([](int input_dim, std::vector<int> hidden, const std::string& activation) {
             qla::NetworkSpec s;
             s.input_dim = input_dim;
             s.hidden_layers = std::move(hidden);
             s.activation = qla::activation_from_string(activation);
             s.validate();
             return s;
           }),
           "input_dim"_a, "hidden_layers"_a = std::vector<int>{}, "activation"_a = "tanh")
      .def_readonly("input_dim", &qla::NetworkSpec::input_dim)
      .def_readonly("hidden_layers", &qla::NetworkSpec::hidden_layers)
      .def_property_readonly("activation", [](const qla::NetworkSpec& s) { return qla::to_string(s.activation); })
      .def_property_readonly("num_params", &qla::NetworkSpec::num_params);

  m.def("init_params", &qla::init_params, "spec"_a, "seed"_a = 0);
  m.def("forward", &qla::forward, "spec"_a, "theta"_a, "x"_a);
  m.def("predict", &qla::predict, "spec"_a, "theta"_a, "inputs"_a);
  m.def("jacobian", py::overload_cast<const qla::NetworkSpec&, const qla::ParamVector&, const qla::Vector&>(
                        &qla::jacobian),
        "spec"_a, "theta"_a, "x"_a);
  m.def("hvp",
        py::overload_cast<const qla::NetworkSpec&, const qla::ParamVector&, const qla::Vector&,
                          const qla::ParamVector&>(&qla::hvp),
        "spec"_a, "theta"_a, "x"_a, "v"_a);

  m.def(
      "train_map",
      [](const qla::NetworkSpec& spec, const qla::Matrix& inputs, const qla::Vector& targets,
         double weight_decay, double learning_rate, int epochs, std::uint64_t seed) {
        qla::TrainConfig cfg;
        cfg.weight_decay = weight_decay;
        cfg.learning_rate = learning_rate;
        cfg.epochs = epochs;
        cfg.seed = seed;
        return qla::train_map(spec, inputs, targets, cfg).theta;
      },
      "spec"_a, "inputs"_a, "targets"_a, "weight_decay"_a = 0.0, "learning_rate"_a = 1e-3,
      "epochs"_a = 5000, "seed"_a = 0);

  py::class_<qla::LowRankPosterior>(m, "LowRankPosterior")
      .def_property_readonly("theta_star", &qla::LowRankPosterior::theta_star)
      .def_property_readonly("prior_var", [](const qla::LowRankPosterior& p) { return p.prior().variance; })
      .def_property_readonly("factors", &qla::LowRankPosterior::factors)
      .def("quadform", &qla::LowRankPosterior::quadform, "v"_a)
      .def("covariance_times", &qla::LowRankPosterior::covariance_times, "v"_a)
      .def("dense_covariance", [](const qla::LowRankPosterior& p) { return p.dense_covariance(); });

  m.def(
      "lla_posterior",
      [](const qla::NetworkSpec& spec, const qla::ParamVector& theta, const qla::Matrix& inputs,
         double prior_var, double noise_prec) {
        return qla::build_lla_posterior(spec, theta, qla::GaussianLikelihood(noise_prec), {prior_var}, inputs);
      },
      "spec"_a, "theta"_a, "inputs"_a, "prior_var"_a, "noise_prec"_a);
  m.def(
      "qla_posterior",
      [](const qla::NetworkSpec& spec, const qla::ParamVector& theta, const qla::Matrix& inputs,
         const qla::Vector& targets, double prior_var, double noise_prec, int iterations,
         const std::string& scaling) {
        return qla::build_qla_posterior(spec, theta, qla::GaussianLikelihood(noise_prec), {prior_var}, inputs,
                                        targets, iterations, qla::scaling_mode_from_string(scaling))
            .posterior;
      },
      "spec"_a, "theta"_a, "inputs"_a, "targets"_a, "prior_var"_a, "noise_prec"_a,
      "iterations"_a = qla::kDefaultPowerIterations, "scaling"_a = "rayleigh");
  m.def(
      "predictive",
      [](const qla::LowRankPosterior& post, const qla::NetworkSpec& spec, const qla::Matrix& inputs,
         double noise_prec, bool with_noise) {
        return split_predictives(
            qla::glm_predictive_batch(post, spec, inputs, qla::GaussianLikelihood(noise_prec), with_noise));
      },
      "posterior"_a, "spec"_a, "inputs"_a, "noise_prec"_a, "with_noise"_a = true,
      "Predictive means and variances, one per input row.");

  m.def("log_marginal_likelihood",
        py::overload_cast<const qla::NetworkSpec&, const qla::ParamVector&, const qla::Matrix&,
                          const qla::Vector&, double, double>(&qla::log_marginal_likelihood),
        "spec"_a, "theta"_a, "inputs"_a, "targets"_a, "prior_var"_a, "noise_prec"_a);
  m.def(
      "fit_hyperparameters",
      [](const qla::NetworkSpec& spec, const qla::ParamVector& theta, const qla::Matrix& inputs,
         const qla::Vector& targets) {
        const qla::HyperFit f = qla::fit_hyperparameters(spec, theta, inputs, targets);
        return py::dict("prior_var"_a = f.prior_var, "noise_prec"_a = f.noise_prec,
                        "log_evidence"_a = f.log_evidence);
      },
      "spec"_a, "theta"_a, "inputs"_a, "targets"_a);

  m.def(
      "nll", [](double mean, double var, double y) { return qla::nll({mean, var, true}, y); }, "mean"_a,
      "var"_a, "y"_a);
  m.def(
      "crps", [](double mean, double var, double y) { return qla::crps({mean, var, true}, y); }, "mean"_a,
      "var"_a, "y"_a);

  m.def(
      "gap_split",
      [](const qla::Matrix& x, int dimension) {
        const qla::GapSplit s = qla::gap_split(as_dataset(x, qla::Vector::Zero(x.rows())), dimension);
        return py::make_tuple(s.train_indices, s.test_indices);
      },
      "inputs"_a, "dimension"_a, "Train and test row indices of the gap split along one input dimension.");
}
