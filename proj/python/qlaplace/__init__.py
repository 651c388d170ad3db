"""Linearized (LLA) and quadratic (QLA) Laplace approximations for MLP regression."""

from ._core import (
    LowRankPosterior,
    NetworkSpec,
    crps,
    fit_hyperparameters,
    forward,
    gap_split,
    hvp,
    init_params,
    jacobian,
    lla_posterior,
    log_marginal_likelihood,
    nll,
    predict,
    predictive,
    qla_posterior,
    train_map,
)

__all__ = [
    "LowRankPosterior",
    "NetworkSpec",
    "crps",
    "fit_hyperparameters",
    "forward",
    "gap_split",
    "hvp",
    "init_params",
    "jacobian",
    "lla_posterior",
    "log_marginal_likelihood",
    "nll",
    "predict",
    "predictive",
    "qla_posterior",
    "train_map",
]
