"""Reduced-order modeling with latent stochastic differential equations.

Snapshots of a high-dimensional dynamical system are compressed by a
probabilistic encoder/decoder pair while a latent SDE learns the reduced
dynamics.  Training never integrates the SDE: posterior moments over each
window come from a deep-kernel interpolant, so the objective reduces to
decoder log-likelihoods plus a Monte Carlo quadrature of a drift
residual.  Prediction integrates the learned SDE forward and decodes an
ensemble.
"""

from .data import (
    Dataset,
    ForcingSignal,
    Trajectory,
    Window,
    error_metric,
    interpolate_forcing,
    partition_trajectory,
    read_dataset,
    write_dataset,
)
from .elbo import (
    SamplingConfig,
    b_matrix_diag,
    drift_residual,
    elbo_gradient_estimate,
    elbo_window_estimate,
    residual_from_moments,
    residual_penalty,
)
from .model import (
    LatentSDEModel,
    ModelConfig,
    ThetaTreatment,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from .predict import PredictionEnsemble, evaluate_testset, predict_ensemble
from .training import TrainConfig, TrainResult, train

__all__ = [
    "Dataset",
    "ForcingSignal",
    "Trajectory",
    "Window",
    "error_metric",
    "interpolate_forcing",
    "partition_trajectory",
    "read_dataset",
    "write_dataset",
    "SamplingConfig",
    "b_matrix_diag",
    "drift_residual",
    "elbo_gradient_estimate",
    "elbo_window_estimate",
    "residual_from_moments",
    "residual_penalty",
    "LatentSDEModel",
    "ModelConfig",
    "ThetaTreatment",
    "build_model",
    "load_checkpoint",
    "save_checkpoint",
    "PredictionEnsemble",
    "evaluate_testset",
    "predict_ensemble",
    "TrainConfig",
    "TrainResult",
    "train",
]

__version__ = "0.1.0"
