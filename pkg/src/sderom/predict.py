"""Sampling the learned SDE forward and scoring predictions.

Prediction is the only place the latent SDE is integrated.  An ensemble
of initial latents is drawn from the encoder applied to the first
snapshot, each member is marched by Euler-Maruyama with a substep size
chosen so every snapshot time is hit exactly, and the decoder turns
latent states into observable samples (decoder noise included).  Ensemble
mean and standard deviation summarize the predictive distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .container import write_container
from .data import Dataset, error_metric, interpolate_forcing
from .encdec import decoder_mean, encode_apply
from .errors import DivergedIntegrationError
from .model import LatentSDEModel
from .sde import drift_apply


def integrate_paths(
    drift: Callable,
    disp_sqrt: np.ndarray,
    z0: np.ndarray,
    t0: float,
    t1: float,
    dt: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Euler-Maruyama from t0 to t1 for a batch of paths; returns z(t1).

    ``drift(z, t)`` maps (n, d) states at a common time to (n, d) drifts;
    ``disp_sqrt`` is the (d,) diagonal of the dispersion matrix.  The step
    size is ``dt`` with the final step shortened to land on ``t1``.
    Raises :class:`DivergedIntegrationError` as soon as a state stops
    being finite.
    """
    z = np.array(z0, dtype=np.float64)
    span = t1 - t0
    if span <= 0.0:
        return z
    n_steps = max(1, int(np.ceil(span / dt - 1e-12)))
    t = t0
    for k in range(n_steps):
        h = dt if k < n_steps - 1 else t1 - t
        noise = rng.standard_normal(z.shape)
        z = z + drift(z, t) * h + disp_sqrt * np.sqrt(h) * noise
        t = t0 + (k + 1) * dt if k < n_steps - 1 else t1
        if not np.all(np.isfinite(z)):
            raise DivergedIntegrationError(
                f"latent state diverged at step {k + 1} (t = {t:.6g})"
            )
    return z


def model_drift(
    model: LatentSDEModel,
    values: dict,
    mu: np.ndarray,
    forcing=None,
) -> Callable:
    """Batched drift callable z, t -> psi(z, t; mu, f(t)) for the integrator."""
    cfg = model.cfg.drift_cfg
    mu = np.asarray(mu, dtype=np.float64).reshape(cfg.n_mu)

    def drift(z: np.ndarray, t: float) -> np.ndarray:
        n = z.shape[0]
        if cfg.n_f > 0:
            if forcing is None:
                raise ValueError("model expects forcing input but none was given")
            f_row = interpolate_forcing(forcing, float(t))
        else:
            f_row = np.zeros(0)
        f_rows = np.broadcast_to(f_row, (n, cfg.n_f))
        t_vec = np.full(n, float(t))
        return drift_apply(
            cfg, values["drift_w"], z, t_vec, mu, f_rows, physics=model.physics
        )

    return drift


@dataclass
class PredictionEnsemble:
    """Sampled forecasts at snapshot times.

    ``latent_paths`` is (n_samples, N, d); ``observed_mean`` and
    ``observed_std`` are (N, D).  ``std_valid`` is False for single-sample
    ensembles, whose standard deviation is reported as zeros.
    """

    times: np.ndarray
    latent_paths: np.ndarray
    observed_mean: np.ndarray
    observed_std: np.ndarray
    std_valid: bool

    @property
    def n_samples(self) -> int:
        return self.latent_paths.shape[0]


def predict_ensemble(
    model: LatentSDEModel,
    times: np.ndarray,
    u0: np.ndarray,
    mu: np.ndarray,
    forcing=None,
    n_samples: int = 8,
    dt: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> PredictionEnsemble:
    """Forecast from the first snapshot over the given time grid.

    The encoder supplies the initial latent distribution; each ensemble
    member draws its own initial latent and Brownian increments.  ``dt``
    defaults to a quarter of the median snapshot spacing.
    """
    rng = rng or np.random.default_rng(0)
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.shape[0] < 1:
        raise ValueError("need a 1-d grid of at least one time")
    if dt is None:
        if times.shape[0] < 2:
            raise ValueError("dt is required for a single-time grid")
        dt = float(np.median(np.diff(times))) / 4.0
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if n_samples < 1:
        raise ValueError("need at least one ensemble member")

    values = model.point_values()
    d, cfg = model.cfg.d, model.cfg
    enc_mean, enc_logvar = encode_apply(
        cfg.encoder_cfg,
        values["enc_w"],
        values.get("enc_logvar"),
        np.asarray(u0, dtype=np.float64).reshape(1, cfg.D),
        model.projection,
    )
    enc_mean = np.asarray(enc_mean).reshape(d)
    enc_std = np.exp(0.5 * np.asarray(enc_logvar).reshape(d))
    z = enc_mean + enc_std * rng.standard_normal((n_samples, d))

    drift = model_drift(model, values, mu, forcing)
    disp_sqrt = np.exp(values["disp_logdiag"])
    latent = np.empty((n_samples, times.shape[0], d))
    latent[:, 0, :] = z
    for j in range(times.shape[0] - 1):
        z = integrate_paths(drift, disp_sqrt, z, times[j], times[j + 1], dt, rng)
        latent[:, j + 1, :] = z

    dec_std = np.exp(0.5 * values["dec_logvar"])
    samples = np.empty((n_samples, times.shape[0], cfg.D))
    for i in range(n_samples):
        mean_i = decoder_mean(cfg.decoder_cfg, values["dec_w"], latent[i])
        samples[i] = mean_i + dec_std * rng.standard_normal(mean_i.shape)
    observed_mean = samples.mean(axis=0)
    if n_samples > 1:
        observed_std = samples.std(axis=0, ddof=1)
        std_valid = True
    else:
        observed_std = np.zeros_like(observed_mean)
        std_valid = False
    return PredictionEnsemble(
        times=times.copy(),
        latent_paths=latent,
        observed_mean=observed_mean,
        observed_std=observed_std,
        std_valid=std_valid,
    )


@dataclass
class TestSetScores:
    """Relative-error summary over a collection of trajectories.

    ``per_trajectory`` holds each trajectory's time-averaged error and
    ``eps_time`` the full error-versus-time curves behind those averages.
    """

    eps_mean: float
    eps_spread: float
    per_trajectory: list
    eps_time: list


def evaluate_testset(
    model: LatentSDEModel,
    dataset: Dataset,
    n_samples: int = 8,
    dt: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> TestSetScores:
    """Forecast every trajectory from its first snapshot and score it.

    The per-trajectory score is the time-average of the relative 2-norm
    error of the predictive mean; ``eps_mean`` averages those scores and
    ``eps_spread`` is their population standard deviation.
    """
    rng = rng or np.random.default_rng(0)
    per_traj = []
    eps_time = []
    for traj in dataset.trajectories:
        ens = predict_ensemble(
            model,
            traj.times,
            traj.states[0],
            traj.params,
            forcing=traj,
            n_samples=n_samples,
            dt=dt,
            rng=rng,
        )
        eps_rows = error_metric(traj.states, ens.observed_mean)
        per_traj.append(float(eps_rows.mean()))
        eps_time.append(eps_rows)
    eps = np.asarray(per_traj)
    return TestSetScores(
        eps_mean=float(eps.mean()),
        eps_spread=float(eps.std()),
        per_trajectory=per_traj,
        eps_time=eps_time,
    )


def write_predictions(
    path, ensembles, meta: Optional[dict] = None, eps_time=None
) -> None:
    """Persist a list of prediction ensembles to one container file.

    ``eps_time`` optionally pairs each ensemble with its error-versus-time
    curve, stored alongside the moments.
    """
    arrays = []
    for i, ens in enumerate(ensembles):
        arrays.append((f"pred{i}/times", ens.times))
        arrays.append((f"pred{i}/mean", ens.observed_mean))
        arrays.append((f"pred{i}/std", ens.observed_std))
        if eps_time is not None:
            arrays.append((f"pred{i}/eps", np.asarray(eps_time[i], dtype=np.float64)))
    full_meta = {
        "n_trajectories": len(ensembles),
        "n_samples": int(ensembles[0].n_samples) if ensembles else 0,
        "std_valid": bool(all(e.std_valid for e in ensembles)),
    }
    if meta:
        full_meta.update(meta)
    write_container(path, "predictions", full_meta, arrays)
