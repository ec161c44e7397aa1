"""Reference methods the latent-SDE model is compared against.

* POD projection plus sparse polynomial regression on the projected
  coefficients (derivatives from nonuniform finite-difference stencils,
  coefficients from sequentially thresholded least squares).
* Probabilistic neural ODE / SDE baselines: an encoder supplies the
  initial latent distribution, the latent path is unrolled through the
  integrator inside the autodiff tape, and a decoder scores snapshots.

Forcing signals are folded into the parameter vector through a POD
compression of the sampled forcing rows, so the baseline drift sees a
fixed-size input even for time-varying boundary conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _ops, tape
from .data import Dataset, Trajectory, error_metric
from .encdec import gaussian_loglik_sum, kl_gaussian_diag
from .errors import (
    DegenerateDensityError,
    DivergedIntegrationError,
    IllConditionedLibraryError,
    RankDeficientError,
)
from .nets import (
    MLPConfig,
    adam_init,
    adam_step,
    init_mlp_params,
    lr_schedule,
    mlp_apply,
    mlp_layers,
    pack_blocks,
    positional_time_encoding,
    unpack_blocks,
)
from .sde import monomial_exponents, polynomial_features


# ---------------------------------------------------------------------------
# POD


@dataclass
class PODBasis:
    """Centered orthonormal basis from an SVD of snapshot rows."""

    mean: np.ndarray
    modes: np.ndarray
    singular_values: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.modes.shape[1]


def pod_fit(snapshots: np.ndarray, n_modes: int) -> PODBasis:
    """Leading ``n_modes`` right singular vectors of the centered rows.

    Raises :class:`RankDeficientError` when the data cannot support the
    requested number of modes.
    """
    snapshots = np.asarray(snapshots, dtype=np.float64)
    if snapshots.ndim != 2:
        raise ValueError("snapshots must be (n, D)")
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    mean = snapshots.mean(axis=0)
    centered = snapshots - mean
    _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    tol = sing[0] * max(centered.shape) * np.finfo(np.float64).eps if sing.size else 0.0
    rank = int(np.sum(sing > tol))
    if n_modes > rank:
        raise RankDeficientError(
            f"requested {n_modes} modes but the snapshot matrix has rank {rank}"
        )
    return PODBasis(mean=mean, modes=vt[:n_modes].T.copy(), singular_values=sing[:n_modes].copy())


def pod_project(basis: PODBasis, u: np.ndarray) -> np.ndarray:
    return (np.asarray(u, dtype=np.float64) - basis.mean) @ basis.modes


def pod_reconstruct(basis: PODBasis, a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float64) @ basis.modes.T + basis.mean


# ---------------------------------------------------------------------------
# Derivatives and sparse regression


def numerical_time_derivative(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Second-order finite-difference d(values)/dt on a nonuniform grid.

    Interior points use the three-point stencil; endpoints use one-sided
    second-order stencils.  ``values`` is (N, k) with N >= 3.
    """
    t = np.asarray(times, dtype=np.float64)
    f = np.asarray(values, dtype=np.float64)
    if f.ndim != 2 or t.ndim != 1 or f.shape[0] != t.shape[0]:
        raise ValueError("need times (N,) and values (N, k)")
    n = t.shape[0]
    if n < 3:
        raise ValueError("need at least three samples for second-order stencils")
    out = np.empty_like(f)

    h1 = (t[1:-1] - t[:-2])[:, None]
    h2 = (t[2:] - t[1:-1])[:, None]
    out[1:-1] = (
        -h2 * h2 * f[:-2] + (h2 * h2 - h1 * h1) * f[1:-1] + h1 * h1 * f[2:]
    ) / (h1 * h2 * (h1 + h2))

    a, b = t[1] - t[0], t[2] - t[1]
    out[0] = (
        -(2.0 * a + b) / (a * (a + b)) * f[0]
        + (a + b) / (a * b) * f[1]
        - a / (b * (a + b)) * f[2]
    )
    a, b = t[-2] - t[-3], t[-1] - t[-2]
    out[-1] = (
        b / (a * (a + b)) * f[-3]
        - (a + b) / (a * b) * f[-2]
        + (2.0 * b + a) / (b * (a + b)) * f[-1]
    )
    return out


def stlsq_fit(
    features: np.ndarray,
    targets: np.ndarray,
    threshold: float,
    max_iter: int = 20,
) -> np.ndarray:
    """Sequentially thresholded least squares, one active set per target.

    Returns (p, k) coefficients.  Raises
    :class:`IllConditionedLibraryError` when an active sub-library is
    rank-deficient, since the fit is then not unique.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    n, p = features.shape
    coeffs = np.zeros((p, targets.shape[1]))
    for j in range(targets.shape[1]):
        active = np.ones(p, dtype=bool)
        sol = np.zeros(0)
        for _ in range(max_iter):
            if not active.any():
                break
            sol, _, rank, _ = np.linalg.lstsq(features[:, active], targets[:, j], rcond=None)
            if rank < int(active.sum()):
                raise IllConditionedLibraryError(
                    f"library columns are linearly dependent for target {j} "
                    f"({int(active.sum())} active, rank {rank})"
                )
            keep = np.abs(sol) >= threshold
            if keep.all():
                break
            new_active = active.copy()
            new_active[active] = keep
            if (new_active == active).all():
                break
            active = new_active
        if active.any():
            sol, _, rank, _ = np.linalg.lstsq(features[:, active], targets[:, j], rcond=None)
            if rank < int(active.sum()):
                raise IllConditionedLibraryError(
                    f"library columns are linearly dependent for target {j} "
                    f"({int(active.sum())} active, rank {rank})"
                )
            sol[np.abs(sol) < threshold] = 0.0
            coeffs[active, j] = sol
    return coeffs


# ---------------------------------------------------------------------------
# Latent unrolling shared by the neural baselines


def unroll_latent(
    mlp_cfg: MLPConfig,
    drift_params,
    z0,
    times: np.ndarray,
    inputs: np.ndarray,
    scheme: str = "rk4",
    disp_sqrt=None,
    noises: Optional[np.ndarray] = None,
):
    """March latent rows along ``times``; returns a list of (n, d) states.

    ``inputs`` is the per-trajectory conditioning vector appended to every
    drift evaluation alongside the time encoding.  ``scheme`` is ``rk4``,
    ``euler``, or ``em``; the Euler-Maruyama scheme needs ``disp_sqrt``
    (d,) and pre-drawn standard normal ``noises`` (n_steps, n, d), and
    reduces to the Euler scheme when the dispersion is zero.  Works on
    plain arrays and on tape nodes alike.
    """
    if scheme not in ("rk4", "euler", "em"):
        raise ValueError(f"unknown scheme {scheme!r}")
    times = np.asarray(times, dtype=np.float64)
    n = _ops.value(z0).shape[0]
    inputs = np.asarray(inputs, dtype=np.float64)
    input_rows = np.broadcast_to(inputs, (n, inputs.shape[0]))

    def f(z, t: float):
        enc = positional_time_encoding(np.full(n, t))
        extras = np.concatenate([input_rows, enc], axis=1)
        x = _ops.concat([z, extras], axis=1)
        return mlp_apply(mlp_layers(mlp_cfg, drift_params), x)

    states = [z0]
    z = z0
    for k in range(times.shape[0] - 1):
        t, h = float(times[k]), float(times[k + 1] - times[k])
        if scheme == "rk4":
            k1 = f(z, t)
            k2 = f(z + (0.5 * h) * k1, t + 0.5 * h)
            k3 = f(z + (0.5 * h) * k2, t + 0.5 * h)
            k4 = f(z + h * k3, t + h)
            z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        elif scheme == "euler":
            z = z + h * f(z, t)
        else:
            if disp_sqrt is None or noises is None:
                raise ValueError("em scheme needs disp_sqrt and noises")
            z = z + h * f(z, t) + (math.sqrt(h) * noises[k]) * disp_sqrt
        if not np.all(np.isfinite(_ops.value(z))):
            raise DivergedIntegrationError(f"latent state diverged at step {k + 1}")
        states.append(z)
    return states


def pnsde_em_loglik(
    times: np.ndarray,
    z_path: np.ndarray,
    drifts: np.ndarray,
    disp_diag: np.ndarray,
) -> float:
    """Euler-Maruyama transition log-likelihood of a latent path.

    ``drifts`` holds the drift at the left endpoint of each interval,
    (N-1, d); the transition is Gaussian with mean z_k + drift_k dt_k and
    variance disp_diag^2 dt_k per component.  Raises
    :class:`DegenerateDensityError` when any dispersion entry is zero.
    """
    times = np.asarray(times, dtype=np.float64)
    z_path = np.asarray(z_path, dtype=np.float64)
    drifts = np.asarray(drifts, dtype=np.float64)
    disp_diag = np.asarray(disp_diag, dtype=np.float64)
    if np.any(disp_diag == 0.0):
        raise DegenerateDensityError("zero dispersion entry; transition density undefined")
    dt = np.diff(times)[:, None]
    if np.any(dt <= 0.0):
        raise ValueError("times must be strictly increasing")
    resid = z_path[1:] - z_path[:-1] - drifts * dt
    var = (disp_diag * disp_diag) * dt
    return float(
        -0.5 * np.sum(resid * resid / var + np.log(2.0 * np.pi * var))
    )


# ---------------------------------------------------------------------------
# Forcing folding


@dataclass
class FoldingMap:
    """POD compression of sampled forcing rows into a few coefficients."""

    basis: Optional[PODBasis]
    n_components: int
    n_times: int
    n_f: int

    def apply(self, traj: Trajectory) -> np.ndarray:
        if self.basis is None:
            return np.zeros(0)
        flat = traj.forcing_samples.ravel()
        if flat.shape[0] != self.n_times * self.n_f:
            raise ValueError(
                "forcing layout differs from the one the folding map was fit on"
            )
        return pod_project(self.basis, flat[None, :]).reshape(-1)


def fold_forcing_fit(dataset: Dataset, n_components: int = 6) -> FoldingMap:
    """Fit the forcing compression on a training set.

    Trajectories must share one time grid length; the component count is
    clamped to the rank of the stacked forcing rows.
    """
    n_times = dataset.trajectories[0].n_samples
    if dataset.n_f == 0:
        return FoldingMap(basis=None, n_components=0, n_times=n_times, n_f=0)
    lengths = {traj.n_samples for traj in dataset.trajectories}
    if len(lengths) != 1:
        raise ValueError("forcing folding needs equal-length trajectories")
    rows = np.stack([traj.forcing_samples.ravel() for traj in dataset.trajectories])
    centered = rows - rows.mean(axis=0)
    # Rank relative to the forcing magnitude, not to the centered rows
    # themselves: mean subtraction leaves one-ulp residue on constant rows,
    # which must not count as a component.
    tol = max(float(np.abs(rows).max()), 1.0) * max(centered.shape) * np.finfo(np.float64).eps
    rank = int(np.linalg.matrix_rank(centered, tol=tol)) if rows.shape[0] > 1 else 0
    r = min(n_components, rank)
    if r == 0:
        return FoldingMap(basis=None, n_components=0, n_times=n_times, n_f=dataset.n_f)
    basis = pod_fit(rows, r)
    return FoldingMap(basis=basis, n_components=r, n_times=n_times, n_f=dataset.n_f)


def folded_inputs(traj: Trajectory, folding: FoldingMap) -> np.ndarray:
    """Trajectory parameters with the folded forcing appended."""
    return np.concatenate([traj.params, folding.apply(traj)])


# ---------------------------------------------------------------------------
# Probabilistic neural ODE / SDE baselines


@dataclass(frozen=True)
class BaselineConfig:
    """Architecture of a pnode/pnsde baseline."""

    kind: str
    d: int
    D: int
    n_inputs: int = 0
    encoder_hidden: tuple[int, ...] = (64,)
    decoder_hidden: tuple[int, ...] = (64,)
    drift_hidden: tuple[int, ...] = (64, 64)
    enc_logvar_init: float = math.log(1e-2)
    dec_logvar_init: float = math.log(1e-2)
    disp_logdiag_init: float = math.log(1e-1)

    def __post_init__(self):
        if self.kind not in ("pnode", "pnsde"):
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        for name in ("encoder_hidden", "decoder_hidden", "drift_hidden"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def encoder_mlp(self) -> MLPConfig:
        return MLPConfig((self.D, *self.encoder_hidden, self.d))

    @property
    def decoder_mlp(self) -> MLPConfig:
        return MLPConfig((self.d, *self.decoder_hidden, self.D))

    @property
    def drift_mlp(self) -> MLPConfig:
        return MLPConfig((self.d + self.n_inputs + 2, *self.drift_hidden, self.d))


@dataclass
class BaselineModel:
    cfg: BaselineConfig
    blocks: dict
    folding: FoldingMap

    def block_names(self) -> tuple:
        names = ["enc_w", "enc_logvar", "dec_w", "dec_logvar", "drift_w"]
        if self.cfg.kind == "pnsde":
            names.append("disp_logdiag")
        return tuple(names)


def build_baseline(cfg: BaselineConfig, folding: FoldingMap, seed: int = 0) -> BaselineModel:
    rng = np.random.default_rng(seed)
    blocks = {
        "enc_w": init_mlp_params(cfg.encoder_mlp, rng),
        "dec_w": init_mlp_params(cfg.decoder_mlp, rng),
        "drift_w": init_mlp_params(cfg.drift_mlp, rng),
        "enc_logvar": np.full(cfg.d, cfg.enc_logvar_init),
        "dec_logvar": np.full(cfg.D, cfg.dec_logvar_init),
    }
    if cfg.kind == "pnsde":
        blocks["disp_logdiag"] = np.full(cfg.d, cfg.disp_logdiag_init)
    return BaselineModel(cfg=cfg, blocks=blocks, folding=folding)


def _baseline_objective(model: BaselineModel, traj: Trajectory, view: dict, rng):
    """Single-trajectory evidence bound (node-valued when view holds leaves)."""
    cfg = model.cfg
    u = traj.states
    inputs = folded_inputs(traj, model.folding)
    u0 = u[0].reshape(1, cfg.D)
    mean0 = mlp_apply(mlp_layers(cfg.encoder_mlp, view["enc_w"]), u0)
    eta0 = rng.standard_normal((1, cfg.d))
    z0 = mean0 + _ops.exp(0.5 * view["enc_logvar"]) * eta0
    if cfg.kind == "pnsde":
        disp_sqrt = _ops.exp(view["disp_logdiag"])
        noises = rng.standard_normal((traj.n_samples - 1, 1, cfg.d))
        states = unroll_latent(
            cfg.drift_mlp, view["drift_w"], z0, traj.times, inputs,
            scheme="em", disp_sqrt=disp_sqrt, noises=noises,
        )
    else:
        states = unroll_latent(
            cfg.drift_mlp, view["drift_w"], z0, traj.times, inputs, scheme="rk4"
        )
    z_all = _ops.concat(states, axis=0)
    dec_mean = mlp_apply(mlp_layers(cfg.decoder_mlp, view["dec_w"]), z_all)
    loglik = gaussian_loglik_sum(u, dec_mean, view["dec_logvar"])
    kl = kl_gaussian_diag(mean0, view["enc_logvar"], 0.0, 0.0)
    return loglik - kl


@dataclass(frozen=True)
class BaselineTrainConfig:
    steps: int = 500
    lr0: float = 1e-3
    lr_decay: float = 0.9
    lr_decay_every: int = 2000
    seed: int = 0


def pnode_pnsde_train(
    model: BaselineModel, dataset: Dataset, tcfg: BaselineTrainConfig
) -> list:
    """Optimize the baseline in place; returns the per-step value log."""
    rng = np.random.default_rng(tcfg.seed)
    names = model.block_names()
    shapes = {n: model.blocks[n].shape for n in names}
    flat = pack_blocks(model.blocks, names)
    adam = adam_init(flat.shape[0])
    log = []
    for step in range(tcfg.steps):
        traj = dataset.trajectories[int(rng.integers(len(dataset.trajectories)))]
        leaves = {n: tape.leaf(arr) for n, arr in unpack_blocks(flat, shapes, names).items()}
        out = _baseline_objective(model, traj, leaves, rng)
        tape.backward(out)
        grad = pack_blocks(
            {n: (leaves[n].grad if leaves[n].grad is not None else np.zeros(shapes[n]))
             for n in names},
            names,
        )
        lr = lr_schedule(step, tcfg.lr0, tcfg.lr_decay, tcfg.lr_decay_every)
        flat = adam_step(flat, -grad, adam, lr)
        log.append(float(out.value))
    for n, arr in unpack_blocks(flat, shapes, names).items():
        model.blocks[n] = arr
    return log


def baseline_predict(
    model: BaselineModel,
    traj: Trajectory,
    n_samples: int = 8,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Predictive mean over an initial-latent (and Brownian) ensemble."""
    rng = rng or np.random.default_rng(0)
    cfg = model.cfg
    b = model.blocks
    inputs = folded_inputs(traj, model.folding)
    u0 = traj.states[0].reshape(1, cfg.D)
    mean0 = mlp_apply(mlp_layers(cfg.encoder_mlp, b["enc_w"]), u0).reshape(cfg.d)
    std0 = np.exp(0.5 * b["enc_logvar"])
    z0 = mean0 + std0 * rng.standard_normal((n_samples, cfg.d))
    if cfg.kind == "pnsde":
        noises = rng.standard_normal((traj.n_samples - 1, n_samples, cfg.d))
        states = unroll_latent(
            cfg.drift_mlp, b["drift_w"], z0, traj.times, inputs,
            scheme="em", disp_sqrt=np.exp(b["disp_logdiag"]), noises=noises,
        )
    else:
        states = unroll_latent(
            cfg.drift_mlp, b["drift_w"], z0, traj.times, inputs, scheme="rk4"
        )
    dec_layers = mlp_layers(cfg.decoder_mlp, b["dec_w"])
    pred = np.zeros((traj.n_samples, cfg.D))
    for k, z in enumerate(states):
        pred[k] = np.asarray(mlp_apply(dec_layers, z)).mean(axis=0)
    return pred


def baseline_eval(
    model: BaselineModel,
    dataset: Dataset,
    n_samples: int = 8,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Mean over trajectories of the time-averaged relative error."""
    rng = rng or np.random.default_rng(0)
    scores = []
    for traj in dataset.trajectories:
        try:
            pred = baseline_predict(model, traj, n_samples=n_samples, rng=rng)
        except DivergedIntegrationError:
            scores.append(float("inf"))
            continue
        if not np.all(np.isfinite(pred)):
            scores.append(float("inf"))
            continue
        scores.append(float(error_metric(traj.states, pred).mean()))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# POD + sparse regression pipeline


@dataclass
class PODSINDyModel:
    """POD basis plus a sparse polynomial vector field on its coefficients."""

    basis: PODBasis
    exponents: tuple
    coeffs: np.ndarray
    poly_order: int
    n_mu: int
    n_f: int

    def rhs(self, a_rows: np.ndarray, mu: np.ndarray, f_t: np.ndarray) -> np.ndarray:
        feats = _library(a_rows, mu, f_t, self.exponents)
        return feats @ self.coeffs


def _library(a_rows: np.ndarray, mu: np.ndarray, f_t: np.ndarray, exponents) -> np.ndarray:
    """Polynomial features of the coefficients, alone and scaled by each
    parameter/forcing channel."""
    a_rows = np.atleast_2d(np.asarray(a_rows, dtype=np.float64))
    n = a_rows.shape[0]
    poly = polynomial_features(a_rows, exponents)
    channels = [np.ones((n, 1))]
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    if mu.size:
        channels.append(np.broadcast_to(mu, (n, mu.size)))
    f_t = np.asarray(f_t, dtype=np.float64)
    if f_t.ndim == 1:
        f_t = np.broadcast_to(f_t.reshape(1, -1), (n, f_t.shape[0]))
    if f_t.shape[1]:
        channels.append(f_t)
    chan = np.concatenate(channels, axis=1)
    return np.concatenate([poly * chan[:, j : j + 1] for j in range(chan.shape[1])], axis=1)


def pod_sindy_fit(
    dataset: Dataset,
    n_modes: int,
    threshold: float,
    poly_order: int = 2,
) -> PODSINDyModel:
    """Fit the POD basis on all snapshots, then regress coefficient
    derivatives on the polynomial library."""
    all_states = np.concatenate([traj.states for traj in dataset.trajectories], axis=0)
    basis = pod_fit(all_states, n_modes)
    exponents = monomial_exponents(n_modes, poly_order)
    feat_rows, target_rows = [], []
    for traj in dataset.trajectories:
        a = pod_project(basis, traj.states)
        da = numerical_time_derivative(traj.times, a)
        feat_rows.append(_library(a, traj.params, traj.forcing_samples, exponents))
        target_rows.append(da)
    coeffs = stlsq_fit(
        np.concatenate(feat_rows, axis=0),
        np.concatenate(target_rows, axis=0),
        threshold,
    )
    return PODSINDyModel(
        basis=basis,
        exponents=exponents,
        coeffs=coeffs,
        poly_order=poly_order,
        n_mu=dataset.n_mu,
        n_f=dataset.n_f,
    )


def pod_sindy_predict(
    model: PODSINDyModel, traj: Trajectory, substeps: int = 4
) -> np.ndarray:
    """Integrate the fitted vector field from the projected initial state."""
    from .data import interpolate_forcing

    a = pod_project(model.basis, traj.states[0][None, :])
    out = np.empty((traj.n_samples, model.basis.n_modes))
    out[0] = a[0]
    # Divergence is detected explicitly below, so the transient overflow a
    # blowing-up state produces inside the feature products is expected.
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(traj.n_samples - 1):
            t0, t1 = float(traj.times[k]), float(traj.times[k + 1])
            h = (t1 - t0) / substeps
            t = t0
            for _ in range(substeps):
                def f(state, tt):
                    return model.rhs(state, traj.params, interpolate_forcing(traj, tt))

                k1 = f(a, t)
                k2 = f(a + 0.5 * h * k1, t + 0.5 * h)
                k3 = f(a + 0.5 * h * k2, t + 0.5 * h)
                k4 = f(a + h * k3, t + h)
                a = a + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                t += h
                if not np.all(np.isfinite(a)):
                    raise DivergedIntegrationError(
                        f"projected state diverged between samples {k} and {k + 1}"
                    )
            out[k + 1] = a[0]
    return pod_reconstruct(model.basis, out)


def pod_sindy_eval(model: PODSINDyModel, dataset: Dataset) -> float:
    """Mean time-averaged relative error; divergence scores as inf."""
    scores = []
    for traj in dataset.trajectories:
        try:
            pred = pod_sindy_predict(model, traj)
        except DivergedIntegrationError:
            scores.append(float("inf"))
            continue
        if not np.all(np.isfinite(pred)):
            scores.append(float("inf"))
            continue
        scores.append(float(error_metric(traj.states, pred).mean()))
    return float(np.mean(scores))


def pod_sindy_grid(
    train_set: Dataset,
    val_set: Dataset,
    n_modes_list,
    thresholds,
    poly_orders=(2,),
):
    """Grid search scored on validation error.

    Returns ``(best, rows)`` where each row is a dict with keys n_modes,
    poly_order, threshold, val_eps; ``best`` is the winning row with the
    fitted model added under "model" (None when nothing fit).  Fits that
    fail (rank deficiency, dependent library columns, divergence) score
    inf.
    """
    rows = []
    best = None
    best_eps = float("inf")
    for n_modes in n_modes_list:
        for order in poly_orders:
            for threshold in thresholds:
                try:
                    model = pod_sindy_fit(train_set, n_modes, threshold, order)
                    eps = pod_sindy_eval(model, val_set)
                except (RankDeficientError, IllConditionedLibraryError):
                    model, eps = None, float("inf")
                row = {
                    "n_modes": n_modes,
                    "poly_order": order,
                    "threshold": threshold,
                    "val_eps": eps,
                }
                rows.append(row)
                if model is not None and eps < best_eps:
                    best, best_eps = dict(row, model=model), eps
    return best, rows
