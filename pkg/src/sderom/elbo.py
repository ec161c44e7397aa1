"""Solver-free stochastic objective for one trajectory window.

The evidence lower bound for a window never integrates the latent SDE.
The GP-interpolated posterior moments m(t), s(t) give a reparametrized
latent path z(t) = m(t) + sqrt(s(t)) * gamma with gamma ~ N(0, I) shared
across all times in the window, so dz/dt is available in closed form.
Substituting it into the SDE turns the path-space KL term into the time
integral of a weighted drift residual

    r(t) = B(t) (m(t) - z(t)) + dm/dt - psi(z(t), t),
    B_ii = (psi2_i - ds_i/dt) / (2 s_i),

with psi2 the diagonal of the dispersion covariance.  The integral is
estimated by Monte Carlo over uniform times in the window.  Observation
terms are decoder log-likelihoods at the window's snapshot times with the
same gamma draw, so one set of draws serves both terms.

Generative blocks with variational posteriors enter through a single
reparametrized draw per estimate; their KL against the block priors is
charged to each window at a 1/total_windows share so that summing the
per-window bounds recovers the full objective once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _ops, tape
from .data import Dataset, Trajectory, Window, interpolate_forcing, partition_trajectory
from .encdec import decoder_mean, gaussian_loglik_sum, kl_gaussian_diag
from .errors import NonFiniteError
from .kernel import build_window_posterior, interp_all
from .model import LatentSDEModel, ThetaTreatment, block_priors
from .nets import unpack_blocks
from .sde import dispersion_psi2, drift_apply, precision_C


@dataclass(frozen=True)
class SamplingConfig:
    """Monte Carlo sizes for one objective estimate."""

    n_latent_samples: int = 1
    n_time_samples: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n_latent_samples < 1:
            raise ValueError("need at least one latent sample")
        if self.n_time_samples < 1:
            raise ValueError("need at least one quadrature time")


@dataclass(frozen=True)
class FrozenDraws:
    """All randomness of one estimate, fixed up front.

    ``gamma`` is (R, d) standard normal, ``tau`` is (L,) uniform times in
    the window, ``xi`` maps each variational block name to a standard
    normal array of the block's shape.
    """

    gamma: np.ndarray
    tau: np.ndarray
    xi: dict


def make_draws(
    rng: np.random.Generator,
    sampling: SamplingConfig,
    d: int,
    t_start: float,
    t_end: float,
    treatment: ThetaTreatment,
    block_shapes: dict,
) -> FrozenDraws:
    gamma = rng.standard_normal((sampling.n_latent_samples, d))
    tau = rng.uniform(t_start, t_end, size=sampling.n_time_samples)
    xi = {b: rng.standard_normal(block_shapes[b]) for b in treatment.variational_blocks}
    return FrozenDraws(gamma=gamma, tau=tau, xi=xi)


def b_matrix_diag(s, ds, psi2):
    """Diagonal of the residual weighting matrix, (psi2 - ds) / (2 s).

    Accepts any broadcastable combination of arrays and nodes; ``s`` must
    be strictly positive.
    """
    s_val = _ops.value(s)
    if np.any(s_val <= 0.0):
        raise ValueError("latent variance must be strictly positive")
    return (psi2 - ds) / (2.0 * s)


def residual_from_moments(m, dm, s, ds, psi2, z, psi_z):
    """Drift residual given posterior moments and a drift evaluation.

    All arguments broadcast elementwise; rows are time points and columns
    latent components.
    """
    b = b_matrix_diag(s, ds, psi2)
    return b * (m - z) + dm - psi_z


def quadrature_penalty(residuals, log_diag, t_span: float):
    """Quadrature estimate of the integrated precision-weighted residual.

    ``residuals`` is (L, d); the estimate is
    ``t_span / (2 L) * sum_l ||r_l||^2_C`` with ``C = exp(-2 log_diag)``.
    """
    n_times = _ops.value(residuals).shape[0]
    prec = precision_C(log_diag)
    return (_ops.total(_ops.square(residuals) * prec) * t_span) / (2.0 * n_times)


def _as_rows(z, t, f_t, d: int, n_f: int):
    """Normalize (z, t, f_t) to row-batched arrays, remembering the shape."""
    z_arr = np.asarray(z, dtype=np.float64)
    single = z_arr.ndim == 1
    z_rows = z_arr.reshape(1, d) if single else z_arr
    t_rows = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if f_t is None:
        f_rows = np.zeros((z_rows.shape[0], n_f))
    else:
        f_arr = np.asarray(f_t, dtype=np.float64)
        f_rows = f_arr.reshape(1, -1) if f_arr.ndim <= 1 else f_arr
    return z_rows, t_rows, f_rows, single


def drift_residual(model: LatentSDEModel, wp, z, t, mu=None, f_t=None):
    """Reparametrized drift residual r = B (m - z) + dm/dt - psi(z, t).

    Evaluates the window posterior's moments at ``t`` and the model's
    drift at ``z`` with the currently stored parameter values.  ``z`` may
    be a single latent vector with scalar ``t`` or rows paired with a
    time vector; the result has the same leading shape as ``z``.
    """
    cfg = model.cfg
    z_rows, t_rows, f_rows, single = _as_rows(z, t, f_t, cfg.d, cfg.n_f)
    mu_arr = np.zeros(cfg.n_mu) if mu is None else np.asarray(mu, dtype=np.float64)
    m, _, s, dm, ds = interp_all(wp, t_rows)
    psi2 = dispersion_psi2(model.blocks["disp_logdiag"])
    psi = drift_apply(
        cfg.drift_cfg,
        model.blocks["drift_w"],
        z_rows,
        t_rows,
        mu_arr,
        f_rows,
        physics=model.physics,
    )
    res = _ops.value(residual_from_moments(m, dm, s, ds, psi2, z_rows, psi))
    return res[0] if single else res


def residual_penalty(model: LatentSDEModel, wp, z, t, mu=None, f_t=None) -> float:
    """Precision-weighted squared residual sum_i C_ii r_i^2 at (z, t)."""
    res = drift_residual(model, wp, z, t, mu=mu, f_t=f_t)
    prec = precision_C(model.blocks["disp_logdiag"])
    return float(np.sum(prec * np.square(res)))


def _check_finite(value, term: str, window: Window):
    if not np.all(np.isfinite(_ops.value(value))):
        raise NonFiniteError(
            f"{term} is not finite on window "
            f"(trajectory {window.trajectory_index}, index {window.window_index})"
        )


def _window_objective(
    model: LatentSDEModel,
    traj: Trajectory,
    window: Window,
    draws: FrozenDraws,
    treatment: ThetaTreatment,
    view: dict,
    total_windows: int,
):
    """Scalar objective (node-valued when the view holds leaves)."""
    encoder = model.encoder_bundle(view)
    kernel = model.kernel_bundle(view)
    wp = build_window_posterior(encoder, kernel, traj, window)

    node_times = wp.node_times
    n_nodes = node_times.shape[0]
    t_span = float(node_times[-1] - node_times[0])
    tau = np.asarray(draws.tau, dtype=np.float64)

    t_all = np.concatenate([node_times, tau])
    m, _, s, dm, ds = interp_all(wp, t_all)
    m_n, m_q = m[:n_nodes], m[n_nodes:]
    s_n, s_q = s[:n_nodes], s[n_nodes:]
    dm_q = dm[n_nodes:]
    ds_q = ds[n_nodes:]

    u_nodes = traj.states[window.sample_indices]
    f_tau = np.stack([interpolate_forcing(traj, float(t)) for t in tau])
    psi2 = dispersion_psi2(view["disp_logdiag"])

    sqrt_s_n = _ops.sqrt(s_n)
    sqrt_s_q = _ops.sqrt(s_q)
    loglik_sum = 0.0
    penalty_sum = 0.0
    n_draws = draws.gamma.shape[0]
    dec_cfg = model.cfg.decoder_cfg
    drift_cfg = model.cfg.drift_cfg
    for r in range(n_draws):
        gamma_r = draws.gamma[r]
        z_n = m_n + sqrt_s_n * gamma_r
        z_q = m_q + sqrt_s_q * gamma_r
        dec_mean = decoder_mean(dec_cfg, view["dec_w"], z_n)
        loglik_sum = loglik_sum + gaussian_loglik_sum(
            u_nodes, dec_mean, view["dec_logvar"]
        )
        psi = drift_apply(
            drift_cfg,
            view["drift_w"],
            z_q,
            tau,
            traj.params,
            f_tau,
            physics=model.physics,
        )
        res = residual_from_moments(m_q, dm_q, s_q, ds_q, psi2, z_q, psi)
        penalty_sum = penalty_sum + quadrature_penalty(
            res, view["disp_logdiag"], t_span
        )

    loglik_term = loglik_sum / float(n_draws)
    penalty_term = penalty_sum / float(n_draws)
    _check_finite(loglik_term, "decoder log-likelihood term", window)
    _check_finite(penalty_term, "drift residual penalty", window)

    out = loglik_term - penalty_term
    if treatment.variational_blocks:
        priors = block_priors(model.cfg)
        kl = 0.0
        for b in treatment.variational_blocks:
            p_mean, p_var = priors[b]
            kl = kl + kl_gaussian_diag(
                view[f"q_mean.{b}"],
                view[f"q_logvar.{b}"],
                p_mean,
                math.log(p_var),
            )
        _check_finite(kl, "variational KL term", window)
        out = out - kl / float(total_windows)
    return out


def elbo_window_estimate(
    model: LatentSDEModel,
    traj: Trajectory,
    window: Window,
    sampling: SamplingConfig,
    treatment: ThetaTreatment = None,
    *,
    total_windows: int = 1,
    draws: FrozenDraws = None,
    rng: np.random.Generator = None,
) -> float:
    """One Monte Carlo estimate of the window's bound, as a plain float."""
    treatment = treatment or model.treatment
    model.ensure_posterior(treatment)
    if draws is None:
        rng = rng or np.random.default_rng(sampling.seed)
        times = traj.times[window.sample_indices]
        draws = make_draws(
            rng,
            sampling,
            model.cfg.d,
            float(times[0]),
            float(times[-1]),
            treatment,
            {b: model.blocks[b].shape for b in treatment.variational_blocks},
        )
    view, _ = model.bind(treatment, xi=draws.xi, differentiable=False)
    out = _window_objective(model, traj, window, draws, treatment, view, total_windows)
    return float(_ops.value(out))


def gradient_for_window(
    model: LatentSDEModel,
    traj: Trajectory,
    window: Window,
    draws: FrozenDraws,
    treatment: ThetaTreatment,
    total_windows: int = 1,
):
    """(value, gradient dict) for fixed draws, via the reverse-mode tape."""
    view, leaves = model.bind(treatment, xi=draws.xi, differentiable=True)
    out = _window_objective(model, traj, window, draws, treatment, view, total_windows)
    if not isinstance(out, tape.Node) or not out.requires:
        raise RuntimeError("objective does not depend on any trainable block")
    tape.backward(out)
    grads = {}
    for name, leaf in leaves.items():
        grads[name] = (
            leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.value)
        )
    return float(out.value), grads


def window_objective_flat(
    model: LatentSDEModel,
    traj: Trajectory,
    window: Window,
    draws: FrozenDraws,
    treatment: ThetaTreatment,
    names,
    flat: np.ndarray,
    total_windows: int = 1,
) -> float:
    """Objective value at overridden parameters, for difference checks.

    ``flat`` packs the blocks listed in ``names`` (in that order); all
    other blocks keep their stored values.  Draws stay frozen, so this is
    the common-random-numbers view of the objective.
    """
    model.ensure_posterior(treatment)
    shapes = {n: model.blocks[n].shape for n in names}
    override = unpack_blocks(np.asarray(flat, dtype=np.float64), shapes, names)
    view, _ = model.bind(
        treatment, xi=draws.xi, differentiable=False, override=override
    )
    out = _window_objective(model, traj, window, draws, treatment, view, total_windows)
    return float(_ops.value(out))


@dataclass
class GradientEstimate:
    """One stochastic gradient of the training objective."""

    value: float
    gradient: dict
    window: Window
    draws: FrozenDraws


def all_windows(dataset: Dataset, window_size: int):
    """Every window of every trajectory, in trajectory order."""
    windows = []
    for i, traj in enumerate(dataset.trajectories):
        windows.extend(partition_trajectory(traj, window_size, trajectory_index=i))
    return windows


def elbo_gradient_estimate(
    model: LatentSDEModel,
    dataset: Dataset,
    sampling: SamplingConfig,
    treatment: ThetaTreatment,
    rng: np.random.Generator,
    window_size: int,
    windows=None,
) -> GradientEstimate:
    """Sample a window uniformly and return its bound and gradient.

    ``windows`` may be precomputed once by the caller; the estimate is
    unbiased for the sum over windows up to the constant factor
    ``len(windows)`` because windows are drawn uniformly.
    """
    model.ensure_posterior(treatment)
    if windows is None:
        windows = all_windows(dataset, window_size)
    if not windows:
        raise ValueError("dataset produced no training windows")
    pick = int(rng.integers(len(windows)))
    window = windows[pick]
    traj = dataset.trajectories[window.trajectory_index]
    times = traj.times[window.sample_indices]
    draws = make_draws(
        rng,
        sampling,
        model.cfg.d,
        float(times[0]),
        float(times[-1]),
        treatment,
        {b: model.blocks[b].shape for b in treatment.variational_blocks},
    )
    value, grads = gradient_for_window(
        model, traj, window, draws, treatment, total_windows=len(windows)
    )
    return GradientEstimate(value=value, gradient=grads, window=window, draws=draws)
