"""Synthetic benchmark datasets.

Three families, each returning (train, validation, test) splits drawn
from one seed sequence so splits never share trajectories but do share
the fixed observation maps:

* ``ou`` — a linear mean-reverting SDE in d latent dimensions observed
  through a fixed random linear map.  Sampled exactly (the transition is
  Gaussian), so it doubles as ground truth for integrator tests.
* ``oscillator`` — circular orbits z(t) = r (cos(wt+b), sin(wt+b)) at
  trajectory-specific radii, observed through a fixed tanh embedding.
  The radius spread matters: a single orbit leaves cubic terms of the
  form z_i (z1^2 + z2^2) indistinguishable from linear ones.
* ``burgers`` — viscous Burgers flow on x in [0, 1] with an oscillating
  left-boundary inflow, marched by an explicit scheme at a stability-safe
  internal step and subsampled onto the snapshot grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import Dataset, Trajectory
from .errors import DivergedIntegrationError, UnstableSolverError

GENERATOR_KINDS = ("ou", "oscillator", "burgers")


@dataclass(frozen=True)
class GeneratorSpec:
    """Sizes and physical ranges for one synthetic dataset."""

    kind: str
    n_train: int = 8
    n_val: int = 2
    n_test: int = 2
    seed: int = 0
    noise_std: float = 0.01

    ou_dim: int = 2
    ou_obs_dim: int = 8
    ou_n_samples: int = 64
    ou_t_final: float = 4.0
    ou_rate_range: tuple[float, float] = (0.5, 1.5)
    ou_noise: float = 0.1

    osc_obs_dim: int = 32
    osc_n_samples: int = 121
    osc_t_final: float = 6.0
    osc_omega: float = 1.0
    osc_radius_range: tuple[float, float] = (0.7, 1.3)

    bur_grid: int = 64
    bur_n_samples: int = 151
    bur_t_final: float = 3.0
    bur_nu_range: tuple[float, float] = (0.05, 0.1)
    bur_omega_range: tuple[float, float] = (0.8, 1.0)
    bur_alpha1: float = 5.0
    bur_alpha2: float = 0.001
    bur_cfl_safety: float = 0.5
    bur_substeps: int = 0

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        for name in ("n_train", "n_val", "n_test"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("ou_rate_range", "osc_radius_range", "bur_nu_range", "bur_omega_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


def _ou_trajectory(spec: GeneratorSpec, g_obs: np.ndarray, rng: np.random.Generator):
    d = spec.ou_dim
    times = np.linspace(0.0, spec.ou_t_final, spec.ou_n_samples)
    h = times[1] - times[0]
    a = rng.uniform(*spec.ou_rate_range)
    c = spec.ou_noise
    stat_var = c * c / (2.0 * a)
    decay = np.exp(-a * h)
    step_std = np.sqrt(stat_var * (1.0 - decay * decay))
    z = np.empty((spec.ou_n_samples, d))
    z[0] = np.sqrt(stat_var) * rng.standard_normal(d)
    for k in range(spec.ou_n_samples - 1):
        z[k + 1] = decay * z[k] + step_std * rng.standard_normal(d)
    u = z @ g_obs.T + spec.noise_std * rng.standard_normal((spec.ou_n_samples, spec.ou_obs_dim))
    forcing = np.zeros((spec.ou_n_samples, 1))
    return Trajectory(times=times, states=u, params=np.asarray([a]), forcing_samples=forcing)


def _oscillator_trajectory(spec: GeneratorSpec, w_obs: np.ndarray, rng: np.random.Generator):
    times = np.linspace(0.0, spec.osc_t_final, spec.osc_n_samples)
    radius = rng.uniform(*spec.osc_radius_range)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    angle = spec.osc_omega * times + phase
    z = radius * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    u = np.tanh(z @ w_obs.T)
    u = u + spec.noise_std * rng.standard_normal(u.shape)
    return Trajectory(
        times=times,
        states=u,
        params=np.zeros(0),
        forcing_samples=np.zeros((spec.osc_n_samples, 0)),
    )


def burgers_max_dt(nu: float, dx: float, v_max: float) -> float:
    """Stability bound for the explicit marcher: min of the diffusive and
    advective limits."""
    return min(dx * dx / (2.0 * nu), dx / max(v_max, 1e-12))


def burgers_march(
    v0: np.ndarray,
    nu: float,
    dx: float,
    dt: float,
    n_steps: int,
    bc_left: Callable[[float], float],
    t0: float = 0.0,
) -> np.ndarray:
    """Forward-Euler centered-difference march of viscous Burgers flow.

    Dirichlet boundaries are reapplied after every internal step: the
    left value follows ``bc_left(t)``, the right value is zero.  Raises
    :class:`UnstableSolverError` up front when ``dt`` exceeds the
    stability bound for the initial state, and
    :class:`DivergedIntegrationError` if the state still blows up.
    """
    v = np.array(v0, dtype=np.float64)
    v_scale = max(abs(float(bc_left(t0))), float(np.max(np.abs(v))))
    if dt > burgers_max_dt(nu, dx, v_scale):
        raise UnstableSolverError(
            f"dt = {dt:.3e} exceeds the explicit stability bound "
            f"{burgers_max_dt(nu, dx, v_scale):.3e}"
        )
    inv_dx2 = 1.0 / (dx * dx)
    inv_2dx = 0.5 / dx
    for k in range(n_steps):
        t_next = t0 + (k + 1) * dt
        lap = (v[2:] - 2.0 * v[1:-1] + v[:-2]) * inv_dx2
        adv = v[1:-1] * (v[2:] - v[:-2]) * inv_2dx
        v[1:-1] = v[1:-1] + dt * (nu * lap - adv)
        v[0] = bc_left(t_next)
        v[-1] = 0.0
        if not np.all(np.isfinite(v)):
            raise DivergedIntegrationError(
                f"Burgers state not finite after internal step {k + 1}"
            )
    return v


def _burgers_trajectory(spec: GeneratorSpec, rng: np.random.Generator):
    n_x = spec.bur_grid
    x = np.linspace(0.0, 1.0, n_x)
    dx = x[1] - x[0]
    times = np.linspace(0.0, spec.bur_t_final, spec.bur_n_samples)
    dt_snap = times[1] - times[0]
    nu = rng.uniform(*spec.bur_nu_range)
    omega = rng.uniform(*spec.bur_omega_range)
    alpha1 = spec.bur_alpha1

    def bc_left(t: float) -> float:
        return alpha1 * np.cos(2.0 * np.pi * omega * t)

    v = alpha1 * np.exp(-x * x / spec.bur_alpha2)
    v[0] = bc_left(0.0)
    v[-1] = 0.0

    if spec.bur_substeps > 0:
        n_sub = spec.bur_substeps
    else:
        dt_max = spec.bur_cfl_safety * burgers_max_dt(nu, dx, alpha1)
        n_sub = max(1, int(np.ceil(dt_snap / dt_max)))
    dt_int = dt_snap / n_sub

    states = np.empty((spec.bur_n_samples, n_x))
    states[0] = v
    for j in range(spec.bur_n_samples - 1):
        v = burgers_march(v, nu, dx, dt_int, n_sub, bc_left, t0=times[j])
        states[j + 1] = v
    if spec.noise_std > 0.0:
        states = states + spec.noise_std * rng.standard_normal(states.shape)
    forcing = bc_left(times).reshape(-1, 1)
    return Trajectory(
        times=times, states=states, params=np.asarray([nu]), forcing_samples=forcing
    )


def generate(spec: GeneratorSpec):
    """Build the (train, validation, test) datasets for one spec."""
    root = np.random.SeedSequence(spec.seed)
    fixture_ss, train_ss, val_ss, test_ss = root.spawn(4)
    fixture_rng = np.random.default_rng(fixture_ss)

    if spec.kind == "ou":
        obs = fixture_rng.standard_normal((spec.ou_obs_dim, spec.ou_dim))
        make = lambda rng: _ou_trajectory(spec, obs, rng)
    elif spec.kind == "oscillator":
        obs = fixture_rng.standard_normal((spec.osc_obs_dim, 2))
        make = lambda rng: _oscillator_trajectory(spec, obs, rng)
    else:
        make = lambda rng: _burgers_trajectory(spec, rng)

    def split(ss: np.random.SeedSequence, count: int, tag: str) -> Dataset:
        children = ss.spawn(count)
        trajs = tuple(make(np.random.default_rng(child)) for child in children)
        return Dataset(trajectories=trajs, split_tag=tag)

    return (
        split(train_ss, spec.n_train, "train"),
        split(val_ss, spec.n_val, "validation"),
        split(test_ss, spec.n_test, "test"),
    )
