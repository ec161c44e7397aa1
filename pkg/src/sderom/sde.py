"""Latent SDE prior: drift parametrizations and the diagonal dispersion.

Drift kinds:

* ``mlp`` — network over (z, mu, f(t), time encoding); input width is
  d + N_mu + N_f + 2.
* ``polynomial`` — coefficient matrix over monomials of z alone, up to a
  given total degree, in graded-lexicographic order (for d=2, order 3:
  1, z1, z2, z1^2, z1*z2, z2^2, z1^3, z1^2*z2, z1*z2^2, z2^3).
* ``physics_plus_mlp`` — a user-supplied physics term plus an ``mlp``
  correction. The callback receives (z, t, mu, f_t) where ``z`` may be a
  batched array or an autodiff node; it must be written with plain
  arithmetic operators (+, -, *, @) so it works on both.

The dispersion is a constant diagonal, stored as log-magnitudes so it is
strictly positive by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import tape
from .nets import MLPConfig, init_mlp_params, mlp_apply, mlp_layers, positional_time_encoding

DRIFT_KINDS = ("mlp", "polynomial", "physics_plus_mlp")


def monomial_exponents(d: int, order: int):
    """Exponent tuples of all monomials with total degree <= order.

    Graded-lexicographic: ascending total degree, and within a degree the
    leading variable's exponent descends first.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"unsupported polynomial order {order}")

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total, -1, -1):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    out = []
    for total in range(order + 1):
        out.extend(compositions(total, d))
    return out


def n_monomials(d: int, order: int) -> int:
    return math.comb(d + order, order)


def polynomial_features(z, exponents):
    """Feature matrix of monomials; generic over ndarray / tape.Node.

    ``z`` is (n, d); the result is (n, n_features) with columns in the
    order of ``exponents``.
    """
    n = z.shape[0]
    columns = []
    for expo in exponents:
        col = None
        for dim, power in enumerate(expo):
            for _ in range(power):
                piece = z[:, dim : dim + 1]
                col = piece if col is None else col * piece
        if col is None:
            col = np.ones((n, 1))
        columns.append(col)
    if any(isinstance(c, tape.Node) for c in columns):
        return tape.concat(columns, axis=1)
    return np.concatenate(columns, axis=1)


@dataclass(frozen=True)
class DriftConfig:
    """Shape of the drift term; params live in a single flat block."""

    kind: str
    d: int
    n_mu: int
    n_f: int
    mlp: Optional[MLPConfig] = None
    poly_order: int = 3

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.kind in ("mlp", "physics_plus_mlp"):
            if self.mlp is None:
                raise ValueError(f"drift kind {self.kind!r} needs an MLPConfig")
            expected = self.d + self.n_mu + self.n_f + 2
            if self.mlp.in_width != expected:
                raise ValueError(
                    f"drift net input width {self.mlp.in_width} != "
                    f"d + N_mu + N_f + 2 = {expected}"
                )
            if self.mlp.out_width != self.d:
                raise ValueError("drift net must output d values")

    @property
    def n_params(self) -> int:
        if self.kind == "polynomial":
            return n_monomials(self.d, self.poly_order) * self.d
        return self.mlp.n_params

    def exponents(self):
        return monomial_exponents(self.d, self.poly_order)


def init_drift_params(cfg: DriftConfig, rng: np.random.Generator) -> np.ndarray:
    """Polynomial coefficients start at zero; networks use He init."""
    if cfg.kind == "polynomial":
        return np.zeros(cfg.n_params)
    return init_mlp_params(cfg.mlp, rng)


def drift_apply(
    cfg: DriftConfig,
    params,
    z,
    t: np.ndarray,
    mu: np.ndarray,
    f_t: np.ndarray,
    physics: Optional[Callable] = None,
):
    """Evaluate the drift on a batch; generic over ndarray / tape.Node ``z``.

    ``t`` is (n,), ``mu`` is (N_mu,), ``f_t`` is (n, N_f); the same time
    encoding and parameter rows are appended to every row of ``z`` for the
    network kinds.
    """
    n = z.shape[0]
    if cfg.kind == "polynomial":
        feats = polynomial_features(z, cfg.exponents())
        coeff = params.reshape(n_monomials(cfg.d, cfg.poly_order), cfg.d)
        return feats @ coeff

    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    enc = positional_time_encoding(t)
    mu_rows = np.broadcast_to(np.asarray(mu, dtype=np.float64), (n, cfg.n_mu))
    f_rows = np.asarray(f_t, dtype=np.float64).reshape(n, cfg.n_f)
    extras = np.concatenate([mu_rows, f_rows, enc.reshape(n, 2)], axis=1)
    layers = mlp_layers(cfg.mlp, params)
    if isinstance(z, tape.Node):
        x = tape.concat([z, extras], axis=1)
    else:
        x = np.concatenate([z, extras], axis=1)
    out = mlp_apply(layers, x)
    if cfg.kind == "physics_plus_mlp":
        if physics is None:
            raise ValueError("physics_plus_mlp drift needs a physics callback")
        out = physics(z, t, mu, f_t) + out
    return out


def drift_eval(
    cfg: DriftConfig,
    params: np.ndarray,
    z: np.ndarray,
    t: float,
    mu: np.ndarray,
    f_t: np.ndarray,
    physics: Optional[Callable] = None,
) -> np.ndarray:
    """Single-state convenience wrapper returning a (d,) vector."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (cfg.d,):
        raise ValueError(f"z has shape {z.shape}, expected ({cfg.d},)")
    out = drift_apply(
        cfg,
        np.asarray(params, dtype=np.float64),
        z.reshape(1, cfg.d),
        np.asarray([t], dtype=np.float64),
        mu,
        np.asarray(f_t, dtype=np.float64).reshape(1, cfg.n_f),
        physics=physics,
    )
    return np.asarray(out).reshape(cfg.d)


def dispersion_psi2(log_diag) -> np.ndarray:
    """Diagonal of Ψ Ψᵀ = exp(2·log_diag); generic over ndarray / Node."""
    if isinstance(log_diag, tape.Node):
        return tape.exp(2.0 * log_diag)
    return np.exp(2.0 * np.asarray(log_diag, dtype=np.float64))


def precision_C(log_diag) -> np.ndarray:
    """Diagonal of (Ψ Ψᵀ)^{-1} = exp(−2·log_diag); positive by construction."""
    if isinstance(log_diag, tape.Node):
        return tape.exp(-2.0 * log_diag)
    return np.exp(-2.0 * np.asarray(log_diag, dtype=np.float64))
