"""Probabilistic encoder and decoder with diagonal Gaussian heads.

The encoder maps a QoI snapshot to the latent mean and log-variance; its
mean network optionally sees a fixed linear projection of the snapshot
instead of the raw vector (useful when D is large).  The decoder maps a
latent state to the QoI mean; its log-variance is a direct parameter
vector, constant in z, optionally carrying a Gaussian prior on the
log-variance (a log-normal prior on the variance).

Functions here are generic over plain arrays and autodiff nodes wherever
training needs gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tape
from ._ops import exp as _exp, square as _square, total as _sum
from .nets import MLPConfig, mlp_apply, mlp_layers

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class EncoderConfig:
    """Mean network plus the log-variance convention.

    ``logvar_mode``:
      * ``direct`` — log s_z is a free (d,) parameter block, constant in u;
        the mean network outputs d values.
      * ``head`` — the mean network outputs 2d values, split into mean and
        log-variance per input.

    ``pod_components > 0`` prepends a fixed (frozen) linear projection; the
    network input width must then equal that count.
    """

    mean_mlp: MLPConfig
    d: int
    D: int
    logvar_mode: str = "direct"
    pod_components: int = 0

    def __post_init__(self):
        if self.logvar_mode not in ("direct", "head"):
            raise ValueError(f"unknown logvar mode {self.logvar_mode!r}")
        expected_in = self.pod_components if self.pod_components > 0 else self.D
        if self.mean_mlp.in_width != expected_in:
            raise ValueError(
                f"encoder input width {self.mean_mlp.in_width} != {expected_in}"
            )
        expected_out = 2 * self.d if self.logvar_mode == "head" else self.d
        if self.mean_mlp.out_width != expected_out:
            raise ValueError(
                f"encoder output width {self.mean_mlp.out_width} != {expected_out}"
            )


@dataclass(frozen=True)
class DecoderConfig:
    mean_mlp: MLPConfig
    d: int
    D: int

    def __post_init__(self):
        if self.mean_mlp.in_width != self.d or self.mean_mlp.out_width != self.D:
            raise ValueError("decoder network must map d to D")


@dataclass(frozen=True)
class LogVarPrior:
    """Gaussian prior on a log-variance block (log-normal on the variance)."""

    mean: float = math.log(1e-2)
    var: float = 1.0

    def __post_init__(self):
        if self.var <= 0:
            raise ValueError("prior variance must be positive")


def encode_apply(
    cfg: EncoderConfig,
    mean_params,
    logvar_param,
    u: np.ndarray,
    projection: Optional[tuple] = None,
):
    """Batched encode; returns (m_z, log_s_z), each (n, d).

    ``u`` is a constant (n, D) array; ``mean_params`` / ``logvar_param``
    may be autodiff nodes.  ``projection`` is an optional
    ``(mean_snapshot, modes)`` pair applied as ``(u - mean) @ modes``.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = u.reshape(1, -1)
    if u.shape[1] != cfg.D:
        raise ValueError(f"snapshot width {u.shape[1]} != D = {cfg.D}")
    x = u
    if cfg.pod_components > 0:
        if projection is None:
            raise ValueError("encoder configured with POD projection but none given")
        mean_snapshot, modes = projection
        x = (u - mean_snapshot) @ modes[:, : cfg.pod_components]
    out = mlp_apply(mlp_layers(cfg.mean_mlp, mean_params), x)
    if cfg.logvar_mode == "head":
        m = out[:, : cfg.d]
        logvar = out[:, cfg.d :]
        return m, logvar
    n = u.shape[0]
    if isinstance(logvar_param, tape.Node) or isinstance(out, tape.Node):
        ones = np.ones((n, 1))
        logvar = ones @ tape.reshape(tape.as_node(logvar_param), (1, cfg.d))
    else:
        logvar = np.broadcast_to(logvar_param, (n, cfg.d)).copy()
    return out, logvar


def encode(
    cfg: EncoderConfig,
    mean_params: np.ndarray,
    logvar_param: np.ndarray,
    u: np.ndarray,
    projection: Optional[tuple] = None,
):
    """Single-snapshot encode; returns (m_z (d,), log_s_z (d,))."""
    m, logvar = encode_apply(cfg, mean_params, logvar_param, u, projection)
    return np.asarray(m).reshape(cfg.d), np.asarray(logvar).reshape(cfg.d)


def decoder_mean(cfg: DecoderConfig, mean_params, z):
    """Batched decoder mean (n, D); generic over arrays and nodes."""
    return mlp_apply(mlp_layers(cfg.mean_mlp, mean_params), z)


def gaussian_loglik_sum(x: np.ndarray, mean, logvar):
    """Σ over rows of diagonal-Gaussian log-densities.

    ``x`` is constant (n, k); ``mean`` is (n, k); ``logvar`` is (k,) or
    (n, k), broadcast across rows when 1-d.
    """
    x = np.asarray(x, dtype=np.float64)
    n, k = x.shape
    quad = _sum(_square(x - mean) * _exp(-1.0 * logvar))
    logdet = _sum(logvar)
    if logvar.shape == (k,):
        logdet = float(n) * logdet
    return -0.5 * (quad + logdet + n * k * LOG_2PI)


def decoder_loglik(
    cfg: DecoderConfig,
    mean_params,
    logvar_param,
    u: np.ndarray,
    z,
) -> float:
    """log p(u | z) for a single snapshot under the diagonal Gaussian head."""
    u = np.asarray(u, dtype=np.float64).reshape(1, cfg.D)
    if isinstance(z, np.ndarray):
        z = z.reshape(1, cfg.d)
    mean = decoder_mean(cfg, mean_params, z)
    out = gaussian_loglik_sum(u, mean, logvar_param)
    return out if isinstance(out, tape.Node) else float(out)


def kl_gaussian_diag(q_mean, q_logvar, p_mean, p_logvar):
    """KL(N(q) ‖ N(p)) for diagonal Gaussians, summed over components."""
    diff = q_mean - p_mean
    return 0.5 * _sum(
        _exp(q_logvar - p_logvar)
        + _square(diff) * _exp(-1.0 * p_logvar)
        - 1.0
        + p_logvar
        - q_logvar
    )


@dataclass
class Encoder:
    """Evaluation-time bundle: config plus (possibly node-valued) parameters."""

    cfg: EncoderConfig
    mean_params: object
    logvar_param: object = None
    projection: Optional[tuple] = None

    def apply(self, u: np.ndarray):
        return encode_apply(
            self.cfg, self.mean_params, self.logvar_param, u, self.projection
        )


def sample_decoder(
    cfg: DecoderConfig,
    mean_params: np.ndarray,
    logvar_param: np.ndarray,
    z: np.ndarray,
    noise: np.ndarray,
) -> np.ndarray:
    """m_u(z) + sqrt(s_u) ⊙ noise, with standard-normal noise."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z.reshape(1, cfg.d)
    mean = decoder_mean(cfg, mean_params, z)
    out = mean + np.exp(0.5 * np.asarray(logvar_param)) * np.asarray(noise)
    return out.reshape(cfg.D) if single else out
