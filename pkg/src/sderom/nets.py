"""Feedforward networks on flat parameter vectors, Adam, LR schedule.

All parameters live in flat float64 vectors with a deterministic layout:
for each layer, the weight matrix in row-major order, then the bias.  The
same splitting code works on plain arrays and on autodiff nodes, so forward
passes are generic over both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tape
from .errors import NonFiniteError


@dataclass(frozen=True)
class MLPConfig:
    """Widths of an affine/ReLU stack; ``(in, out)`` alone is a linear map."""

    layer_widths: tuple[int, ...]
    activation: str = "relu"
    input_has_time_encoding: bool = False

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise ValueError("layer_widths needs at least input and output")
        if any(w <= 0 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation: {self.activation!r}")

    @property
    def in_width(self) -> int:
        return self.layer_widths[0]

    @property
    def out_width(self) -> int:
        return self.layer_widths[-1]

    def layer_pairs(self):
        return list(zip(self.layer_widths[:-1], self.layer_widths[1:]))

    @property
    def n_params(self) -> int:
        return sum((n_in + 1) * n_out for n_in, n_out in self.layer_pairs())


def init_mlp_params(cfg: MLPConfig, rng: np.random.Generator) -> np.ndarray:
    """He-scaled Gaussian weights, zero biases, flattened layer by layer."""
    chunks = []
    for n_in, n_out in cfg.layer_pairs():
        w = rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out))
        chunks.append(w.ravel())
        chunks.append(np.zeros(n_out))
    return np.concatenate(chunks)


def mlp_layers(cfg: MLPConfig, params):
    """Split a flat vector (ndarray or tape.Node) into (W, b) pairs."""
    n = params.shape[0]
    if n != cfg.n_params:
        raise ValueError(f"expected {cfg.n_params} parameters, got {n}")
    out = []
    off = 0
    for n_in, n_out in cfg.layer_pairs():
        w = params[off : off + n_in * n_out].reshape(n_in, n_out)
        off += n_in * n_out
        b = params[off : off + n_out]
        off += n_out
        out.append((w, b))
    return out


def _relu(h):
    if isinstance(h, tape.Node):
        return tape.relu(h)
    return np.maximum(h, 0.0)


def mlp_apply(layers, x):
    """Affine/ReLU stack, final layer affine; generic over ndarray/Node."""
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < last:
            h = _relu(h)
    return h


def mlp_forward(cfg: MLPConfig, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != cfg.in_width:
        raise ValueError(f"input width {x.shape[-1]} != configured {cfg.in_width}")
    return mlp_apply(mlp_layers(cfg, np.asarray(params, dtype=np.float64)), x)


def positional_time_encoding(t):
    """t -> (sin 2πt, cos 2πt), stacked on the last axis for array input."""
    t = np.asarray(t, dtype=np.float64)
    return np.stack([np.sin(2.0 * np.pi * t), np.cos(2.0 * np.pi * t)], axis=-1)


def grad_scalar(loss_fn, params: np.ndarray):
    """Value and gradient of a scalar function of a flat parameter vector.

    ``loss_fn`` receives a tape leaf and must return a 0-d node.  All
    randomness must be fixed by the caller; the contract is agreement with
    central finite differences (step 1e-6) to relative error < 1e-5 on
    components with |g| > 1e-8.
    """
    p = tape.leaf(np.asarray(params, dtype=np.float64))
    out = loss_fn(p)
    if not isinstance(out, tape.Node) or out.value.ndim != 0:
        raise ValueError("loss_fn must return a scalar Node")
    if not np.isfinite(out.value):
        raise NonFiniteError("loss is not finite")
    tape.backward(out)
    g = np.zeros_like(p.value) if p.grad is None else np.array(p.grad, dtype=np.float64)
    return float(out.value), g


@dataclass
class AdamState:
    """First/second moment accumulators plus the bias-correction counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adam_init(n_params: int) -> AdamState:
    return AdamState(np.zeros(n_params), np.zeros(n_params), 0)


def adam_step(
    params: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One bias-corrected descent step; mutates ``state``, returns new params.

    Pass the gradient of the quantity being minimized (for ELBO ascent,
    the gradient of the negated ELBO).
    """
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("gradient is not finite")
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.step)
    v_hat = state.v / (1.0 - beta2**state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps)


def lr_schedule(iteration: int, lr0: float, decay: float = 0.9, every: int = 2000) -> float:
    """Stepwise decay: lr0 · decay^⌊iteration/every⌋."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return lr0 * decay ** (iteration // every)


def pack_blocks(blocks: dict, order) -> np.ndarray:
    """Concatenate named arrays into one flat vector in the given order."""
    parts = [np.ravel(np.asarray(blocks[name], dtype=np.float64)) for name in order]
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def unpack_blocks(flat: np.ndarray, shapes: dict, order) -> dict:
    """Inverse of :func:`pack_blocks` given each block's shape."""
    out = {}
    off = 0
    for name in order:
        shape = tuple(shapes[name])
        n = int(np.prod(shape)) if shape else 1
        out[name] = np.array(flat[off : off + n], dtype=np.float64).reshape(shape)
        off += n
    if off != flat.shape[0]:
        raise ValueError(f"flat vector has {flat.shape[0]} entries, layout uses {off}")
    return out
