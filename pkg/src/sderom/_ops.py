"""Dispatch helpers so numeric code runs on ndarrays and tape nodes alike.

Training paths hold parameters as tape nodes; evaluation paths hold plain
arrays.  Keeping formulas generic avoids maintaining two copies of the
math.
"""

from __future__ import annotations

import numpy as np

from . import tape


def is_node(x) -> bool:
    return isinstance(x, tape.Node)


def value(x) -> np.ndarray:
    """The underlying ndarray of a node, or the array itself."""
    return x.value if isinstance(x, tape.Node) else np.asarray(x, dtype=np.float64)


def exp(x):
    return tape.exp(x) if isinstance(x, tape.Node) else np.exp(x)


def log(x):
    return tape.log(x) if isinstance(x, tape.Node) else np.log(x)


def sqrt(x):
    return tape.sqrt(x) if isinstance(x, tape.Node) else np.sqrt(x)


def square(x):
    return tape.square(x) if isinstance(x, tape.Node) else np.square(x)


def total(x):
    """Sum over all elements."""
    return tape.vsum(x) if isinstance(x, tape.Node) else np.sum(x)


def relu(x):
    return tape.relu(x) if isinstance(x, tape.Node) else np.maximum(x, 0.0)


def concat(parts, axis=0):
    if any(isinstance(p, tape.Node) for p in parts):
        return tape.concat(parts, axis=axis)
    return np.concatenate(parts, axis=axis)
