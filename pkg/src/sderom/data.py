"""Trajectory and dataset containers, windowing, metrics, persistence.

A trajectory is a time-stamped sequence of QoI snapshots with constant
parameters and a forcing signal sampled on the same time grid.  Windows are
short runs of M consecutive snapshots; consecutive windows share exactly
one boundary sample, so a trajectory of N samples partitioned with window
size M yields windows starting at 0, M-1, 2(M-1), ... with the final
window shortened if the indices run out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import read_container, write_container
from .errors import (
    DimensionMismatchError,
    InvalidDatasetError,
    UndefinedMetricError,
)

_SPLITS = ("train", "validation", "test", "")


@dataclass(frozen=True)
class Trajectory:
    """One trajectory: times (N,), states (N, D), params (N_mu,), forcing (N, N_f)."""

    times: np.ndarray
    states: np.ndarray
    params: np.ndarray
    forcing_samples: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        states = np.asarray(self.states, dtype=np.float64)
        params = np.asarray(self.params, dtype=np.float64)
        forcing = np.asarray(self.forcing_samples, dtype=np.float64)
        if times.ndim != 1 or times.shape[0] == 0:
            raise InvalidDatasetError("times must be a non-empty 1-d array")
        if np.any(np.diff(times) <= 0):
            raise InvalidDatasetError("times must be strictly increasing")
        if states.ndim != 2 or states.shape[0] != times.shape[0]:
            raise InvalidDatasetError("states must be (N, D) with N = len(times)")
        if params.ndim != 1:
            raise InvalidDatasetError("params must be 1-d")
        if forcing.ndim != 2 or forcing.shape[0] != times.shape[0]:
            raise InvalidDatasetError("forcing_samples must be (N, N_f)")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "forcing_samples", forcing)

    @property
    def n_samples(self) -> int:
        return self.times.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def n_mu(self) -> int:
        return self.params.shape[0]

    @property
    def n_f(self) -> int:
        return self.forcing_samples.shape[1]


@dataclass(frozen=True)
class Dataset:
    """Non-empty tuple of dimension-consistent trajectories plus a split tag."""

    trajectories: tuple[Trajectory, ...]
    split_tag: str = ""

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise InvalidDatasetError("dataset needs at least one trajectory")
        if self.split_tag not in _SPLITS:
            raise InvalidDatasetError(f"unknown split tag {self.split_tag!r}")
        first = trajs[0]
        for i, tr in enumerate(trajs):
            if (tr.dim, tr.n_mu, tr.n_f) != (first.dim, first.n_mu, first.n_f):
                raise InvalidDatasetError(
                    f"trajectory {i} dimensions {(tr.dim, tr.n_mu, tr.n_f)} "
                    f"differ from trajectory 0 {(first.dim, first.n_mu, first.n_f)}"
                )
        object.__setattr__(self, "trajectories", trajs)

    @property
    def dim(self) -> int:
        return self.trajectories[0].dim

    @property
    def n_mu(self) -> int:
        return self.trajectories[0].n_mu

    @property
    def n_f(self) -> int:
        return self.trajectories[0].n_f

    def __len__(self) -> int:
        return len(self.trajectories)


@dataclass(frozen=True)
class Window:
    """M consecutive sample indices of one trajectory."""

    trajectory_index: int
    window_index: int
    sample_indices: np.ndarray = field(compare=False)

    def __post_init__(self):
        idx = np.asarray(self.sample_indices, dtype=np.intp)
        if idx.ndim != 1 or idx.shape[0] < 1:
            raise ValueError("a window needs at least one sample index")
        if np.any(np.diff(idx) != 1):
            raise ValueError("window indices must be consecutive")
        object.__setattr__(self, "sample_indices", idx)

    @property
    def size(self) -> int:
        return self.sample_indices.shape[0]


@dataclass(frozen=True)
class ForcingSignal:
    """Standalone forcing samples; duck-compatible with Trajectory for
    :func:`interpolate_forcing`."""

    times: np.ndarray
    forcing_samples: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        samples = np.asarray(self.forcing_samples, dtype=np.float64)
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise ValueError("forcing times must be strictly increasing")
        if samples.ndim != 2 or samples.shape[0] != times.shape[0]:
            raise ValueError("forcing samples must be (N, N_f)")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "forcing_samples", samples)


def interpolate_forcing(traj, t: float) -> np.ndarray:
    """Piecewise-linear interpolation of the forcing rows, clamped outside."""
    times = traj.times
    forcing = traj.forcing_samples
    if t <= times[0]:
        return forcing[0].copy()
    if t >= times[-1]:
        return forcing[-1].copy()
    j = int(np.searchsorted(times, t, side="right") - 1)
    t0, t1 = times[j], times[j + 1]
    w = (t - t0) / (t1 - t0)
    return (1.0 - w) * forcing[j] + w * forcing[j + 1]


def partition_trajectory(traj: Trajectory, window_size: int, trajectory_index: int = 0):
    """Split into windows of ``window_size`` samples with one shared boundary.

    The final window is shortened when indices run out.  Raises
    ``ValueError`` for window sizes below 2 or above the trajectory length.
    """
    n = traj.n_samples
    if window_size < 2 or window_size > n:
        raise ValueError(
            f"invalid window size {window_size} for trajectory of length {n}"
        )
    windows = []
    start = 0
    k = 0
    while True:
        end = min(start + window_size - 1, n - 1)
        windows.append(
            Window(
                trajectory_index=trajectory_index,
                window_index=k,
                sample_indices=np.arange(start, end + 1),
            )
        )
        if end == n - 1:
            break
        start = end
        k += 1
    return windows


def error_metric(u_true: np.ndarray, u_pred_mean: np.ndarray) -> np.ndarray:
    """Per-row relative 2-norm error ε(t_j) = ‖u_true − u_pred‖ / ‖u_true‖."""
    u_true = np.asarray(u_true, dtype=np.float64)
    u_pred_mean = np.asarray(u_pred_mean, dtype=np.float64)
    if u_true.shape != u_pred_mean.shape:
        raise DimensionMismatchError(
            f"shape mismatch: {u_true.shape} vs {u_pred_mean.shape}"
        )
    denom = np.linalg.norm(u_true, axis=1)
    if np.any(denom == 0.0):
        row = int(np.argmax(denom == 0.0))
        raise UndefinedMetricError(f"zero-norm reference row at index {row}")
    return np.linalg.norm(u_true - u_pred_mean, axis=1) / denom


def write_dataset(path, dataset: Dataset) -> None:
    """Persist a dataset; round-trips bit-exactly through :func:`read_dataset`."""
    meta = {
        "D": dataset.dim,
        "N_f": dataset.n_f,
        "N_mu": dataset.n_mu,
        "split_tag": dataset.split_tag,
        "lengths": [tr.n_samples for tr in dataset.trajectories],
    }
    arrays = []
    for i, tr in enumerate(dataset.trajectories):
        arrays.append((f"traj{i}/times", tr.times))
        arrays.append((f"traj{i}/states", tr.states))
        arrays.append((f"traj{i}/params", tr.params))
        arrays.append((f"traj{i}/forcing", tr.forcing_samples))
    write_container(path, "dataset", meta, arrays)


def read_dataset(path) -> Dataset:
    """Read a dataset container, validating declared dimensions."""
    manifest, arrays = read_container(path)
    if manifest["kind"] != "dataset":
        raise InvalidDatasetError(f"container kind {manifest['kind']!r} is not 'dataset'")
    meta = manifest["meta"]
    for key in ("D", "N_f", "N_mu", "split_tag", "lengths"):
        if key not in meta:
            raise InvalidDatasetError(f"dataset meta missing {key!r}")
    lengths = meta["lengths"]
    trajectories = []
    for i, n in enumerate(lengths):
        try:
            times = arrays[f"traj{i}/times"]
            states = arrays[f"traj{i}/states"]
            params = arrays[f"traj{i}/params"]
            forcing = arrays[f"traj{i}/forcing"]
        except KeyError as exc:
            raise InvalidDatasetError(f"missing arrays for trajectory {i}") from exc
        if times.shape != (n,):
            raise DimensionMismatchError(
                f"trajectory {i}: declared length {n}, stored times {times.shape}"
            )
        if states.shape != (n, meta["D"]):
            raise DimensionMismatchError(
                f"trajectory {i}: states {states.shape} != ({n}, {meta['D']})"
            )
        if params.shape != (meta["N_mu"],):
            raise DimensionMismatchError(
                f"trajectory {i}: params {params.shape} != ({meta['N_mu']},)"
            )
        if forcing.shape != (n, meta["N_f"]):
            raise DimensionMismatchError(
                f"trajectory {i}: forcing {forcing.shape} != ({n}, {meta['N_f']})"
            )
        trajectories.append(Trajectory(times, states, params, forcing))
    return Dataset(tuple(trajectories), split_tag=meta["split_tag"])
