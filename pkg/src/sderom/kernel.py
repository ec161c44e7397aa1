"""Deep-kernel interpolation of encoded window snapshots.

The variational posterior over a window's latent path is a diagonal
Gaussian whose mean and log-variance are squared-exponential kernel
interpolants of the encoded snapshots, with the kernel applied to a
learned scalar feature map phi:

    kappa(t1, t2) = sigma_f * exp(-(phi(t1) - phi(t2))^2 / (2 ell^2))

Note the amplitude enters linearly (kappa(t, t) = sigma_f).  Hyperparameters
sigma_f, ell and the nugget sigma are stored as logs in a 3-vector.

Time derivatives of the interpolants act only through the kernel row
K_M(t): the inducing targets are fixed per window, so no other chain-rule
terms arise.  d(phi)/dt is computed exactly by propagating masked weight
products through the ReLU stack; the masks are constants with respect to
the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _ops, tape
from .data import Trajectory, Window
from .encdec import Encoder
from .errors import SingularKernelError
from .nets import MLPConfig, mlp_layers

LOG_SIGMA_F, LOG_ELL, LOG_SIGMA = 0, 1, 2


@dataclass(frozen=True)
class DeepKernelConfig:
    """Feature-map architecture; the map is scalar-to-scalar."""

    phi_mlp: MLPConfig

    def __post_init__(self):
        if self.phi_mlp.in_width != 1 or self.phi_mlp.out_width != 1:
            raise ValueError("kernel feature map must be 1 -> 1")


@dataclass
class DeepKernel:
    """Evaluation-time bundle: config plus (possibly node-valued) parameters.

    ``log_params`` is (3,): [log sigma_f, log ell, log sigma].
    """

    cfg: DeepKernelConfig
    phi_params: object
    log_params: object

    def hyper(self):
        lp = self.log_params
        sigma_f = _ops.exp(lp[LOG_SIGMA_F])
        ell2 = _ops.exp(2.0 * lp[LOG_ELL])
        nugget = _ops.exp(2.0 * lp[LOG_SIGMA])
        return sigma_f, ell2, nugget

    def layers(self):
        return mlp_layers(self.cfg.phi_mlp, self.phi_params)


def _phi(layers, t_col):
    """phi over a column of times (n, 1)."""
    h = t_col
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < last:
            h = _ops.relu(h)
    return h


def _phi_with_input_derivative(layers, t_col: np.ndarray):
    """phi(t) and d(phi)/dt for constant times (n, 1).

    The derivative chain multiplies layer weights masked by the forward
    pass's ReLU activation pattern; the pattern itself is treated as
    constant, which matches the almost-everywhere derivative.
    """
    h = t_col
    dh = np.ones_like(t_col)
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        a = h @ w + b
        da = dh @ w
        if i < last:
            mask = (_ops.value(a) > 0.0).astype(np.float64)
            h = _ops.relu(a)
            dh = da * mask
        else:
            h, dh = a, da
    return h, dh


def kernel_eval(kernel: DeepKernel, t1: float, t2: float) -> float:
    """kappa(t1, t2); symmetric, equals sigma_f on the diagonal."""
    ts = np.asarray([[t1], [t2]], dtype=np.float64)
    phi = _phi(kernel.layers(), ts)
    sigma_f, ell2, _ = kernel.hyper()
    diff = phi[0, 0] - phi[1, 0]
    out = sigma_f * _ops.exp(-_ops.square(diff) / (2.0 * ell2))
    return float(_ops.value(out))


@dataclass
class WindowPosterior:
    """Cached per-window interpolation state.

    ``x_m``/``x_s`` are the solved features (K_MM + sigma^2 I)^{-1} H for
    the mean and log-variance targets; queries only need kernel rows
    against the stored node features.
    """

    window: Window
    node_times: np.ndarray
    h_m: object
    h_s: object
    x_m: object
    x_s: object
    phi_nodes: object
    kernel: DeepKernel
    d: int

    @property
    def t_start(self) -> float:
        return float(self.node_times[0])

    @property
    def t_end(self) -> float:
        return float(self.node_times[-1])


def build_window_posterior(
    encoder: Encoder, kernel: DeepKernel, traj: Trajectory, window: Window
) -> WindowPosterior:
    """Encode the window's snapshots and factor the kernel system once.

    Raises :class:`SingularKernelError` when the Gram matrix cannot be
    Cholesky-factored (it is symmetric by construction, so failure means
    numerically non-positive-definite).
    """
    idx = window.sample_indices
    node_times = traj.times[idx]
    u_rows = traj.states[idx]
    h_m, h_s = encoder.apply(u_rows)

    m = node_times.shape[0]
    phi_nodes = _phi(kernel.layers(), node_times.reshape(m, 1))
    sigma_f, ell2, nugget = kernel.hyper()
    diff = phi_nodes - _t(phi_nodes)
    gram = sigma_f * _ops.exp(-_ops.square(diff) / (2.0 * ell2))
    system = gram + nugget * np.eye(m)

    joint = _ops.concat([h_m, h_s], axis=1)
    try:
        solved = tape.solve_psd(tape.as_node(system), tape.as_node(joint))
    except np.linalg.LinAlgError as exc:
        raise SingularKernelError(
            f"kernel Gram factorization failed for window "
            f"(traj {window.trajectory_index}, k {window.window_index}): {exc}"
        ) from exc
    d = _ops.value(h_m).shape[1]
    x_m = solved[:, :d]
    x_s = solved[:, d:]
    return WindowPosterior(
        window=window,
        node_times=node_times,
        h_m=h_m,
        h_s=h_s,
        x_m=x_m,
        x_s=x_s,
        phi_nodes=phi_nodes,
        kernel=kernel,
        d=d,
    )


def _t(x):
    """Transpose, generic over ndarray / Node."""
    return x.T


def interp_all(wp: WindowPosterior, t_query: np.ndarray):
    """Interpolants and their time derivatives at query times.

    Returns (m, logs, s, dm, ds), each (n, d), possibly node-valued.
    Queries outside the window's span are allowed (clamping is not
    applied); training only queries inside.
    """
    t_query = np.asarray(t_query, dtype=np.float64).reshape(-1, 1)
    layers = wp.kernel.layers()
    sigma_f, ell2, _ = wp.kernel.hyper()
    phi_q, dphi_q = _phi_with_input_derivative(layers, t_query)
    diff = phi_q - _t(wp.phi_nodes)
    k_row = sigma_f * _ops.exp(-_ops.square(diff) / (2.0 * ell2))
    m = k_row @ wp.x_m
    logs = k_row @ wp.x_s
    s = _ops.exp(logs)
    k_dot = k_row * ((-1.0 * diff) / ell2) * dphi_q
    dm = k_dot @ wp.x_m
    ds = s * (k_dot @ wp.x_s)
    return m, logs, s, dm, ds


def interp_mean_var(wp: WindowPosterior, t: float):
    """(m(t), s(t)) as plain (d,) arrays."""
    m, _, s, _, _ = interp_all(wp, np.asarray([t]))
    return _ops.value(m).reshape(wp.d), _ops.value(s).reshape(wp.d)


def interp_derivatives(wp: WindowPosterior, t: float):
    """(dm/dt, ds/dt) as plain (d,) arrays."""
    _, _, _, dm, ds = interp_all(wp, np.asarray([t]))
    return _ops.value(dm).reshape(wp.d), _ops.value(ds).reshape(wp.d)


def sample_latent(wp: WindowPosterior, t: float, gamma: np.ndarray) -> np.ndarray:
    """m(t) + sqrt(s(t)) ⊙ gamma with standard-normal gamma."""
    m, s = interp_mean_var(wp, t)
    return m + np.sqrt(s) * np.asarray(gamma, dtype=np.float64)
