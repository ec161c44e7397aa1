"""Assembled latent-SDE model: parameter blocks, binding, checkpoints.

Parameters live in named float64 blocks.  The variational machinery
(encoder nets, kernel feature map, kernel scalars) is always
point-estimated; the generative blocks (decoder weights, decoder
log-variance, drift, dispersion) may individually be given Gaussian
variational posteriors, selected by a :class:`ThetaTreatment`:

* ``point_estimate`` — every block is a point estimate; no KL term.
* ``mixed`` — a chosen subset of generative blocks is variational
  (default: the decoder log-variance, i.e. a log-normal posterior and
  prior on the decoder variance).
* ``full_variational`` — all four generative blocks are variational.

A variational block ``b`` is represented by ``q_mean.b`` / ``q_logvar.b``
blocks; its value in the objective is the reparametrized sample
``q_mean + exp(q_logvar / 2) * xi``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from . import _ops, tape
from .container import read_container, write_container
from .encdec import DecoderConfig, Encoder, EncoderConfig
from .errors import MalformedManifestError
from .kernel import DeepKernel, DeepKernelConfig
from .nets import MLPConfig, init_mlp_params
from .sde import DriftConfig, init_drift_params

THETA_BLOCKS = ("dec_w", "dec_logvar", "drift_w", "disp_logdiag")
TREATMENT_MODES = ("point_estimate", "mixed", "full_variational")


@dataclass(frozen=True)
class ThetaTreatment:
    """Which generative blocks carry variational posteriors."""

    mode: str
    variational_blocks: tuple[str, ...] = ()

    def __post_init__(self):
        if self.mode not in TREATMENT_MODES:
            raise ValueError(f"unknown treatment mode {self.mode!r}")
        blocks = tuple(self.variational_blocks)
        unknown = [b for b in blocks if b not in THETA_BLOCKS]
        if unknown:
            raise ValueError(f"not generative parameter blocks: {unknown}")
        if len(set(blocks)) != len(blocks):
            raise ValueError("duplicate variational blocks")
        if self.mode == "point_estimate" and blocks:
            raise ValueError("point_estimate treatment takes no variational blocks")
        if self.mode == "full_variational" and set(blocks) != set(THETA_BLOCKS):
            raise ValueError("full_variational must cover all generative blocks")
        object.__setattr__(self, "variational_blocks", blocks)

    @classmethod
    def point_estimate(cls):
        return cls("point_estimate", ())

    @classmethod
    def mixed(cls, blocks=("dec_logvar",)):
        return cls("mixed", tuple(blocks))

    @classmethod
    def full_variational(cls):
        return cls("full_variational", THETA_BLOCKS)

    def to_dict(self):
        return {"mode": self.mode, "variational_blocks": list(self.variational_blocks)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mode"], tuple(d["variational_blocks"]))


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and initialization choices for one model."""

    d: int
    D: int
    n_mu: int = 0
    n_f: int = 0
    encoder_hidden: tuple[int, ...] = (64,)
    decoder_hidden: tuple[int, ...] = (64,)
    encoder_logvar_mode: str = "direct"
    pod_components: int = 0
    drift_kind: str = "mlp"
    drift_hidden: tuple[int, ...] = (64, 64)
    poly_order: int = 3
    phi_hidden: tuple[int, ...] = (64, 64)
    enc_logvar_init: float = math.log(1e-2)
    dec_logvar_init: float = math.log(1e-2)
    disp_logdiag_init: float = math.log(1e-1)
    kern_log_sigma_f_init: float = 0.0
    kern_log_ell_init: float = 0.0
    kern_log_sigma_init: float = math.log(0.1)
    q_logvar_init: float = -6.0
    dec_logvar_prior_mean: float = math.log(1e-2)
    dec_logvar_prior_var: float = 1.0
    weight_prior_var: float = 1.0
    disp_prior_mean: float = math.log(1e-1)
    disp_prior_var: float = 1.0

    def __post_init__(self):
        for name in ("encoder_hidden", "decoder_hidden", "drift_hidden", "phi_hidden"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def encoder_cfg(self) -> EncoderConfig:
        in_width = self.pod_components if self.pod_components > 0 else self.D
        out_width = 2 * self.d if self.encoder_logvar_mode == "head" else self.d
        return EncoderConfig(
            mean_mlp=MLPConfig((in_width, *self.encoder_hidden, out_width)),
            d=self.d,
            D=self.D,
            logvar_mode=self.encoder_logvar_mode,
            pod_components=self.pod_components,
        )

    @property
    def decoder_cfg(self) -> DecoderConfig:
        return DecoderConfig(
            mean_mlp=MLPConfig((self.d, *self.decoder_hidden, self.D)),
            d=self.d,
            D=self.D,
        )

    @property
    def drift_cfg(self) -> DriftConfig:
        mlp = None
        if self.drift_kind in ("mlp", "physics_plus_mlp"):
            in_width = self.d + self.n_mu + self.n_f + 2
            mlp = MLPConfig((in_width, *self.drift_hidden, self.d))
        return DriftConfig(
            kind=self.drift_kind,
            d=self.d,
            n_mu=self.n_mu,
            n_f=self.n_f,
            mlp=mlp,
            poly_order=self.poly_order,
        )

    @property
    def kernel_cfg(self) -> DeepKernelConfig:
        return DeepKernelConfig(phi_mlp=MLPConfig((1, *self.phi_hidden, 1)))

    def to_dict(self) -> dict:
        d = asdict(self)
        for key, val in d.items():
            if isinstance(val, tuple):
                d[key] = list(val)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        kwargs = dict(d)
        for key in ("encoder_hidden", "decoder_hidden", "drift_hidden", "phi_hidden"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def block_priors(cfg: ModelConfig) -> dict:
    """(mean, var) of the Gaussian prior for each generative block."""
    return {
        "dec_w": (0.0, cfg.weight_prior_var),
        "dec_logvar": (cfg.dec_logvar_prior_mean, cfg.dec_logvar_prior_var),
        "drift_w": (0.0, cfg.weight_prior_var),
        "disp_logdiag": (cfg.disp_prior_mean, cfg.disp_prior_var),
    }


class LatentSDEModel:
    """Parameter blocks plus the frozen pieces (projection, physics term)."""

    def __init__(
        self,
        cfg: ModelConfig,
        blocks: dict,
        projection: Optional[tuple] = None,
        physics: Optional[Callable] = None,
        treatment: Optional[ThetaTreatment] = None,
    ):
        self.cfg = cfg
        self.blocks = {k: np.asarray(v, dtype=np.float64) for k, v in blocks.items()}
        self.projection = projection
        self.physics = physics
        self.treatment = treatment or ThetaTreatment.point_estimate()
        if cfg.pod_components > 0 and projection is None:
            raise ValueError("pod_components > 0 requires a projection")

    def copy_blocks(self) -> dict:
        return {k: v.copy() for k, v in self.blocks.items()}

    def ensure_posterior(self, treatment: ThetaTreatment) -> None:
        """Create q_mean/q_logvar blocks for each variational block (idempotent)."""
        for b in treatment.variational_blocks:
            if f"q_mean.{b}" not in self.blocks:
                self.blocks[f"q_mean.{b}"] = self.blocks[b].copy()
                self.blocks[f"q_logvar.{b}"] = np.full_like(
                    self.blocks[b], self.cfg.q_logvar_init
                )

    def trainable_names(self, treatment: ThetaTreatment) -> tuple:
        names = ["enc_w"]
        if self.cfg.encoder_logvar_mode == "direct":
            names.append("enc_logvar")
        names += ["phi_w", "kern_log"]
        for b in THETA_BLOCKS:
            if b not in treatment.variational_blocks:
                names.append(b)
        for b in THETA_BLOCKS:
            if b in treatment.variational_blocks:
                names += [f"q_mean.{b}", f"q_logvar.{b}"]
        return tuple(names)

    def bind(
        self,
        treatment: ThetaTreatment,
        xi: Optional[dict] = None,
        differentiable: bool = True,
        override: Optional[dict] = None,
    ):
        """Views of every block for one objective evaluation.

        Returns ``(view, leaves)``: ``view`` maps canonical block names to
        the value to compute with (variational blocks are replaced by
        their reparametrized samples); ``leaves`` maps trainable block
        names to the underlying leaf, in trainable order, for gradient
        extraction.
        """
        self.ensure_posterior(treatment)
        override = override or {}
        leaves = {}
        for name in self.trainable_names(treatment):
            arr = np.asarray(override.get(name, self.blocks[name]), dtype=np.float64)
            leaves[name] = tape.leaf(arr) if differentiable else arr
        view = dict(leaves)
        for b in treatment.variational_blocks:
            if xi is None or b not in xi:
                raise ValueError(f"variational block {b!r} needs a noise draw")
            q_mean = view[f"q_mean.{b}"]
            q_logvar = view[f"q_logvar.{b}"]
            view[b] = q_mean + _ops.exp(0.5 * q_logvar) * xi[b]
        return view, leaves

    def point_values(self, treatment: Optional[ThetaTreatment] = None) -> dict:
        """Effective block values with variational blocks at their posterior means."""
        treatment = treatment or self.treatment
        out = {}
        for b in (
            "enc_w",
            "enc_logvar",
            "phi_w",
            "kern_log",
            "dec_w",
            "dec_logvar",
            "drift_w",
            "disp_logdiag",
        ):
            if b == "enc_logvar" and self.cfg.encoder_logvar_mode != "direct":
                continue
            if b in treatment.variational_blocks and f"q_mean.{b}" in self.blocks:
                out[b] = self.blocks[f"q_mean.{b}"].copy()
            else:
                out[b] = self.blocks[b].copy()
        return out

    def encoder_bundle(self, view: Optional[dict] = None) -> Encoder:
        view = view if view is not None else self.blocks
        logvar = view.get("enc_logvar")
        return Encoder(
            cfg=self.cfg.encoder_cfg,
            mean_params=view["enc_w"],
            logvar_param=logvar,
            projection=self.projection,
        )

    def kernel_bundle(self, view: Optional[dict] = None) -> DeepKernel:
        view = view if view is not None else self.blocks
        return DeepKernel(
            cfg=self.cfg.kernel_cfg,
            phi_params=view["phi_w"],
            log_params=view["kern_log"],
        )


def build_model(
    cfg: ModelConfig,
    seed: int = 0,
    projection: Optional[tuple] = None,
    physics: Optional[Callable] = None,
) -> LatentSDEModel:
    """Fresh model with seeded He-initialized networks.

    Blocks are drawn in a fixed order so a given seed always produces the
    same parameters.
    """
    rng = np.random.default_rng(seed)
    blocks = {
        "enc_w": init_mlp_params(cfg.encoder_cfg.mean_mlp, rng),
        "dec_w": init_mlp_params(cfg.decoder_cfg.mean_mlp, rng),
        "drift_w": init_drift_params(cfg.drift_cfg, rng),
        "phi_w": init_mlp_params(cfg.kernel_cfg.phi_mlp, rng),
        "kern_log": np.asarray(
            [cfg.kern_log_sigma_f_init, cfg.kern_log_ell_init, cfg.kern_log_sigma_init]
        ),
        "dec_logvar": np.full(cfg.D, cfg.dec_logvar_init),
        "disp_logdiag": np.full(cfg.d, cfg.disp_logdiag_init),
    }
    if cfg.encoder_logvar_mode == "direct":
        blocks["enc_logvar"] = np.full(cfg.d, cfg.enc_logvar_init)
    return LatentSDEModel(cfg, blocks, projection=projection, physics=physics)


def save_checkpoint(
    path,
    model: LatentSDEModel,
    extra_meta: Optional[dict] = None,
    extra_arrays=None,
) -> None:
    """Persist config, treatment, all blocks, and optional trainer state."""
    kern = model.blocks["kern_log"]
    meta = {
        "model_config": model.cfg.to_dict(),
        "treatment": model.treatment.to_dict(),
        "kernel_scalars": {
            "sigma_f": float(np.exp(kern[0])),
            "ell": float(np.exp(kern[1])),
            "sigma": float(np.exp(kern[2])),
        },
        "has_projection": model.projection is not None,
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays = [(f"block/{name}", model.blocks[name]) for name in sorted(model.blocks)]
    if model.projection is not None:
        mean_snapshot, modes = model.projection
        arrays.append(("projection/mean", mean_snapshot))
        arrays.append(("projection/modes", modes))
    for name, arr in extra_arrays or []:
        arrays.append((name, arr))
    write_container(path, "checkpoint", meta, arrays)


def load_checkpoint(path, physics: Optional[Callable] = None):
    """Rebuild a model; returns ``(model, meta, extra_arrays)``.

    ``extra_arrays`` holds any non-block payloads (e.g. optimizer moments)
    for training resumption.
    """
    manifest, arrays = read_container(path)
    if manifest["kind"] != "checkpoint":
        raise MalformedManifestError(
            f"container kind {manifest['kind']!r} is not 'checkpoint'"
        )
    meta = manifest["meta"]
    cfg = ModelConfig.from_dict(meta["model_config"])
    treatment = ThetaTreatment.from_dict(meta["treatment"])
    blocks = {}
    extra = {}
    for name, arr in arrays.items():
        if name.startswith("block/"):
            blocks[name[len("block/") :]] = arr
        elif not name.startswith("projection/"):
            extra[name] = arr
    projection = None
    if meta.get("has_projection"):
        projection = (arrays["projection/mean"], arrays["projection/modes"])
    model = LatentSDEModel(
        cfg, blocks, projection=projection, physics=physics, treatment=treatment
    )
    return model, copy.deepcopy(meta), extra
