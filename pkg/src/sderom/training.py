"""Stochastic training loop over trajectory windows.

Each step averages a batch of single-window objective estimates (window
drawn uniformly with replacement, fresh Monte Carlo draws per estimate)
and takes one Adam step on the negated average.  All trainable blocks are
packed into one flat vector so the optimizer state is a single pair of
moment vectors, which also keeps checkpoint resumption trivial.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .elbo import SamplingConfig, all_windows, elbo_gradient_estimate
from .errors import NonFiniteError
from .model import LatentSDEModel, ThetaTreatment
from .nets import AdamState, adam_init, adam_step, lr_schedule, pack_blocks, unpack_blocks
from .predict import evaluate_testset

LOG_COLUMNS = ("step", "epoch", "elbo", "lr", "wall_ms", "val_eps")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule and estimator sizes."""

    epochs: int = 10
    batch_size: int = 16
    lr0: float = 1e-3
    lr_decay: float = 0.9
    lr_decay_every: int = 2000
    window_size: int = 16
    n_latent_samples: int = 1
    n_time_samples: int = 4
    treatment_mode: str = "mixed"
    variational_blocks: tuple[str, ...] = ("dec_logvar",)
    seed: int = 0
    max_steps: int = 0
    val_every_epochs: int = 0
    val_n_samples: int = 8
    val_dt_divisor: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "variational_blocks", tuple(self.variational_blocks))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.window_size < 2:
            raise ValueError("window_size must be >= 2")

    def treatment(self) -> ThetaTreatment:
        if self.treatment_mode == "point_estimate":
            return ThetaTreatment.point_estimate()
        if self.treatment_mode == "mixed":
            return ThetaTreatment.mixed(self.variational_blocks)
        if self.treatment_mode == "full_variational":
            return ThetaTreatment.full_variational()
        raise ValueError(f"unknown treatment mode {self.treatment_mode!r}")

    def sampling(self) -> SamplingConfig:
        return SamplingConfig(
            n_latent_samples=self.n_latent_samples,
            n_time_samples=self.n_time_samples,
            seed=self.seed,
        )


@dataclass
class TrainResult:
    """Trained model plus the per-step log and best-validation snapshot."""

    model: LatentSDEModel
    log: list
    best_blocks: dict
    best_step: int
    best_val: Optional[float]
    adam: AdamState = field(repr=False, default=None)
    rng_state: dict = field(repr=False, default=None)
    global_step: int = 0


def _average_gradients(grads: list, names) -> dict:
    out = {}
    for name in names:
        out[name] = sum(g[name] for g in grads) / float(len(grads))
    return out


def train(
    model: LatentSDEModel,
    train_set: Dataset,
    cfg: TrainConfig,
    val_set: Optional[Dataset] = None,
    resume: Optional[dict] = None,
) -> TrainResult:
    """Optimize the model in place and return the training record.

    ``resume`` restores optimizer moments, step counter, and generator
    state from a previous run's checkpoint extras:
    ``{"adam_m", "adam_v", "adam_step", "global_step", "rng_state"}``.
    """
    treatment = cfg.treatment()
    model.treatment = treatment
    model.ensure_posterior(treatment)
    sampling = cfg.sampling()
    names = model.trainable_names(treatment)
    shapes = {n: model.blocks[n].shape for n in names}

    windows = all_windows(train_set, cfg.window_size)
    if not windows:
        raise ValueError("training set produced no windows")
    steps_per_epoch = max(1, -(-len(windows) // cfg.batch_size))

    rng = np.random.default_rng(cfg.seed)
    flat = pack_blocks(model.blocks, names)
    adam = adam_init(flat.shape[0])
    global_step = 0
    if resume:
        adam = AdamState(
            m=np.array(resume["adam_m"], dtype=np.float64),
            v=np.array(resume["adam_v"], dtype=np.float64),
            step=int(resume["adam_step"]),
        )
        if adam.m.shape != flat.shape:
            raise ValueError("optimizer state does not match the trainable layout")
        global_step = int(resume["global_step"])
        if resume.get("rng_state"):
            rng.bit_generator.state = resume["rng_state"]

    log = []
    best_blocks = model.copy_blocks()
    best_step = global_step
    best_val = None
    stop = False
    for epoch in range(cfg.epochs):
        for _ in range(steps_per_epoch):
            if cfg.max_steps and global_step >= cfg.max_steps:
                stop = True
                break
            tic = time.perf_counter()
            estimates = []
            try:
                for _ in range(cfg.batch_size):
                    estimates.append(
                        elbo_gradient_estimate(
                            model,
                            train_set,
                            sampling,
                            treatment,
                            rng,
                            cfg.window_size,
                            windows=windows,
                        )
                    )
                avg_grad = _average_gradients([e.gradient for e in estimates], names)
                loss_grad = -pack_blocks(avg_grad, names)
                lr = lr_schedule(global_step, cfg.lr0, cfg.lr_decay, cfg.lr_decay_every)
                flat = adam_step(flat, loss_grad, adam, lr)
            except NonFiniteError as exc:
                raise NonFiniteError(f"training step {global_step}: {exc}") from exc
            for name, arr in unpack_blocks(flat, shapes, names).items():
                model.blocks[name] = arr
            global_step += 1
            wall_ms = (time.perf_counter() - tic) * 1e3
            elbo_avg = float(np.mean([e.value for e in estimates]))
            log.append(
                {
                    "step": global_step,
                    "epoch": epoch,
                    "elbo": elbo_avg,
                    "lr": lr,
                    "wall_ms": wall_ms,
                    "val_eps": float("nan"),
                }
            )
        validate = (
            val_set is not None
            and cfg.val_every_epochs > 0
            and ((epoch + 1) % cfg.val_every_epochs == 0 or epoch == cfg.epochs - 1)
        )
        if validate and log:
            val_rng = np.random.default_rng([cfg.seed, 1000 + epoch])
            dt = _validation_dt(val_set, cfg.val_dt_divisor)
            scores = evaluate_testset(
                model, val_set, n_samples=cfg.val_n_samples, dt=dt, rng=val_rng
            )
            log[-1]["val_eps"] = scores.eps_mean
            if best_val is None or scores.eps_mean < best_val:
                best_val = scores.eps_mean
                best_blocks = model.copy_blocks()
                best_step = global_step
        if stop:
            break
    if best_val is None:
        best_blocks = model.copy_blocks()
        best_step = global_step
    return TrainResult(
        model=model,
        log=log,
        best_blocks=best_blocks,
        best_step=best_step,
        best_val=best_val,
        adam=adam,
        rng_state=rng.bit_generator.state,
        global_step=global_step,
    )


def _validation_dt(dataset: Dataset, divisor: float) -> float:
    gaps = np.concatenate([np.diff(t.times) for t in dataset.trajectories])
    return float(np.median(gaps)) / divisor


def log_to_csv(log: list, path) -> None:
    """Write the per-step log with a fixed column order."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in log:
            writer.writerow({k: row[k] for k in LOG_COLUMNS})
