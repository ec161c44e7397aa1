"""Command line entry points: generate, train, evaluate.

Configs are JSON files validated against the dataclasses they populate;
any key that is not a known field is rejected by name.  Every command is
deterministic given its config and seed: reruns write byte-identical
datasets, checkpoints, predictions, and metrics (the training log's
wall-clock column is the one documented exception).

Exit codes: 0 success, 2 config error, 3 missing or unreadable input,
4 dimension mismatch, 5 numeric failure, 1 unexpected error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .baselines import pod_fit, pod_sindy_grid
from .data import error_metric, read_dataset, write_dataset
from .errors import (
    ConfigError,
    DegenerateDensityError,
    DimensionMismatchError,
    DivergedIntegrationError,
    IllConditionedLibraryError,
    InvalidDatasetError,
    MalformedManifestError,
    NonFiniteError,
    RankDeficientError,
    SingularKernelError,
    TruncatedPayloadError,
    UndefinedMetricError,
    UnstableSolverError,
)
from .generators import GeneratorSpec, generate
from .model import LatentSDEModel, ModelConfig, build_model, load_checkpoint, save_checkpoint
from .predict import predict_ensemble, write_predictions
from .training import TrainConfig, log_to_csv, train

_NUMERIC_ERRORS = (
    NonFiniteError,
    DivergedIntegrationError,
    SingularKernelError,
    UnstableSolverError,
    DegenerateDensityError,
    RankDeficientError,
    IllConditionedLibraryError,
    UndefinedMetricError,
)
_INPUT_ERRORS = (
    FileNotFoundError,
    MalformedManifestError,
    TruncatedPayloadError,
    InvalidDatasetError,
)


@dataclass(frozen=True)
class EvalConfig:
    """Knobs of the evaluate command."""

    n_samples: int = 8
    dt: Optional[float] = None
    seed: int = 0


def _load_json(path: str) -> dict:
    with open(path, "r") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path} must hold a JSON object at the top level")
    return cfg


def _check_keys(section: dict, allowed, where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _build(cls, section: dict, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a JSON object")
    _check_keys(section, {f.name for f in dataclasses.fields(cls)}, where)
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where} section: {exc}") from exc


def cmd_generate(args) -> None:
    cfg = _load_json(args.config)
    _check_keys(cfg, {"generator"}, "config")
    if "generator" not in cfg:
        raise ConfigError("config needs a 'generator' section")
    section = dict(cfg["generator"])
    if args.seed is not None:
        section["seed"] = args.seed
    spec = _build(GeneratorSpec, section, "generator")
    train_set, val_set, test_set = generate(spec)
    os.makedirs(args.out, exist_ok=True)
    for name, ds in (("train", train_set), ("val", val_set), ("test", test_set)):
        path = os.path.join(args.out, f"{name}.dat")
        write_dataset(path, ds)
        print(
            f"wrote {path}: {len(ds)} trajectories, "
            f"D={ds.dim}, N_mu={ds.n_mu}, N_f={ds.n_f}"
        )


def _model_from_config(section: dict, train_set) -> ModelConfig:
    section = dict(section)
    section.setdefault("D", train_set.dim)
    section.setdefault("n_mu", train_set.n_mu)
    section.setdefault("n_f", train_set.n_f)
    cfg = _build(ModelConfig, section, "model")
    if cfg.D != train_set.dim:
        raise DimensionMismatchError(
            f"model D={cfg.D} but the dataset snapshots have D={train_set.dim}"
        )
    if cfg.n_mu != train_set.n_mu or cfg.n_f != train_set.n_f:
        raise DimensionMismatchError(
            f"model (n_mu={cfg.n_mu}, n_f={cfg.n_f}) but the dataset has "
            f"(n_mu={train_set.n_mu}, n_f={train_set.n_f})"
        )
    if cfg.drift_kind == "physics_plus_mlp":
        raise ConfigError(
            "physics_plus_mlp drifts need a callback and are available "
            "through the library API only"
        )
    return cfg


def cmd_train(args) -> None:
    cfg = _load_json(args.config)
    _check_keys(cfg, {"data", "model", "training", "resume_from"}, "config")
    data_sec = cfg.get("data", {})
    _check_keys(data_sec, {"train", "val"}, "data")
    if "train" not in data_sec:
        raise ConfigError("data section needs a 'train' dataset path")
    train_set = read_dataset(data_sec["train"])
    val_set = read_dataset(data_sec["val"]) if "val" in data_sec else None

    train_sec = dict(cfg.get("training", {}))
    if args.seed is not None:
        train_sec["seed"] = args.seed
    tcfg = _build(TrainConfig, train_sec, "training")

    resume = None
    if cfg.get("resume_from"):
        model, meta, extra = load_checkpoint(cfg["resume_from"])
        resume = {
            "adam_m": extra["adam/m"],
            "adam_v": extra["adam/v"],
            "adam_step": meta["adam_step"],
            "global_step": meta["global_step"],
            "rng_state": meta.get("rng_state"),
        }
        if "model" in cfg:
            print("note: resuming; the model section of the config is ignored")
    else:
        if "model" not in cfg:
            raise ConfigError("config needs a 'model' section")
        mcfg = _model_from_config(cfg["model"], train_set)
        projection = None
        if mcfg.pod_components > 0:
            states = np.concatenate([t.states for t in train_set.trajectories], axis=0)
            basis = pod_fit(states, mcfg.pod_components)
            projection = (basis.mean, basis.modes)
        model = build_model(mcfg, seed=tcfg.seed, projection=projection)

    result = train(model, train_set, tcfg, val_set=val_set, resume=resume)

    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "train_log.csv")
    log_to_csv(result.log, log_path)

    def _save(path: str, blocks: dict) -> None:
        ckpt_model = LatentSDEModel(
            model.cfg,
            blocks,
            projection=model.projection,
            treatment=model.treatment,
        )
        save_checkpoint(
            path,
            ckpt_model,
            extra_meta={
                "global_step": result.global_step,
                "adam_step": result.adam.step,
                "rng_state": result.rng_state,
                "train_config": dataclasses.asdict(tcfg),
            },
            extra_arrays=[("adam/m", result.adam.m), ("adam/v", result.adam.v)],
        )

    final_path = os.path.join(args.out, "checkpoint_final.ckpt")
    best_path = os.path.join(args.out, "checkpoint_best.ckpt")
    _save(final_path, model.blocks)
    _save(best_path, result.best_blocks)
    last = result.log[-1] if result.log else None
    print(f"wrote {log_path} ({len(result.log)} steps)")
    print(f"wrote {final_path}")
    print(
        f"wrote {best_path} (step {result.best_step}"
        + (f", val_eps {result.best_val:.6g})" if result.best_val is not None else ")")
    )
    if last is not None:
        print(f"final objective estimate: {last['elbo']:.6g}")


def _cmd_baseline_grid(args, section: dict) -> None:
    """Hyperparameter sweep for the projection-plus-sparse-regression baseline."""
    _check_keys(
        section, {"train", "val", "n_modes", "thresholds", "poly_orders"}, "baseline_grid"
    )
    for key in ("train", "val"):
        if key not in section:
            raise ConfigError(f"baseline_grid section needs a {key!r} dataset path")
    train_set = read_dataset(section["train"])
    val_set = read_dataset(section["val"])
    n_modes = section.get("n_modes", [2, 4, 6])
    thresholds = section.get("thresholds", [0.001, 0.003, 0.01, 0.03, 0.1])
    poly_orders = section.get("poly_orders", [1, 2, 3])
    best, rows = pod_sindy_grid(train_set, val_set, n_modes, thresholds, poly_orders)

    os.makedirs(args.out, exist_ok=True)
    grid_path = os.path.join(args.out, "baseline_grid.csv")
    with open(grid_path, "w") as fh:
        fh.write("n_modes,poly_order,threshold,val_eps\n")
        for row in rows:
            fh.write(
                f"{row['n_modes']},{row['poly_order']},"
                f"{row['threshold']},{row['val_eps']}\n"
            )
    print(f"wrote {grid_path}")
    print(f"{'n_modes':>8} {'order':>6} {'threshold':>10}  val_eps")
    for row in rows:
        print(
            f"{row['n_modes']:>8} {row['poly_order']:>6} "
            f"{row['threshold']:>10}  {row['val_eps']}"
        )
    if best is None:
        print("no grid cell produced a finite validation error")
    else:
        print(
            f"best: n_modes={best['n_modes']} poly_order={best['poly_order']} "
            f"threshold={best['threshold']} val_eps={best['val_eps']}"
        )


def cmd_evaluate(args) -> None:
    cfg = _load_json(args.config)
    _check_keys(cfg, {"data", "checkpoint", "evaluate", "baseline_grid"}, "config")
    if "baseline_grid" in cfg:
        if not isinstance(cfg["baseline_grid"], dict):
            raise ConfigError("baseline_grid must be a JSON object")
        _cmd_baseline_grid(args, cfg["baseline_grid"])
        return
    data_sec = cfg.get("data", {})
    _check_keys(data_sec, {"test"}, "data")
    if "test" not in data_sec:
        raise ConfigError("data section needs a 'test' dataset path")
    if "checkpoint" not in cfg:
        raise ConfigError("config needs a 'checkpoint' path")
    eval_sec = dict(cfg.get("evaluate", {}))
    if args.seed is not None:
        eval_sec["seed"] = args.seed
    ecfg = _build(EvalConfig, eval_sec, "evaluate")

    test_set = read_dataset(data_sec["test"])
    model, _, _ = load_checkpoint(cfg["checkpoint"])
    if model.cfg.D != test_set.dim:
        raise DimensionMismatchError(
            f"checkpoint D={model.cfg.D} but the dataset snapshots have D={test_set.dim}"
        )

    started = time.perf_counter()
    rng = np.random.default_rng(ecfg.seed)
    ensembles, per_traj, eps_time = [], [], []
    for traj in test_set.trajectories:
        ens = predict_ensemble(
            model,
            traj.times,
            traj.states[0],
            traj.params,
            forcing=traj,
            n_samples=ecfg.n_samples,
            dt=ecfg.dt,
            rng=rng,
        )
        ensembles.append(ens)
        eps_rows = error_metric(traj.states, ens.observed_mean)
        per_traj.append(float(eps_rows.mean()))
        eps_time.append(eps_rows)
    elapsed = time.perf_counter() - started

    eps = np.asarray(per_traj)
    rows = [(str(i), str(v)) for i, v in enumerate(per_traj)]
    rows.append(("mean", str(float(eps.mean()))))
    rows.append(("spread", str(float(eps.std()))))

    os.makedirs(args.out, exist_ok=True)
    pred_path = os.path.join(args.out, "predictions.dat")
    write_predictions(
        pred_path,
        ensembles,
        meta={"n_samples": ecfg.n_samples, "seed": ecfg.seed},
        eps_time=eps_time,
    )
    metrics_path = os.path.join(args.out, "metrics.csv")
    with open(metrics_path, "w") as fh:
        fh.write("trajectory,eps\n")
        for label, value in rows:
            fh.write(f"{label},{value}\n")

    print(f"wrote {pred_path}")
    print(f"wrote {metrics_path}")
    print(f"{'trajectory':>10}  eps")
    for label, value in rows:
        print(f"{label:>10}  {value}")
    print(f"wall_s {elapsed:.3f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sderom",
        description="Reduced-order latent SDE models: data generation, "
        "training, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
        ("generate", cmd_generate, "synthesize train/val/test datasets"),
        ("train", cmd_train, "fit a model and write checkpoints"),
        ("evaluate", cmd_evaluate, "score a checkpoint on a test set"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=".", help="output directory")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 3
    except DimensionMismatchError as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return 4
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 5
    except Exception as exc:  # pragma: no cover - safety net
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
