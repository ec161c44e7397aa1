"""Training study for the viscous Burgers benchmark.

Trains the d=4 model on the reduced Burgers data (64-point grid, 20
training trajectories), scores it on the held-out test split, and runs
the projection-plus-sparse-regression baseline grid on the same data so
the two methods can be ordered.  The default flags are the configuration
frozen into the acceptance tests.

Usage: python3 scripts/run_burgers_study.py [--steps N] [--lr LR] ...
"""

import argparse
import time

import numpy as np

from sderom.baselines import pod_sindy_eval, pod_sindy_grid
from sderom.generators import GeneratorSpec, generate
from sderom.model import ModelConfig, build_model
from sderom.predict import evaluate_testset
from sderom.training import TrainConfig, train


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--steps", type=int, default=6000)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--lr-decay-every", type=int, default=800)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--window", type=int, default=32)
    p.add_argument("--time-samples", type=int, default=4)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--enc-hidden", type=int, default=64)
    p.add_argument("--dec-hidden", type=int, default=64)
    p.add_argument("--drift-hidden", type=int, nargs="*", default=[64, 64])
    p.add_argument("--treatment", default="mixed")
    p.add_argument("--vblocks", nargs="*", default=["dec_logvar"])
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-baseline", action="store_true")
    return p.parse_args()


def main():
    args = parse_args()
    print(
        "config: steps=%d lr=%g decay_every=%d batch=%d window=%d "
        "time_samples=%d d=%d enc=%d dec=%d drift=%s treatment=%s "
        "vblocks=%s noise=%g seed=%d"
        % (
            args.steps, args.lr, args.lr_decay_every, args.batch, args.window,
            args.time_samples, args.d, args.enc_hidden, args.dec_hidden,
            args.drift_hidden, args.treatment, args.vblocks, args.noise,
            args.seed,
        )
    )
    spec = GeneratorSpec(
        kind="burgers",
        n_train=20,
        n_val=5,
        n_test=5,
        noise_std=args.noise,
        seed=args.seed,
    )
    train_set, val_set, test_set = generate(spec)
    traj = train_set.trajectories[0]
    print(
        "data: %d train trajectories, D=%d, %d samples over t_final=%g"
        % (len(train_set.trajectories), traj.states.shape[1],
           traj.states.shape[0], traj.times[-1])
    )

    mcfg = ModelConfig(
        d=args.d,
        D=traj.states.shape[1],
        n_mu=traj.params.shape[0],
        n_f=traj.forcing_samples.shape[1],
        encoder_hidden=(args.enc_hidden,),
        decoder_hidden=(args.dec_hidden,),
        drift_hidden=tuple(args.drift_hidden),
    )
    model = build_model(mcfg, seed=args.seed)
    tcfg = TrainConfig(
        epochs=100000,
        max_steps=args.steps,
        batch_size=args.batch,
        lr0=args.lr,
        lr_decay_every=args.lr_decay_every,
        window_size=args.window,
        n_time_samples=args.time_samples,
        treatment_mode=args.treatment,
        variational_blocks=tuple(args.vblocks),
        seed=args.seed,
    )
    tic = time.perf_counter()
    result = train(model, train_set, tcfg, val_set=val_set)
    wall = time.perf_counter() - tic
    print(
        "trained %d steps in %.1f s (%.0f ms/step), final objective %.2f"
        % (args.steps, wall, 1e3 * wall / args.steps, result.log[-1]["elbo"])
    )

    scores = evaluate_testset(
        result.model, test_set, n_samples=8, rng=np.random.default_rng(args.seed)
    )
    print(
        "model test eps_mean %.4f  spread %.4f" % (scores.eps_mean, scores.eps_spread)
    )
    for k, eps in enumerate(scores.per_trajectory):
        print("  trajectory %d: eps %.4f" % (k, eps))

    if args.skip_baseline:
        return
    tic = time.perf_counter()
    best, rows = pod_sindy_grid(
        train_set,
        val_set,
        n_modes_list=(2, 4, 8),
        thresholds=(0.01, 0.1),
        poly_orders=(2,),
    )
    print("baseline grid (%.1f s):" % (time.perf_counter() - tic))
    for row in rows:
        print(
            "  n_modes=%d poly_order=%d threshold=%g val_eps=%s"
            % (row["n_modes"], row["poly_order"], row["threshold"], row["val_eps"])
        )
    if best is None:
        print("baseline: no grid cell produced a finite validation error")
        return
    test_eps = pod_sindy_eval(best["model"], test_set)
    print(
        "baseline best (n_modes=%d, threshold=%g): val %.4f test %s"
        % (best["n_modes"], best["threshold"], best["val_eps"], test_eps)
    )
    print(
        "ordering: model %.4f %s baseline %s"
        % (
            scores.eps_mean,
            "<" if scores.eps_mean < test_eps else ">=",
            test_eps,
        )
    )


if __name__ == "__main__":
    main()
