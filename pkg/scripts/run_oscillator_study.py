"""Training study for the rotation-recovery benchmark.

Trains the d=2 polynomial-drift model on the oscillator-embedding data
and reports the drift coefficient table, the antisymmetric-dominance
ratio, and the test error, for a noiseless and a noisy variant.  The
default flags are the configuration frozen into the acceptance tests;
other values explore the budget/quality trade-off.

Usage: python3 scripts/run_oscillator_study.py [--steps N] [--lr LR] ...
"""

import argparse
import time

import numpy as np

from sderom.baselines import pod_fit
from sderom.generators import GeneratorSpec, generate
from sderom.model import ModelConfig, build_model
from sderom.predict import evaluate_testset
from sderom.sde import monomial_exponents
from sderom.training import TrainConfig, train


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--steps", type=int, default=1500)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--lr-decay-every", type=int, default=400)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--window", type=int, default=16)
    p.add_argument("--time-samples", type=int, default=4)
    p.add_argument("--obs-dim", type=int, default=32)
    p.add_argument("--enc-hidden", type=int, default=64)
    p.add_argument("--dec-hidden", type=int, default=64)
    p.add_argument("--pod", type=int, default=0)
    p.add_argument("--n-train", type=int, default=12)
    p.add_argument("--radius", type=float, nargs=2, default=[0.7, 1.3])
    p.add_argument("--treatment", default="mixed")
    p.add_argument("--vblocks", nargs="*", default=["dec_logvar"])
    p.add_argument("--weight-prior-var", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, nargs="*", default=[0.0, 1e-2])
    return p.parse_args()


def make_data(noise_std, args):
    spec = GeneratorSpec(
        kind="oscillator",
        n_train=args.n_train,
        n_val=3,
        n_test=4,
        noise_std=noise_std,
        osc_obs_dim=args.obs_dim,
        osc_radius_range=tuple(args.radius),
        seed=args.seed,
    )
    return generate(spec)


def coefficient_report(model):
    cfg = model.cfg
    values = model.point_values()
    coeff = values["drift_w"].reshape(-1, cfg.d)
    exponents = monomial_exponents(cfg.d, cfg.poly_order)
    print("  drift coefficients (rows: monomial, columns: dz_i/dt):")
    for exp, row in zip(exponents, coeff):
        label = "z1^%d z2^%d" % exp
        print("    %-9s  % .4f  % .4f" % (label, row[0], row[1]))

    i10 = exponents.index((1, 0))
    i01 = exponents.index((0, 1))
    pair = np.array([coeff[i01, 0], coeff[i10, 1]])
    rest = np.abs(coeff.copy())
    rest[i01, 0] = 0.0
    rest[i10, 1] = 0.0
    ratio = np.abs(pair).min() / max(rest.max(), 1e-300)
    print(
        "  antisymmetric pair: % .4f / % .4f  (product %.4f, dominance %.1fx)"
        % (pair[0], pair[1], pair[0] * pair[1], ratio)
    )
    return ratio


def run_variant(noise_std, args):
    train_set, val_set, test_set = make_data(noise_std, args)
    mcfg = ModelConfig(
        d=2,
        D=args.obs_dim,
        encoder_hidden=(args.enc_hidden,),
        decoder_hidden=(args.dec_hidden,),
        pod_components=args.pod,
        drift_kind="polynomial",
        poly_order=3,
        weight_prior_var=args.weight_prior_var,
    )
    projection = None
    if args.pod:
        snapshots = np.concatenate([t.states for t in train_set.trajectories])
        basis = pod_fit(snapshots, args.pod)
        projection = (basis.mean, basis.modes)
    model = build_model(mcfg, seed=args.seed, projection=projection)
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

    scores = evaluate_testset(
        result.model, test_set, n_samples=8, rng=np.random.default_rng(args.seed)
    )
    print("noise_std=%g:" % noise_std)
    print(
        "  %d steps in %.1f s (%.0f ms/step), final objective %.2f"
        % (args.steps, wall, 1e3 * wall / args.steps, result.log[-1]["elbo"])
    )
    ratio = coefficient_report(result.model)
    print("  test eps_mean %.4f  spread %.4f" % (scores.eps_mean, scores.eps_spread))
    return ratio, scores.eps_mean


def main():
    args = parse_args()
    print(
        "config: steps=%d lr=%g decay_every=%d batch=%d window=%d "
        "time_samples=%d D=%d enc=%d dec=%d pod=%d n_train=%d radius=%s "
        "treatment=%s vblocks=%s wpv=%g seed=%d"
        % (
            args.steps, args.lr, args.lr_decay_every, args.batch, args.window,
            args.time_samples, args.obs_dim, args.enc_hidden, args.dec_hidden,
            args.pod, args.n_train, args.radius, args.treatment, args.vblocks,
            args.weight_prior_var, args.seed,
        )
    )
    rows = []
    for noise_std in args.noise:
        rows.append((noise_std, *run_variant(noise_std, args)))
    print("summary (noise, dominance, eps_mean):")
    for noise_std, ratio, eps in rows:
        print("  %-8g %6.1fx  %.4f" % (noise_std, ratio, eps))


if __name__ == "__main__":
    main()
