import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference_gradient, dense_b_diagonal, max_relative_error
from sderom.data import Dataset, Trajectory, Window
from sderom.elbo import (
    FrozenDraws,
    SamplingConfig,
    all_windows,
    b_matrix_diag,
    drift_residual,
    elbo_gradient_estimate,
    elbo_window_estimate,
    gradient_for_window,
    make_draws,
    quadrature_penalty,
    residual_from_moments,
    residual_penalty,
    window_objective_flat,
)
from sderom.encdec import kl_gaussian_diag
from sderom.errors import NonFiniteError
from sderom.kernel import build_window_posterior
from sderom.model import ModelConfig, ThetaTreatment, block_priors, build_model
from sderom.nets import pack_blocks


def tiny_config(drift_kind="mlp", **overrides):
    base = dict(
        d=2,
        D=3,
        encoder_hidden=(),
        decoder_hidden=(),
        drift_kind=drift_kind,
        drift_hidden=(4,),
        poly_order=2,
        phi_hidden=(4,),
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_trajectory(D=3, n=5, seed=1, t_final=1.0, t_start=0.0):
    # finite-difference tests shift t_start away from 0: at t = 0 with
    # zero-initialized biases every feature-map pre-activation sits exactly
    # on the relu kink, where two-sided differences disagree with the
    # subgradient by construction
    rng = np.random.default_rng(seed)
    return Trajectory(
        times=np.linspace(t_start, t_start + t_final, n),
        states=0.5 * rng.standard_normal((n, D)),
        params=np.zeros(0),
        forcing_samples=np.zeros((n, 0)),
    )


def full_window(n):
    return Window(trajectory_index=0, window_index=0, sample_indices=np.arange(n))


def draws_for(model, treatment, seed=3, n_latent=2, n_time=3, t0=0.0, t1=1.0):
    model.ensure_posterior(treatment)
    sampling = SamplingConfig(n_latent_samples=n_latent, n_time_samples=n_time)
    rng = np.random.default_rng(seed)
    shapes = {b: model.blocks[b].shape for b in treatment.variational_blocks}
    return make_draws(rng, sampling, model.cfg.d, t0, t1, treatment, shapes)


class TestBDiag:
    def test_scalar_exemplar(self):
        assert b_matrix_diag(2.0, 0.0, 4.0) == pytest.approx(1.0)

    def test_two_component_exemplar(self):
        out = b_matrix_diag(
            np.array([1.0, 2.0]), np.array([0.1, -0.2]), np.array([0.5, 0.4])
        )
        npt.assert_allclose(out, [0.2, 0.15], rtol=1e-14)

    @pytest.mark.parametrize("a", [0.5, 1.0, 2.3])
    def test_stationary_moment_rate_recovers_decay(self, a):
        # if ds/dt = -2 a s + psi2 then (psi2 - ds) / (2 s) = a exactly
        s = np.array([0.3, 1.7])
        psi2 = np.array([0.8, 0.1])
        ds = -2.0 * a * s + psi2
        npt.assert_allclose(b_matrix_diag(s, ds, psi2), [a, a], rtol=1e-12)

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError):
            b_matrix_diag(np.array([1.0, 0.0]), np.zeros(2), np.ones(2))

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_dense_commutator_solve(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 6))
        s = rng.uniform(0.2, 3.0, size=d)
        ds = rng.standard_normal(d)
        psi2 = rng.uniform(0.1, 2.0, size=d)
        npt.assert_allclose(
            b_matrix_diag(s, ds, psi2), dense_b_diagonal(s, ds, psi2), rtol=1e-10
        )


class TestResidual:
    def test_vanishes_on_matched_linear_moments(self):
        # moments that solve dm = -a m + c, ds = -2 a s + psi2 make the
        # residual of the drift psi(z) = -a z + c identically zero
        rng = np.random.default_rng(0)
        a, c = 0.7, 0.3
        psi2 = np.array([0.4, 0.9])
        m = rng.standard_normal((6, 2))
        s = rng.uniform(0.1, 2.0, size=(6, 2))
        z = rng.standard_normal((6, 2))
        dm = -a * m + c
        ds = -2.0 * a * s + psi2
        res = residual_from_moments(m, dm, s, ds, psi2, z, -a * z + c)
        npt.assert_allclose(res, np.zeros_like(res), atol=1e-12)

    def test_at_the_mean_reduces_to_drift_mismatch(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((4, 3))
        dm = rng.standard_normal((4, 3))
        s = rng.uniform(0.5, 1.5, size=(4, 3))
        ds = rng.standard_normal((4, 3))
        psi = rng.standard_normal((4, 3))
        res = residual_from_moments(m, dm, s, ds, np.ones(3), m, psi)
        npt.assert_allclose(res, dm - psi, rtol=1e-12)

    def test_affine_in_z(self):
        m = np.array([[1.0, -1.0]])
        dm = np.array([[0.2, 0.1]])
        s = np.array([[1.0, 2.0]])
        ds = np.array([[0.0, 0.0]])
        psi2 = np.array([2.0, 4.0])
        b = (psi2 - ds) / (2.0 * s)
        for z in [np.zeros((1, 2)), np.ones((1, 2)), np.array([[3.0, -2.0]])]:
            res = residual_from_moments(m, dm, s, ds, psi2, z, np.zeros((1, 2)))
            npt.assert_allclose(res, b * (m - z) + dm, rtol=1e-12)


class TestQuadraturePenalty:
    def test_zero_residuals(self):
        assert float(quadrature_penalty(np.zeros((4, 2)), np.zeros(2), 1.0)) == 0.0

    def test_unit_precision_is_scaled_square_norm(self):
        res = np.array([[1.0, 2.0], [3.0, 0.0]])
        out = float(quadrature_penalty(res, np.zeros(2), 3.0))
        assert out == pytest.approx(3.0 / 4.0 * 14.0)

    def test_precision_weighting(self):
        # C = exp(-2 log_diag) = (4, 0.25); one row, span 2 cancels 2 L
        log_diag = np.array([-math.log(2.0), math.log(2.0)])
        res = np.array([[1.0, 2.0]])
        out = float(quadrature_penalty(res, log_diag, 2.0))
        assert out == pytest.approx(5.0, rel=1e-12)

    def test_row_averaging(self):
        rng = np.random.default_rng(4)
        res = rng.standard_normal((3, 2))
        log_diag = rng.standard_normal(2)
        one = float(quadrature_penalty(res, log_diag, 1.5))
        doubled = float(quadrature_penalty(np.vstack([res, res]), log_diag, 1.5))
        assert doubled == pytest.approx(one, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        res = rng.standard_normal((5, 3))
        log_diag = rng.standard_normal(3)
        span = float(rng.uniform(0.1, 4.0))
        assert float(quadrature_penalty(res, log_diag, span)) >= 0.0


class TestModelResidualOps:
    def make_model_and_wp(self):
        cfg = tiny_config(drift_kind="polynomial", poly_order=1)
        model = build_model(cfg, seed=5)
        model.blocks["phi_w"][:] = 0.0  # constant feature map, flat moments
        traj = tiny_trajectory(n=4, seed=6)
        wp = build_window_posterior(
            model.encoder_bundle(), model.kernel_bundle(), traj, full_window(4)
        )
        return model, wp

    def test_returns_plain_array(self):
        model, wp = self.make_model_and_wp()
        res = drift_residual(model, wp, np.array([0.3, -0.2]), 0.5)
        assert isinstance(res, np.ndarray)
        assert res.shape == (2,)

    def test_batch_rows_match_single_calls(self):
        model, wp = self.make_model_and_wp()
        z = np.array([[0.3, -0.2], [1.0, 0.5]])
        t = np.array([0.25, 0.75])
        batch = drift_residual(model, wp, z, t)
        for i in range(2):
            npt.assert_allclose(
                batch[i], drift_residual(model, wp, z[i], float(t[i])), rtol=1e-12
            )

    def test_penalty_is_precision_weighted_square(self):
        model, wp = self.make_model_and_wp()
        model.blocks["disp_logdiag"] = np.array([-math.log(2.0), math.log(2.0)])
        z = np.array([0.4, 1.1])
        res = drift_residual(model, wp, z, 0.5)
        expected = 4.0 * res[0] ** 2 + 0.25 * res[1] ** 2
        assert residual_penalty(model, wp, z, 0.5) == pytest.approx(expected, rel=1e-12)

    def test_penalty_exemplar_value(self):
        # force the residual to exactly (1, 2): zero drift, constant unit
        # moments, then r = B (m - z); with s = 1, ds = 0, B = psi2 / 2
        model, wp = self.make_model_and_wp()
        model.blocks["drift_w"][:] = 0.0
        model.blocks["disp_logdiag"] = np.array([-math.log(2.0), math.log(2.0)])
        z = np.array([0.0, 0.0])
        res = drift_residual(model, wp, z, 0.5)
        prec = np.array([4.0, 0.25])
        assert residual_penalty(model, wp, z, 0.5) == pytest.approx(
            float(np.sum(prec * res**2)), rel=1e-12
        )


class TestWindowObjective:
    def setup_method(self):
        self.cfg = tiny_config()
        self.traj = tiny_trajectory(n=5, seed=7)
        self.window = full_window(5)

    def test_point_estimate_is_finite_float(self):
        model = build_model(self.cfg, seed=0)
        out = elbo_window_estimate(
            model,
            self.traj,
            self.window,
            SamplingConfig(seed=0),
            ThetaTreatment.point_estimate(),
        )
        assert isinstance(out, float)
        assert math.isfinite(out)

    def test_point_estimate_ignores_window_share(self):
        model = build_model(self.cfg, seed=0)
        treatment = ThetaTreatment.point_estimate()
        draws = draws_for(model, treatment)
        a = elbo_window_estimate(
            model, self.traj, self.window, SamplingConfig(), treatment,
            total_windows=1, draws=draws,
        )
        b = elbo_window_estimate(
            model, self.traj, self.window, SamplingConfig(), treatment,
            total_windows=1000, draws=draws,
        )
        assert a == b

    def test_kl_share_scales_inversely_with_window_count(self):
        model = build_model(self.cfg, seed=0)
        treatment = ThetaTreatment.full_variational()
        draws = draws_for(model, treatment)
        vals = {
            t: elbo_window_estimate(
                model, self.traj, self.window, SamplingConfig(), treatment,
                total_windows=t, draws=draws,
            )
            for t in (1, 2, 4)
        }
        kl_12 = (vals[2] - vals[1]) / (1.0 - 0.5)
        kl_14 = (vals[4] - vals[1]) / (1.0 - 0.25)
        assert kl_12 == pytest.approx(kl_14, rel=1e-9)

        priors = block_priors(model.cfg)
        kl_direct = sum(
            float(
                kl_gaussian_diag(
                    model.blocks[f"q_mean.{b}"],
                    model.blocks[f"q_logvar.{b}"],
                    priors[b][0],
                    math.log(priors[b][1]),
                )
            )
            for b in treatment.variational_blocks
        )
        assert kl_12 == pytest.approx(kl_direct, rel=1e-8)
        assert kl_direct > 0.0

    def test_delta_posterior_matches_point_estimate(self):
        # shrinking every q_logvar collapses the variational treatment onto
        # the point estimate at the posterior means, up to the KL share
        model = build_model(self.cfg, seed=0)
        treatment = ThetaTreatment.full_variational()
        model.ensure_posterior(treatment)
        for b in treatment.variational_blocks:
            model.blocks[f"q_logvar.{b}"][:] = math.log(1e-16)
        rng = np.random.default_rng(8)
        gamma = rng.standard_normal((1, 2))
        tau = rng.uniform(0.0, 1.0, size=4)
        shapes = {b: model.blocks[b].shape for b in treatment.variational_blocks}
        outs = [
            elbo_window_estimate(
                model, self.traj, self.window, SamplingConfig(), treatment,
                total_windows=2,
                draws=FrozenDraws(
                    gamma=gamma,
                    tau=tau,
                    xi={b: rng.standard_normal(shapes[b]) for b in shapes},
                ),
            )
            for _ in range(2)
        ]
        assert outs[0] == pytest.approx(outs[1], rel=1e-9, abs=1e-6)

        point = build_model(self.cfg, seed=0)
        for b in treatment.variational_blocks:
            point.blocks[b] = model.blocks[f"q_mean.{b}"].copy()
        base = elbo_window_estimate(
            point, self.traj, self.window, SamplingConfig(),
            ThetaTreatment.point_estimate(),
            draws=FrozenDraws(gamma=gamma, tau=tau, xi={}),
        )
        priors = block_priors(model.cfg)
        kl = sum(
            float(
                kl_gaussian_diag(
                    model.blocks[f"q_mean.{b}"],
                    model.blocks[f"q_logvar.{b}"],
                    priors[b][0],
                    math.log(priors[b][1]),
                )
            )
            for b in treatment.variational_blocks
        )
        assert outs[0] == pytest.approx(base - kl / 2.0, rel=1e-6)

    def test_dispersion_change_leaves_decoder_gradients_alone(self):
        model = build_model(self.cfg, seed=0)
        treatment = ThetaTreatment.point_estimate()
        draws = draws_for(model, treatment)
        _, g_base = gradient_for_window(model, self.traj, self.window, draws, treatment)
        model.blocks["disp_logdiag"] = model.blocks["disp_logdiag"] + 1.0
        _, g_scaled = gradient_for_window(
            model, self.traj, self.window, draws, treatment
        )
        npt.assert_array_equal(g_base["dec_w"], g_scaled["dec_w"])
        npt.assert_array_equal(g_base["dec_logvar"], g_scaled["dec_logvar"])
        assert not np.array_equal(
            g_base["disp_logdiag"], g_scaled["disp_logdiag"]
        )

    def test_nonfinite_objective_raises(self):
        model = build_model(self.cfg, seed=0)
        model.blocks["dec_logvar"] = np.full(3, np.inf)
        treatment = ThetaTreatment.point_estimate()
        draws = draws_for(model, treatment)
        with pytest.raises(NonFiniteError, match="not finite on window"):
            elbo_window_estimate(
                model, self.traj, self.window, SamplingConfig(), treatment,
                draws=draws,
            )


class TestGradients:
    @pytest.mark.parametrize(
        "treatment",
        [
            ThetaTreatment.point_estimate(),
            ThetaTreatment.mixed(),
            ThetaTreatment.full_variational(),
        ],
        ids=["point", "mixed", "full"],
    )
    def test_matches_finite_differences(self, treatment):
        model = build_model(tiny_config(), seed=1)
        traj = tiny_trajectory(n=5, seed=2, t_start=0.3)
        window = full_window(5)
        draws = draws_for(model, treatment, seed=9, t0=0.3, t1=1.3)
        value, grads = gradient_for_window(
            model, traj, window, draws, treatment, total_windows=3
        )
        names = model.trainable_names(treatment)
        x0 = pack_blocks({n: model.blocks[n] for n in names}, names)
        analytic = pack_blocks(grads, names)

        def fn(flat):
            return window_objective_flat(
                model, traj, window, draws, treatment, names, flat, total_windows=3
            )

        assert fn(x0) == pytest.approx(value, rel=1e-12)
        numeric = central_difference_gradient(fn, x0, step=1e-6)
        assert max_relative_error(analytic, numeric, floor=1e-6) < 1e-5

    def test_polynomial_drift_gradients(self):
        model = build_model(tiny_config(drift_kind="polynomial"), seed=4)
        rng = np.random.default_rng(10)
        model.blocks["drift_w"] = 0.3 * rng.standard_normal(
            model.blocks["drift_w"].shape
        )
        traj = tiny_trajectory(n=4, seed=11, t_start=0.3)
        window = full_window(4)
        treatment = ThetaTreatment.point_estimate()
        draws = draws_for(model, treatment, seed=12, t0=0.3, t1=1.3)
        _, grads = gradient_for_window(model, traj, window, draws, treatment)
        names = model.trainable_names(treatment)
        x0 = pack_blocks({n: model.blocks[n] for n in names}, names)
        analytic = pack_blocks(grads, names)

        def fn(flat):
            return window_objective_flat(
                model, traj, window, draws, treatment, names, flat
            )

        numeric = central_difference_gradient(fn, x0, step=1e-6)
        assert max_relative_error(analytic, numeric, floor=1e-6) < 1e-5


class TestDrawsAndSampling:
    def test_make_draws_shapes_and_support(self):
        model = build_model(tiny_config(), seed=0)
        treatment = ThetaTreatment.mixed()
        model.ensure_posterior(treatment)
        sampling = SamplingConfig(n_latent_samples=3, n_time_samples=7)
        draws = make_draws(
            np.random.default_rng(0),
            sampling,
            model.cfg.d,
            2.0,
            5.0,
            treatment,
            {b: model.blocks[b].shape for b in treatment.variational_blocks},
        )
        assert draws.gamma.shape == (3, 2)
        assert draws.tau.shape == (7,)
        assert np.all((draws.tau >= 2.0) & (draws.tau <= 5.0))
        assert set(draws.xi) == {"dec_logvar"}
        assert draws.xi["dec_logvar"].shape == model.blocks["dec_logvar"].shape

    def test_sampling_config_validation(self):
        with pytest.raises(ValueError):
            SamplingConfig(n_latent_samples=0)
        with pytest.raises(ValueError):
            SamplingConfig(n_time_samples=0)

    def test_all_windows_counts(self):
        trajs = [tiny_trajectory(n=5, seed=s) for s in (0, 1)]
        dataset = Dataset(trajectories=tuple(trajs))
        windows = all_windows(dataset, 3)
        # each 5-sample trajectory tiles as [0..2], [2..4]
        assert len(windows) == 4
        assert [w.trajectory_index for w in windows] == [0, 0, 1, 1]

    def test_gradient_estimate_protocol(self):
        model = build_model(tiny_config(), seed=0)
        dataset = Dataset(trajectories=(tiny_trajectory(n=5, seed=3),))
        treatment = ThetaTreatment.point_estimate()
        est = elbo_gradient_estimate(
            model,
            dataset,
            SamplingConfig(),
            treatment,
            np.random.default_rng(5),
            window_size=3,
        )
        assert set(est.gradient) == set(model.trainable_names(treatment))
        assert math.isfinite(est.value)
        assert est.window.size == 3


class TestEstimatorStatistics:
    def build(self):
        model = build_model(tiny_config(), seed=6)
        traj = tiny_trajectory(n=5, seed=13)
        return model, traj, full_window(5)

    def estimates(self, model, traj, window, gamma, n_time, n_rep, seed):
        rng = np.random.default_rng(seed)
        treatment = ThetaTreatment.point_estimate()
        out = np.empty(n_rep)
        for i in range(n_rep):
            draws = FrozenDraws(
                gamma=gamma, tau=rng.uniform(0.0, 1.0, size=n_time), xi={}
            )
            out[i] = elbo_window_estimate(
                model, traj, window, SamplingConfig(), treatment, draws=draws
            )
        return out

    def test_concentrates_on_dense_quadrature_reference(self):
        model, traj, window = self.build()
        gamma = np.random.default_rng(14).standard_normal((1, 2))
        dense = FrozenDraws(
            gamma=gamma, tau=np.linspace(0.0, 1.0, 4001), xi={}
        )
        reference = elbo_window_estimate(
            model, traj, window, SamplingConfig(), ThetaTreatment.point_estimate(),
            draws=dense,
        )
        samples = self.estimates(model, traj, window, gamma, 4, 400, seed=15)
        se = samples.std(ddof=1) / math.sqrt(len(samples))
        assert abs(samples.mean() - reference) < 3.0 * se

    def test_standard_error_shrinks_with_time_samples(self):
        model, traj, window = self.build()
        gamma = np.random.default_rng(16).standard_normal((1, 2))
        coarse = self.estimates(model, traj, window, gamma, 4, 400, seed=17)
        fine = self.estimates(model, traj, window, gamma, 16, 400, seed=18)
        ratio = coarse.std(ddof=1) / fine.std(ddof=1)
        assert 1.6 < ratio < 2.5
