import math

import numpy as np
import numpy.testing as npt
import pytest

from sderom.nets import MLPConfig
from sderom.sde import (
    DriftConfig,
    dispersion_psi2,
    drift_apply,
    drift_eval,
    init_drift_params,
    monomial_exponents,
    n_monomials,
    polynomial_features,
    precision_C,
)


def poly_cfg(d=2, order=3, n_mu=0, n_f=0):
    return DriftConfig(kind="polynomial", d=d, n_mu=n_mu, n_f=n_f, poly_order=order)


def mlp_cfg(d=2, n_mu=1, n_f=1, hidden=(8,)):
    widths = (d + n_mu + n_f + 2, *hidden, d)
    return DriftConfig(kind="mlp", d=d, n_mu=n_mu, n_f=n_f, mlp=MLPConfig(widths))


class TestMonomials:
    def test_graded_lex_order_d2_o3(self):
        exps = [tuple(e) for e in monomial_exponents(2, 3)]
        assert exps == [
            (0, 0),
            (1, 0),
            (0, 1),
            (2, 0),
            (1, 1),
            (0, 2),
            (3, 0),
            (2, 1),
            (1, 2),
            (0, 3),
        ]

    @pytest.mark.parametrize(
        "d, order", [(1, 1), (1, 3), (2, 2), (2, 3), (3, 2), (4, 3)]
    )
    def test_count_is_binomial(self, d, order):
        assert n_monomials(d, order) == math.comb(d + order, order)
        assert len(monomial_exponents(d, order)) == n_monomials(d, order)

    def test_unsupported_order_rejected(self):
        with pytest.raises(ValueError):
            monomial_exponents(2, 4)

    def test_features_at_zero(self):
        feats = polynomial_features(np.zeros((1, 2)), monomial_exponents(2, 3))
        expected = np.zeros(10)
        expected[0] = 1.0
        npt.assert_array_equal(np.asarray(feats)[0], expected)

    def test_features_scalar_case(self):
        feats = polynomial_features(np.array([[2.0]]), monomial_exponents(1, 2))
        npt.assert_array_equal(np.asarray(feats)[0], [1.0, 2.0, 4.0])

    def test_features_hand_values(self):
        z = np.array([[2.0, 3.0]])
        feats = np.asarray(polynomial_features(z, monomial_exponents(2, 2)))
        npt.assert_allclose(feats[0], [1.0, 2.0, 3.0, 4.0, 6.0, 9.0])


class TestPolynomialDrift:
    def test_zero_coefficients_zero_drift(self):
        cfg = poly_cfg()
        params = init_drift_params(cfg, np.random.default_rng(0))
        npt.assert_array_equal(params, np.zeros(cfg.n_params))
        out = drift_eval(cfg, params, np.array([0.3, -0.7]), 0.0, np.zeros(0), np.zeros(0))
        npt.assert_array_equal(out, np.zeros(2))

    def test_recovered_oscillator_coefficients(self):
        # psi(z) = (0.93 z2, -0.89 z1)
        cfg = poly_cfg()
        coeffs = np.zeros((10, 2))
        coeffs[2, 0] = 0.93
        coeffs[1, 1] = -0.89
        params = coeffs.ravel()
        out = drift_eval(cfg, params, np.array([1.0, 0.0]), 0.0, np.zeros(0), np.zeros(0))
        npt.assert_allclose(out, [0.0, -0.89])
        out = drift_eval(cfg, params, np.array([0.5, 2.0]), 0.0, np.zeros(0), np.zeros(0))
        npt.assert_allclose(out, [0.93 * 2.0, -0.89 * 0.5])

    def test_apply_equals_features_times_coeffs(self):
        cfg = poly_cfg(order=2)
        rng = np.random.default_rng(1)
        params = rng.standard_normal(cfg.n_params)
        z = rng.standard_normal((5, 2))
        out = drift_apply(cfg, params, z, np.zeros(5), np.zeros(0), np.zeros((5, 0)))
        feats = np.asarray(polynomial_features(z, cfg.exponents()))
        npt.assert_allclose(out, feats @ params.reshape(6, 2))


class TestNetworkDrift:
    def test_input_width_validated(self):
        with pytest.raises(ValueError):
            DriftConfig(kind="mlp", d=2, n_mu=1, n_f=0, mlp=MLPConfig((2, 4, 2)))

    def test_time_shift_invariance(self):
        cfg = mlp_cfg()
        rng = np.random.default_rng(5)
        params = init_drift_params(cfg, rng)
        z = rng.standard_normal((4, 2))
        mu = rng.standard_normal(1)
        f = rng.standard_normal((4, 1))
        t = rng.uniform(0.0, 1.0, size=4)
        out0 = drift_apply(cfg, params, z, t, mu, f)
        out1 = drift_apply(cfg, params, z, t + 1.0, mu, f)
        npt.assert_allclose(out0, out1, atol=1e-12)

    def test_forcing_and_params_enter(self):
        cfg = mlp_cfg(hidden=(16,))
        rng = np.random.default_rng(6)
        params = init_drift_params(cfg, rng)
        z = rng.standard_normal((1, 2))
        t = np.zeros(1)
        base = drift_apply(cfg, params, z, t, np.array([0.2]), np.array([[0.3]]))
        bumped = drift_apply(cfg, params, z, t, np.array([0.9]), np.array([[0.3]]))
        assert not np.allclose(base, bumped)

    def test_physics_with_zero_correction(self):
        def physics(z, t, mu, f_t):
            return -2.0 * z

        cfg = DriftConfig(
            kind="physics_plus_mlp", d=2, n_mu=0, n_f=0, mlp=MLPConfig((4, 4, 2))
        )
        params = np.zeros(cfg.n_params)
        z = np.array([[1.0, -0.5]])
        out = drift_apply(cfg, params, z, np.zeros(1), np.zeros(0), np.zeros((1, 0)), physics=physics)
        npt.assert_allclose(out, -2.0 * z)

    def test_physics_requires_callback(self):
        cfg = DriftConfig(
            kind="physics_plus_mlp", d=2, n_mu=0, n_f=0, mlp=MLPConfig((4, 4, 2))
        )
        with pytest.raises(ValueError):
            drift_apply(
                cfg, np.zeros(cfg.n_params), np.ones((1, 2)), np.zeros(1), np.zeros(0), np.zeros((1, 0))
            )

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            DriftConfig(kind="spline", d=2, n_mu=0, n_f=0)


class TestDispersion:
    def test_unit_when_log_zero(self):
        npt.assert_allclose(precision_C(np.zeros(3)), np.ones(3))
        npt.assert_allclose(dispersion_psi2(np.zeros(3)), np.ones(3))

    def test_small_dispersion_large_precision(self):
        log_diag = np.log(np.array([0.1]))
        npt.assert_allclose(precision_C(log_diag), [100.0])
        npt.assert_allclose(dispersion_psi2(log_diag), [0.01])

    def test_hand_values(self):
        log_diag = np.log(np.array([0.5, 2.0]))
        npt.assert_allclose(precision_C(log_diag), [4.0, 0.25])

    def test_precision_times_psi2_is_one(self):
        rng = np.random.default_rng(8)
        log_diag = rng.standard_normal(6)
        npt.assert_allclose(precision_C(log_diag) * dispersion_psi2(log_diag), np.ones(6))
