"""Coefficient structures, maturity grids, and the integrated S/G/A rows."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levybond.errors import ConfigError
from levybond.hjm import (
    MaturityGrid,
    ModelCoefficients,
    constant_sigma,
    drift_from_martingale_condition,
    exp_decay_sigma,
    integrate_coefficients,
    make_linear_gamma,
    separable_gamma,
    validate_coefficients,
)
from levybond.levy import FiniteAtoms


def test_accessors_clamp_expired_maturities():
    mc = ModelCoefficients(constant_sigma(0.3), make_linear_gamma(0.5))
    np.testing.assert_allclose(mc.sigma_at(0.5, [0.25, 0.75]), [0.0, 0.3])
    np.testing.assert_allclose(mc.gamma_at(0.5, 2.0, [0.25, 0.75]), [0.0, 1.0])


def test_alpha_must_be_set_before_reading():
    mc = ModelCoefficients(constant_sigma(0.3), make_linear_gamma(0.5))
    with pytest.raises(ConfigError, match="drift not set"):
        mc.alpha_at(0.0, 1.0)
    mc2 = mc.with_alpha(lambda t, T: np.zeros_like(np.asarray(T, dtype=float)))
    assert mc2.alpha_at(0.0, 1.0) == 0.0
    assert mc.alpha is None  # original untouched


def test_nonpositive_horizon_rejected():
    with pytest.raises(ConfigError, match="positive"):
        ModelCoefficients(constant_sigma(0.1), make_linear_gamma(0.1), horizon=0.0)


def test_constant_sigma_integrates_linearly(grid9):
    ic = integrate_coefficients(
        ModelCoefficients(constant_sigma(0.3), make_linear_gamma(0.5)), grid9
    )
    # S(t, T) = -0.3 (T - t), exact under trapezoid
    assert ic.S(0.25, 0.75) == pytest.approx(-0.15, abs=1e-15)
    assert ic.S(0.75, 0.25) == 0.0


def test_linear_gamma_integrates_linearly(grid9):
    ic = integrate_coefficients(
        ModelCoefficients(constant_sigma(0.3), make_linear_gamma(0.5)), grid9
    )
    # G(t, x, T) = -0.5 x (T - t)
    assert ic.G(0.0, -1.5, 1.0) == pytest.approx(0.75, abs=1e-15)
    assert ic.G(0.5, 2.0, 0.75) == pytest.approx(-0.25, abs=1e-14)


def test_exp_decay_sigma_matches_closed_form(grid9):
    s0, d = 0.4, 1.3
    ic = integrate_coefficients(
        ModelCoefficients(exp_decay_sigma(s0, d), make_linear_gamma(0.0)),
        grid9,
        quad_points=2048,
    )
    t, T = 0.2, 0.9
    want = -s0 * (1.0 - np.exp(-d * (T - t))) / d
    assert ic.S(t, T) == pytest.approx(want, rel=1e-6)


def test_separable_gamma_splits_mark_and_coeff(grid9):
    gamma = separable_gamma(0.01, lambda x: np.exp(-np.abs(x)))
    ic = integrate_coefficients(
        ModelCoefficients(constant_sigma(0.1), gamma), grid9
    )
    want = -0.01 * np.exp(-2.0) * 0.5
    assert ic.G(0.0, 2.0, 0.5) == pytest.approx(want, rel=1e-12)


def test_rows_agree_with_scalars_on_grid(grid9, mc_small):
    ic = integrate_coefficients(mc_small, grid9)
    t = grid9.times[2]
    S_row = ic.S_row(t)
    G_row = ic.G_row(t, -1.5)
    for j, T in enumerate(grid9.times):
        assert S_row[j] == pytest.approx(ic.S(t, T), abs=1e-14)
        assert G_row[j] == pytest.approx(ic.G(t, -1.5, T), abs=1e-14)


def test_rows_agree_with_scalars_off_grid(grid9, mc_small):
    ic = integrate_coefficients(mc_small, grid9)
    t = 0.3  # strictly between knots 0.25 and 0.375
    S_row = ic.S_row(t)
    for j, T in enumerate(grid9.times):
        assert S_row[j] == pytest.approx(ic.S(t, T), abs=1e-14)


def test_g_rows_stacks_marks(grid9, mc_small):
    ic = integrate_coefficients(mc_small, grid9)
    rows = ic.G_rows(0.0, np.array([1.0, -1.5]))
    assert rows.shape == (2, len(grid9.times))
    np.testing.assert_allclose(rows[1], ic.G_row(0.0, -1.5))


@given(st.floats(0.0, 0.999))
@settings(max_examples=30, deadline=None)
def test_constant_sigma_row_is_negative_time_to_maturity(t):
    grid = MaturityGrid.uniform(1.0, 9)
    ic = integrate_coefficients(
        ModelCoefficients(constant_sigma(0.3), make_linear_gamma(0.0)), grid
    )
    want = -0.3 * np.maximum(grid.times - t, 0.0)
    np.testing.assert_allclose(ic.S_row(t), want, atol=1e-12)


class TestMaturityGrid:
    def test_uniform_counts_knots_including_zero(self):
        g = MaturityGrid.uniform(1.0, 9)
        assert len(g.times) == 9
        assert g.horizon == 1.0
        assert g.n_steps == 8
        np.testing.assert_allclose(g.tradeable_times, np.linspace(0.0, 1.0, 9))

    def test_must_start_at_zero(self):
        with pytest.raises(ConfigError, match="start at 0"):
            MaturityGrid([0.1, 0.5, 1.0], [0, 1, 2])

    def test_must_increase(self):
        with pytest.raises(ConfigError, match="increasing"):
            MaturityGrid([0.0, 0.5, 0.5], [0, 1, 2])

    def test_tradeable_index_bounds(self):
        with pytest.raises(ConfigError, match="out of range"):
            MaturityGrid([0.0, 0.5, 1.0], [0, 3])

    def test_tradeable_index_order(self):
        with pytest.raises(ConfigError, match="strictly increasing"):
            MaturityGrid([0.0, 0.5, 1.0], [1, 0])

    def test_refine_keeps_tradeable_knots(self):
        g = MaturityGrid.uniform(1.0, 9).refine(16)
        assert g.n_steps == 16
        np.testing.assert_array_equal(g.j_indices, np.arange(0, 17, 2))
        np.testing.assert_allclose(g.tradeable_times, np.linspace(0.0, 1.0, 9))

    def test_refine_rejects_incommensurate_steps(self):
        with pytest.raises(ConfigError, match="do not hit every tradeable"):
            MaturityGrid.uniform(1.0, 9).refine(12)


class TestValidation:
    def test_clean_coefficients_pass(self, grid9, nu2, mc_small):
        validate_coefficients(mc_small, nu2, grid9)

    def test_nonfinite_sigma_flagged(self, grid9, nu2):
        mc = ModelCoefficients(lambda t, T: np.full_like(T, np.inf), make_linear_gamma(0.1))
        with pytest.raises(ConfigError, match="volatility"):
            validate_coefficients(mc, nu2, grid9)

    def test_non_integrable_gamma_flagged(self, grid9):
        nu = FiniteAtoms(points=[50.0], masses=[0.1])
        mc = ModelCoefficients(
            constant_sigma(0.1), separable_gamma(1.0, lambda x: np.exp(x * x))
        )
        with pytest.raises(ConfigError, match="integrable"):
            validate_coefficients(mc, nu, grid9)


def test_martingale_drift_matches_hand_formula(nu2):
    sig, slope = 0.3, 0.5
    mc = drift_from_martingale_condition(
        ModelCoefficients(constant_sigma(sig), make_linear_gamma(slope)), nu2,
        quad_points=257,
    )
    t, T = 0.2, 0.8
    tau = T - t
    jump = sum(
        m * slope * x * np.exp(-slope * x * tau)
        for x, m in zip(nu2.points, nu2.masses)
    )
    assert mc.alpha_at(t, T) == pytest.approx(sig * sig * tau - jump, rel=1e-9)


def test_martingale_drift_zero_at_expiry(nu2, mc_small):
    mc = drift_from_martingale_condition(mc_small, nu2)
    assert mc.alpha_at(0.5, 0.5) == 0.0
    np.testing.assert_allclose(mc.alpha_at(0.5, np.array([0.2, 0.5])), 0.0)
