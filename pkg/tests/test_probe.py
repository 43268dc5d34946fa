"""Moment test sets, gamma bounds, and the incompleteness probes."""
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levybond.claims import make_sqrt_psi
from levybond.errors import (
    ConfigError,
    DegenerateTestSetError,
    EmptyAnnulusError,
    ScenarioKindMismatchError,
)
from levybond.hjm import ModelCoefficients, constant_sigma, make_linear_gamma, separable_gamma
from levybond.levy import Density, DiscreteAtoms, FiniteAtoms, uniform_density
from levybond.probe import (
    MomentTestSet,
    best_effort_residuals,
    concentration_probe,
    control_probe,
    discrete_support_probe,
    gamma_lower_bound,
    incompleteness_report,
    make_probe_state,
    make_test_set,
    optimize_betas,
)

F0 = lambda T: 0.03


@pytest.fixture
def state9(grid9):
    mc = ModelCoefficients(constant_sigma(0.12), make_linear_gamma(0.01))
    return make_probe_state(mc, grid9, F0)


def _ts(g, h, betas=None):
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    betas = np.ones(len(g)) if betas is None else np.asarray(betas, dtype=float)
    return MomentTestSet(points=np.arange(1.0, len(g) + 1.0), betas=betas,
                         g_values=g, h_vectors=h)


class TestGammaLowerBound:
    def test_hand_computed_quotient(self):
        ts = _ts([3.0, 1.0], [[0.5, 1.0], [0.25, 0.5]], betas=[1.0, -1.0])
        # num = |3 - 1| = 2, den = sup |(0.25, 0.5)| = 0.5
        assert gamma_lower_bound(ts) == pytest.approx(4.0)

    def test_vanishing_denominator_is_infinite(self):
        ts = _ts([3.0, 1.0], np.zeros((2, 4)), betas=[1.0, -1.0])
        assert gamma_lower_bound(ts) == np.inf

    def test_degenerate_set_raises(self):
        ts = _ts([1.0, 1.0], np.zeros((2, 4)), betas=[1.0, -1.0])
        with pytest.raises(DegenerateTestSetError, match="degenerate"):
            gamma_lower_bound(ts)

    @given(st.floats(-50.0, 50.0).filter(lambda lam: abs(lam) > 1e-6),
           st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_scale_invariant_in_beta(self, lam, seed):
        rng = np.random.default_rng(seed)
        g = rng.standard_normal(3)
        h = rng.standard_normal((3, 5))
        betas = rng.standard_normal(3)
        a = gamma_lower_bound(_ts(g, h, betas))
        b = gamma_lower_bound(_ts(g, h, lam * betas))
        assert a == pytest.approx(b, rel=1e-9)

    def test_misaligned_test_set_rejected(self):
        with pytest.raises(ConfigError, match="align"):
            MomentTestSet(points=np.array([1.0]), betas=np.array([1.0, 2.0]),
                          g_values=np.array([1.0]), h_vectors=np.zeros((1, 3)))


class TestOptimizeBetas:
    def test_never_below_the_starting_bound(self):
        rng = np.random.default_rng(3)
        ts = _ts(rng.standard_normal(4), rng.standard_normal((4, 6)))
        start = gamma_lower_bound(ts)
        beta, best = optimize_betas(ts)
        assert best >= start

    def test_reported_value_is_exactly_the_returned_betas(self):
        rng = np.random.default_rng(8)
        g = rng.standard_normal(4)
        h = rng.standard_normal((4, 6))
        ts = _ts(g, h)
        beta, best = optimize_betas(ts)
        num = abs(float(beta @ g))
        den = float(np.max(np.abs(beta @ h)))
        assert best == pytest.approx(num / den, rel=1e-12)

    def test_candidates_keep_nested_bounds_monotone(self):
        rng = np.random.default_rng(5)
        g = rng.standard_normal(5)
        h = rng.standard_normal((5, 6))
        small = _ts(g[:3], h[:3])
        beta_s, best_s = optimize_betas(small)
        large = _ts(g, h)
        _, best_l = optimize_betas(large, candidates=[beta_s])
        assert best_l >= best_s * (1.0 - 1e-12)


class TestProbeState:
    def test_h_vector_matches_direct_formula(self, grid9, state9):
        u = -1.5
        # flat 3% curve and gamma = 0.01 x: G(0, u, T) = -0.01 u T
        want = np.exp(-0.03 * grid9.times) * np.expm1(-0.01 * u * grid9.times)
        np.testing.assert_allclose(state9.h_vector(u), want, rtol=1e-12)

    def test_only_time_zero_supported(self, grid9):
        mc = ModelCoefficients(constant_sigma(0.12), make_linear_gamma(0.01))
        with pytest.raises(ConfigError, match="t=0"):
            make_probe_state(mc, grid9, F0, t=0.5)

    def test_make_test_set_samples_psi_and_h(self, state9):
        psi = lambda x: 2.0 * x
        ts = make_test_set(state9, psi, [1.0, -1.5], [1.0, -1.0])
        np.testing.assert_allclose(ts.g_values, [2.0, -3.0])
        np.testing.assert_allclose(ts.h_vectors[1], state9.h_vector(-1.5))


class TestConcentrationProbe:
    def _mc(self):
        return ModelCoefficients(constant_sigma(0.12), make_linear_gamma(0.01))

    def test_divergence_on_a_uniform_band(self, grid9):
        nu = uniform_density(0.5, 1.5, concentration_point=1.0)
        mc = self._mc()
        state = make_probe_state(mc, grid9, F0)
        cert = concentration_probe(nu, mc, state, lambda n: 1.0 / n, depth=6,
                                   threshold=10.0)
        assert cert.verdict == "divergent"
        assert cert.kind == "concentration"
        # oscillation flips sign between adjacent rings: numerator exactly 2
        np.testing.assert_allclose(cert.details["numerators"], 2.0, atol=1e-9)
        seps = cert.details["separations"]
        assert np.all(np.diff(seps) < 0.0)
        assert np.all(np.diff(cert.gammas) > 0.0)

    def test_measure_without_concentration_point_rejected(self, grid9):
        nu = uniform_density(0.5, 1.5)
        mc = self._mc()
        state = make_probe_state(mc, grid9, F0)
        with pytest.raises(ConfigError, match="concentration point"):
            concentration_probe(nu, mc, state, lambda n: 1.0 / n, depth=4)

    def test_empty_deep_ring_is_reported_with_its_index(self, grid9):
        # density with a ring-shaped gap swallowing annulus 11: the shallow
        # gate passes, then pair k = 5 probes the dead ring
        gap_lo, gap_hi = 1.0 / 13.0, 1.0 / 10.5
        nu = Density(
            lambda x: np.where(
                (np.abs(np.asarray(x) - 1.0) > gap_lo)
                & (np.abs(np.asarray(x) - 1.0) < gap_hi),
                0.0, 1.0),
            (0.5, 1.5), concentration_point=1.0,
        )
        mc = self._mc()
        state = make_probe_state(mc, grid9, F0)
        with pytest.raises(EmptyAnnulusError) as exc:
            concentration_probe(nu, mc, state, lambda n: 1.0 / n, depth=8)
        assert exc.value.index == 11

    def test_certificate_serializes_to_json(self, grid9):
        nu = uniform_density(0.5, 1.5, concentration_point=1.0)
        mc = self._mc()
        state = make_probe_state(mc, grid9, F0)
        cert = concentration_probe(nu, mc, state, lambda n: 1.0 / n, depth=3)
        payload = json.dumps(cert.to_dict())
        assert "denominators" in payload


def _tail_atoms(n, start=2.0):
    pts = start + np.arange(n, dtype=float)
    return DiscreteAtoms(points=pts, masses=1.0 / np.arange(1, n + 1) ** 3,
                         tail_bound=1e-9)


class TestDiscreteSupportProbe:
    def _state(self, grid9, coeff=0.01, mark_fn=None):
        mark_fn = mark_fn or (lambda x: np.exp(-np.abs(x)))
        mc = ModelCoefficients(constant_sigma(0.12), separable_gamma(coeff, mark_fn))
        return mc, make_probe_state(mc, grid9, F0)

    def test_decaying_g_drives_gamma_up(self, grid9):
        nu = _tail_atoms(16)
        mc, state = self._state(grid9)
        cert = discrete_support_probe(nu, mc, state, "G_to_zero", threshold=10.0)
        assert cert.verdict == "divergent"
        assert np.all(np.diff(cert.gammas[-cert.trend_window:]) >= 0.0)
        np.testing.assert_allclose(cert.details["numerators"], 1.0)

    def test_nonpositive_g_with_sqrt_psi(self, grid9):
        nu = _tail_atoms(16)
        mc, state = self._state(grid9)
        cert = discrete_support_probe(nu, mc, state, "G_nonpositive", threshold=10.0)
        assert cert.verdict == "divergent"
        # psi = sqrt(k) at the k-th thin atom; cubic masses make that atom k
        np.testing.assert_allclose(cert.details["numerators"],
                                   np.sqrt(np.arange(1, 17)), rtol=1e-12)

    def test_positive_g_fails_the_nonpositive_check(self, grid9):
        nu = _tail_atoms(12)
        mc, state = self._state(grid9, coeff=-0.01)
        with pytest.raises(ScenarioKindMismatchError, match="G reaches"):
            discrete_support_probe(nu, mc, state, "G_nonpositive")

    def test_flat_g_fails_the_to_zero_check(self, grid9):
        nu = _tail_atoms(12)
        mc, state = self._state(grid9, mark_fn=lambda x: 1.0)
        with pytest.raises(ScenarioKindMismatchError, match="approach 0"):
            discrete_support_probe(nu, mc, state, "G_to_zero")

    def test_wrong_limit_fails_the_to_alpha_check(self, grid9):
        nu = _tail_atoms(12)
        mc, state = self._state(grid9, mark_fn=lambda x: 1.0)
        with pytest.raises(ScenarioKindMismatchError, match="alpha"):
            discrete_support_probe(nu, mc, state, "G_to_alpha", alpha=1e-5)

    def test_to_alpha_needs_the_limit(self, grid9):
        nu = _tail_atoms(12)
        mc, state = self._state(grid9)
        with pytest.raises(ConfigError, match="alpha"):
            discrete_support_probe(nu, mc, state, "G_to_alpha")

    def test_linear_bound_violation_detected(self, grid9):
        nu = _tail_atoms(12)
        mc, state = self._state(grid9, coeff=1.0, mark_fn=lambda x: np.abs(x))
        with pytest.raises(ScenarioKindMismatchError, match="exceeds"):
            discrete_support_probe(nu, mc, state, "G_linear_bounded",
                                   g_tilde=1e-4, eps=0.5)

    def test_linear_bounded_needs_eps(self, grid9):
        nu = _tail_atoms(12)
        mc, state = self._state(grid9)
        with pytest.raises(ConfigError, match="eps"):
            discrete_support_probe(nu, mc, state, "G_linear_bounded", g_tilde=10.0)

    def test_unknown_kind_rejected(self, grid9):
        nu = _tail_atoms(4)
        mc, state = self._state(grid9)
        with pytest.raises(ConfigError, match="unknown probe kind"):
            discrete_support_probe(nu, mc, state, "G_something")

    def test_depth_truncates_the_walk(self, grid9):
        nu = _tail_atoms(16)
        mc, state = self._state(grid9)
        cert = discrete_support_probe(nu, mc, state, "G_to_zero", depth=5)
        assert len(cert.gammas) == 5
        assert cert.details["depth"] == 5


class TestControlProbe:
    def test_complete_scenario_shows_no_evidence(self, grid9):
        nu = FiniteAtoms(points=[1.0, -1.5], masses=[0.08, 0.05])
        mc = ModelCoefficients(constant_sigma(0.12), make_linear_gamma(0.25))
        state = make_probe_state(mc, grid9, F0)
        cert = control_probe(nu, mc, state, psi=lambda x: np.cos(x), n_probes=50)
        assert cert.verdict == "no incompleteness evidence"
        assert cert.details["functional_residual"] <= 1e-10
        assert cert.details["max_gamma"] <= cert.threshold
        assert np.all(cert.gammas <= cert.threshold)

    def test_empty_measure_rejected(self, grid9):
        nu = FiniteAtoms(points=np.empty(0), masses=np.empty(0))
        mc = ModelCoefficients(constant_sigma(0.12), make_linear_gamma(0.25))
        state = make_probe_state(mc, grid9, F0)
        with pytest.raises(ConfigError, match="at least one atom"):
            control_probe(nu, mc, state, psi=lambda x: 1.0)


class TestBestEffortResiduals:
    def test_replicable_integrand_reaches_solver_floor(self, state9):
        y_star = np.zeros(9)
        y_star[[2, 5]] = [1.0, -0.5]
        psi = lambda x: float(state9.h_vector(x) @ y_star)
        rows = best_effort_residuals(state9, psi, [0.7, -0.5, 1.2, 2.0])
        assert rows[-1, 1] <= 1e-12

    def test_oscillating_integrand_stalls(self, grid9, state9):
        from levybond.claims import OscillatingPsi
        psi = OscillatingPsi(1.0, lambda n: 1.0 / n, max_depth=40)
        pts = [1.0 + 1.0 / k for k in range(3, 15)]
        rows = best_effort_residuals(state9, psi, pts)
        assert rows[-1, 1] > 0.1

    def test_prefix_bounds_checked(self, state9):
        with pytest.raises(ConfigError, match="prefix"):
            best_effort_residuals(state9, lambda x: x, [1.0], prefix_lengths=[0])


def test_incompleteness_report_bundles_evidence(grid9):
    nu = uniform_density(0.5, 1.5, concentration_point=1.0)
    mc = ModelCoefficients(constant_sigma(0.12), make_linear_gamma(0.01))
    state = make_probe_state(mc, grid9, F0)
    cert = concentration_probe(nu, mc, state, lambda n: 1.0 / n, depth=4, threshold=10.0)
    report = incompleteness_report(cert)
    assert report["incompleteness_evidenced"] is (cert.verdict == "divergent")
    assert report["certificate"]["kind"] == "concentration"
