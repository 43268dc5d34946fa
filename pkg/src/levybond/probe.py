"""Moment-problem probes: numerical evidence of market incompleteness.

A replicating functional for a claim with jump integrand psi would force
the moment bound |sum_i b_i psi(u_i)| <= gamma * ||sum_i b_i h(u_i)||_sup
for every finite test set of marks u_i and coefficients b_i, where
h(u) = P_hat(t-, T_j) (e^{G(t,u,T_j)} - 1) sampled over the tradeable
maturities.  Each test set therefore yields a certified lower bound for
gamma, and a sequence of test sets driving the bound past any threshold
is evidence that no such functional exists.

Divergence can never be proven by a finite computation.  Certificates
carry a threshold plus a monotone-trend rule and report "divergent" as
evidence, not proof.  The sup norm is taken over the tradeable grid; by
continuity of the curves this matches the sup over the full maturity
interval up to grid resolution.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateTestSetError,
    EmptyAnnulusError,
    ScenarioKindMismatchError,
)
from .hjm import IntegratedCoefficients, MaturityGrid, ModelCoefficients
from .levy import annulus, has_concentration_point, total_mass
from .claims import ConstantOnePsi, ExponentialPsi, OscillatingPsi, SqrtThinPsi

__all__ = [
    "ProbeState",
    "make_probe_state",
    "MomentTestSet",
    "make_test_set",
    "gamma_lower_bound",
    "optimize_betas",
    "GammaCertificate",
    "concentration_probe",
    "discrete_support_probe",
    "control_probe",
    "best_effort_residuals",
    "incompleteness_report",
]

DISCRETE_KINDS = ("G_nonpositive", "G_to_zero", "G_to_alpha", "G_linear_bounded")


@dataclass(frozen=True)
class ProbeState:
    """Frozen market snapshot the h-vectors are built from.

    ``phat`` holds discounted tradeable bond prices at time t; ``ic``
    evaluates the maturity integrals of the model coefficients.
    """

    grid: MaturityGrid
    t: float
    phat: np.ndarray
    ic: IntegratedCoefficients = field(repr=False)

    @property
    def j_times(self) -> np.ndarray:
        return self.grid.tradeable_times

    def h_vector(self, u: float) -> np.ndarray:
        g_row = self.ic.G_row(self.t, float(u))[self.grid.j_indices]
        return self.phat * np.expm1(g_row)


def make_probe_state(
    mc: ModelCoefficients,
    grid: MaturityGrid,
    f0: Callable[[float], float],
    t: float = 0.0,
    quad_points: int | None = None,
) -> ProbeState:
    """Probe state at time t on the initial curve (deterministic at t=0)."""
    if t != 0.0:
        raise ConfigError("t", "probe states from a flat start are built at t=0; "
                               "use a simulated path state for t>0")
    knots = grid.times
    f_vals = np.array([f0(s) for s in knots])
    neg_log = np.concatenate(
        [[0.0], np.cumsum(0.5 * (f_vals[1:] + f_vals[:-1]) * np.diff(knots))]
    )
    phat = np.exp(-neg_log)[grid.j_indices]
    return ProbeState(grid=grid, t=0.0, phat=phat, ic=IntegratedCoefficients(mc, grid, quad_points))


@dataclass(frozen=True)
class MomentTestSet:
    """Finite family (u_i, beta_i) with sampled psi values and h-vectors."""

    points: np.ndarray
    betas: np.ndarray
    g_values: np.ndarray
    h_vectors: np.ndarray  # (n, n_J)

    def __post_init__(self):
        n = len(self.points)
        if n < 1:
            raise ConfigError("points", "a test set needs at least one point")
        if not (len(self.betas) == len(self.g_values) == self.h_vectors.shape[0] == n):
            raise ConfigError("test_set", "points, betas, g, h must align")
        if not np.all(np.isfinite(self.h_vectors)):
            raise ConfigError("h_vectors", "h-vectors must be finite in sup-norm")


def make_test_set(
    state: ProbeState,
    psi: Callable,
    points: Sequence[float],
    betas: Sequence[float],
) -> MomentTestSet:
    pts = np.asarray(points, dtype=float)
    return MomentTestSet(
        points=pts,
        betas=np.asarray(betas, dtype=float),
        g_values=np.array([float(psi(u)) for u in pts]),
        h_vectors=np.vstack([state.h_vector(u) for u in pts]),
    )


def gamma_lower_bound(ts: MomentTestSet, floor: float = 1e-30) -> float:
    """|sum beta g| / sup_J |sum beta h|: a certified lower bound for gamma.

    Returns +inf when the denominator underflows while the numerator does
    not (the test set separates psi from every achievable h-combination).
    """
    num = abs(float(ts.betas @ ts.g_values))
    den = float(np.max(np.abs(ts.betas @ ts.h_vectors)))
    if den < floor:
        if num < floor:
            raise DegenerateTestSetError(
                f"degenerate test set: numerator {num:.2e} and denominator "
                f"{den:.2e} both below floor {floor:.1e}"
            )
        return float("inf")
    return num / den


def optimize_betas(
    ts: MomentTestSet,
    p: int = 16,
    n_iter: int = 40,
    candidates: Sequence[np.ndarray] = (),
) -> tuple[np.ndarray, float]:
    """Sharpen the lower bound over beta by a smoothed Rayleigh iteration.

    The sup norm is approximated by the p-norm (p=16) so the quotient
    |b.g|^2 / ||H^T b||_p^2 has a reweighted-least-squares fixed point:
    with weights w_j = |v_j|^{p-2} / ||v||_p^{p-2} the denominator is
    b^T H W H^T b and the maximizer is (H W H^T)^+ g.  The returned value
    re-evaluates the exact sup norm, so it is a valid bound regardless of
    smoothing quality.  ``candidates`` (zero-padded bests from smaller
    sets) are scored too, which keeps nested-set bounds monotone.
    """
    g, H = ts.g_values, ts.h_vectors
    n = len(g)

    def exact(beta: np.ndarray) -> float:
        den = float(np.max(np.abs(beta @ H)))
        num = abs(float(beta @ g))
        if den < 1e-30:
            return float("inf") if num >= 1e-30 else 0.0
        return num / den

    best_beta = np.asarray(ts.betas, dtype=float).copy()
    best = exact(best_beta)
    for cand in candidates:
        c = np.zeros(n)
        c[: len(cand)] = cand
        if exact(c) > best:
            best, best_beta = exact(c), c

    beta = best_beta if np.any(best_beta) else np.ones(n)
    for _ in range(n_iter):
        v = beta @ H
        vp = np.abs(v) + 1e-300
        w = (vp / np.max(vp)) ** (p - 2)
        w /= np.sum(w * vp**2 / np.max(vp) ** 2) or 1.0
        M = (H * w) @ H.T
        try:
            beta_new = np.linalg.pinv(M) @ g
        except np.linalg.LinAlgError:
            break
        nrm = np.linalg.norm(beta_new)
        if nrm == 0.0 or not np.all(np.isfinite(beta_new)):
            break
        beta_new /= nrm
        if exact(beta_new) > best:
            best, best_beta = exact(beta_new), beta_new.copy()
        if np.linalg.norm(beta_new - beta) < 1e-12:
            break
        beta = beta_new
    return best_beta, best


@dataclass(frozen=True)
class GammaCertificate:
    """Sequence of certified gamma lower bounds plus the divergence verdict."""

    scenario_id: str
    kind: str
    gammas: np.ndarray
    verdict: str
    threshold: float
    trend_window: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def scrub(v):
            if isinstance(v, np.ndarray):
                return [None if not np.isfinite(x) else float(x) for x in np.ravel(v)]
            if isinstance(v, (np.floating, float)):
                return None if not np.isfinite(v) else float(v)
            if isinstance(v, (np.integer, int)):
                return int(v)
            if isinstance(v, dict):
                return {k: scrub(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [scrub(x) for x in v]
            return v

        return {
            "scenario_id": self.scenario_id,
            "kind": self.kind,
            "gammas": scrub(self.gammas),
            "verdict": self.verdict,
            "threshold": scrub(self.threshold),
            "trend_window": self.trend_window,
            "details": scrub(self.details),
        }


def _divergence_verdict(gammas: np.ndarray, threshold: float) -> tuple[str, int]:
    """Certification rule: last value past threshold + monotone tail trend."""
    k = len(gammas)
    window = max(2, k // 2)
    tail = gammas[-window:]
    crossed = gammas[-1] >= threshold or np.isinf(gammas[-1])
    with np.errstate(invalid="ignore"):
        monotone = bool(np.all(np.diff(tail) >= 0.0) or np.all(np.isinf(tail)))
    return ("divergent" if (crossed and monotone) else "inconclusive"), window


def _annulus_representative(nu, x0: float, eps_out: float, eps_in: float, index: int) -> float:
    """Midpoint of the heavier nu-positive side of the annulus; ties go right."""
    left, right = annulus(x0, eps_out, eps_in)
    m_left, m_right = total_mass(nu, left), total_mass(nu, right)
    if m_left <= 0.0 and m_right <= 0.0:
        raise EmptyAnnulusError(index, f"no nu-mass in annulus {index} "
                                       f"({eps_in:.4g} < |x-x0| <= {eps_out:.4g})")
    # quadrature noise must not flip a symmetric tie away from the right side
    tol = 1e-9 * max(m_left, m_right)
    side = right if m_right >= m_left - tol else left
    return 0.5 * (side.lo + side.hi)


def concentration_probe(
    nu,
    mc: ModelCoefficients,
    state: ProbeState,
    eps_seq: Callable[[int], float],
    depth: int,
    psi: Callable | None = None,
    threshold: float = 1e6,
    scenario_id: str = "concentration",
    fd_step: float = 1e-5,
) -> GammaCertificate:
    """Pair tests at adjacent annuli around the concentration point.

    For k = 1..depth the test set is beta = (1, -1) at representatives of
    annuli 2k+1 and 2k+2.  With the sign-oscillating psi the numerator
    tends to 2(|x0| & 1) while the denominator inherits the Lipschitz
    bound C |a_{2k+1} - a_{2k+2}| from the differentiability of gamma in
    the mark, so the quotient grows without bound.
    """
    x0 = getattr(nu, "concentration_point", None)
    if x0 is None:
        raise ConfigError("nu", "measure has no concentration point")
    x0 = float(x0)
    # gate on the rings actually probed (2k+1 >= 3): outer rings may fall
    # outside the support without affecting the concentration limit
    if not has_concentration_point(nu, x0, lambda n: eps_seq(n + 2)):
        raise ConfigError("nu", f"every probed annulus around {x0} must carry mass")
    if psi is None:
        # sign walk must reach ring 2*depth + 2, default cap is too shallow
        psi = OscillatingPsi(x0, eps_seq, max_depth=2 * depth + 4)

    # finite-difference surrogate for the mark-differentiability condition;
    # a surrogate only, it cannot confirm true differentiability
    j_times = state.j_times
    live = j_times > state.t
    fd = np.array([
        (mc.gamma_at(state.t, x0 + fd_step, T) - mc.gamma_at(state.t, x0 - fd_step, T))
        / (2.0 * fd_step)
        for T in j_times[live]
    ])
    if not np.all(np.isfinite(fd)):
        raise ConfigError("mc.gamma", "gamma must be differentiable in the mark near x0")

    gammas, numerators, denominators, seps, reps = [], [], [], [], []
    for k in range(1, depth + 1):
        i1, i2 = 2 * k + 1, 2 * k + 2
        a1 = _annulus_representative(nu, x0, eps_seq(i1), eps_seq(i1 + 1), i1)
        a2 = _annulus_representative(nu, x0, eps_seq(i2), eps_seq(i2 + 1), i2)
        ts = make_test_set(state, psi, [a1, a2], [1.0, -1.0])
        gammas.append(gamma_lower_bound(ts))
        numerators.append(abs(ts.betas @ ts.g_values))
        denominators.append(float(np.max(np.abs(ts.betas @ ts.h_vectors))))
        seps.append(abs(a1 - a2))
        reps.append((a1, a2))
    gammas = np.array(gammas)
    verdict, window = _divergence_verdict(gammas, threshold)
    return GammaCertificate(
        scenario_id=scenario_id,
        kind="concentration",
        gammas=gammas,
        verdict=verdict,
        threshold=threshold,
        trend_window=window,
        details={
            "x0": x0,
            "numerators": np.array(numerators),
            "denominators": np.array(denominators),
            "separations": np.array(seps),
            "representatives": [list(r) for r in reps],
            "fd_gamma_x_sup": float(np.max(np.abs(fd))) if len(fd) else 0.0,
        },
    )


def _g_norms(state: ProbeState, points: np.ndarray) -> np.ndarray:
    """sup_J |G(t, x_i, T_j)| per atom, live maturities only."""
    live = state.j_times > state.t
    out = []
    for x in points:
        row = state.ic.G_row(state.t, float(x))[state.grid.j_indices]
        out.append(np.max(np.abs(row[live])) if np.any(live) else 0.0)
    return np.array(out)


def _check_kind(state: ProbeState, nu, kind: str, depth: int,
                g_tilde: float | None, alpha: float | None) -> None:
    pts = np.asarray(nu.points, dtype=float)[:depth]
    live = state.j_times > state.t
    norms = _g_norms(state, pts)
    if kind == "G_nonpositive":
        worst = -np.inf
        for x in pts:
            row = state.ic.G_row(state.t, float(x))[state.grid.j_indices]
            worst = max(worst, float(np.max(row[live])))
        if worst > 1e-12:
            raise ScenarioKindMismatchError(
                f"scenario/kind mismatch: G reaches {worst:.3e} > 0 on the truncation"
            )
    elif kind == "G_to_zero":
        tail = norms[-min(8, len(norms)):]
        if np.min(tail) > 0.05 * np.max(norms):
            raise ScenarioKindMismatchError(
                "scenario/kind mismatch: ||G(x_i)|| does not approach 0 over the truncation"
            )
    elif kind == "G_to_alpha":
        if alpha is None:
            raise ConfigError("alpha", "G_to_alpha needs the limit value alpha")
        tail = norms[-min(8, len(norms)):]
        if np.max(np.abs(tail - alpha)) > 0.05 * abs(alpha):
            raise ScenarioKindMismatchError(
                f"scenario/kind mismatch: tail ||G(x_i)|| not within 5% of alpha={alpha:g}"
            )
    elif kind == "G_linear_bounded":
        if g_tilde is None:
            raise ConfigError("g_tilde", "G_linear_bounded needs the bound G_tilde")
        if np.any(norms > g_tilde * np.abs(pts) * (1.0 + 1e-9) + 1e-12):
            raise ScenarioKindMismatchError(
                f"scenario/kind mismatch: ||G(x_i)|| exceeds {g_tilde:g}|x_i| on the truncation"
            )
    else:
        raise ConfigError("kind", f"unknown probe kind {kind!r}; "
                                  f"expected one of {', '.join(DISCRETE_KINDS)}")


def discrete_support_probe(
    nu,
    mc: ModelCoefficients,
    state: ProbeState,
    kind: str,
    depth: int | None = None,
    threshold: float = 1e6,
    scenario_id: str = "discrete",
    g_tilde: float | None = None,
    eps: float | None = None,
    alpha: float | None = None,
    psi: Callable | None = None,
) -> GammaCertificate:
    """Singleton tests along a countable atom sequence.

    Each atom x_i gives the bound |psi(x_i)| / sup_J |P_hat (e^G - 1)|.
    The four kinds pin which structural property of G drives the
    denominator and which psi pairs with it: sqrt-thin for nonpositive G,
    constant one for ||G|| -> 0, sqrt growth for ||G|| -> alpha,
    exponential for |G| <= G_tilde |x|.
    """
    pts_all = np.asarray(nu.points, dtype=float)
    depth = len(pts_all) if depth is None else min(int(depth), len(pts_all))
    if depth < 1:
        raise ConfigError("depth", "need at least one atom")
    _check_kind(state, nu, kind, depth, g_tilde, alpha)

    if psi is None:
        if kind in ("G_nonpositive", "G_to_alpha"):
            psi = SqrtThinPsi(nu)
        elif kind == "G_to_zero":
            psi = ConstantOnePsi()
        else:
            if eps is None or g_tilde is None:
                raise ConfigError("eps", "G_linear_bounded needs g_tilde and eps")
            psi = ExponentialPsi(g_tilde, eps)

    pts = pts_all[:depth]
    gammas, numerators, denominators = [], [], []
    for i, x in enumerate(pts):
        ts = make_test_set(state, psi, [x], [1.0])
        numerators.append(abs(float(ts.g_values[0])))
        denominators.append(float(np.max(np.abs(ts.h_vectors[0]))))
        gammas.append(gamma_lower_bound(ts))
    gammas = np.array(gammas)
    verdict, window = _divergence_verdict(gammas, threshold)
    return GammaCertificate(
        scenario_id=scenario_id,
        kind=kind,
        gammas=gammas,
        verdict=verdict,
        threshold=threshold,
        trend_window=window,
        details={
            "depth": depth,
            "numerators": np.array(numerators),
            "denominators": np.array(denominators),
            "g_norms": _g_norms(state, pts),
        },
    )


def control_probe(
    nu,
    mc: ModelCoefficients,
    state: ProbeState,
    psi: Callable,
    n_probes: int = 100,
    seed: int = 0,
    slack: float = 10.0,
    scenario_id: str = "complete-control",
) -> GammaCertificate:
    """False-positive guard on a complete (finite-atom) scenario.

    With finitely many atoms an exact representing functional y over the
    tradeable maturities exists (least squares, min norm), and every test
    set obeys gamma <= ||y||_1.  Random-beta probes must therefore stay
    below slack * ||y||_1; any excursion would be a numerical artifact,
    and a divergence verdict here would discredit the probes.
    """
    pts = np.asarray(nu.points, dtype=float)
    if len(pts) == 0:
        raise ConfigError("nu", "control scenario needs at least one atom")
    H = np.vstack([state.h_vector(x) for x in pts])          # (n, n_J)
    g = np.array([float(psi(x)) for x in pts])
    # min-norm least-squares representing functional over the maturities
    y = np.linalg.lstsq(H, g, rcond=None)[0]
    resid = float(np.max(np.abs(H @ y - g)))
    bound = float(np.sum(np.abs(y)))
    rng = np.random.default_rng(seed)
    gammas = []
    for _ in range(n_probes):
        beta = rng.standard_normal(len(pts))
        ts = MomentTestSet(points=pts, betas=beta, g_values=g, h_vectors=H)
        try:
            gammas.append(gamma_lower_bound(ts))
        except DegenerateTestSetError:
            gammas.append(0.0)
    gammas = np.array(gammas)
    ok = resid <= 1e-8 and bool(np.all(gammas <= slack * bound))
    return GammaCertificate(
        scenario_id=scenario_id,
        kind="complete-control",
        gammas=gammas,
        verdict="no incompleteness evidence" if ok else "inconclusive",
        threshold=slack * bound,
        trend_window=max(2, n_probes // 2),
        details={
            "functional_l1": bound,
            "functional_residual": resid,
            "n_probes": n_probes,
            "max_gamma": float(np.max(gammas)),
        },
    )


def best_effort_residuals(
    state: ProbeState,
    psi: Callable,
    points: Sequence[float],
    prefix_lengths: Sequence[int] | None = None,
) -> np.ndarray:
    """Least-squares representation residual as the maturity prefix grows.

    Returns rows (m, residual sup-norm): for a replicable integrand the
    residual falls to solver tolerance once m covers the rank; in the
    incomplete scenarios it stalls at a positive level.
    """
    pts = np.asarray(points, dtype=float)
    H = np.vstack([state.h_vector(x) for x in pts])
    g = np.array([float(psi(x)) for x in pts])
    n_j = H.shape[1]
    if prefix_lengths is None:
        prefix_lengths = range(1, n_j + 1)
    rows = []
    for m in prefix_lengths:
        m = int(m)
        if not 1 <= m <= n_j:
            raise ConfigError("prefix_lengths", f"prefix {m} outside 1..{n_j}")
        y = np.linalg.lstsq(H[:, :m], g, rcond=None)[0]
        rows.append((m, float(np.max(np.abs(H[:, :m] @ y - g)))))
    return np.array(rows)


def incompleteness_report(
    certificate: GammaCertificate,
    claim=None,
    residuals: np.ndarray | None = None,
) -> dict:
    """Bundle gamma evidence with the constructed claim's integrability."""
    report = {
        "certificate": certificate.to_dict(),
        "verdict": certificate.verdict,
        "incompleteness_evidenced": certificate.verdict == "divergent",
    }
    if claim is not None:
        report["claim"] = {
            "name": claim.name,
            "class_tags": sorted(claim.class_tags),
            "x0": claim.x0,
        }
    if residuals is not None:
        report["best_effort_residuals"] = [
            {"prefix": int(m), "residual": float(r)} for m, r in residuals
        ]
    return report
