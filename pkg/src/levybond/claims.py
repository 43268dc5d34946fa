"""Contingent claims and jump integrands.

A claim is defined by its martingale representation: an initial value x0,
a Wiener integrand phi and a jump integrand psi.  Both integrands read a
HedgeContext (the per-step market snapshot the hedging loop also sees), so
claims whose representation depends on current bond prices, like a bond
itself, fit the same interface as deterministic-integrand claims.

The second half of the module is a small zoo of mark integrands psi(x)
used to certify incompleteness: sign-oscillating around a concentration
point, square-root growth on thin atoms, and exponential growth.  These
are plain functions of the mark, consumed by the probe machinery.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

trapezoid = getattr(np, "trapezoid", np.trapz)

from .errors import ConfigError, NoThinAtomsError, NonIntegrableError
from .hjm import MaturityGrid

__all__ = [
    "HedgeContext",
    "ClaimSpec",
    "bond_claim",
    "constant_psi_claim",
    "random_bounded_claim",
    "PsiConstruction",
    "OscillatingPsi",
    "SqrtThinPsi",
    "ConstantOnePsi",
    "ExponentialPsi",
    "make_oscillating_psi",
    "make_sqrt_psi",
    "make_constant_one_psi",
    "make_exponential_psi",
    "classify_integrand",
    "ClaimSample",
    "truncate_claim_by_stopping",
]


@dataclass(frozen=True)
class HedgeContext:
    """What a claim integrand and the hedger may read at a step's left edge.

    ``phat`` holds discounted tradeable bond prices before the step moves;
    ``s_tilde`` and ``expm1_g`` are the engine's own per-step integrated
    loadings at the tradeable maturities, so integrand matching against
    them is matching the exact discrete dynamics, not an approximation.
    """

    index: int
    t: float
    dt: float
    phat: np.ndarray        # (n_J,)
    s_tilde: np.ndarray     # (n_J,)
    g_tilde: np.ndarray     # (K, n_J)
    expm1_g: np.ndarray     # (K, n_J)
    atom_points: np.ndarray
    atom_masses: np.ndarray
    j_times: np.ndarray
    short_rate: float

    def atom_index(self, x: float) -> int:
        hits = np.nonzero(self.atom_points == x)[0]
        if len(hits) != 1:
            raise ConfigError("mark", f"mark {x} is not an atom of the jump measure")
        return int(hits[0])


@dataclass(frozen=True)
class ClaimSpec:
    """Claim given by its representation (x0, phi, psi)."""

    name: str
    x0: float
    phi: Callable[[HedgeContext], float]
    psi: Callable[[HedgeContext, float], float]
    class_tags: frozenset = frozenset()
    psi_time_invariant: bool = False


def bond_claim(grid: MaturityGrid, T0: float, f0: Callable[[float], float]) -> ClaimSpec:
    """The discounted T0-bond as a claim on its own representation.

    x0 comes from the initial curve; the integrands are the bond's exact
    per-step loadings, so the matching hedge is one unit of that bond.
    """
    traded = grid.tradeable_times
    hits = np.nonzero(np.abs(traded - T0) <= 1e-12)[0]
    if len(hits) != 1:
        raise ConfigError("claim.T0", f"maturity {T0} is not tradeable on this grid")
    j0 = int(hits[0])
    knots = grid.times[grid.times <= T0 + 1e-12]
    x0 = float(np.exp(-trapezoid([f0(s) for s in knots], knots)))

    def phi(ctx: HedgeContext) -> float:
        return float(ctx.phat[j0] * ctx.s_tilde[j0])

    def psi(ctx: HedgeContext, x: float) -> float:
        return float(ctx.phat[j0] * ctx.expm1_g[ctx.atom_index(x), j0])

    return ClaimSpec(
        name=f"bond@{T0:g}", x0=x0, phi=phi, psi=psi,
        class_tags=frozenset({"Phi", "Psi1", "Psi2", "Psi12"}),
    )


def constant_psi_claim(c: float, nu, horizon: float, active_until: float | None = None) -> ClaimSpec:
    """Pure jump claim with psi = c (compensated jump counter scaled by c).

    ``active_until`` cuts the integrand off early; with finitely many
    tradeable maturities the hedge runs out of live bonds near the horizon,
    so callers hedging this claim stop its accrual at the last usable knot.
    """
    cut = horizon if active_until is None else float(active_until)

    def phi(ctx: HedgeContext) -> float:
        return 0.0

    def psi(ctx: HedgeContext, x: float) -> float:
        # strict: at t == cut the hedge may already be down to its last
        # live bond, so the target has to be off by then
        return c if ctx.t < cut and not np.isclose(ctx.t, cut) else 0.0

    return ClaimSpec(
        name=f"const-psi({c:g})", x0=0.0, phi=phi, psi=psi,
        class_tags=frozenset({"Phi", "Psi1", "Psi2", "Psi12"}),
        psi_time_invariant=active_until is None,
    )


def random_bounded_claim(nu, horizon: float, active_until: float, seed: int) -> ClaimSpec:
    """Seeded claim with smooth bounded integrands, for convergence tests.

    phi and the per-atom psi are random low-frequency cosines with
    amplitudes in [-1, 1], gated off past ``active_until`` like the
    constant-psi claim.  Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    n_atoms = len(nu.points)
    amp_w, freq_w, phase_w = rng.uniform(-1, 1), rng.integers(1, 4), rng.uniform(0, 2 * np.pi)
    amps = rng.uniform(-1, 1, n_atoms)
    freqs = rng.integers(1, 4, n_atoms) if n_atoms else np.array([], dtype=int)
    phases = rng.uniform(0, 2 * np.pi, n_atoms)
    cut = float(active_until)

    def gate(t: float) -> float:
        return 1.0 if (t < cut and not np.isclose(t, cut)) else 0.0

    def phi(ctx: HedgeContext) -> float:
        return gate(ctx.t) * amp_w * np.cos(2 * np.pi * freq_w * ctx.t / horizon + phase_w)

    def psi(ctx: HedgeContext, x: float) -> float:
        k = ctx.atom_index(x)
        return gate(ctx.t) * amps[k] * np.cos(2 * np.pi * freqs[k] * ctx.t / horizon + phases[k])

    return ClaimSpec(
        name=f"random-bounded({seed})", x0=0.0, phi=phi, psi=psi,
        class_tags=frozenset({"Phi", "Psi1", "Psi2", "Psi12"}),
    )


class OscillatingPsi:
    """Mark integrand alternating sign on shrinking annuli around x0.

    Ring n is eps_{n+1} < |x - x0| <= eps_n; odd rings are positive, even
    rings negative, everything outside the first ball positive, and x0
    itself positive.  Magnitude is min(|x|, 1).  The alternation kills any
    continuous h(u) in the moment test while keeping psi bounded.
    """

    def __init__(self, x0: float, eps_fn: Callable[[int], float], max_depth: int = 60):
        self.x0 = x0
        self.eps_fn = eps_fn
        self.max_depth = int(max_depth)
        eps1 = float(eps_fn(1))
        if eps1 <= 0.0:
            raise ConfigError("eps_fn", "radii must be positive")
        self._eps1 = eps1

    def _sign(self, x: float) -> float:
        r = abs(x - self.x0)
        if r > self._eps1:
            return 1.0
        if r == 0.0:
            return 1.0
        e_n = self._eps1
        for n in range(1, self.max_depth + 1):
            e_next = float(self.eps_fn(n + 1))
            if e_next < r <= e_n:
                return 1.0 if n % 2 == 1 else -1.0
            e_n = e_next
        # deeper than the iteration cap: indistinguishable from x0 itself
        return 1.0

    def __call__(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([self._sign(v) * min(abs(v), 1.0) for v in xs])
        return out if np.ndim(x) else float(out[0])


class SqrtThinPsi:
    """sqrt(k) spikes on a thin subsequence of a countable atom set.

    Walking the atom enumeration, i_k is the first index past i_{k-1} whose
    mass is at most 1/k^3; psi puts sqrt(k) there and 0 elsewhere.  Then
    int psi^2 dnu <= sum k / k^3 = pi^2/6 stays finite while psi itself is
    unbounded along the sequence.
    """

    def __init__(self, nu, min_levels: int = 2):
        points = np.asarray(nu.points, dtype=float)
        masses = np.asarray(nu.masses, dtype=float)
        levels: dict[float, float] = {}
        prev = -1
        k = 1
        while True:
            found = None
            for i in range(prev + 1, len(points)):
                if masses[i] <= 1.0 / k**3:
                    found = i
                    break
            if found is None:
                break
            levels[float(points[found])] = float(np.sqrt(k))
            prev = found
            k += 1
        if len(levels) < min_levels:
            raise NoThinAtomsError(
                f"no thin atoms in truncation: found {len(levels)}, need {min_levels}"
            )
        self.levels = levels
        self.n_levels = len(levels)

    def __call__(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([self.levels.get(float(v), 0.0) for v in xs])
        return out if np.ndim(x) else float(out[0])


class ConstantOnePsi:
    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        return np.ones_like(xs) if np.ndim(x) else 1.0


class ExponentialPsi:
    """psi(x) = exp((g + eps) |x|); integrable only under an exponential moment."""

    def __init__(self, g_tilde: float, eps: float):
        if eps <= 0.0:
            raise ConfigError("eps", "exponent margin must be positive")
        self.rate = g_tilde + eps

    def __call__(self, x):
        return np.exp(self.rate * np.abs(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class PsiConstruction:
    """A named mark-integrand construction: pure function of x, plus its recipe."""

    kind: str
    fn: Callable
    params: dict

    def __call__(self, x):
        return self.fn(x)


def make_oscillating_psi(x0: float, eps_seq, max_depth: int = 60) -> PsiConstruction:
    """Sign-oscillating integrand around x0; ``eps_seq`` maps n >= 1 to radii.

    Accepts a callable or a sequence; radii must be strictly decreasing
    and positive.
    """
    if callable(eps_seq):
        eps_fn = eps_seq
    else:
        radii = [float(e) for e in eps_seq]
        eps_fn = lambda n: radii[n - 1] if n <= len(radii) else radii[-1] / 2.0 ** (n - len(radii))
    probe = np.array([eps_fn(n) for n in range(1, 6)])
    if np.any(probe <= 0.0) or np.any(np.diff(probe) >= 0.0):
        raise ConfigError("eps_seq", "radii must be positive and strictly decreasing")
    return PsiConstruction(
        kind="OscillatingAtX0",
        fn=OscillatingPsi(x0, eps_fn, max_depth=max_depth),
        params={"x0": x0, "max_depth": max_depth},
    )


def make_sqrt_psi(nu, min_levels: int = 2) -> PsiConstruction:
    fn = SqrtThinPsi(nu, min_levels=min_levels)
    return PsiConstruction(
        kind="SqrtAtThinAtoms", fn=fn, params={"n_levels": fn.n_levels},
    )


def make_constant_one_psi() -> PsiConstruction:
    return PsiConstruction(kind="ConstantOne", fn=ConstantOnePsi(), params={})


def make_exponential_psi(g_tilde: float, eps: float, nu) -> PsiConstruction:
    """psi(x) = e^{(g+eps)|x|}, admitted only if nu has the 2(g+eps) moment.

    The square-integrability of the claim needs the exponential moment of
    twice the rate; without a finite head sum and a decaying tail the
    construction is rejected outright.
    """
    fn = ExponentialPsi(g_tilde, eps)
    rate2 = 2.0 * fn.rate
    terms = np.array([np.exp(rate2 * abs(float(x))) * m for x, m in zip(nu.points, nu.masses)])
    head = float(np.sum(terms))
    verdict, _ = _tail_verdict(terms)
    truncated = getattr(nu, "tail_bound", 0.0) > 0.0 or not getattr(nu, "finite_support", True)
    if not np.isfinite(head) or (truncated and verdict != "finite"):
        raise NonIntegrableError(
            f"exponential moment of order {rate2:g} not certified for this measure"
        )
    return PsiConstruction(
        kind="ExponentialMoment", fn=fn,
        params={"g_tilde": g_tilde, "eps": eps, "moment": head},
    )


def _tail_verdict(terms: np.ndarray, window: int = 8) -> tuple[str, float]:
    """Classify the un-enumerated tail from the last few term magnitudes.

    Returns ('finite', bound) when the window decays geometrically,
    ('divergent', inf) when it is nondecreasing, ('unknown', nan) otherwise.
    """
    tail = terms[np.nonzero(terms)[0]][-window:]
    if len(tail) < 3:
        return "unknown", float("nan")
    ratios = tail[1:] / tail[:-1]
    if np.all(ratios <= 0.999):
        r = float(np.max(ratios))
        return "finite", float(tail[-1] * r / (1.0 - r))
    if np.all(ratios >= 1.0):
        return "divergent", float("inf")
    return "unknown", float("nan")


def classify_integrand(
    psi: Callable,
    nu,
    grid: MaturityGrid | float | None = None,
    psi_bound: float | None = None,
    tail_certificates: dict | None = None,
) -> frozenset:
    """Integrability tags of a mark integrand against the jump measure.

    Tags: Psi1 (absolutely integrable), Psi2 (square integrable), Psi12
    (both), indeterminate-tail (a truncated measure whose discarded tail
    could not be certified either way).  Time-invariant psi, so the time
    leg only scales the integrals by the horizon and cannot change any
    verdict.  A certified divergent first moment raises
    NonIntegrableError since nothing downstream can use it.
    """
    if grid is None:
        horizon = 1.0
    elif isinstance(grid, MaturityGrid):
        horizon = grid.horizon
    else:
        horizon = float(grid)
    tags = set()
    truncated = getattr(nu, "tail_bound", 0.0) > 0.0

    for power, tag in ((1, "Psi1"), (2, "Psi2")):
        head = horizon * nu.integrate(lambda x: np.abs(psi(x)) ** power)
        if not truncated:
            if np.isfinite(head):
                tags.add(tag)
            continue
        cert = (tail_certificates or {}).get(tag)
        if cert is not None:
            if np.isfinite(head + horizon * cert):
                tags.add(tag)
            continue
        if psi_bound is not None:
            # bounded integrand: tail contributes at most bound^power * tail mass
            if np.isfinite(head + horizon * psi_bound**power * nu.tail_bound):
                tags.add(tag)
            continue
        terms = np.array([abs(float(psi(x))) ** power * m for x, m in zip(nu.points, nu.masses)])
        verdict, _ = _tail_verdict(terms)
        if verdict == "finite":
            tags.add(tag)
        elif verdict == "divergent":
            if power == 1:
                raise NonIntegrableError(
                    "integrand terms grow along the atom tail; first moment diverges"
                )
        else:
            tags.add("indeterminate-tail")

    if {"Psi1", "Psi2"} <= tags:
        tags.add("Psi12")
    return frozenset(tags)


@dataclass(frozen=True)
class ClaimSample:
    value: float
    stopped: bool
    stop_time: float


def truncate_claim_by_stopping(
    psi: Callable[[float], float],
    jump_times: np.ndarray,
    jump_marks: np.ndarray,
    horizon: float,
    nu,
    k0: float,
) -> ClaimSample:
    """Stop the compensated jump integral at its first exit from [-k0, k0].

    For time-invariant psi the running value R(t) = sum psi(marks) - t c
    is piecewise linear, so each inter-jump segment yields the exit time in
    closed form: the boundary is hit continuously (value exactly +-k0) or
    overshot by a single jump, which is bounded by sup|psi|.  Hence the
    stopped claim is bounded by k0 + sup|psi| with no grid error at all.
    """
    c = nu.integrate(psi)
    r = 0.0
    t_prev = 0.0

    def drift_exit(r0: float, t0: float, t1: float):
        # linear piece r0 - c (t - t0) on [t0, t1]
        if c > 0.0 and r0 - c * (t1 - t0) <= -k0:
            return t0 + (r0 + k0) / c, -k0
        if c < 0.0 and r0 - c * (t1 - t0) >= k0:
            return t0 + (r0 - k0) / c, k0
        return None

    for tau, x in zip(jump_times, jump_marks):
        hit = drift_exit(r, t_prev, float(tau))
        if hit is not None:
            return ClaimSample(hit[1], True, float(hit[0]))
        r -= c * (float(tau) - t_prev)
        r += float(psi(x))
        t_prev = float(tau)
        if abs(r) >= k0:
            return ClaimSample(r, True, t_prev)
    hit = drift_exit(r, t_prev, horizon)
    if hit is not None:
        return ClaimSample(hit[1], True, float(hit[0]))
    return ClaimSample(r - c * (horizon - t_prev), False, horizon)
