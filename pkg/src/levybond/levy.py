"""Jump measures for the bond market model.

Three concrete measure families cover everything the experiments need:

* ``FiniteAtoms`` -- finitely many atoms, the complete-market case;
* ``DiscreteAtoms`` -- a truncated countable atom sequence with an explicit
  bound on the discarded tail mass;
* ``Density`` -- an absolutely continuous part given by a density on a
  bounded interval away from the origin.

All measures are finite on their domain so jump times can be drawn as a
compound Poisson process.  Regions are unions of intervals with explicit
open/closed endpoints; that distinction matters for atoms sitting exactly
on an annulus boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

trapezoid = getattr(np, "trapezoid", np.trapz)

from .errors import ConfigError, EmptyAnnulusError, InfiniteActivityError

__all__ = [
    "Interval",
    "annulus",
    "JumpEvent",
    "FiniteAtoms",
    "DiscreteAtoms",
    "Density",
    "uniform_density",
    "truncated_exponential_density",
    "total_mass",
    "compensator_integral",
    "sample_jumps",
    "has_concentration_point",
    "harmonic_eps",
]


@dataclass(frozen=True)
class Interval:
    """Real interval with independently open or closed endpoints."""

    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ConfigError("interval", f"lo={self.lo} exceeds hi={self.hi}")

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        left = x > self.lo if self.lo_open else x >= self.lo
        right = x < self.hi if self.hi_open else x <= self.hi
        return left & right

    @property
    def empty(self) -> bool:
        return self.lo == self.hi and (self.lo_open or self.hi_open)


def annulus(x0: float, eps_out: float, eps_in: float) -> list[Interval]:
    """Region ``eps_in < |x - x0| <= eps_out`` as two intervals.

    The outer boundary is included and the inner one excluded, matching the
    closed-ball difference used by the concentration-point test.
    """
    if not 0.0 <= eps_in < eps_out:
        raise ConfigError("annulus", f"need 0 <= eps_in < eps_out, got {eps_in}, {eps_out}")
    return [
        Interval(x0 - eps_out, x0 - eps_in, lo_open=False, hi_open=True),
        Interval(x0 + eps_in, x0 + eps_out, lo_open=True, hi_open=False),
    ]


@dataclass(frozen=True)
class JumpEvent:
    time: float
    mark: float


def _eval_on(g: Callable[[float], float], xs: np.ndarray) -> np.ndarray:
    """Evaluate g on an array, tolerating scalar-only callables."""
    try:
        vals = np.asarray(g(xs), dtype=float)
        if vals.shape == xs.shape:
            return vals
    except (TypeError, ValueError):
        pass
    return np.array([float(g(x)) for x in xs])


def _as_regions(region) -> list[Interval]:
    if isinstance(region, Interval):
        return [region]
    return list(region)


class _AtomicMeasure:
    """Shared atom bookkeeping for the two discrete families."""

    points: np.ndarray
    masses: np.ndarray

    def _validate(self):
        if self.points.ndim != 1 or self.points.shape != self.masses.shape:
            raise ConfigError("atoms", "points and masses must be 1-d arrays of equal length")
        if np.any(self.points == 0.0):
            raise ConfigError("atoms", "jump measure must not charge the origin")
        if np.any(self.masses <= 0.0):
            raise ConfigError("atoms", "atom masses must be positive")
        if len(np.unique(self.points)) != len(self.points):
            raise ConfigError("atoms", "atom locations must be distinct")

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def mass(self, region) -> float:
        total = 0.0
        for iv in _as_regions(region):
            total += float(np.sum(self.masses[iv.contains(self.points)]))
        return total

    def integrate(self, g: Callable[[float], float]) -> float:
        return float(np.sum(_eval_on(g, self.points) * self.masses))

    def sample_jumps(self, horizon: float, rng: np.random.Generator):
        """Draw (times, marks) of a compound Poisson path on [0, horizon].

        Times come back sorted; the draw order is fixed (count, times, marks)
        so identical seeds give identical paths across measure families.
        """
        lam = self.total_mass
        n = rng.poisson(lam * horizon)
        times = np.sort(rng.uniform(0.0, horizon, size=n))
        marks = rng.choice(self.points, size=n, p=self.masses / lam) if n else np.empty(0)
        return times, marks


@dataclass(frozen=True)
class FiniteAtoms(_AtomicMeasure):
    """Jump measure supported on finitely many points; input order is kept."""

    points: np.ndarray
    masses: np.ndarray
    finite_support: bool = field(default=True, init=False)

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float))
        self._validate()

    @property
    def n_atoms(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class DiscreteAtoms(_AtomicMeasure):
    """Truncation of a countable atom sequence x_1, x_2, ...

    ``points`` holds the enumerated prefix in sequence order (the order is
    part of the data: thin-atom selection walks it by index).  ``tail_bound``
    bounds the mass of everything not enumerated; sampling ignores the tail,
    which is acceptable whenever tail_bound is far below the mass retained.
    """

    points: np.ndarray
    masses: np.ndarray
    tail_bound: float = 0.0
    finite_support: bool = field(default=False, init=False)

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float))
        self._validate()
        if self.tail_bound < 0.0:
            raise ConfigError("atoms.tail_bound", "tail bound must be nonnegative")
        if np.any(np.diff(np.abs(self.points)) < 0.0):
            raise ConfigError("atoms", "truncated atom sequence must be sorted by |x| ascending")

    @property
    def n_atoms(self) -> int:
        return len(self.points)


class Density:
    """Absolutely continuous jump measure p(x) dx on a bounded interval.

    The support must stay away from the origin by ``small_jump_floor``:
    with a density charging arbitrarily small jumps the compound Poisson
    sampler below would be wrong.  Quadrature is trapezoidal on a cached
    uniform grid; the sampler inverts the piecewise-linear CDF built from
    the same grid.
    """

    finite_support = False

    def __init__(
        self,
        density: Callable[[np.ndarray], np.ndarray],
        support: tuple[float, float],
        concentration_point: float | None = None,
        grid_points: int = 4096,
        small_jump_floor: float = 1e-6,
    ):
        a, b = float(support[0]), float(support[1])
        if not a < b:
            raise ConfigError("density.support", f"degenerate support [{a}, {b}]")
        if a < small_jump_floor and b > -small_jump_floor:
            raise InfiniteActivityError(
                f"density support [{a}, {b}] reaches within {small_jump_floor} of the origin"
            )
        self.density = density
        self.support = (a, b)
        self.concentration_point = concentration_point
        self.grid_points = int(grid_points)
        self._xs = np.linspace(a, b, self.grid_points)
        self._pdf = _eval_on(density, self._xs)
        if np.any(self._pdf < 0.0):
            raise ConfigError("density", "density takes negative values on its support")
        steps = np.diff(self._xs)
        self._cdf = np.concatenate(
            [[0.0], np.cumsum(0.5 * (self._pdf[1:] + self._pdf[:-1]) * steps)]
        )
        if not np.isfinite(self._cdf[-1]):
            raise InfiniteActivityError("density does not integrate to a finite mass")

    @property
    def total_mass(self) -> float:
        return float(self._cdf[-1])

    def mass(self, region) -> float:
        # endpoints carry no mass, so open/closed flags are irrelevant here
        a, b = self.support
        total = 0.0
        for iv in _as_regions(region):
            lo, hi = max(iv.lo, a), min(iv.hi, b)
            if lo >= hi:
                continue
            xs = np.linspace(lo, hi, 1025)
            total += float(trapezoid(_eval_on(self.density, xs), xs))
        return total

    def integrate(self, g: Callable[[float], float]) -> float:
        return float(trapezoid(_eval_on(g, self._xs) * self._pdf, self._xs))

    def sample_jumps(self, horizon: float, rng: np.random.Generator):
        lam = self.total_mass
        n = rng.poisson(lam * horizon)
        times = np.sort(rng.uniform(0.0, horizon, size=n))
        if n:
            marks = np.interp(rng.uniform(0.0, lam, size=n), self._cdf, self._xs)
        else:
            marks = np.empty(0)
        return times, marks


def uniform_density(lo: float, hi: float, mass: float = 1.0, **kw) -> Density:
    height = mass / (hi - lo)
    return Density(lambda x: np.full_like(np.asarray(x, dtype=float), height), (lo, hi), **kw)


def truncated_exponential_density(lo: float, hi: float, rate: float, mass: float = 1.0, **kw) -> Density:
    norm = (np.exp(-rate * lo) - np.exp(-rate * hi)) / rate
    return Density(lambda x: mass * np.exp(-rate * np.asarray(x, dtype=float)) / norm, (lo, hi), **kw)


def total_mass(nu, region=None) -> float:
    """nu(region), or the full mass when no region is given."""
    if region is None:
        return nu.total_mass
    return nu.mass(region)


def compensator_integral(nu, g: Callable[[float], float]) -> float:
    """Integral of g against the jump measure (the drift compensator kernel)."""
    return nu.integrate(g)


def sample_jumps(nu, horizon: float, rng: np.random.Generator):
    return nu.sample_jumps(horizon, rng)


def harmonic_eps(n: int) -> float:
    """Default shrinking radius sequence 1/n used by the concentration test."""
    return 1.0 / n


def has_concentration_point(
    nu,
    x0: float,
    eps_seq: Callable[[int], float] | Sequence[float] = harmonic_eps,
    n_check: int = 8,
) -> bool:
    """Check that every probed annulus around x0 carries positive mass.

    The annuli are ``eps_{n+1} < |x - x0| <= eps_n`` for n = 1..n_check-1
    with radii from ``eps_seq`` (callable on 1-based indices, or a sequence).
    This verifies a finite prefix of the defining property: mass must not
    vanish on any ring, so the support accumulates at x0 along this radius
    sequence.  A single empty ring refutes it for the given sequence.
    """
    if callable(eps_seq):
        eps = [float(eps_seq(n)) for n in range(1, n_check + 1)]
    else:
        eps = [float(e) for e in eps_seq]
    if len(eps) < 2:
        raise ConfigError("eps_seq", "need at least two radii to form an annulus")
    if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])) or eps[-1] <= 0.0:
        raise ConfigError("eps_seq", "radii must be strictly decreasing and positive")
    for e1, e2 in zip(eps, eps[1:]):
        if nu.mass(annulus(x0, e1, e2)) <= 0.0:
            return False
    return True


def require_annulus_mass(nu, x0: float, eps_pairs: Iterable[tuple[int, float, float]]):
    """Raise EmptyAnnulusError for the first probed ring with zero mass."""
    for idx, e_out, e_in in eps_pairs:
        if nu.mass(annulus(x0, e_out, e_in)) <= 0.0:
            raise EmptyAnnulusError(idx, f"radii ({e_in}, {e_out}] around {x0}")
