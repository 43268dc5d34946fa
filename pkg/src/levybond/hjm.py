"""Forward-rate coefficient structures and maturity grids.

Coefficients are callables in (t, T) (plus the jump mark x for gamma).
Every accessor clamps to zero for t > T so expired bonds stay frozen; the
raw callables never need to handle that themselves.

Integrated quantities follow the sign convention

    S(t, T) = -int_t^T sigma(t, s) ds
    G(t, x, T) = -int_t^T gamma(t, x, s) ds
    A(t, T) = -int_t^T alpha(t, s) ds

so that d log Phat moves by S dW, by G at a jump with mark x, and by A dt.
Quadrature is trapezoidal on the grid knots inside [t, T] with both
endpoints appended, which is exact for coefficients affine in maturity.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

trapezoid = getattr(np, "trapezoid", np.trapz)

from .errors import ConfigError

__all__ = [
    "ModelCoefficients",
    "constant_sigma",
    "exp_decay_sigma",
    "make_linear_gamma",
    "separable_gamma",
    "MaturityGrid",
    "IntegratedCoefficients",
    "integrate_coefficients",
    "validate_coefficients",
    "drift_from_martingale_condition",
]


def _clamp(t: float, T, vals):
    T = np.asarray(T, dtype=float)
    return np.where(t > T, 0.0, vals)


@dataclass(frozen=True)
class ModelCoefficients:
    """Volatility, jump loading and (optional) drift of the forward rates.

    ``alpha`` may be left None and filled in later from the martingale
    condition; simulation never reads it directly (the engine builds its
    own discrete drift), but diagnostics do.
    """

    sigma: Callable
    gamma: Callable
    alpha: Callable | None = None
    horizon: float = 1.0

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ConfigError("horizon", "horizon must be positive")

    def sigma_at(self, t: float, T):
        return _clamp(t, T, self.sigma(t, np.asarray(T, dtype=float)))

    def gamma_at(self, t: float, x: float, T):
        return _clamp(t, T, self.gamma(t, x, np.asarray(T, dtype=float)))

    def alpha_at(self, t: float, T):
        if self.alpha is None:
            raise ConfigError("alpha", "drift not set; apply the martingale condition first")
        return _clamp(t, T, self.alpha(t, np.asarray(T, dtype=float)))

    def with_alpha(self, alpha: Callable) -> "ModelCoefficients":
        return replace(self, alpha=alpha)


def constant_sigma(s0: float) -> Callable:
    def sigma(t, T):
        return np.full_like(np.asarray(T, dtype=float), s0)

    return sigma


def exp_decay_sigma(s0: float, decay: float) -> Callable:
    """sigma(t, T) = s0 * exp(-decay * (T - t)), the usual damped loading."""

    def sigma(t, T):
        return s0 * np.exp(-decay * np.maximum(np.asarray(T, dtype=float) - t, 0.0))

    return sigma


def make_linear_gamma(coeff) -> Callable:
    """gamma(t, x, T) = coeff(t, T) * x: jump loading linear in the mark.

    coeff may be a callable of (t, T) or a number (taken as a constant).
    """
    if callable(coeff):
        def gamma(t, x, T):
            T = np.asarray(T, dtype=float)
            return np.asarray(coeff(t, T), dtype=float) * x
    else:
        def gamma(t, x, T):
            return np.full_like(np.asarray(T, dtype=float), float(coeff) * x)

    return gamma


def separable_gamma(coeff: float, mark_fn: Callable[[float], float]) -> Callable:
    def gamma(t, x, T):
        return np.full_like(np.asarray(T, dtype=float), coeff * mark_fn(x))

    return gamma


@dataclass(frozen=True)
class MaturityGrid:
    """Model maturities plus the subset that is actually tradeable.

    ``times`` doubles as the simulation step grid: the engine advances t
    through every knot, so state at the knots is all it ever stores.
    ``j_indices`` points at the tradeable maturities inside ``times``.
    """

    times: np.ndarray
    j_indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "j_indices", np.asarray(self.j_indices, dtype=int))
        if self.times[0] != 0.0:
            raise ConfigError("grid.times", "grid must start at 0")
        if np.any(np.diff(self.times) <= 0.0):
            raise ConfigError("grid.times", "maturities must be strictly increasing")
        if np.any(self.j_indices < 0) or np.any(self.j_indices >= len(self.times)):
            raise ConfigError("grid.j_indices", "tradeable index out of range")
        if np.any(np.diff(self.j_indices) <= 0):
            raise ConfigError("grid.j_indices", "tradeable indices must be strictly increasing")

    @classmethod
    def uniform(cls, horizon: float, n_tradeable: int) -> "MaturityGrid":
        times = np.linspace(0.0, horizon, n_tradeable)
        return cls(times, np.arange(n_tradeable))

    def refine(self, n_steps: int) -> "MaturityGrid":
        """Embed into a uniform grid of n_steps simulation steps.

        Every tradeable maturity must land exactly on a fine knot so that
        bond prices along J never need interpolation.
        """
        horizon = float(self.times[-1])
        fine = np.linspace(0.0, horizon, n_steps + 1)
        dt = horizon / n_steps
        traded = self.times[self.j_indices]
        pos = np.rint(traded / dt).astype(int)
        if np.any(np.abs(fine[pos] - traded) > 1e-12 * max(1.0, horizon)):
            raise ConfigError("grid.refine", f"{n_steps} steps do not hit every tradeable maturity")
        return MaturityGrid(fine, pos)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def tradeable_times(self) -> np.ndarray:
        return self.times[self.j_indices]


def _quad_knots(grid: MaturityGrid, t: float, T: float, quad_points: int | None) -> np.ndarray:
    # quad_points counts subintervals; default reuses the grid knots in [t, T]
    if quad_points is not None:
        return np.linspace(t, T, quad_points + 1)
    inner = grid.times[(grid.times > t) & (grid.times < T)]
    return np.concatenate([[t], inner, [T]])


class IntegratedCoefficients:
    """Trapezoidal S, G, A on a fixed maturity grid.

    Row methods return values at every grid maturity at once, using the
    cumulative-trapezoid telescoping along the knots; entries with T <= t
    are zero (the bond has expired, nothing left to integrate).
    """

    def __init__(self, mc: ModelCoefficients, grid: MaturityGrid, quad_points: int | None = None):
        self.mc = mc
        self.grid = grid
        self.quad_points = quad_points

    # scalar versions, usable off-grid

    def S(self, t: float, T: float) -> float:
        if T <= t:
            return 0.0
        pts = _quad_knots(self.grid, t, T, self.quad_points)
        return -float(trapezoid(self.mc.sigma_at(t, pts), pts))

    def G(self, t: float, x: float, T: float) -> float:
        if T <= t:
            return 0.0
        pts = _quad_knots(self.grid, t, T, self.quad_points)
        return -float(trapezoid(self.mc.gamma_at(t, x, pts), pts))

    def A(self, t: float, T: float) -> float:
        if T <= t:
            return 0.0
        pts = _quad_knots(self.grid, t, T, self.quad_points)
        return -float(trapezoid(self.mc.alpha_at(t, pts), pts))

    # row versions on the grid knots

    def _snap(self, t: float) -> float:
        # t within snap tolerance above a knot would see that knot clamped
        # to zero inside the coefficient accessors, corrupting one piece
        times = self.grid.times
        idx = int(np.searchsorted(times, t, side="right")) - 1
        if idx >= 0 and abs(times[idx] - t) <= 1e-12:
            return float(times[idx])
        return t

    def _row(self, f_t: Callable, t: float) -> np.ndarray:
        times = self.grid.times
        vals = f_t(times)
        ct = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(times))])
        idx = int(np.searchsorted(times, t, side="right")) - 1
        if idx >= 0 and abs(times[idx] - t) <= 1e-12:
            base = ct[idx]
        else:
            # t off-grid: subtract the stub piece between t and the next knot
            nxt = idx + 1
            v_t = float(f_t(np.array([t]))[0])
            base = ct[nxt] - 0.5 * (v_t + vals[nxt]) * (times[nxt] - t)
        row = -(ct - base)
        row[times <= t] = 0.0
        return row

    def S_row(self, t: float) -> np.ndarray:
        t = self._snap(t)
        return self._row(lambda pts: self.mc.sigma_at(t, pts), t)

    def G_row(self, t: float, x: float) -> np.ndarray:
        t = self._snap(t)
        return self._row(lambda pts: self.mc.gamma_at(t, x, pts), t)

    def G_rows(self, t: float, xs: np.ndarray) -> np.ndarray:
        return np.array([self.G_row(t, x) for x in np.atleast_1d(xs)])

    def A_row(self, t: float) -> np.ndarray:
        t = self._snap(t)
        return self._row(lambda pts: self.mc.alpha_at(t, pts), t)


def integrate_coefficients(
    mc: ModelCoefficients, grid: MaturityGrid, quad_points: int | None = None
) -> IntegratedCoefficients:
    return IntegratedCoefficients(mc, grid, quad_points)


def validate_coefficients(mc: ModelCoefficients, nu, grid: MaturityGrid) -> None:
    """Cheap finiteness screen of sigma and the nu-integral of gamma on the grid.

    Catches pathological coefficient specs before they poison a long run;
    not a proof of square-integrability, just a grid sample.
    """
    times = grid.times
    for t in times[:: max(1, len(times) // 8)]:
        if not np.all(np.isfinite(mc.sigma_at(t, times))):
            raise ConfigError("sigma", f"non-finite volatility at t={t:g}")
        total = nu.integrate(lambda x: float(np.max(np.abs(mc.gamma_at(t, x, times)))))
        if not np.isfinite(total):
            raise ConfigError("gamma", f"jump loading not nu-integrable at t={t:g}")


def drift_from_martingale_condition(
    mc: ModelCoefficients, nu, quad_points: int = 65
) -> ModelCoefficients:
    """Fill in alpha so discounted bonds are local martingales.

    Differentiating A = -S^2/2 - int (e^G - 1) nu(dx) in maturity gives

        alpha(t, T) = -S(t, T) sigma(t, T) - int gamma(t, x, T) e^{G(t, x, T)} nu(dx).

    This is the continuous-time condition; the path engine discretizes its
    own drift and only uses this for cross-checks, so per-call quadrature
    cost is acceptable here.
    """

    def alpha(t, T):
        T_arr = np.atleast_1d(np.asarray(T, dtype=float))
        out = np.zeros_like(T_arr)
        for i, Ti in enumerate(T_arr):
            if Ti <= t:
                continue
            pts = np.linspace(t, Ti, quad_points)
            S = -float(trapezoid(mc.sigma_at(t, pts), pts))
            jump_term = nu.integrate(
                lambda x: float(mc.gamma_at(t, x, Ti))
                * np.exp(-trapezoid(mc.gamma_at(t, x, pts), pts))
            )
            out[i] = -S * float(mc.sigma_at(t, Ti)) - jump_term
        return out if np.ndim(T) else float(out[0])

    return mc.with_alpha(alpha)
