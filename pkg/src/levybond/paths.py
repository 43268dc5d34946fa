"""Path simulation for the jump-diffusion forward-rate model.

Design notes, because they carry the whole numerical story:

* One grid.  The simulation step grid IS the maturity grid.  The state of
  a path at time t_i is the forward curve sampled at every knot; knots at
  or before t_i are frozen (their coefficients vanish), so they hold the
  realized short rates.  A single cumulative trapezoid of the state then
  yields -log Phat at every maturity AND the log bank account at once:

      -log Phat(t_i, T_j) = cumtr[j],   log B(t_i) = cumtr[i].

  Every structural identity (Phat = P/B, r = f(t,t), expired bonds frozen)
  holds by construction instead of up to discretization error.

* Matched drift.  Within step i each live knot moves by
  alpha dt + sigma dW_i + sum_jumps gamma, all coefficients evaluated at
  the left endpoint t_i and masked to knots strictly beyond t_i.  Writing
  s~_j = -cumtr(masked sigma)[j] and g~_{k,j} = -cumtr(masked gamma_k)[j],
  the discounted bond moves by exp(A_j dt + s~_j dW + sum g~) and the
  exact one-step martingale condition reads

      cumtr(masked alpha)[j] = D_j := s~_j^2 / 2 + sum_k m_k (e^{g~_{k,j}} - 1).

  Solving the trapezoid triangular system for the knot values of alpha
  makes E[Phat_{i+1} | F_i] = Phat_i hold exactly (up to float roundoff),
  for every knot and every step.  The drift table is deterministic and is
  shared by all paths of a scenario.

* Fixed draw order.  Jumps first, then the Wiener increments; antithetic
  sampling flips dW only.  This keeps seeds comparable across variants.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError
from .hjm import MaturityGrid, ModelCoefficients

__all__ = [
    "DriftTable",
    "build_drift_table",
    "MarketState",
    "reprice",
    "step_forward_curve",
    "jump_log_multiplier",
    "PathRecord",
    "JumpSnapshot",
    "StepContext",
    "simulate_path",
    "simulate_path_with_noise",
    "simulate_batch",
    "BatchResult",
    "refine_sweep",
    "stochastic_integral",
]


def _cumtrapz(vals: np.ndarray, dts: np.ndarray) -> np.ndarray:
    """Cumulative trapezoid along the last axis, fixed at 0 for the first knot."""
    inc = 0.5 * (vals[..., 1:] + vals[..., :-1]) * dts
    out = np.zeros(vals.shape)
    np.cumsum(inc, axis=-1, out=out[..., 1:])
    return out


def _drift_nodes(nu, n_nodes: int = 65):
    """Quadrature nodes (points, weights) representing nu in the drift.

    Atomic measures are exact.  A density is collapsed onto trapezoid
    nodes, so the matched drift is exact for the node measure and only
    O(h^2)-accurate for the density itself.
    """
    if hasattr(nu, "points"):
        return np.asarray(nu.points, dtype=float), np.asarray(nu.masses, dtype=float)
    a, b = nu.support
    xs = np.linspace(a, b, n_nodes)
    pdf = np.asarray(nu.density(xs), dtype=float)
    w = np.empty(n_nodes)
    h = (b - a) / (n_nodes - 1)
    w[:] = h
    w[0] = w[-1] = 0.5 * h
    return xs, pdf * w


@dataclass
class DriftTable:
    """Per-step masked integrals and the matched drift, shared across paths."""

    grid: MaturityGrid
    sigma_masked: np.ndarray   # (n_steps, n_knots)
    s_tilde: np.ndarray        # (n_steps, n_knots)
    alpha: np.ndarray          # (n_steps, n_knots), knot values of the matched drift
    atom_points: np.ndarray    # (K,)
    atom_masses: np.ndarray    # (K,)
    g_tilde_j: np.ndarray      # (n_steps, K, n_J): masked G at tradeable maturities

    def s_tilde_j(self, i: int) -> np.ndarray:
        return self.s_tilde[i, self.grid.j_indices]


def build_drift_table(mc: ModelCoefficients, nu, grid: MaturityGrid, drift_quad_nodes: int = 65) -> DriftTable:
    times = grid.times
    dts = np.diff(times)
    n_steps, n_knots = len(dts), len(times)
    points, masses = _drift_nodes(nu, drift_quad_nodes)

    sigma_masked = np.zeros((n_steps, n_knots))
    s_tilde = np.zeros((n_steps, n_knots))
    alpha = np.zeros((n_steps, n_knots))
    g_tilde_j = np.zeros((n_steps, len(points), len(grid.j_indices)))

    for i in range(n_steps):
        t = times[i]
        srow = np.zeros(n_knots)
        srow[i + 1 :] = mc.sigma_at(t, times[i + 1 :])
        st = -_cumtrapz(srow, dts)
        sigma_masked[i] = srow
        s_tilde[i] = st

        D = 0.5 * st * st
        for k, (x, m) in enumerate(zip(points, masses)):
            grow = np.zeros(n_knots)
            grow[i + 1 :] = mc.gamma_at(t, x, times[i + 1 :])
            gt = -_cumtrapz(grow, dts)
            D = D + m * np.expm1(gt)
            g_tilde_j[i, k] = gt[grid.j_indices]

        # triangular solve: cumtr(masked alpha) must equal D at every live knot
        Dv = D[i + 1 :]
        dtv = dts[i:]
        c = np.empty_like(Dv)
        c[0] = 2.0 * Dv[0] / dtv[0]
        c[1:] = 2.0 * np.diff(Dv) / dtv[1:]
        signs = np.where(np.arange(len(c)) % 2 == 0, 1.0, -1.0)
        alpha[i, i + 1 :] = signs * np.cumsum(signs * c)

    return DriftTable(grid, sigma_masked, s_tilde, alpha, points, masses, g_tilde_j)


@dataclass(frozen=True)
class MarketState:
    """Full market snapshot at one knot, with everything repriced from f.

    Matured maturities (T < t) keep P(t,T) = B(t)/B(T), i.e. the bond's
    dollar rolled into the bank at maturity; Phat stays frozen there.
    """

    t: float
    f_curve: np.ndarray
    P_curve: np.ndarray
    Phat_curve: np.ndarray
    bank: float
    short_rate: float
    last_jump_adjust: tuple = ()


def reprice(grid: MaturityGrid, t: float, f_curve: np.ndarray, last_jump_adjust: tuple = ()) -> MarketState:
    """Market state from a forward curve: one cumulative trapezoid does it all.

    -log Phat is the cumulative integral of f from 0; the bank is the same
    integral read at t, so P = Phat * B, P(t,t) = 1 and r = f(t,t) hold
    exactly rather than to discretization tolerance.
    """
    times = grid.times
    idx = int(np.argmin(np.abs(times - t)))
    if abs(times[idx] - t) > 1e-12:
        raise ConfigError("reprice.t", f"time {t} is not a grid knot")
    cumtr = _cumtrapz(np.asarray(f_curve, dtype=float), np.diff(times))
    phat = np.exp(-cumtr)
    bank = float(np.exp(cumtr[idx]))
    return MarketState(
        t=float(t), f_curve=np.asarray(f_curve, dtype=float).copy(),
        P_curve=phat * bank, Phat_curve=phat, bank=bank,
        short_rate=float(f_curve[idx]),
        last_jump_adjust=tuple(last_jump_adjust),
    )


def step_forward_curve(
    state: MarketState,
    mc: ModelCoefficients,
    grid: MaturityGrid,
    dt: float,
    dW: float,
    jumps=(),
) -> MarketState:
    """One generic Euler step of the forward curve, then reprice.

    Uses mc.alpha as given; the production engine replaces it with the
    drift table's matched values, so this op is for small diagnostics and
    oracle checks, not for the martingale-critical runs.
    """
    times = grid.times
    t_next = state.t + dt
    f = state.f_curve.copy()
    live = times > state.t
    f[live] += (
        np.asarray(mc.alpha_at(state.t, times[live])) * dt
        + np.asarray(mc.sigma_at(state.t, times[live])) * dW
    )
    pre_jump = []
    for _, x in jumps:
        pre_jump.append(reprice(grid, t_next, f).Phat_curve)
        f[live] += np.asarray(mc.gamma_at(state.t, float(x), times[live]))
    return reprice(grid, t_next, f, last_jump_adjust=tuple(pre_jump))


def jump_log_multiplier(mc: ModelCoefficients, grid: MaturityGrid, step: int, x: float) -> np.ndarray:
    """The exact log move of Phat(., T_j) when mark x lands in this step.

    This is the engine's masked G: minus the cumulative trapezoid of the
    left-time gamma row zeroed at knots <= t_step.  The pre-jump identity
    Phat(tau-) * exp(row) = Phat(tau) holds at float precision against it.
    """
    times = grid.times
    row = np.zeros(len(times))
    row[step + 1 :] = mc.gamma_at(times[step], x, times[step + 1 :])
    return -_cumtrapz(row, np.diff(times))


@dataclass(frozen=True)
class JumpSnapshot:
    """Discounted prices (full grid) straddling one jump."""

    step: int
    time: float
    mark: float
    phat_before: np.ndarray
    phat_after: np.ndarray


@dataclass(frozen=True)
class StepContext:
    index: int
    t: float
    dt: float
    phat: np.ndarray
    bank: float
    short_rate: float


@dataclass
class PathRecord:
    grid: MaturityGrid
    seed: int | None
    dW: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    jump_steps: np.ndarray
    phat_j: np.ndarray       # (n_steps+1, n_J)
    bank: np.ndarray         # (n_steps+1,)
    short_rate: np.ndarray   # (n_steps+1,)
    phat_full_0: np.ndarray  # (n_knots,)
    phat_full_T: np.ndarray  # (n_knots,)
    f_T: np.ndarray          # forward curve state at the horizon
    jump_snapshots: list[JumpSnapshot] = field(default_factory=list)
    states: list[MarketState] | None = None

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    def step_context(self, i: int) -> StepContext:
        times = self.grid.times
        return StepContext(
            index=i,
            t=float(times[i]),
            dt=float(times[i + 1] - times[i]),
            phat=self.phat_j[i],
            bank=float(self.bank[i]),
            short_rate=float(self.short_rate[i]),
        )

    def jumps_in_step(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        sel = self.jump_steps == i
        return self.jump_times[sel], self.jump_marks[sel]


def _steps_of(times_grid: np.ndarray, jump_times: np.ndarray) -> np.ndarray:
    # jump at tau lands in step i when tau in (t_i, t_{i+1}]
    steps = np.searchsorted(times_grid, jump_times, side="left") - 1
    return np.clip(steps, 0, len(times_grid) - 2)


def simulate_path(
    mc: ModelCoefficients,
    nu,
    grid: MaturityGrid,
    f0: Callable,
    n_steps: int | None = None,
    seed: int = 0,
    *,
    record_jump_curves: bool = True,
    record_states: bool = False,
    antithetic: bool = False,
    drift_table: DriftTable | None = None,
) -> PathRecord:
    """Simulate one forward-curve path on the unified grid.

    f0 is the initial forward curve T -> f(0, T).  Jumps are drawn before
    the Wiener increments; flip only dW for the antithetic variant.
    """
    if n_steps is not None and n_steps != grid.n_steps:
        grid = grid.refine(n_steps)
    rng = np.random.default_rng(seed)
    jump_times, jump_marks = nu.sample_jumps(grid.horizon, rng)
    dW = rng.normal(0.0, np.sqrt(np.diff(grid.times)), size=grid.n_steps)
    if antithetic:
        dW = -dW
    return simulate_path_with_noise(
        mc, nu, grid, f0, dW, jump_times, jump_marks,
        seed=seed, record_jump_curves=record_jump_curves,
        record_states=record_states, drift_table=drift_table,
    )


def simulate_path_with_noise(
    mc: ModelCoefficients,
    nu,
    grid: MaturityGrid,
    f0: Callable,
    dW: np.ndarray,
    jump_times: np.ndarray,
    jump_marks: np.ndarray,
    *,
    seed: int | None = None,
    record_jump_curves: bool = True,
    record_states: bool = False,
    drift_table: DriftTable | None = None,
) -> PathRecord:
    """Same engine with externally supplied noise (refinement sweeps)."""
    times = grid.times
    dts = np.diff(times)
    n_steps, n_knots = len(dts), len(times)
    if len(dW) != n_steps:
        raise ConfigError("dW", f"expected {n_steps} increments, got {len(dW)}")
    table = drift_table if drift_table is not None else build_drift_table(mc, nu, grid)

    jump_times = np.asarray(jump_times, dtype=float)
    jump_marks = np.asarray(jump_marks, dtype=float)
    jump_steps = _steps_of(times, jump_times)

    F = np.array([float(f0(T)) for T in times])
    jidx = grid.j_indices

    phat_j = np.empty((n_steps + 1, len(jidx)))
    bank = np.empty(n_steps + 1)
    short_rate = np.empty(n_steps + 1)
    snapshots: list[JumpSnapshot] = []
    states: list[MarketState] | None = [] if record_states else None

    cumtr = _cumtrapz(F, dts)
    phat_full_0 = np.exp(-cumtr)
    phat_j[0] = phat_full_0[jidx]
    bank[0] = 1.0
    short_rate[0] = F[0]
    if states is not None:
        states.append(reprice(grid, 0.0, F))

    for i in range(n_steps):
        t = times[i]
        live = slice(i + 1, n_knots)
        F[live] += table.alpha[i, live] * dts[i] + table.sigma_masked[i, live] * dW[i]

        step_pre_jump = []
        sel = np.nonzero(jump_steps == i)[0]
        for ell in sel:
            x = jump_marks[ell]
            if record_jump_curves:
                before = np.exp(-_cumtrapz(F, dts))
            F[live] += mc.gamma_at(t, x, times[live])
            if record_jump_curves:
                after = np.exp(-_cumtrapz(F, dts))
                snapshots.append(JumpSnapshot(i, float(jump_times[ell]), float(x), before, after))
                step_pre_jump.append(before)

        cumtr = _cumtrapz(F, dts)
        phat_j[i + 1] = np.exp(-cumtr[jidx])
        bank[i + 1] = np.exp(cumtr[i + 1])
        short_rate[i + 1] = F[i + 1]
        if states is not None:
            states.append(reprice(grid, times[i + 1], F, last_jump_adjust=tuple(step_pre_jump)))

    return PathRecord(
        grid=grid,
        seed=seed,
        dW=np.asarray(dW, dtype=float),
        jump_times=jump_times,
        jump_marks=jump_marks,
        jump_steps=jump_steps,
        phat_j=phat_j,
        bank=bank,
        short_rate=short_rate,
        phat_full_0=phat_full_0,
        phat_full_T=np.exp(-cumtr),
        f_T=F,
        jump_snapshots=snapshots,
        states=states,
    )


@dataclass
class BatchResult:
    grid: MaturityGrid
    phat_full_0: np.ndarray   # (n_knots,)
    phat_full_T: np.ndarray   # (n_paths, n_knots)
    n_paths: int
    seeds: np.ndarray


def simulate_batch(
    mc: ModelCoefficients,
    nu,
    grid: MaturityGrid,
    f0: Callable,
    n_paths: int,
    seed0: int = 0,
    *,
    drift_table: DriftTable | None = None,
) -> BatchResult:
    """Vectorized terminal-state simulation across paths.

    Path p uses seed seed0 + p with the standard draw order, so row p is
    bit-identical to the terminal state of simulate_path with that seed.
    Only the horizon curve is kept; that is all the martingale check needs.
    """
    times = grid.times
    dts = np.diff(times)
    n_steps, n_knots = len(dts), len(times)
    table = drift_table if drift_table is not None else build_drift_table(mc, nu, grid)
    seeds = seed0 + np.arange(n_paths)

    dW = np.empty((n_paths, n_steps))
    sqdt = np.sqrt(dts)
    per_step_jumps: dict[int, list[tuple[int, float]]] = {}
    for p, s in enumerate(seeds):
        rng = np.random.default_rng(int(s))
        jt, jm = nu.sample_jumps(grid.horizon, rng)
        dW[p] = rng.normal(0.0, sqdt, size=n_steps)
        for i, x in zip(_steps_of(times, jt), jm):
            per_step_jumps.setdefault(int(i), []).append((p, float(x)))

    f0_row = np.array([float(f0(T)) for T in times])
    F = np.tile(f0_row, (n_paths, 1))
    cumtr0 = _cumtrapz(f0_row, dts)

    for i in range(n_steps):
        live = slice(i + 1, n_knots)
        F[:, live] += table.alpha[i, live] * dts[i] + np.outer(dW[:, i], table.sigma_masked[i, live])
        for p, x in per_step_jumps.get(i, ()):
            F[p, live] += mc.gamma_at(times[i], x, times[live])

    phat_T = np.exp(-_cumtrapz(F, dts))
    return BatchResult(grid, np.exp(-cumtr0), phat_T, n_paths, seeds)


def refine_sweep(
    mc: ModelCoefficients,
    nu,
    coarse: MaturityGrid,
    levels: Sequence[int],
    f0: Callable,
    n_paths: int,
    seed0: int = 0,
    *,
    record_jump_curves: bool = True,
    drift_tables: dict[int, DriftTable] | None = None,
) -> dict[int, list[PathRecord]]:
    """Simulate the same noise at several step counts.

    Per path, jumps and the finest Wiener skeleton are drawn once; coarser
    increments are block sums of the fine ones.  Differences across levels
    are then pure discretization error, not Monte Carlo noise.
    """
    levels = sorted(int(n) for n in levels)
    finest = levels[-1]
    for n in levels:
        if finest % n:
            raise ConfigError("levels", f"finest level {finest} not a multiple of {n}")
    grids = {n: coarse.refine(n) for n in levels}
    tables = drift_tables or {n: build_drift_table(mc, nu, grids[n]) for n in levels}

    out: dict[int, list[PathRecord]] = {n: [] for n in levels}
    fine_sqdt = np.sqrt(np.diff(grids[finest].times))
    for p in range(n_paths):
        seed = seed0 + p
        rng = np.random.default_rng(seed)
        jt, jm = nu.sample_jumps(coarse.horizon, rng)
        dW_fine = rng.normal(0.0, fine_sqdt, size=finest)
        for n in levels:
            dW = dW_fine.reshape(n, finest // n).sum(axis=1)
            out[n].append(
                simulate_path_with_noise(
                    mc, nu, grids[n], f0, dW, jt, jm,
                    seed=seed, record_jump_curves=record_jump_curves, drift_table=tables[n],
                )
            )
    return out


def stochastic_integral(
    path: PathRecord,
    phi: Callable[[float], float],
    psi: Callable[[float, float], float],
    nu,
    *,
    psi_time_invariant: bool = False,
) -> float:
    """Left-point discretization of int phi dW + int int psi dN~.

    Both legs evaluate the integrand at the step's left knot; the jump leg
    subtracts the compensator dt * int psi(t_i, x) nu(dx) each step, which
    pairs exactly with how the path engine compensates its own jumps.
    """
    times = path.grid.times
    dts = np.diff(times)
    total = sum(float(phi(times[i])) * path.dW[i] for i in range(len(dts)))
    if psi_time_invariant:
        comp = nu.integrate(lambda x: psi(0.0, x))
        total -= comp * float(times[-1])
        total += sum(float(psi(0.0, x)) for x in path.jump_marks)
    else:
        for i in range(len(dts)):
            total -= dts[i] * nu.integrate(lambda x: psi(times[i], x))
        for i, x in zip(path.jump_steps, path.jump_marks):
            total += float(psi(times[int(i)], x))
    return float(total)
