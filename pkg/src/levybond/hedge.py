"""Replicating portfolios on a finite jump support.

With n atoms the claim's integrand matching is an (n+1)-dimensional linear
system per step: one equation for the Wiener loading and one per atom,
solved for holdings in n+1 tradeable discounted bonds.  The system matrix
is built from the engine's own per-step loadings, so a zero residual means
the portfolio matches the exact one-step dynamics, with the remaining
replication error coming purely from integrand discretization in time.

Column policy: find the shortest prefix of live maturities whose rows
already have full rank, then pick the best-conditioned subset inside it by
pivoted Gram-Schmidt.  Re-select whenever a held bond expires or the
matrix conditioning degrades past the threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .claims import ClaimSpec, HedgeContext
from .errors import DependentRowsError, NumericalError, SingularSystemError
from .paths import DriftTable, PathRecord, build_drift_table

__all__ = [
    "minimal_prefix_length",
    "select_columns",
    "solve_strategy_step",
    "HedgeResult",
    "run_hedge",
    "verify_representation_match",
]


def _rank(M: np.ndarray, rank_tol: float) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if len(s) == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def minimal_prefix_length(rows: np.ndarray, rank_tol: float = 1e-10) -> int:
    """Shortest L with rows[:, :L] of full row rank."""
    n_rows, n_cols = rows.shape
    for L in range(n_rows, n_cols + 1):
        if _rank(rows[:, :L], rank_tol) == n_rows:
            return L
    raise DependentRowsError(
        f"rows dependent over the tradeable maturities (rank < {n_rows})"
    )


def select_columns(rows: np.ndarray, rank_tol: float = 1e-10) -> list[int]:
    """Pick n_rows column indices forming a well-conditioned square system.

    Restricted to the minimal full-rank prefix, columns are chosen by
    largest residual norm after projecting out the ones already taken;
    exact ties go to the lowest index.  Indices come back sorted.
    """
    n_rows = rows.shape[0]
    L = minimal_prefix_length(rows, rank_tol)
    work = rows[:, :L].astype(float).copy()
    chosen: list[int] = []
    for _ in range(n_rows):
        norms = np.linalg.norm(work, axis=0)
        norms[chosen] = -1.0
        idx = int(np.argmax(norms))
        if norms[idx] <= 0.0:
            raise DependentRowsError("prefix columns collapsed during selection")
        chosen.append(idx)
        q = work[:, idx] / norms[idx]
        work -= np.outer(q, q @ work)
    return sorted(chosen)


def solve_strategy_step(
    s_row: np.ndarray,
    expm1_g: np.ndarray,
    phat_row: np.ndarray,
    phi_target: float,
    psi_targets: np.ndarray,
    columns: np.ndarray,
    *,
    cond_threshold: float = 1e8,
) -> tuple[np.ndarray, float]:
    """Solve one step's matching system on the given columns.

    The unknowns are y_j = Phat(t-, T_j) * holding_j against the raw rows
    (S; e^G - 1); dividing by Phat afterwards recovers the holdings.
    Returns (holdings over the columns, condition number); raises
    SingularSystemError when conditioning is past the threshold, and the
    caller decides whether a re-selection should be attempted first.
    """
    M = np.vstack([s_row[columns], expm1_g[:, columns]])
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > cond_threshold:
        raise SingularSystemError(-1, cond, cond_threshold)
    b = np.concatenate([[phi_target], psi_targets])
    y = np.linalg.solve(M, b)
    return y / phat_row[columns], cond


@dataclass
class HedgeResult:
    grid_times: np.ndarray
    j_times: np.ndarray
    holdings: np.ndarray       # (n_steps, n_J)
    bank_positions: np.ndarray  # (n_steps,), wealth minus bond-leg value
    wealth: np.ndarray         # (n_steps + 1,), mark-to-market
    claim_values: np.ndarray   # (n_steps + 1,), integrand representation
    replication_error: float
    phi_residual_max: float
    psi_residual_max: float
    max_cond: float
    n_reselects: int
    column_events: list = field(default_factory=list)


def run_hedge(
    path: PathRecord,
    claim: ClaimSpec,
    table: DriftTable | None = None,
    *,
    mc=None,
    nu=None,
    cond_threshold: float = 1e8,
    rank_tol: float = 1e-10,
) -> HedgeResult:
    """Self-financing bond hedge of a claim along one simulated path.

    Wealth compounds actual discounted price moves of the held bonds;
    the claim value compounds its own integrand legs, with the jump-leg
    compensator subtracted each step.  Both start at x0, so the terminal
    gap is the replication error of the discretized strategy.

    The drift table must be the one the path was simulated with, else the
    "exact per-step loadings" premise silently breaks.
    """
    if table is None:
        if mc is None or nu is None:
            raise NumericalError("run_hedge needs either a drift table or (mc, nu)")
        table = build_drift_table(mc, nu, path.grid)
    grid = path.grid
    times = grid.times
    dts = np.diff(times)
    n_steps = grid.n_steps
    j_times = grid.tradeable_times
    n_J = len(j_times)
    points, masses = table.atom_points, table.atom_masses
    K = len(points)

    holdings = np.zeros((n_steps, n_J))
    bank_pos = np.zeros(n_steps)
    wealth = np.empty(n_steps + 1)
    values = np.empty(n_steps + 1)
    wealth[0] = values[0] = claim.x0
    columns: np.ndarray | None = None
    column_events: list = []
    phi_res = psi_res = 0.0
    max_cond = 0.0
    n_reselects = 0

    for i in range(n_steps):
        t = times[i]
        s_row = table.s_tilde[i, grid.j_indices]
        g_rows = table.g_tilde_j[i]
        expm1_g = np.expm1(g_rows)
        ctx = HedgeContext(
            index=i, t=float(t), dt=float(dts[i]),
            phat=path.phat_j[i], s_tilde=s_row, g_tilde=g_rows, expm1_g=expm1_g,
            atom_points=points, atom_masses=masses, j_times=j_times,
            short_rate=float(path.short_rate[i]),
        )
        phi_t = float(claim.phi(ctx))
        psi_t = np.array([float(claim.psi(ctx, x)) for x in points])
        b = np.concatenate([[phi_t], psi_t])

        # claim leg: integrands against dW, realized jumps, and the compensator
        dV = phi_t * path.dW[i] - float(dts[i]) * float(np.dot(masses, psi_t))
        _, jmarks = path.jumps_in_step(i)
        for x in jmarks:
            dV += psi_t[ctx.atom_index(float(x))]
        values[i + 1] = values[i] + dV

        live = np.nonzero(j_times > t)[0]
        if np.all(b == 0.0):
            wealth[i + 1] = wealth[i]
            bank_pos[i] = wealth[i]
            continue
        if len(live) < K + 1:
            raise NumericalError(
                f"hedge columns exhausted at t={t:g}: {len(live)} live bonds, need {K + 1}"
            )

        rows_live = np.vstack([s_row, expm1_g])[:, live]

        def resolve(cols):
            return solve_strategy_step(
                s_row, expm1_g, path.phat_j[i], phi_t, psi_t, cols,
                cond_threshold=cond_threshold,
            )

        if columns is None or not np.all(np.isin(columns, live)):
            columns = live[select_columns(rows_live, rank_tol)]
            column_events.append((i, tuple(int(c) for c in columns)))
        try:
            phi_cols, cond = resolve(columns)
        except SingularSystemError:
            n_reselects += 1
            columns = live[select_columns(rows_live, rank_tol)]
            column_events.append((i, tuple(int(c) for c in columns)))
            try:
                phi_cols, cond = resolve(columns)
            except SingularSystemError as err:
                raise SingularSystemError(i, err.cond, cond_threshold) from None
        max_cond = max(max_cond, cond)

        phi_full = np.zeros(n_J)
        phi_full[columns] = phi_cols
        holdings[i] = phi_full
        y_full = phi_full * path.phat_j[i]
        resid = np.vstack([s_row, expm1_g]) @ y_full - b
        phi_res = max(phi_res, abs(float(resid[0])))
        if K:
            psi_res = max(psi_res, float(np.max(np.abs(resid[1:]))))

        bank_pos[i] = wealth[i] - float(np.sum(y_full))
        wealth[i + 1] = wealth[i] + float(np.dot(phi_full, path.phat_j[i + 1] - path.phat_j[i]))

    return HedgeResult(
        grid_times=times,
        j_times=j_times,
        holdings=holdings,
        bank_positions=bank_pos,
        wealth=wealth,
        claim_values=values,
        replication_error=abs(float(wealth[-1] - values[-1])),
        phi_residual_max=phi_res,
        psi_residual_max=psi_res,
        max_cond=max_cond,
        n_reselects=n_reselects,
        column_events=column_events,
    )


def verify_representation_match(result: HedgeResult) -> tuple[float, float]:
    """Worst-step residuals of the matching system actually held."""
    return result.phi_residual_max, result.psi_residual_max
