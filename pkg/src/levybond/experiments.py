"""Experiment drivers: simulate, hedge, probe, and reduce to summaries.

Each driver returns an ExperimentResult holding a JSON-ready summary and
the CSV detail tables.  Worker functions receive the scenario config and
a seed range, so a process pool can fan paths out; reductions always run
over per-path arrays assembled in path order, which keeps results
bit-identical for every --jobs value.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .scenarios import Scenario, scenario_from_config
from .paths import build_drift_table, refine_sweep, simulate_batch
from .hedge import run_hedge
from .probe import (
    concentration_probe,
    control_probe,
    discrete_support_probe,
    make_probe_state,
)
from .claims import make_sqrt_psi, truncate_claim_by_stopping

__all__ = ["ExperimentResult", "run_scenario", "sweep_scenario"]


@dataclass
class ExperimentResult:
    scenario_id: str
    kind: str
    summary: dict
    tables: dict[str, tuple[list[str], list[tuple]]] = field(default_factory=dict)


def _chunks(n: int, jobs: int) -> list[tuple[int, int]]:
    jobs = max(1, min(int(jobs), n))
    bounds = np.linspace(0, n, jobs + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _pmap(fn, arglists, jobs: int):
    if jobs <= 1 or len(arglists) <= 1:
        return [fn(*args) for args in arglists]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *args) for args in arglists]
        return [f.result() for f in futures]


def _base_summary(sc: Scenario, seed_offset: int) -> dict:
    return {
        "schema_version": int(sc.config["schema_version"]),
        "scenario_id": sc.scenario_id,
        "kind": sc.kind,
        "config_hash": sc.config_hash,
        "seed0": sc.seed0 + seed_offset,
        "n_paths": sc.n_paths,
    }


# ------------------------------------------------------------- martingale


def _martingale_chunk(cfg: dict, seed_start: int, count: int) -> np.ndarray:
    sc = scenario_from_config(cfg)
    grid = sc.sim_grid()
    batch = simulate_batch(sc.coefficients(), sc.measure(), grid,
                           sc.initial_curve(), count, seed0=seed_start)
    return batch.phat_full_T[:, grid.j_indices]


def _run_martingale(sc: Scenario, jobs: int, seed_offset: int, per_path: bool) -> ExperimentResult:
    seed0 = sc.seed0 + seed_offset
    grid = sc.sim_grid()
    state = make_probe_state(sc.coefficients(), grid, sc.initial_curve())
    phat0 = state.phat

    parts = _pmap(_martingale_chunk,
                  [(sc.config, seed0 + lo, hi - lo) for lo, hi in _chunks(sc.n_paths, jobs)],
                  jobs)
    phat_T = np.vstack(parts)

    mean = phat_T.mean(axis=0)
    se = phat_T.std(axis=0, ddof=1) / np.sqrt(sc.n_paths)
    gap = mean - phat0
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0.0, np.abs(gap) / se, np.where(gap == 0.0, 0.0, np.inf))

    summary = _base_summary(sc, seed_offset) | {
        "n_steps": int(sc.config["grid"]["n_steps"]),
        "maturities": state.j_times.tolist(),
        "phat0": phat0.tolist(),
        "mean_phat": mean.tolist(),
        "gap": gap.tolist(),
        "se": se.tolist(),
        "z": z.tolist(),
        "max_abs_z": float(np.max(z)),
        "within_3se": bool(np.all(z <= 3.0)),
    }
    tables = {
        "maturities": (
            ["maturity", "phat0", "mean_phat", "gap", "se", "z"],
            [(float(T), float(p0), float(m), float(g), float(s), float(zz))
             for T, p0, m, g, s, zz in zip(state.j_times, phat0, mean, gap, se, z)],
        )
    }
    if per_path:
        tables["per_path"] = (
            ["seed"] + [f"phat_T_{T:g}" for T in state.j_times],
            [(int(seed0 + p), *map(float, row)) for p, row in enumerate(phat_T)],
        )
    return ExperimentResult(sc.scenario_id, sc.kind, summary, tables)


# ------------------------------------------------------------------ hedge


def _hedge_chunk(cfg: dict, seed_start: int, count: int) -> dict:
    sc = scenario_from_config(cfg)
    mc, nu = sc.coefficients(), sc.measure()
    coarse = sc.coarse_grid()
    levels = sorted(int(n) for n in sc.experiment["levels"])
    tables = {n: build_drift_table(mc, nu, coarse.refine(n)) for n in levels}
    sweep = refine_sweep(mc, nu, coarse, levels, sc.initial_curve(), count,
                         seed0=seed_start, drift_tables=tables)
    out: dict = {}
    for claim in sc.claims():
        for lvl in levels:
            errs = np.empty(count)
            phi_res = psi_res = cond = 0.0
            resel = 0
            for p, rec in enumerate(sweep[lvl]):
                r = run_hedge(rec, claim, table=tables[lvl])
                errs[p] = r.replication_error
                phi_res = max(phi_res, r.phi_residual_max)
                psi_res = max(psi_res, r.psi_residual_max)
                cond = max(cond, r.max_cond)
                resel += r.n_reselects
            out[(claim.name, lvl)] = (errs, phi_res, psi_res, cond, resel)
    return out


def _run_hedge(sc: Scenario, jobs: int, seed_offset: int, per_path: bool) -> ExperimentResult:
    seed0 = sc.seed0 + seed_offset
    levels = sorted(int(n) for n in sc.experiment["levels"])
    spans = _chunks(sc.n_paths, jobs)
    parts = _pmap(_hedge_chunk,
                  [(sc.config, seed0 + lo, hi - lo) for lo, hi in spans], jobs)

    claims = {}
    conv_rows, pp_rows = [], []
    for claim in sc.claims():
        rms = []
        phi_res = psi_res = cond = 0.0
        resel = 0
        for lvl in levels:
            errs = np.concatenate([part[(claim.name, lvl)][0] for part in parts])
            for part in parts:
                _, a, b, c, r = part[(claim.name, lvl)]
                phi_res, psi_res, cond, resel = (
                    max(phi_res, a), max(psi_res, b), max(cond, c), resel + r)
            rms.append(float(np.sqrt(np.mean(np.square(errs)))))
            if per_path:
                pp_rows += [(claim.name, lvl, int(seed0 + p), float(e))
                            for p, e in enumerate(errs)]
        ratios = [rms[i + 1] / rms[i] if rms[i] > 0.0 else 0.0
                  for i in range(len(rms) - 1)]
        claims[claim.name] = {
            "rms": rms,
            "ratios": ratios,
            "max_phi_residual": phi_res,
            "max_psi_residual": psi_res,
            "max_cond": cond,
            "n_reselects": resel,
        }
        conv_rows += [(claim.name, lvl, rms[i], ratios[i - 1] if i else "")
                      for i, lvl in enumerate(levels)]

    summary = _base_summary(sc, seed_offset) | {"levels": levels, "claims": claims}
    tables = {"convergence": (["claim", "level", "rms", "ratio_vs_prev"], conv_rows)}
    if per_path:
        tables["per_path"] = (["claim", "level", "seed", "terminal_error"], pp_rows)
    return ExperimentResult(sc.scenario_id, sc.kind, summary, tables)


# ---------------------------------------------------------- concentration


def _cert_fields(cert) -> dict:
    d = cert.to_dict()
    return {"probe_kind": d["kind"], "gammas": d["gammas"], "verdict": d["verdict"],
            "threshold": d["threshold"], "trend_window": d["trend_window"]}


def _bounded_chunk(cfg: dict, seed_start: int, count: int):
    sc = scenario_from_config(cfg)
    nu = sc.measure()
    psi = sc.probe_psi()
    horizon = sc.coarse_grid().horizon
    k0 = float(sc.experiment["bounded_claim"]["k0"])
    vals = np.empty(count)
    stopped = np.empty(count, dtype=bool)
    for p in range(count):
        rng = np.random.default_rng(seed_start + p)
        jt, jm = nu.sample_jumps(horizon, rng)
        s = truncate_claim_by_stopping(psi, jt, jm, horizon, nu, k0)
        vals[p], stopped[p] = s.value, s.stopped
    return vals, stopped


def _run_concentration(sc: Scenario, jobs: int, seed_offset: int, per_path: bool) -> ExperimentResult:
    mc, nu = sc.coefficients(), sc.measure()
    grid = sc.coarse_grid()
    state = make_probe_state(mc, grid, sc.initial_curve())
    exp = sc.experiment
    cert = concentration_probe(
        nu, mc, state, sc.eps_seq(), depth=int(exp["depth"]),
        psi=sc.probe_psi(), threshold=float(exp["threshold"]),
        scenario_id=sc.scenario_id,
    )
    d = cert.details

    seed0 = sc.seed0 + seed_offset
    bc = exp["bounded_claim"]
    k0, bn = float(bc["k0"]), int(bc["n_paths"])
    parts = _pmap(_bounded_chunk,
                  [(sc.config, seed0 + lo, hi - lo) for lo, hi in _chunks(bn, jobs)],
                  jobs)
    vals = np.concatenate([p[0] for p in parts])
    stopped = np.concatenate([p[1] for p in parts])
    psi_sup = 1.0  # oscillating integrand magnitude is min(|x|, 1)
    bound = k0 + psi_sup
    violations = int(np.sum(np.abs(vals) > bound + 1e-12))

    summary = _base_summary(sc, seed_offset) | _cert_fields(cert) | {
        "numerators": d["numerators"].tolist(),
        "denominators": d["denominators"].tolist(),
        "separations": d["separations"].tolist(),
        "lipschitz_ratio_max": float(np.max(d["denominators"] / d["separations"])),
        "fd_gamma_x_sup": d["fd_gamma_x_sup"],
        "bounded_claim": {
            "k0": k0,
            "bound": bound,
            "n_paths": bn,
            "violations": violations,
            "stopped_fraction": float(np.mean(stopped)),
            "max_abs_value": float(np.max(np.abs(vals))) if bn else 0.0,
        },
    }
    gam_rows = [
        (k + 1, d["representatives"][k][0], d["representatives"][k][1],
         float(d["numerators"][k]), float(d["denominators"][k]),
         float(d["separations"][k]), _csv_float(cert.gammas[k]))
        for k in range(len(cert.gammas))
    ]
    tables = {"gamma_sequence": (
        ["k", "rep_outer", "rep_inner", "numerator", "denominator", "separation", "gamma"],
        gam_rows)}
    if per_path:
        tables["bounded_claim"] = (
            ["seed", "value", "stopped"],
            [(int(seed0 + p), float(v), bool(s)) for p, (v, s) in enumerate(zip(vals, stopped))],
        )
    return ExperimentResult(sc.scenario_id, sc.kind, summary, tables)


def _csv_float(x: float):
    return float(x) if np.isfinite(x) else "inf"


# ---------------------------------------------------------------- probes


def _run_discrete(sc: Scenario, jobs: int, seed_offset: int, per_path: bool) -> ExperimentResult:
    mc, nu = sc.coefficients(), sc.measure()
    state = make_probe_state(mc, sc.coarse_grid(), sc.initial_curve())
    exp = sc.experiment
    probe_kind = exp["probe_kind"]

    if probe_kind == "complete_control":
        psi = sc.probe_psi() or (lambda x: float(np.cos(x)))
        cert = control_probe(
            nu, mc, state, psi,
            n_probes=int(exp.get("n_probes", 100)),
            seed=sc.seed0 + seed_offset,
            slack=float(exp.get("slack", 10.0)),
            scenario_id=sc.scenario_id,
        )
        summary = _base_summary(sc, seed_offset) | _cert_fields(cert) | {
            "functional_l1": cert.details["functional_l1"],
            "functional_residual": cert.details["functional_residual"],
            "max_gamma": cert.details["max_gamma"],
            "n_probes": cert.details["n_probes"],
        }
        tables = {"gamma_sequence": (
            ["probe", "gamma"],
            [(k + 1, _csv_float(g)) for k, g in enumerate(cert.gammas)])}
        return ExperimentResult(sc.scenario_id, sc.kind, summary, tables)

    cert = discrete_support_probe(
        nu, mc, state, kind=probe_kind,
        depth=int(exp["depth"]) if "depth" in exp else None,
        threshold=float(exp["threshold"]),
        g_tilde=exp.get("g_tilde"), eps=exp.get("eps"), alpha=exp.get("alpha"),
        psi=sc.probe_psi(), scenario_id=sc.scenario_id,
    )
    d = cert.details
    crossing = next(
        (k + 1 for k, g in enumerate(cert.gammas)
         if not np.isfinite(g) or g >= cert.threshold), None)
    summary = _base_summary(sc, seed_offset) | _cert_fields(cert) | {
        "crossing_index": crossing,
        "depth": d["depth"],
    }
    pts = np.asarray(nu.points, dtype=float)[: d["depth"]]
    tables = {"gamma_sequence": (
        ["k", "atom", "numerator", "denominator", "gamma"],
        [(k + 1, float(pts[k]), float(d["numerators"][k]),
          float(d["denominators"][k]), _csv_float(cert.gammas[k]))
         for k in range(len(cert.gammas))])}
    return ExperimentResult(sc.scenario_id, sc.kind, summary, tables)


# -------------------------------------------------------------- isometry


def _isometry_chunk(cfg: dict, seed_start: int, count: int) -> np.ndarray:
    sc = scenario_from_config(cfg)
    nu = sc.measure()
    psi = make_sqrt_psi(nu)
    horizon = sc.coarse_grid().horizon
    comp = nu.integrate(psi)
    vals = np.empty(count)
    for p in range(count):
        rng = np.random.default_rng(seed_start + p)
        _, jm = nu.sample_jumps(horizon, rng)
        vals[p] = float(np.sum([psi(x) for x in jm])) - horizon * comp
    return vals


def _run_isometry(sc: Scenario, jobs: int, seed_offset: int, per_path: bool) -> ExperimentResult:
    nu = sc.measure()
    psi = make_sqrt_psi(nu)
    horizon = sc.coarse_grid().horizon
    pts = np.asarray(nu.points, dtype=float)
    masses = np.asarray(nu.masses, dtype=float)
    psi_vals = np.array([float(psi(x)) for x in pts])
    partial = np.cumsum(psi_vals**2 * masses)
    sum_psi2 = float(partial[-1])
    bound = float(np.pi**2 / 6.0 + nu.tail_bound)
    target = horizon * sum_psi2

    seed0 = sc.seed0 + seed_offset
    parts = _pmap(_isometry_chunk,
                  [(sc.config, seed0 + lo, hi - lo) for lo, hi in _chunks(sc.n_paths, jobs)],
                  jobs)
    X = np.concatenate(parts)
    est = float(np.mean(X**2))
    se = float(np.std(X**2, ddof=1) / np.sqrt(len(X)))
    z = abs(est - target) / se if se > 0.0 else 0.0

    summary = _base_summary(sc, seed_offset) | {
        "n_levels": int(psi.params["n_levels"]),
        "sum_psi2": sum_psi2,
        "sum_psi2_bound": bound,
        "sum_psi2_within_bound": bool(sum_psi2 <= bound),
        "partial_sums_monotone": bool(np.all(np.diff(partial) >= 0.0)),
        "target_second_moment": target,
        "mc_second_moment": est,
        "se": se,
        "z": float(z),
        "within_3se": bool(z <= 3.0),
    }
    tables = {"isometry_partial": (
        ["i", "atom", "mass", "psi", "partial_sum_psi2"],
        [(i + 1, float(x), float(m), float(pv), float(ps))
         for i, (x, m, pv, ps) in enumerate(zip(pts, masses, psi_vals, partial))])}
    if per_path:
        tables["per_path"] = (["seed", "X"],
                              [(int(seed0 + p), float(v)) for p, v in enumerate(X)])
    return ExperimentResult(sc.scenario_id, sc.kind, summary, tables)


# ---------------------------------------------------------------- public


_RUNNERS = {
    "martingale_check": _run_martingale,
    "hedge_backtest": _run_hedge,
    "concentration_probe": _run_concentration,
    "discrete_probe": _run_discrete,
    "isometry_check": _run_isometry,
}


def run_scenario(sc: Scenario, jobs: int = 1, seed_offset: int = 0,
                 per_path: bool = False) -> ExperimentResult:
    return _RUNNERS[sc.kind](sc, jobs, seed_offset, per_path)


def sweep_scenario(sc: Scenario, levels, jobs: int = 1, seed_offset: int = 0,
                   per_path: bool = False) -> ExperimentResult:
    """Re-run the experiment across step counts; fixed seeds couple the noise.

    The hedge sweep couples refinements exactly (block-summed increments);
    the martingale and isometry sweeps reuse per-path seeds, which pins the
    jump skeleton.  Probe experiments have no time grid to refine.
    """
    levels = sorted(int(n) for n in levels)
    if len(levels) < 2:
        raise ConfigError("sweep.levels", "need at least 2 refinement levels")
    if sc.kind in ("concentration_probe", "discrete_probe"):
        raise ConfigError("sweep", f"{sc.kind} has no time discretization to refine")

    if sc.kind == "hedge_backtest":
        cfg = {**sc.config, "experiment": {**sc.experiment, "levels": levels}}
        inner = scenario_from_config(cfg, scenario_id=sc.scenario_id)
        res = _run_hedge(inner, jobs, seed_offset, per_path)
        res.summary["sweep_levels"] = levels
        return res

    rows = []
    per_level = {}
    for n in levels:
        cfg = {**sc.config, "grid": {**sc.config["grid"], "n_steps": n}}
        inner = scenario_from_config(cfg, scenario_id=sc.scenario_id)
        r = _RUNNERS[sc.kind](inner, jobs, seed_offset, False)
        if sc.kind == "martingale_check":
            metric = float(np.max(np.abs(r.summary["gap"])))
            rows.append((n, metric, r.summary["max_abs_z"]))
            per_level[str(n)] = {"max_abs_gap": metric,
                                 "max_abs_z": r.summary["max_abs_z"]}
        else:
            gap = abs(r.summary["mc_second_moment"] - r.summary["target_second_moment"])
            rows.append((n, gap, r.summary["z"]))
            per_level[str(n)] = {"gap": gap, "z": r.summary["z"]}
    header = ["level", "max_abs_gap" if sc.kind == "martingale_check" else "gap", "z"]
    summary = _base_summary(sc, seed_offset) | {
        "sweep_levels": levels, "per_level": per_level}
    return ExperimentResult(sc.scenario_id, sc.kind, summary,
                            {"sweep": (header, rows)})
