"""Artifact writers: JSON summary, CSV detail, and figure rendering.

One directory per scenario under the output root.  Summaries are
byte-stable for identical config and seeds except for the created_at
field, which callers comparing runs must strip.  Every file carries the
config hash it was produced from.
"""

from __future__ import annotations

import csv
import json
import math
import os
from datetime import datetime, timezone

import numpy as np

from .experiments import ExperimentResult

__all__ = ["write_report", "write_summary", "write_tables", "render_figures"]


def _jsonsafe(obj):
    if isinstance(obj, dict):
        return {k: _jsonsafe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonsafe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonsafe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_summary(result: ExperimentResult, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    payload = _jsonsafe(result.summary)
    payload["created_at"] = datetime.now(timezone.utc).isoformat()
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    return path


def write_tables(result: ExperimentResult, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    meta = result.summary
    paths = []
    for name, (header, rows) in result.tables.items():
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema_version={meta['schema_version']}\n")
            fh.write(f"# config_hash={meta['config_hash']}\n")
            fh.write(f"# scenario={meta['scenario_id']}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        paths.append(path)
    return paths


# ----------------------------------------------------------------- figures


def _fig_martingale(s, tables, ax):
    T = np.asarray(s["maturities"])
    z = np.asarray([v if v is not None else np.nan for v in s["z"]])
    ax.bar(T, z, width=0.8 * np.min(np.diff(T)) if len(T) > 1 else 0.04)
    ax.axhline(3.0, color="crimson", ls="--", lw=1, label="3 SE")
    ax.set_xlabel("maturity")
    ax.set_ylabel("|gap| / SE")
    ax.set_title("terminal bond means vs initial prices")
    ax.legend()


def _fig_hedge(s, tables, ax):
    levels = np.asarray(s["levels"], dtype=float)
    for name, c in s["claims"].items():
        rms = np.asarray(c["rms"])
        if np.all(rms > 0.0):
            ax.loglog(levels, rms, "o-", label=name)
    if len(levels) and any(np.all(np.asarray(c["rms"]) > 0) for c in s["claims"].values()):
        ref = next(np.asarray(c["rms"]) for c in s["claims"].values()
                   if np.all(np.asarray(c["rms"]) > 0))
        guide = ref[0] * np.sqrt(levels[0] / levels)
        ax.loglog(levels, guide, "k:", lw=1, label="slope -1/2")
    ax.set_xlabel("steps")
    ax.set_ylabel("terminal RMS error")
    ax.set_title("replication error under step refinement")
    ax.legend()


def _fig_gammas(s, tables, ax):
    g = np.asarray([np.nan if v is None else v for v in s["gammas"]], dtype=float)
    k = np.arange(1, len(g) + 1)
    finite = np.isfinite(g) & (g > 0)
    ax.semilogy(k[finite], g[finite], "o-", ms=3)
    if np.any(~finite & ~np.isnan(g)) or np.any(np.isnan(g)):
        top = np.nanmax(g[finite]) if np.any(finite) else 1.0
        ax.semilogy(k[~finite], np.full(np.sum(~finite), top * 10), "r^",
                    label="unbounded")
    thr = s.get("threshold")
    if thr:
        ax.axhline(thr, color="crimson", ls="--", lw=1, label=f"threshold {thr:g}")
    ax.set_xlabel("test index k")
    ax.set_ylabel("certified lower bound")
    ax.set_title(f"moment-test growth ({s.get('probe_kind', '')}, {s['verdict']})")
    ax.legend()


def _fig_bounded(s, tables, ax):
    rows = tables.get("bounded_claim")
    bc = s["bounded_claim"]
    if rows is not None:
        vals = [r[1] for r in rows[1]]
        ax.hist(vals, bins=60)
    else:
        ax.text(0.5, 0.6, f"max |X| = {bc['max_abs_value']:.4f}",
                ha="center", transform=ax.transAxes)
        ax.text(0.5, 0.4, f"stopped fraction = {bc['stopped_fraction']:.3f}",
                ha="center", transform=ax.transAxes)
    for sgn in (-1, 1):
        ax.axvline(sgn * bc["bound"], color="crimson", ls="--", lw=1)
    ax.set_xlabel("stopped claim value")
    ax.set_title(f"bounded claim: {bc['violations']} violations of |X| <= {bc['bound']:g}")


def _fig_isometry(s, tables, ax):
    ax.bar([0], [s["target_second_moment"]], width=0.6, label="compensator")
    ax.errorbar([1], [s["mc_second_moment"]], yerr=[3 * s["se"]], fmt="o",
                capsize=6, color="black", label="MC (3 SE)")
    ax.set_xticks([0, 1], ["T* sum psi^2 nu", "mean X^2"])
    ax.set_title("jump-integral isometry")
    ax.legend()


def _fig_partial_sums(s, tables, ax):
    rows = tables["isometry_partial"][1]
    ax.plot([r[0] for r in rows], [r[4] for r in rows], "o-", ms=3)
    ax.axhline(s["sum_psi2_bound"], color="crimson", ls="--", lw=1,
               label="pi^2/6 + tail")
    ax.set_xlabel("atoms enumerated")
    ax.set_ylabel("partial sum of psi^2 nu")
    ax.legend()


def render_figures(result: ExperimentResult, out_dir: str) -> list[str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    s, tables = result.summary, result.tables
    specs: list[tuple[str, callable]] = []
    if result.kind == "martingale_check" and "maturities" in s:
        specs.append(("martingale_z", _fig_martingale))
    elif result.kind == "hedge_backtest":
        specs.append(("convergence", _fig_hedge))
    elif result.kind == "concentration_probe":
        specs.append(("gamma_growth", _fig_gammas))
        specs.append(("bounded_claim", _fig_bounded))
    elif result.kind == "discrete_probe":
        specs.append(("gamma_growth", _fig_gammas))
    elif result.kind == "isometry_check" and "target_second_moment" in s:
        specs.append(("isometry", _fig_isometry))
        specs.append(("partial_sums", _fig_partial_sums))

    paths = []
    for name, draw in specs:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        try:
            draw(s, tables, ax)
        except Exception:
            plt.close(fig)
            raise
        fig.tight_layout()
        path = os.path.join(out_dir, f"{name}.png")
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)
    return paths


def write_report(result: ExperimentResult, out_root: str, figures: bool = True) -> dict:
    """Write summary + tables (+ figures) under out_root/<scenario_id>/."""
    out_dir = os.path.join(out_root, result.scenario_id)
    artifacts = {
        "summary": write_summary(result, out_dir),
        "tables": write_tables(result, out_dir),
    }
    if figures:
        artifacts["figures"] = render_figures(result, out_dir)
    return artifacts
