"""Command-line front end: validate configs, run scenarios, write artifacts.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 verdict
inconclusive under --require-verdict.  Error lines go to stderr prefixed
with a machine-readable category.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError, NumericalError
from .scenarios import Scenario, load_config, preset, preset_names, preset_summary
from .experiments import run_scenario, sweep_scenario
from .report import write_report

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INCONCLUSIVE = 4


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="levybond",
        description="Bond-market simulation: hedging certificates and "
                    "incompleteness probes.",
    )
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True,
                            help="path to a JSON scenario config, or a preset name")
        sp.add_argument("--jobs", type=int, default=1,
                        help="worker processes for path fan-out (default 1)")
        sp.add_argument("--out-dir", default="out",
                        help="artifact root; one subdirectory per scenario")
        sp.add_argument("--seed-offset", type=int, default=0,
                        help="added to every path seed (default 0)")
        sp.add_argument("--require-verdict", action="store_true",
                        help="exit 4 if a probe scenario ends inconclusive")
        sp.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering, keep JSON and CSV only")
        sp.add_argument("--per-path", action="store_true",
                        help="also dump per-path detail tables")

    common(sub.add_parser("run", help="run one scenario and write its artifacts"))
    sp = sub.add_parser("sweep", help="repeat a scenario across step counts")
    common(sp)
    sp.add_argument("--levels", default=None,
                    help="comma-separated step counts, e.g. 128,256,512")
    sp = sub.add_parser("validate", help="parse and validate a config, run nothing")
    sp.add_argument("--config", required=True,
                    help="path to a JSON scenario config, or a preset name")
    sub.add_parser("list-scenarios", help="show the built-in scenario presets")
    return p


def _load(ref: str) -> Scenario:
    if os.path.exists(ref):
        return load_config(ref)
    if ref in preset_names():
        return preset(ref)
    raise ConfigError("config", f"{ref!r} is neither a readable file nor a preset name")


def _checked_verdict(summary: dict, require: bool) -> int:
    if require and summary.get("verdict") == "inconclusive":
        print("error[verdict]: probe ended inconclusive", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.verb == "list-scenarios":
        for name, kind, blurb in preset_summary():
            print(f"{name:28s} {kind:20s} {blurb}")
        return EXIT_OK

    try:
        sc = _load(args.config)
        if args.verb == "validate":
            print(f"ok: {sc.scenario_id} [{sc.kind}] config_hash={sc.config_hash}")
            return EXIT_OK

        if args.verb == "run":
            result = run_scenario(sc, jobs=args.jobs, seed_offset=args.seed_offset,
                                  per_path=args.per_path)
        else:
            if args.levels is not None:
                levels = [int(x) for x in args.levels.split(",") if x.strip()]
            elif sc.kind == "hedge_backtest":
                levels = sc.experiment["levels"]
            else:
                raise ConfigError("sweep.levels", "--levels is required for this kind")
            result = sweep_scenario(sc, levels, jobs=args.jobs,
                                    seed_offset=args.seed_offset,
                                    per_path=args.per_path)

        artifacts = write_report(result, args.out_dir, figures=not args.no_figures)
    except ConfigError as e:
        print(f"error[config]: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"error[numerical]: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL

    print(f"{result.scenario_id}: {_headline(result.summary)}")
    print(f"  summary: {artifacts['summary']}")
    for t in artifacts["tables"]:
        print(f"  table:   {t}")
    for f in artifacts.get("figures", ()):
        print(f"  figure:  {f}")
    return _checked_verdict(result.summary, args.require_verdict)


def _headline(s: dict) -> str:
    if "verdict" in s:
        return f"verdict={s['verdict']}"
    if "within_3se" in s:
        return f"max |z|={s['max_abs_z']:.2f}, within 3 SE: {s['within_3se']}"
    if "claims" in s:
        parts = [f"{name} ratios=" + "/".join(f"{r:.3f}" for r in c["ratios"])
                 for name, c in s["claims"].items()]
        return "; ".join(parts)
    if "sweep_levels" in s:
        return f"swept levels {s['sweep_levels']}"
    return "done"


if __name__ == "__main__":
    raise SystemExit(main())
