"""TOML run configuration for the command line tool.

Every value is checked, and every run object built, before any simulation
starts. Errors carry the dotted path of the offending field. List values for
``policy.kind``, ``prior.a``, ``prior.decay`` and
``model.out_of_control_rate`` expand into a Cartesian sweep.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .allocators import POLICY_KINDS, AllocatorPolicy
from .model import ModelParams
from .posterior import PriorConfig
from .sim import SimulationConfig


class ConfigError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


SCHEMA: dict[str, dict[str, tuple]] = {
    # section -> key -> (accepted types, required)
    "model": {
        "num_regions": ((int,), True),
        "in_control_rate": ((float, int), True),
        "out_of_control_rate": ((float, int, list), True),
        "budget": ((int,), True),
        "threshold": ((float, int, str), False),
        "threshold_file": ((str,), False),
        "hotspots": ((list,), False),
        "change_time": ((int, str), False),
    },
    "policy": {
        "kind": ((str, list), True),
        "num_batches": ((int,), False),
        "top_r": ((int,), False),
    },
    "prior": {
        "a": ((float, int, list), False),
        "b": ((float, int), False),
        "decay": ((float, int, list), False),
        "budget_share": ((float, int), False),
    },
    "simulation": {
        "replications": ((int,), False),
        "base_seed": ((int,), False),
        "max_steps": ((int,), False),
        "target_arl0": ((float, int), False),
        "arl_tolerance": ((float, int), False),
        "alarm_lag": ((int,), False),
        "max_threshold": ((float, int), False),
    },
    "behavior": {
        "ic_days": ((int,), False),
        "oc_days": ((int,), False),
    },
    "replay": {
        "data": ((str,), False),
        "deterministic": ((bool,), False),
        "seeds": ((int,), False),
    },
    "output": {
        "dir": ((str,), False),
        "format": ((str,), False),
        "verbosity": ((str,), False),
    },
}


def load_file(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"{path}: {exc}") from exc


def parse_override(text: str) -> tuple[list[str], Any]:
    """``"a.b=value"`` with ``value`` in TOML syntax; bare words are strings."""
    if "=" not in text:
        raise ConfigError("--set", f"expected key=value, got {text!r}")
    key, raw = text.split("=", 1)
    keys = [k.strip() for k in key.split(".")]
    if len(keys) != 2 or not all(keys):
        raise ConfigError("--set", f"expected section.key=value, got {text!r}")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return keys, value


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in raw.items()}
    for text in overrides:
        (section, key), value = parse_override(text)
        out.setdefault(section, {})[key] = value
    return out


def _check_types(raw: dict) -> None:
    for section, value in raw.items():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        if not isinstance(value, dict):
            raise ConfigError(section, "must be a table")
        for key, item in value.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown field")
            types, _ = SCHEMA[section][key]
            if isinstance(item, bool) and bool not in types:
                raise ConfigError(f"{section}.{key}", f"expected {types[0].__name__}, got a boolean")
            if not isinstance(item, types):
                raise ConfigError(f"{section}.{key}", f"expected {types[0].__name__}, got {type(item).__name__}")


def _require(raw: dict, section: str, key: str):
    if key not in raw.get(section, {}):
        raise ConfigError(f"{section}.{key}", "required field is missing")
    return raw[section][key]


def _as_list(value, path: str, kind=float) -> list:
    values = value if isinstance(value, list) else [value]
    if not values:
        raise ConfigError(path, "sweep list is empty")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float) if kind is float else kind):
            raise ConfigError(path, f"invalid value {v!r}")
        out.append(kind(v))
    return out


@dataclass(frozen=True)
class RunSpec:
    """One point of a sweep, fully built."""

    sim: SimulationConfig
    tags: dict

    @property
    def group(self) -> tuple:
        """Calibration key (every tag; ``q`` enters the log-likelihood ratio)."""
        return (self.tags["policy"], self.tags["a"], self.tags["b"], self.tags["decay"], self.tags["q"])


@dataclass(frozen=True)
class CliConfig:
    runs: tuple[RunSpec, ...]
    threshold_mode: str  # "value", "calibrate" or "file"
    threshold_file: Optional[str]
    ic_days: int
    oc_days: int
    replay_data: Optional[str]
    deterministic: bool
    replay_seeds: int
    max_threshold: float
    output_dir: str
    output_format: str
    verbosity: str
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def groups(self) -> list[RunSpec]:
        """First run of each calibration group, in sweep order."""
        seen: dict = {}
        for run in self.runs:
            seen.setdefault(run.group, run)
        return list(seen.values())


def build(raw: dict, *, command: str, seed: Optional[int] = None, out: Optional[str] = None,
          fmt: Optional[str] = None) -> CliConfig:
    _check_types(raw)
    model = raw.get("model", {})
    sim = raw.get("simulation", {})
    prior_raw = raw.get("prior", {})
    output = raw.get("output", {})

    kinds = _as_list(_require(raw, "policy", "kind"), "policy.kind", str)
    for k in kinds:
        if k not in POLICY_KINDS:
            raise ConfigError("policy.kind", f"unknown policy {k!r}; expected one of {', '.join(POLICY_KINDS)}")
    K = _require(raw, "model", "num_regions")
    p = float(_require(raw, "model", "in_control_rate"))
    qs = _as_list(_require(raw, "model", "out_of_control_rate"), "model.out_of_control_rate")
    budget = _require(raw, "model", "budget")
    if not 0 < p < 1:
        raise ConfigError("model.in_control_rate", "must lie in (0, 1)")

    share = float(prior_raw.get("budget_share", 0.5))
    a_values = _as_list(prior_raw["a"], "prior.a") if "a" in prior_raw else [share * budget * p]
    decays = _as_list(prior_raw.get("decay", 0.3), "prior.decay")
    b_fixed = prior_raw.get("b")
    if b_fixed is not None and len(a_values) > 1:
        raise ConfigError("prior.b", "omit b when sweeping a (b keeps the prior mean at p)")

    threshold = model.get("threshold", "calibrate" if "threshold_file" not in model else None)
    if "threshold_file" in model:
        mode = "file"
    elif isinstance(threshold, str):
        if threshold != "calibrate":
            raise ConfigError("model.threshold", "must be a number or \"calibrate\"")
        mode = "calibrate"
    else:
        mode = "value"
    h = float(threshold) if mode == "value" else 0.0

    change = model.get("change_time", 0)
    if isinstance(change, str):
        if change != "never":
            raise ConfigError("model.change_time", "must be an integer or \"never\"")
        change = None
    hotspots = model.get("hotspots", [0])
    if not all(isinstance(k, int) and not isinstance(k, bool) for k in hotspots):
        raise ConfigError("model.hotspots", "must be a list of region indices")

    base_seed = sim.get("base_seed", 0) if seed is None else seed
    policy_raw = raw.get("policy", {})
    runs = []
    for kind, a, w, q in itertools.product(kinds, a_values, decays, qs):
        b = float(b_fixed) if b_fixed is not None else a * (1 - p) / p
        tags = {"policy": kind, "a": a, "b": b, "decay": w, "q": q}
        try:
            path = "model"
            m = ModelParams(K, p, q, budget, h, frozenset(hotspots), change)
            path = "policy"
            pol = AllocatorPolicy(kind, policy_raw.get("num_batches", 20), policy_raw.get("top_r", 20))
            path = "prior"
            prior = PriorConfig(a, b, w)
            path = "simulation"
            sc = SimulationConfig(
                m, pol, prior,
                replications=sim.get("replications", 1000),
                base_seed=base_seed,
                max_steps=sim.get("max_steps"),
                target_arl0=float(sim.get("target_arl0", 200.0)),
                arl_tolerance=float(sim.get("arl_tolerance", 10.0)),
                alarm_lag=sim.get("alarm_lag", 0),
            )
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
        runs.append(RunSpec(sc, tags))

    max_threshold = float(sim.get("max_threshold", 200.0))
    if not max_threshold > 0:
        raise ConfigError("simulation.max_threshold", "must be positive")
    calibrating = command == "calibrate" or (command == "simulate" and mode == "calibrate")
    if calibrating and runs[0].sim.max_steps < 10 * runs[0].sim.target_arl0:
        raise ConfigError("simulation.max_steps", "must be at least 10x target_arl0 for calibration")

    behavior = raw.get("behavior", {})
    ic_days, oc_days = behavior.get("ic_days", 500), behavior.get("oc_days", 500)
    if command == "behavior" and (ic_days < 0 or oc_days < 0 or ic_days + oc_days < 1):
        raise ConfigError("behavior.ic_days", "ic_days and oc_days must be >= 0 with at least one day")

    replay = raw.get("replay", {})
    data = replay.get("data")
    if command == "replay":
        if data is None:
            raise ConfigError("replay.data", "required field is missing")
        if mode != "value" and mode != "file":
            raise ConfigError("model.threshold", "replay needs a numeric threshold or threshold_file")
        if len(runs) > 1:
            raise ConfigError("policy.kind", "replay takes a single configuration, not a sweep")
        if replay.get("seeds", 1) < 1:
            raise ConfigError("replay.seeds", "must be >= 1")

    fmt = fmt or output.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("output.format", "must be \"csv\" or \"json\"")
    verbosity = output.get("verbosity", "info")
    if verbosity not in ("debug", "info", "warning", "error"):
        raise ConfigError("output.verbosity", "must be one of debug, info, warning, error")

    return CliConfig(
        runs=tuple(runs),
        threshold_mode=mode,
        threshold_file=model.get("threshold_file"),
        ic_days=ic_days,
        oc_days=oc_days,
        replay_data=data,
        deterministic=replay.get("deterministic", False),
        replay_seeds=replay.get("seeds", 1),
        max_threshold=max_threshold,
        output_dir=out or output.get("dir", "out"),
        output_format=fmt,
        verbosity=verbosity,
        raw=raw,
    )


def read_thresholds(path: str | Path) -> list[dict]:
    """Entries of a ``threshold.json`` written by ``calibrate``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("model.threshold_file", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("model.threshold_file", f"{path}: invalid JSON ({exc})") from exc
    entries = doc.get("calibrations", [doc]) if isinstance(doc, dict) else None
    if not entries or not all(isinstance(e, dict) and "threshold" in e for e in entries):
        raise ConfigError("model.threshold_file", f"{path}: no threshold entries")
    return entries


def match_threshold(entries: list[dict], run: RunSpec) -> float:
    if len(entries) == 1:
        return float(entries[0]["threshold"])
    for e in entries:
        if (e.get("policy") == run.tags["policy"]
                and all(math.isclose(float(e.get(k, math.nan)), run.tags[k], rel_tol=1e-9)
                        for k in ("a", "b", "decay", "q"))):
            return float(e["threshold"])
    raise ConfigError("model.threshold_file",
                      f"no calibrated threshold for policy={run.tags['policy']} a={run.tags['a']} "
                      f"decay={run.tags['decay']} q={run.tags['q']}")
