"""Experiment configuration: a YAML file validated into an :class:`ExperimentConfig`.

Schema (every key optional except ``map``, ``group`` and ``tau``)::

    map:        {name: doubling | linear | perturbed, params: {...}}
    potential:  {name: srb | mme | constant | sine, params: {...}}   # default srb
    group:      {name: torus | su2 | so3, params: {...}}
    tau:        {name: identity | constant | linear | one-direction | two-direction, params: {...}}
    kappa_max:  20            # irreps with Casimir eigenvalue <= kappa_max
    N:          48            # collocation size
    period_cap: 8             # largest period n used for orbit sums
    pressure_period: 12       # period of the orbit-sum pressure route
    t_grid:     [0.001, 0.01, 0.1]  or  {logspace: [-3, -1, 9]}
    n_range:    [1, 8]
    tolerances: {pressure: 1.0e-10, trace: 1.0e-7, correlation: 1.0e-6, radius: 1.0e-8}
    correlations: {n_max: 12, irreps: [...]}        # irreps default to the nontrivial ones up to kappa_max
    heataverage:  {coarse_t: [...], coarse_n: [...], epsilon: 0.001, rho_hypothesis: 0.3, improved: false}
    output: out
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dynamics import MAPS
from .groups import GROUPS
from .thermo import POTENTIALS
from .twisted import SKEWS

DEFAULT_TOLERANCES = {"pressure": 1e-10, "trace": 1e-7, "correlation": 1e-6, "radius": 1e-8}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Component:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    map: Component
    potential: Component
    group: Component
    tau: Component
    kappa_max: float = 20.0
    N: int = 48
    period_cap: int = 8
    pressure_period: int = 12
    t_grid: tuple[float, ...] = (1e-3, 1e-2, 1e-1)
    n_range: tuple[int, int] = (1, 8)
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    correlations: dict = field(default_factory=dict)
    heataverage: dict = field(default_factory=dict)
    output: str = "out"
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def n_values(self) -> list[int]:
        return list(range(self.n_range[0], self.n_range[1] + 1))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the raw mapping."""
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _component(raw: dict, key: str, registry: dict, default: str | None = None) -> Component:
    value = raw.get(key, {"name": default} if default else None)
    if value is None:
        raise ConfigError(f"missing required key {key!r}")
    if isinstance(value, str):
        value = {"name": value}
    if not isinstance(value, dict) or "name" not in value:
        raise ConfigError(f"{key!r} needs a 'name'")
    name = value["name"]
    if name not in registry:
        raise ConfigError(f"unknown {key} {name!r}; choose from {sorted(registry)}")
    params = value.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError(f"{key}.params must be a mapping")
    return Component(str(name), dict(params))


def _positive(raw, key, default, kind):
    value = raw.get(key, default)
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key!r} must be a {kind.__name__}") from None
    if not value > 0:
        raise ConfigError(f"{key!r} must be positive")
    return value


def _t_grid(value) -> tuple[float, ...]:
    if isinstance(value, dict):
        if set(value) != {"logspace"} or len(value["logspace"]) != 3:
            raise ConfigError("t_grid mapping must be {logspace: [lo, hi, count]}")
        lo, hi, count = value["logspace"]
        count = int(count)
        if count < 1:
            raise ConfigError("t_grid logspace count must be positive")
        if count == 1:
            return (10.0**lo,)
        return tuple(10.0 ** (lo + (hi - lo) * i / (count - 1)) for i in range(count))
    try:
        grid = tuple(float(v) for v in value)
    except TypeError:
        raise ConfigError("t_grid must be a list or a logspace mapping") from None
    if not grid or any(not (t > 0 and math.isfinite(t)) for t in grid):
        raise ConfigError("t_grid values must be positive and finite")
    return grid


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    n_range = raw.get("n_range", [1, 8])
    if not (isinstance(n_range, (list, tuple)) and len(n_range) == 2):
        raise ConfigError("n_range must be [first, last]")
    n_range = (int(n_range[0]), int(n_range[1]))
    period_cap = _positive(raw, "period_cap", 8, int)
    if n_range[0] < 1 or n_range[1] < n_range[0] or n_range[1] > period_cap:
        raise ConfigError("n_range must satisfy 1 <= first <= last <= period_cap")
    tolerances = dict(DEFAULT_TOLERANCES)
    extra = raw.get("tolerances") or {}
    unknown = set(extra) - set(DEFAULT_TOLERANCES)
    if unknown:
        raise ConfigError(f"unknown tolerances {sorted(unknown)}")
    tolerances.update({k: float(v) for k, v in extra.items()})
    if any(not v > 0 for v in tolerances.values()):
        raise ConfigError("tolerances must be positive")
    for key in ("correlations", "heataverage"):
        if not isinstance(raw.get(key, {}), dict):
            raise ConfigError(f"{key!r} must be a mapping")
    return ExperimentConfig(
        map=_component(raw, "map", MAPS),
        potential=_component(raw, "potential", POTENTIALS, "srb"),
        group=_component(raw, "group", GROUPS),
        tau=_component(raw, "tau", SKEWS),
        kappa_max=_positive(raw, "kappa_max", 20.0, float),
        N=_positive(raw, "N", 48, int),
        period_cap=period_cap,
        pressure_period=_positive(raw, "pressure_period", 12, int),
        t_grid=_t_grid(raw.get("t_grid", [1e-3, 1e-2, 1e-1])),
        n_range=n_range,
        tolerances=tolerances,
        correlations=dict(raw.get("correlations") or {}),
        heataverage=dict(raw.get("heataverage") or {}),
        output=str(raw.get("output", "out")),
        raw=raw,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return config_from_dict(raw)


def build_objects(cfg: ExperimentConfig):
    """``(tmap, phi, group, tau)`` from the registries; factory errors become :class:`ConfigError`."""
    from .dynamics import make_map
    from .groups import make_group
    from .thermo import make_potential
    from .twisted import make_skew

    try:
        tmap = make_map(cfg.map.name, **cfg.map.params)
        phi = make_potential(cfg.potential.name, tmap, **cfg.potential.params)
        group = make_group(cfg.group.name, **cfg.group.params)
        tau = make_skew(cfg.tau.name, group, **cfg.tau.params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return tmap, phi, group, tau
