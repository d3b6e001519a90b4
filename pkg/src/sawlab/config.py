"""Experiment configuration: flat ``key = value`` files with ``#`` comments.

Precedence, lowest to highest: built-in defaults, the config file, CLI flags.
List values are comma- or whitespace-separated.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidConfig, RunIOError
from .exact import budget_from_env, enumeration_cost, _check_budget

ENGINES = ("exact", "mcmc", "saw_pivot")

# Keys that change how a run is executed but not what it computes.
UNHASHED = ("out", "threads", "budget")


@dataclass
class ExperimentConfig:
    d: int = 2
    n_grid: tuple = (8, 10, 12)
    beta_grid: tuple = (1.0,)
    engine: str = "exact"
    seed: int = 0
    # sampler
    sweeps: int = 20_000
    burn_in: int = 2_000
    move_mix: float = 0.2
    chains: int = 4
    # cone diagnostics (a1, a2, b1, b2 default to the beta scalings)
    cones: bool = False
    cone_samples: int = 2_000
    cone_thin: int = 2
    v: float = 1.0
    a1: float | None = None
    a2: float | None = None
    b1: float | None = None
    b2: float | None = None
    delta: float = 0.05
    rho: float = 0.05
    gamma: float = 1.0
    epsilon: float = 0.05
    # execution
    out: str | None = None
    threads: int = 1
    budget: int | None = None

    def validate(self) -> "ExperimentConfig":
        if self.d < 1:
            raise InvalidConfig("d must be >= 1")
        if not self.n_grid or not self.beta_grid:
            raise InvalidConfig("n_grid and beta_grid must be nonempty")
        if any(n < 1 for n in self.n_grid):
            raise InvalidConfig("every n must be >= 1")
        if len(set(self.n_grid)) != len(self.n_grid) or len(set(self.beta_grid)) != len(self.beta_grid):
            raise InvalidConfig("grids must not repeat values")
        if any(b < 0 or math.isnan(b) for b in self.beta_grid):
            raise InvalidConfig("beta must be nonnegative")
        if self.engine not in ENGINES:
            raise InvalidConfig(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.engine != "exact":
            if not 1 <= self.burn_in < self.sweeps:
                raise InvalidConfig("need 1 <= burn_in < sweeps")
            if self.chains < 1:
                raise InvalidConfig("chains must be >= 1")
            if not 0.0 <= self.move_mix <= 1.0:
                raise InvalidConfig("move_mix must lie in [0, 1]")
        if self.threads < 1:
            raise InvalidConfig("threads must be >= 1")
        if self.cones and (self.cone_samples < 1 or self.cone_thin < 1):
            raise InvalidConfig("cone_samples and cone_thin must be >= 1")
        if self.engine == "exact":
            budget = self.budget if self.budget is not None else budget_from_env()
            for n in self.n_grid:
                _check_budget(enumeration_cost(self.d, n), budget,
                              f"enumeration of d={self.d}, n={n}")
        return self

    def hashed_dict(self) -> dict:
        data = dataclasses.asdict(self)
        for key in UNHASHED:
            data.pop(key)
        data["n_grid"] = list(self.n_grid)
        data["beta_grid"] = list(self.beta_grid)
        return data

    def config_hash(self) -> str:
        return config_hash(self.hashed_dict())

    def cells(self) -> list[tuple[int, int, float]]:
        return [(self.d, n, b) for b in self.beta_grid for n in self.n_grid]


def config_hash(data: dict) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_ALIASES = {"beta": "beta_grid", "n": "n_grid", "engine_name": "engine"}


def _parse_value(key: str, text: str):
    f = _FIELDS[key]
    text = text.strip()
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if key == "n_grid":
            return tuple(int(t) for t in text.replace(",", " ").split())
        if key == "beta_grid":
            return tuple(float(t) for t in text.replace(",", " ").split())
        if text.lower() in ("none", ""):
            return None
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(float(text)) if "e" in text.lower() else int(text)
        if kind.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise InvalidConfig(f"bad value for {key}: {text!r}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _FIELDS:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, value)
    return values


def make_config(file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    data = dict(file_values or {})
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(data) - set(_FIELDS)
    if unknown:
        raise InvalidConfig(f"unknown keys {sorted(unknown)}")
    for key in ("n_grid", "beta_grid"):
        if key in data and not isinstance(data[key], tuple):
            data[key] = tuple(data[key])
    return ExperimentConfig(**data).validate()


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    values = {}
    if path is not None:
        try:
            values = parse_config_text(Path(path).read_text())
        except OSError as exc:
            raise RunIOError(f"cannot read config {path}: {exc}") from exc
    return make_config(values, overrides)


def config_from_hashed(data: dict) -> ExperimentConfig:
    data = dict(data)
    data["n_grid"] = tuple(data["n_grid"])
    data["beta_grid"] = tuple(data["beta_grid"])
    return ExperimentConfig(**data)
