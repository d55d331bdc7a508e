"""Run configuration: a single JSON document describing grid, initial shape,
objective, optimizer and diagnostics settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .diagnostics import DiagnosticsConfig
from .grid_geometry import Grid, LevelSetShape, box_phi, disk_phi, make_shape, resample, union_phi
from .objective import ObjectiveSpec
from .optimize import OptConfig


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def parse_number(v) -> float:
    """Accept plain numbers and fraction strings such as ``"1/128"``."""
    if isinstance(v, str):
        try:
            return float(Fraction(v.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"not a number: {v!r}") from exc
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"not a number: {v!r}")
    return float(v)


def build_grid(d: dict) -> Grid:
    try:
        h = parse_number(d["h"])
        if "dims" in d:
            return Grid(tuple(d["dims"]), h, tuple(d["origin"]))
        return Grid.from_box(tuple(map(parse_number, d["lower"])), tuple(map(parse_number, d["upper"])), h)
    except KeyError as exc:
        raise ConfigError(f"grid spec missing {exc}") from exc


def build_phi(grid: Grid, d: dict) -> np.ndarray:
    kind = d.get("type")
    if kind == "disk":
        return disk_phi(grid, d["center"], parse_number(d["radius"]))
    if kind == "square":
        return box_phi(grid, d["center"], parse_number(d["side"]))
    if kind == "union":
        parts = d.get("parts") or []
        if not parts:
            raise ConfigError("union needs parts")
        return union_phi(*[build_phi(grid, p) for p in parts])
    raise ConfigError(f"unknown initial shape type {kind!r}")


def build_init(grid: Grid, d: dict, base: Path | None = None) -> LevelSetShape:
    if d.get("type") == "checkpoint":
        from .io import load_shape
        path = Path(d["path"])
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ConfigError(f"checkpoint {path} does not exist")
        shape = load_shape(path)
        return shape if shape.grid == grid else resample(shape, grid)
    return make_shape(grid, build_phi(grid, d), {"init": d})


@dataclass
class RunConfig:
    grid: Grid
    init: dict
    objective: ObjectiveSpec
    N: int
    optimizer: OptConfig
    diagnostics: DiagnosticsConfig
    out: Path = Path("out")
    seed: int = 0
    base: Path | None = None
    raw: dict = field(default_factory=dict)

    def initial_shape(self) -> LevelSetShape:
        return build_init(self.grid, self.init, self.base)

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "RunConfig":
        try:
            grid = build_grid(d["grid"])
            objective = ObjectiveSpec.from_dict(d["objective"])
            n = int(d.get("N") or (len(objective.mu) if objective.mu is not None else 1))
            seed = int(d.get("seed", 0))
            opt = OptConfig.from_dict(dict(d.get("optimizer", {}), seed=seed))
            diag = DiagnosticsConfig.from_dict(dict(d.get("diagnostics", {}), seed=seed))
            init = d["init"]
        except KeyError as exc:
            raise ConfigError(f"config missing {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(grid, init, objective, n, opt, diag, Path(d.get("out", "out")), seed, base, d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d, base=path.parent)
