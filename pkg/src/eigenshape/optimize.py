"""Shape-gradient descent of ``F(lambda) + |Omega|`` with l^p continuation.

The boundary velocity is ``V = sum_k xi_k (u_k)_nu^2 - xi0``; moving the
boundary outward where ``V > 0`` decreases the objective.  Each step advects
the level set, reinitializes it on schedule and re-solves the spectrum; a step
that raises the objective is retried with half the time step.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import objective as obj
from .diagnostics import BasisDependenceError, DiagnosticsConfig, DiagnosticsReport, fb_residual, full_report
from .eigensolve import BoundaryTrace, Spectrum, boundary_trace, solve
from .grid_geometry import (
    BoundarySamples,
    CFLError,
    LevelSetShape,
    advect,
    reinitialize,
    volume,
)
from .objective import multiplicity_clusters  # noqa: F401  (re-exported)

logger = logging.getLogger(__name__)

BAND_CELLS = 6.0


@dataclass
class OptConfig:
    max_steps: int = 400
    cfl: float = 0.5
    reinit_period: int = 5
    p_schedule: tuple[float, ...] = (math.inf,)
    switch_tol: float = 1e-4
    stop_tol: float = 1e-5
    residual_target: float = 0.05
    seed: int = 0
    dt_max_cells: float = 1.0  # cap on dt in units of h
    smoothing_cells: float = 3.0  # Gaussian width for tangential smoothing of V
    max_backtracks: int = 5
    eig_tol: float = 1e-8
    checkpoint_every: int = 0

    def __post_init__(self):
        self.p_schedule = tuple(obj._parse_p(p) for p in self.p_schedule)
        if not 0 < self.cfl <= 0.5:
            raise ValueError("cfl must lie in (0, 0.5]")
        if not self.p_schedule or any(b <= a for a, b in zip(self.p_schedule, self.p_schedule[1:])):
            raise ValueError("p_schedule must be non-empty and ascending")
        if self.reinit_period < 1:
            raise ValueError("reinit_period must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "OptConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown optimizer options {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["p_schedule"] = ["inf" if not math.isfinite(p) else p for p in self.p_schedule]
        return out


@dataclass
class OptState:
    shape: LevelSetShape
    spectrum: Spectrum
    objective_value: float
    step: int = 0
    history: list = field(default_factory=list)
    stalled: bool = False
    p: float = math.inf
    trace: BoundaryTrace | None = None
    velocity: np.ndarray | None = None  # raw shape gradient at trace samples
    fb_sup: float = math.nan


def history_row(state: OptState) -> tuple:
    maxv = float(np.max(np.abs(state.velocity))) if state.velocity is not None and len(state.velocity) else math.nan
    return (state.step, tuple(float(v) for v in state.spectrum.eigenvalues), volume(state.shape),
            state.objective_value, maxv, state.fb_sup)


def history_csv(history: Sequence[tuple]) -> str:
    """History as CSV text; floats written with ``repr`` so equal runs give equal bytes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = len(history[0][1]) if history else 0
    w.writerow(["step"] + [f"lambda_{k + 1}" for k in range(n)] + ["volume", "objective", "maxV", "fb_residual"])
    for step, lam, vol, val, maxv, res in history:
        w.writerow([step] + [repr(x) for x in lam] + [repr(vol), repr(val), repr(maxv), repr(res)])
    return buf.getvalue()


def _spec_at(spec: obj.ObjectiveSpec, p: float) -> obj.ObjectiveSpec:
    return obj.smooth_p(spec, p) if math.isfinite(p) else dataclasses.replace(spec, p=math.inf)


def shape_gradient(state: OptState, spec: obj.ObjectiveSpec) -> np.ndarray:
    """Velocity ``sum_k xi_k (u_k)_nu^2 - xi0`` at the state's boundary samples."""
    if state.trace is None:
        state.trace = boundary_trace(state.spectrum, state.shape)
    xi = obj.gradient(spec, state.spectrum.eigenvalues)
    dn = state.trace.normal_derivatives
    return xi @ (dn * dn) - spec.xi0


def smooth_velocity(samples: BoundarySamples, values, sigma: float) -> np.ndarray:
    """Gaussian average of sample values over nearby samples, weighted by boundary measure."""
    values = np.asarray(values, dtype=np.float64)
    if sigma <= 0 or len(samples) < 2:
        return values.copy()
    tree = cKDTree(samples.points)
    out = np.empty_like(values)
    for i, nb in enumerate(tree.query_ball_point(samples.points, 3.0 * sigma)):
        nb = np.asarray(nb)
        d2 = np.sum((samples.points[nb] - samples.points[i]) ** 2, axis=1)
        w = samples.weights[nb] * np.exp(-0.5 * d2 / sigma ** 2)
        out[i] = np.dot(w, values[nb]) / w.sum()
    return out


def extend_velocity(samples: BoundarySamples, shape: LevelSetShape, values=None) -> np.ndarray:
    """Constant extension of sample values to the nearest sample within ``|phi| < 6h``.

    ``values`` defaults to ones (useful for checking the band itself).
    """
    if len(samples) == 0:
        raise ValueError("no boundary samples to extend from")
    values = np.ones(len(samples)) if values is None else np.asarray(values, dtype=np.float64)
    grid = shape.grid
    band = np.abs(shape.phi) < BAND_CELLS * grid.h
    out = np.zeros(grid.dims)
    idx = np.argwhere(band)
    if len(idx):
        _, j = cKDTree(samples.points).query(grid.nodes(idx))
        out[tuple(idx.T)] = values[j]
    return out


def _evaluate_state(shape: LevelSetShape, spec: obj.ObjectiveSpec, p: float, N: int, cfg: OptConfig,
                    step: int, history: list) -> OptState:
    spectrum = solve(shape, N, tol=cfg.eig_tol, seed=cfg.seed)
    spec_p = _spec_at(spec, p)
    value = obj.evaluate(spec_p, spectrum.eigenvalues, volume(shape))
    return OptState(shape, spectrum, value, step, history, p=p)


def _attach_velocity(state: OptState, spec: obj.ObjectiveSpec, cfg: OptConfig) -> None:
    spec_p = _spec_at(spec, state.p)
    state.trace = boundary_trace(state.spectrum, state.shape)
    state.velocity = shape_gradient(state, spec_p)
    xi = obj.gradient(spec_p, state.spectrum.eigenvalues)
    try:
        clusters = multiplicity_clusters(state.spectrum.eigenvalues, spec.cluster_tol)
        state.fb_sup = fb_residual(state.trace, xi, spec.xi0, clusters)[0]
    except BasisDependenceError:
        state.fb_sup = math.nan


def initial_state(init: LevelSetShape, spec: obj.ObjectiveSpec, N: int, cfg: OptConfig) -> OptState:
    state = _evaluate_state(init, spec, cfg.p_schedule[0], N, cfg, 0, [])
    _attach_velocity(state, spec, cfg)
    state.history.append(history_row(state))
    return state


def step(state: OptState, spec: obj.ObjectiveSpec, config: OptConfig) -> OptState:
    """One descent step with backtracking; returns a new state (or the old one flagged stalled)."""
    shape, grid = state.shape, state.shape.grid
    h = grid.h
    if state.velocity is None:
        _attach_velocity(state, spec, config)
    samples = state.trace.samples
    v = smooth_velocity(samples, state.velocity, config.smoothing_cells * h)
    vmax = float(np.max(np.abs(v))) if len(v) else 0.0
    field_v = extend_velocity(samples, shape, v)
    dt = config.dt_max_cells * h if vmax == 0 else min(config.cfl * h / vmax, config.dt_max_cells * h)
    N = state.spectrum.n
    nxt = state.step + 1
    for attempt in range(config.max_backtracks + 1):
        try:
            moved = advect(shape, field_v, dt)
        except CFLError:
            dt *= 0.5
            continue
        if nxt % config.reinit_period == 0:
            moved = reinitialize(moved)
        if moved.degenerate:
            dt *= 0.5
            continue
        cand = _evaluate_state(moved, spec, state.p, N, config, nxt, state.history)
        if cand.objective_value <= state.objective_value * (1 + 1e-12) + 1e-300:
            _attach_velocity(cand, spec, config)
            cand.history = state.history + [history_row(cand)]
            logger.debug("step %d dt=%.3g obj=%.10g maxV=%.3g", nxt, dt, cand.objective_value, vmax)
            return cand
        logger.debug("step %d backtrack %d: %.12g > %.12g", nxt, attempt, cand.objective_value,
                     state.objective_value)
        dt *= 0.5
    out = dataclasses.replace(state, stalled=True)
    logger.info("step %d stalled after %d backtracks", nxt, config.max_backtracks)
    return out


def _relative_change(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def run(init: LevelSetShape, spec: obj.ObjectiveSpec, config: OptConfig, N: int | None = None,
        diagnostics: DiagnosticsConfig | bool | None = True,
        callback: Callable[[OptState], None] | None = None) -> tuple[OptState, DiagnosticsReport | None]:
    """Iterate :func:`step` through the p schedule until converged or out of steps.

    Converged means: last p in the schedule, relative objective change below
    ``stop_tol`` and free-boundary residual at most ``residual_target``.  A
    stalled step at the last p with the residual on target also counts as
    converged (the objective can no longer be resolved on the grid).
    """
    if N is None:
        N = len(spec.mu) if spec.mu is not None else 1
    state = initial_state(init, spec, N, config)
    stage = 0
    converged = False
    while state.step < config.max_steps:
        prev = state.objective_value
        state = step(state, spec, config)
        if callback is not None:
            callback(state)
        last_stage = stage == len(config.p_schedule) - 1
        change = 0.0 if state.stalled else _relative_change(prev, state.objective_value)
        if last_stage:
            if state.fb_sup <= config.residual_target and (state.stalled or change < config.stop_tol):
                converged = True
                break
            if state.stalled:
                break
        elif state.stalled or change < config.switch_tol:
            stage += 1
            p = config.p_schedule[stage]
            logger.info("advancing smoothing exponent to p=%s at step %d", p, state.step)
            fresh = _evaluate_state(state.shape, spec, p, N, config, state.step, state.history)
            _attach_velocity(fresh, spec, config)
            state = fresh
    if config.max_steps == 0:
        converged = state.fb_sup <= config.residual_target
    state.shape.metadata["converged"] = converged
    report = None
    if diagnostics:
        cfg = diagnostics if isinstance(diagnostics, DiagnosticsConfig) else DiagnosticsConfig()
        report = full_report(state.shape, state.spectrum, _spec_at(spec, state.p), cfg, trace=state.trace)
        if spec.form == "linear":
            # F is 1-homogeneous in lambda, so the dilate with unit volume has this value
            n = state.shape.grid.ndim
            vol = volume(state.shape)
            report.notes.append(f"volume-normalized F(lambda)*|Omega|^(2/{n}) = "
                                f"{(state.objective_value - vol) * vol ** (2.0 / n):.10g}")
    return state, report
