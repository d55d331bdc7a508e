"""Numerical checks of free-boundary structure on a computed shape and spectrum.

Every quantity here is an empirical estimate: the constants in the underlying
estimates are only known to exist, so each check reports a profile over radii
and the pass/fail thresholds are configuration.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage, optimize
from scipy.spatial import cKDTree

from . import _interp
from .eigensolve import BoundaryTrace, Spectrum, boundary_trace, extend_linear
from .grid_geometry import (
    LevelSetShape,
    ball_clip_volume,
    ball_measure,
    boundary_points,
    indicator,
    SMOOTHING_CELLS,
    tube_volume,
)
from .objective import ObjectiveSpec, gradient as objective_gradient, multiplicity_clusters

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = {
    "fb_residual_sup": 0.05,
    "density_min": 0.3,
    "density_max": 0.7,
    "nondegeneracy_min": 0.1,
    "weiss_C_max": 8.0,
    "flatness_alpha_min": 0.3,
    "flatness_r2_min": 0.7,
}


class BasisDependenceError(ValueError):
    """Residual would depend on the basis chosen inside a tied eigenspace."""


@dataclass
class DiagnosticsConfig:
    radii: tuple[float, ...] = tuple(0.2 * 2.0 ** -j for j in range(6))
    sample_cap: int = 64
    cluster_tol: float = 1e-3
    n_centers: int = 4
    seed: int = 0
    quad_tol_rel: float = 0.05
    noise_floor: float = 1e-8
    flat_threshold: float = 0.25
    weiss_C_grid: tuple[float, ...] = tuple(0.5 * i for i in range(65))
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    thresholds_enabled: bool = True
    refine_h: float | None = None  # resample finer before diagnosing (used by the CLI)

    def __post_init__(self):
        self.radii = tuple(sorted((float(r) for r in self.radii), reverse=True))
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")

    def usable_radii(self, h: float, min_cells: float = 4.0) -> list[float]:
        return [r for r in self.radii if r >= min_cells * h - 1e-12]

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticsConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown diagnostics options {sorted(unknown)}")
        kw = dict(d)
        if "thresholds" in kw:
            kw["thresholds"] = {**DEFAULT_THRESHOLDS, **kw["thresholds"]}
        return cls(**kw)


@dataclass
class FlatnessFit:
    center: np.ndarray
    r: float
    nu: np.ndarray
    alphas: np.ndarray
    f: float


@dataclass
class WeissSample:
    r: float
    phi_r: float


@dataclass
class DiagnosticsReport:
    fb_residual_sup: float | None = None
    fb_residual_l2: float | None = None
    nondegeneracy: dict | None = None
    density: dict | None = None
    minkowski: dict | None = None
    weiss: dict | None = None
    acf: dict | None = None
    flatness_decay: dict | None = None
    nonflat_count: int | None = None
    skipped: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fields(spectrum) -> np.ndarray:
    if isinstance(spectrum, Spectrum):
        return np.asarray(spectrum.eigenfunctions)
    return np.asarray(spectrum, dtype=np.float64)


# -- free-boundary residual --------------------------------------------------------

def fb_residual(trace: BoundaryTrace, xi, xi0: float = 1.0, clusters=None):
    """Residual ``|sum_k xi_k (u_k)_nu^2 - xi0|`` at every boundary sample.

    Returns ``(sup, l2, per_sample)``; the L2 norm is boundary-measure weighted.
    Clusters of tied eigenvalues with unequal ``xi`` are refused.
    """
    xi = np.asarray(xi, dtype=np.float64)
    for c in clusters or []:
        if len(c) > 1 and np.ptp(xi[list(c)]) > 1e-12 * max(1.0, np.max(np.abs(xi))):
            raise BasisDependenceError(
                f"unequal weights {xi[list(c)]} on tied eigenvalues {[k + 1 for k in c]}")
    dn = np.asarray(trace.normal_derivatives)
    if dn.shape[1] == 0:
        return math.nan, math.nan, np.zeros(0)
    res = np.abs(xi @ (dn * dn) - xi0)
    w = trace.samples.weights
    l2 = math.sqrt(float(np.sum(w * res * res) / np.sum(w)))
    return float(res.max()), l2, res


# -- sampling helpers -----------------------------------------------------------------

def farthest_point_sample(points: np.ndarray, cap: int, seed: int = 0) -> np.ndarray:
    """Greedy farthest-point subsample (indices), first index drawn from ``seed``."""
    m = len(points)
    if m <= cap:
        return np.arange(m)
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(m))]
    d = np.linalg.norm(points - points[chosen[0]], axis=1)
    for _ in range(cap - 1):
        i = int(np.argmax(d))
        chosen.append(i)
        d = np.minimum(d, np.linalg.norm(points - points[i], axis=1))
    return np.array(chosen)


def _ball_nodes(grid, center, r):
    sl = grid.box_slices(center, r)
    mesh = np.meshgrid(*[grid.axis(a)[sl[a]] for a in range(grid.ndim)], indexing="ij")
    rel = np.stack([m - c for m, c in zip(mesh, center)], axis=-1)
    inball = np.sum(rel * rel, axis=-1) <= r * r
    return sl, rel, inball


# -- local profiles -------------------------------------------------------------------

def nondegeneracy_profile(shape: LevelSetShape, spectrum, cfg: DiagnosticsConfig, centers=None) -> dict:
    """Per radius, the minimum over centers of ``sup_{B_r} sum_k |u_k| / r``."""
    grid = shape.grid
    U = np.sum(np.abs(_fields(spectrum)), axis=0)
    if centers is None:
        pts = boundary_points(shape).points
        centers = pts[farthest_point_sample(pts, cfg.sample_cap, cfg.seed)]
    radii = cfg.usable_radii(grid.h)
    ratios = []
    for r in radii:
        vals = []
        for c in centers:
            sl, _, inball = _ball_nodes(grid, c, r)
            vals.append(U[sl][inball].max() / r if inball.any() else 0.0)
        ratios.append(min(vals) if vals else math.nan)
    c0 = min(ratios) if ratios else math.nan
    return {"radii": radii, "min_ratio": ratios, "c0_estimate": c0, "degenerate": bool(not c0 > 0)}


def density_profile(shape: LevelSetShape, cfg: DiagnosticsConfig, centers=None) -> dict:
    """Per radius, extremes over centers of ``|B_r ∩ Omega| / |B_r|``."""
    grid = shape.grid
    if centers is None:
        pts = boundary_points(shape).points
        centers = pts[farthest_point_sample(pts, cfg.sample_cap, cfg.seed)]
    radii, lo, hi = [], [], []
    for r in cfg.usable_radii(grid.h):
        vals = [ball_clip_volume(shape, c, r) / ball_measure(r, grid.ndim)
                for c in centers if grid.contains_ball(c, r)]
        if not vals:
            continue
        radii.append(r)
        lo.append(min(vals))
        hi.append(max(vals))
    out = {"radii": radii, "min": lo, "max": hi, "warning": None}
    if lo and (min(lo) < 0.05 or max(hi) > 0.95):
        out["warning"] = "density ratio outside [0.05, 0.95]: possible cusp or thin region"
        warnings.warn(out["warning"], stacklevel=2)
    return out


def minkowski_profile(shape: LevelSetShape, cfg: DiagnosticsConfig) -> dict:
    """Per radius, ``tube_volume(r) / (2r)`` (the two-sided Minkowski ratio)."""
    h = shape.grid.h
    radii, ratio, skipped = [], [], []
    for r in cfg.radii:
        if r < 2 * h:
            skipped.append({"r": r, "reason": "r < 2h"})
            continue
        radii.append(r)
        ratio.append(tube_volume(shape, r) / (2.0 * r))
    out = {"radii": radii, "ratio": ratio, "skipped": skipped, "warning": None}
    if len(ratio) >= 2 and ratio[-1] > 1.5 * ratio[0]:
        out["warning"] = "Minkowski ratio grows as r shrinks"
        warnings.warn(out["warning"], stacklevel=2)
    return out


# -- flatness and blow-ups -------------------------------------------------------------

def _unit_normal(shape, center):
    _, g = _interp.cubic(shape.phi, shape.grid.origin, shape.grid.h, np.atleast_2d(center), grad=True)
    g = g[0]
    n = np.linalg.norm(g)
    if n == 0:
        raise ValueError("level-set gradient vanishes at center")
    return g / n


def _tangent_basis(nu):
    a = np.eye(len(nu))[np.argmin(np.abs(nu))]
    t1 = a - np.dot(a, nu) * nu
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(nu, t1)
    return t1, t2


def _project(alpha, xi, xi0):
    q = float(np.sum(xi * alpha * alpha))
    if q <= 0:
        alpha = np.ones_like(alpha)
        q = float(np.sum(xi))
    return alpha * math.sqrt(xi0 / q)


def flatness(shape: LevelSetShape, spectrum, xi, xi0: float, center, r: float,
             min_cells: float = 8.0, max_evals: int = 200) -> FlatnessFit:
    """Distance of the rescaled fields to the closest half-plane profile on ``B_1``.

    Fields ``w_k = u_k(center + r y) / r`` at grid nodes of ``B_1 ∩ Omega`` are
    compared with ``-alpha_k (y . nu)`` under ``sum xi_k alpha_k^2 = xi0``.
    The returned ``f`` is the best value found, an upper bound on the infimum.
    """
    grid = shape.grid
    center = np.asarray(center, dtype=np.float64)
    if r < min_cells * grid.h - 1e-12:
        raise ValueError(f"radius {r} below {min_cells}h")
    if not grid.contains_ball(center, r):
        raise ValueError("ball exits the grid")
    U = _fields(spectrum)
    xi = np.asarray(xi, dtype=np.float64)
    sl, rel, inball = _ball_nodes(grid, center, r)
    sel = inball & (shape.phi[sl] < 0)
    if sel.sum() < 10:
        raise ValueError("too few interior samples in the ball")
    y = rel[sel] / r
    w = np.stack([u[sl][sel] / r for u in U])

    nu0 = _unit_normal(shape, center)
    s0 = y @ nu0
    deep = s0 < -0.2
    if deep.sum() < 3:
        deep = s0 < 0
    alpha0 = -(w[:, deep] @ s0[deep]) / max(np.dot(s0[deep], s0[deep]), 1e-300)
    alpha0 = _project(alpha0, xi, xi0)

    ndim = grid.ndim
    if ndim == 2:
        def nu_of(a):
            c, s = math.cos(a[0]), math.sin(a[0])
            return np.array([c * nu0[0] - s * nu0[1], s * nu0[0] + c * nu0[1]])
    else:
        t1, t2 = _tangent_basis(nu0)

        def nu_of(a):
            v = nu0 + a[0] * t1 + a[1] * t2
            return v / np.linalg.norm(v)
    nang = ndim - 1

    def f_of(x):
        nu = nu_of(x[:nang])
        alpha = _project(x[nang:], xi, xi0)
        return float(np.max(np.abs(w + alpha[:, None] * (y @ nu)[None, :])))

    x0 = np.concatenate([np.zeros(nang), alpha0])
    f0 = f_of(x0)
    best = (f0, x0)
    if max_evals > 0 and f0 > 0:
        step = np.concatenate([np.full(nang, 0.05), 0.05 * np.maximum(np.abs(alpha0), 1e-3)])
        simplex = np.vstack([x0] + [x0 + np.eye(len(x0))[i] * step[i] for i in range(len(x0))])
        res = optimize.minimize(f_of, x0, method="Nelder-Mead",
                                options={"maxfev": max_evals, "initial_simplex": simplex,
                                         "xatol": 1e-10, "fatol": 1e-12})
        if res.fun < best[0]:
            best = (float(res.fun), res.x)
    f, x = best
    return FlatnessFit(center, float(r), nu_of(x[:nang]), _project(x[nang:], xi, xi0), float(f))


def flatness_decay(shape: LevelSetShape, spectrum, xi, xi0: float, center, cfg: DiagnosticsConfig,
                   min_cells: float = 8.0) -> dict:
    """Fit ``log f(r) ~ alpha log r + c`` over the configured radii."""
    grid = shape.grid
    radii = [r for r in cfg.radii if r >= min_cells * grid.h - 1e-12 and grid.contains_ball(center, r)]
    if len(radii) < 4:
        raise ValueError(f"need at least 4 valid radii, have {len(radii)}")
    fs = [flatness(shape, spectrum, xi, xi0, center, r, min_cells=min_cells).f for r in radii]
    out = {"radii": radii, "f": fs, "alpha": None, "r2": None, "saturated": False}
    keep = [(r, f) for r, f in zip(radii, fs) if f > cfg.noise_floor]
    if len(keep) < 2:
        out["saturated"] = True
        return out
    lr = np.log([k[0] for k in keep])
    lf = np.log([k[1] for k in keep])
    slope, icpt = np.polyfit(lr, lf, 1)
    pred = slope * lr + icpt
    ss_tot = float(np.sum((lf - lf.mean()) ** 2))
    r2 = 1.0 - float(np.sum((lf - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    out.update(alpha=float(slope), r2=r2, saturated=len(keep) < len(fs))
    return out


@dataclass
class Blowup:
    points: np.ndarray  # (m, ndim) coordinates in B_1
    fields: np.ndarray  # (N, m) rescaled u_k
    residual: float
    fit: FlatnessFit


def blowup(shape: LevelSetShape, spectrum, center, r: float, xi=None, xi0: float = 1.0,
           min_cells: float = 8.0) -> Blowup:
    """Rescaled fields ``u_k(center + r y) / r`` on ``B_1`` and their distance to
    the fitted half-plane profile ``alpha_k (y . nu)^-``."""
    grid = shape.grid
    center = np.asarray(center, dtype=np.float64)
    U = _fields(spectrum)
    if xi is None:
        xi = np.ones(len(U))
    phic = float(_interp.cubic(shape.phi, grid.origin, grid.h, center[None])[0])
    if abs(phic) > 2 * grid.h:
        raise ValueError("center is not on the boundary")
    fit = flatness(shape, spectrum, xi, xi0, center, r, min_cells=min_cells)
    sl, rel, inball = _ball_nodes(grid, center, r)
    y = rel[inball] / r
    w = np.stack([u[sl][inball] / r for u in U])
    profile = fit.alphas[:, None] * np.maximum(-(y @ fit.nu), 0.0)[None, :]
    return Blowup(y, w, float(np.max(np.abs(w - profile))), fit)


# -- monotonicity formulas ---------------------------------------------------------

def _sphere_points(center, r, ndim, n_angles=720):
    if ndim == 2:
        t = 2 * np.pi * np.arange(n_angles) / n_angles
        pts = center + r * np.stack([np.cos(t), np.sin(t)], axis=1)
        wts = np.full(n_angles, 2 * np.pi * r / n_angles)
        return pts, wts
    x, wl = np.polynomial.legendre.leggauss(48)
    ph = 2 * np.pi * np.arange(96) / 96
    ct, P = np.meshgrid(x, ph, indexing="ij")
    st = np.sqrt(1 - ct * ct)
    dirs = np.stack([st * np.cos(P), st * np.sin(P), ct], axis=-1).reshape(-1, 3)
    wts = (wl[:, None] * np.full(96, 2 * np.pi / 96)[None, :]).ravel() * r * r
    return center + r * dirs, wts


def weiss_energy(shape: LevelSetShape, spectrum, xi, xi0: float, center, cfg: DiagnosticsConfig,
                 skipped: list | None = None) -> list[WeissSample]:
    """Scale-invariant energy at each configured radius (ascending r).

    Bulk term ``r^-n ∫_{B_r ∩ Omega} (sum xi |grad u|^2 + xi0)`` by smoothed
    indicators; boundary term ``r^-(n+1) ∫_{∂B_r} sum xi u^2`` by quadrature of
    interpolated values on the sphere.
    """
    grid, h = shape.grid, shape.grid.h
    n = grid.ndim
    center = np.asarray(center, dtype=np.float64)
    U = _fields(spectrum)
    xi = np.asarray(xi, dtype=np.float64)
    eps = SMOOTHING_CELLS * h
    out = []
    for r in sorted(cfg.radii):
        if r < 4 * h - 1e-12:
            if skipped is not None:
                skipped.append({"r": r, "reason": "r < 4h"})
            continue
        if not grid.contains_ball(center, r + eps):
            raise ValueError("ball exits the grid")
        sl, rel, _ = _ball_nodes(grid, center, r + eps)
        dist = np.sqrt(np.sum(rel * rel, axis=-1))
        chi = indicator(shape.phi[sl], eps) * indicator(dist - r, eps)
        wts = grid.weights(sl)
        dens = np.zeros(chi.shape)
        # one-cell margin so centred differences inside the box are exact
        big = tuple(slice(max(s.start - 1, 0), min(s.stop + 1, d)) for s, d in zip(sl, grid.dims))
        inner = tuple(slice(s.start - b.start, s.start - b.start + (s.stop - s.start)) for s, b in zip(sl, big))
        for k, u in enumerate(U):
            # wide enough that the zero tail never meets the smoothed indicator
            ext = extend_linear(u[big], shape.phi[big], h, width=4)
            g = np.gradient(ext, h)
            dens += xi[k] * sum(gi[inner] ** 2 for gi in g)
        ball = wts * indicator(dist - r, eps)
        norm = ball_measure(r, n) / float(np.sum(ball))
        bulk = float(np.sum(wts * chi * (dens + xi0))) * norm / r ** n
        pts, sw = _sphere_points(center, r, n)
        sphere = sum(xi[k] * float(np.sum(sw * _interp.linear(u, grid.origin, h, pts) ** 2))
                     for k, u in enumerate(U))
        out.append(WeissSample(float(r), bulk - sphere / r ** (n + 1)))
    return out


def weiss_monotonicity_check(samples: Sequence[WeissSample], C: float, quad_tol: float | None = None,
                             quad_tol_rel: float = 0.05):
    """Count adjacent radii where ``phi(r) + C r^2/2`` decreases by more than ``quad_tol``."""
    if len(samples) < 3:
        raise ValueError("need at least 3 Weiss samples")
    s = sorted(samples, key=lambda w: w.r)
    if quad_tol is None:
        quad_tol = quad_tol_rel * max(abs(w.phi_r) for w in s)
    g = [w.phi_r + C * w.r ** 2 / 2 for w in s]
    gaps = [g[i] - g[i + 1] for i in range(len(g) - 1)]
    count = sum(1 for d in gaps if d > quad_tol)
    return count, max(gaps)


def fit_weiss_constant(samples, cfg: DiagnosticsConfig):
    """Smallest C on the configured grid with no monotonicity violations (None if none works)."""
    for C in cfg.weiss_C_grid:
        if weiss_monotonicity_check(samples, C, quad_tol_rel=cfg.quad_tol_rel)[0] == 0:
            return float(C)
    return None


def acf_functional(u1, u2, center, cfg: DiagnosticsConfig, grid, warn_overlap: bool = True) -> list[dict]:
    """Product of normalized weighted Dirichlet energies of two functions.

    ``J(r) = r^-4 ∫_{B_r} |grad w1|^2 |x|^(2-n) ∫_{B_r} |grad w2|^2 |x|^(2-n)``
    with cell-centred gradients and midpoint quadrature.
    """
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    h, n = grid.h, grid.ndim
    lo, hi = np.asarray(grid.origin), np.asarray(grid.upper)
    if np.any(center <= lo) or np.any(center >= hi):
        raise ValueError("center cell ambiguous: center not strictly inside the grid")
    if warn_overlap and np.any((u1 > 0) & (u2 > 0)):
        warnings.warn("positivity sets overlap: monotonicity hypothesis violated", stacklevel=2)
    eps = SMOOTHING_CELLS * h

    def cell_energy(u, sl):
        sub = u[sl]
        g2 = 0.0
        for ax in range(n):
            d = np.diff(sub, axis=ax) / h
            for other in range(n):
                if other != ax:
                    d = 0.5 * (d[tuple(slice(0, -1) if i == other else slice(None) for i in range(n))]
                               + d[tuple(slice(1, None) if i == other else slice(None) for i in range(n))])
            g2 = g2 + d * d
        return g2

    out = []
    for r in sorted(cfg.radii):
        if not grid.contains_ball(center, r + eps):
            continue
        sl = grid.box_slices(center, r + eps)
        axes = [grid.axis(a)[sl[a]] for a in range(n)]
        mids = np.meshgrid(*[0.5 * (a[1:] + a[:-1]) for a in axes], indexing="ij")
        dist = np.sqrt(sum((m - c) ** 2 for m, c in zip(mids, center)))
        weight = indicator(dist - r, eps) * (np.maximum(dist, 1e-300) ** (2 - n) if n > 2 else 1.0)
        e1 = float(np.sum(cell_energy(u1, sl) * weight)) * h ** n
        e2 = float(np.sum(cell_energy(u2, sl) * weight)) * h ** n
        out.append({"r": r, "J": e1 * e2 / r ** 4})
    return out


# -- orchestration -------------------------------------------------------------------

def _acf_for_components(shape, spectrum, cfg):
    labels, ncomp = ndimage.label(shape.phi < 0)
    if ncomp < 2:
        return None, f"domain has {ncomp} component(s): ACF contact test not applicable"
    sizes = ndimage.sum(np.ones_like(labels), labels, index=range(1, ncomp + 1))
    a, b = (np.argsort(sizes)[::-1][:2] + 1)
    # a single eigenfunction often lives on one component only
    total = np.sum(np.abs(_fields(spectrum)), axis=0)
    pa = np.argwhere(labels == a)
    pb = np.argwhere(labels == b)
    d, j = cKDTree(pb).query(pa)
    i = int(np.argmin(d))
    center = shape.grid.nodes(0.5 * (pa[i] + pb[j[i]]))
    w1 = np.where(labels == a, total, 0.0)
    w2 = np.where(labels == b, total, 0.0)
    return acf_functional(w1, w2, center, cfg, shape.grid, warn_overlap=False), None


def full_report(shape: LevelSetShape, spectrum: Spectrum, spec: ObjectiveSpec,
                cfg: DiagnosticsConfig | None = None, trace: BoundaryTrace | None = None) -> DiagnosticsReport:
    cfg = cfg or DiagnosticsConfig()
    rep = DiagnosticsReport()
    if shape.degenerate:
        reason = "degenerate shape"
        for name in ("fb_residual", "nondegeneracy", "density", "minkowski", "weiss", "acf",
                     "flatness_decay", "nonflat_count"):
            rep.skipped[name] = reason
        rep.checks = {}
        return rep

    h = shape.grid.h
    lam = np.asarray(spectrum.eigenvalues)
    xi0 = spec.xi0
    try:
        xi = objective_gradient(spec, lam)
    except ValueError as exc:
        xi = None
        rep.notes.append(f"eigenvalue gradient unavailable: {exc}")

    def attempt(name, fn):
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001 - recorded per field
            rep.skipped[name] = f"{type(exc).__name__}: {exc}"
            logger.info("diagnostic %s skipped: %s", name, exc)
            return None

    samples = boundary_points(shape)
    if trace is None:
        trace = attempt("fb_residual", lambda: boundary_trace(spectrum, shape, samples))
    if trace is not None and xi is not None:
        clusters = multiplicity_clusters(lam, cfg.cluster_tol)
        res = attempt("fb_residual", lambda: fb_residual(trace, xi, xi0, clusters))
        if res is not None:
            rep.fb_residual_sup, rep.fb_residual_l2 = res[0], res[1]
    elif xi is None:
        rep.skipped["fb_residual"] = "no eigenvalue gradient"

    idx = farthest_point_sample(samples.points, cfg.sample_cap, cfg.seed)
    centers = samples.points[idx]
    rep.nondegeneracy = attempt("nondegeneracy", lambda: nondegeneracy_profile(shape, spectrum, cfg, centers))
    rep.density = attempt("density", lambda: density_profile(shape, cfg, centers))
    rep.minkowski = attempt("minkowski", lambda: minkowski_profile(shape, cfg))

    dropped = [r for r in cfg.radii if r < 4 * h - 1e-12]
    if dropped:
        rep.notes.append(f"radii below 4h dropped: {dropped}")

    focus = centers[: max(cfg.n_centers, 1)]
    xi_w = xi if xi is not None else np.ones(len(lam))
    if xi is None:
        rep.notes.append("Weiss/flatness use unit weights")

    def weiss_all():
        per = []
        for c in focus:
            skipped = []
            s = weiss_energy(shape, spectrum, xi_w, xi0, c, cfg, skipped)
            C = fit_weiss_constant(s, cfg)
            v0 = weiss_monotonicity_check(s, 0.0, quad_tol_rel=cfg.quad_tol_rel)[0]
            per.append({"center": c, "r": [w.r for w in s], "phi": [w.phi_r for w in s],
                        "C": C, "violations_at_C0": v0})
        Cs = [p["C"] for p in per]
        return {"centers": per, "C": None if any(c is None for c in Cs) else max(Cs),
                "violations_at_C0": max(p["violations_at_C0"] for p in per)}
    rep.weiss = attempt("weiss", weiss_all)

    def decay_all():
        per = [dict(flatness_decay(shape, spectrum, xi_w, xi0, c, cfg), center=c) for c in focus]
        alphas = [p["alpha"] for p in per if p["alpha"] is not None]
        r2s = [p["r2"] for p in per if p["r2"] is not None]
        return {"centers": per, "alpha": min(alphas) if alphas else None,
                "r2": min(r2s) if r2s else None, "saturated": all(p["saturated"] for p in per)}
    rep.flatness_decay = attempt("flatness_decay", decay_all)

    def nonflat():
        r = min(cfg.usable_radii(h, 8.0))
        count = 0
        for c in centers:
            if shape.grid.contains_ball(c, r):
                if flatness(shape, spectrum, xi_w, xi0, c, r, max_evals=60).f > cfg.flat_threshold:
                    count += 1
        return count
    rep.nonflat_count = attempt("nonflat_count", nonflat)

    acf, reason = attempt("acf", lambda: _acf_for_components(shape, spectrum, cfg)) or (None, None)
    if reason:
        rep.skipped["acf"] = reason
    rep.acf = {"samples": acf} if acf is not None else None

    rep.checks = evaluate_thresholds(rep, cfg) if cfg.thresholds_enabled else {}
    return rep


def evaluate_thresholds(rep: DiagnosticsReport, cfg: DiagnosticsConfig) -> dict:
    t = cfg.thresholds
    checks = {}
    if rep.fb_residual_sup is not None and "fb_residual_sup" in t:
        checks["fb_residual"] = rep.fb_residual_sup <= t["fb_residual_sup"]
    if rep.density and rep.density["min"]:
        checks["density"] = (min(rep.density["min"]) >= t["density_min"]
                             and max(rep.density["max"]) <= t["density_max"])
    if rep.nondegeneracy and rep.nondegeneracy["min_ratio"]:
        checks["nondegeneracy"] = rep.nondegeneracy["c0_estimate"] >= t["nondegeneracy_min"]
    if rep.weiss:
        checks["weiss"] = rep.weiss["C"] is not None and rep.weiss["C"] <= t["weiss_C_max"]
    if rep.flatness_decay:
        fd = rep.flatness_decay
        checks["flatness_decay"] = bool(fd["saturated"] or (
            fd["alpha"] is not None and fd["alpha"] >= t["flatness_alpha_min"]
            and fd["r2"] >= t["flatness_r2_min"]))
    return {k: bool(v) for k, v in checks.items()}
