"""Uniform grids, level-set shapes and the geometric measures used everywhere else.

A shape is the negativity set ``{phi < 0}`` of a field sampled on the nodes of
a uniform Cartesian grid (2-D or 3-D, ``indexing="ij"`` layout, axis 0 = x).
Integrals use trapezoidal node weights so that the constant 1 integrates to
the exact box measure.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from . import _interp
from .kernels import fast_march

SMOOTHING_CELLS = 1.5


class DegenerateShapeError(ValueError):
    """The level-set field does not take both signs."""


class CFLError(ValueError):
    """Time step violates the advection CFL bound."""


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, ...]
    h: float
    origin: tuple[float, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) not in (2, 3):
            raise ValueError(f"grid must be 2-D or 3-D, got {len(dims)} axes")
        if min(dims) < 8:
            raise ValueError(f"every axis needs at least 8 nodes, got {dims}")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if len(origin) != len(dims):
            raise ValueError("origin and dims disagree in dimension")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def from_box(cls, lower: Sequence[float], upper: Sequence[float], h: float) -> "Grid":
        dims = [int(round((b - a) / h)) + 1 for a, b in zip(lower, upper)]
        return cls(tuple(dims), h, tuple(lower))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(o + (d - 1) * self.h for o, d in zip(self.origin, self.dims))

    @property
    def box_measure(self) -> float:
        return float(np.prod([(d - 1) * self.h for d in self.dims]))

    def axis(self, ax: int) -> np.ndarray:
        return self.origin[ax] + self.h * np.arange(self.dims[ax])

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.axis(a) for a in range(self.ndim)], indexing="ij")

    def nodes(self, index) -> np.ndarray:
        """Coordinates of nodes given as an (m, ndim) integer index array."""
        return np.asarray(self.origin) + self.h * np.asarray(index, dtype=np.float64)

    def weights(self, slices=None) -> np.ndarray:
        """Trapezoidal quadrature weights, optionally for a sub-box of slices."""
        out = None
        for ax, d in enumerate(self.dims):
            w = np.full(d, self.h)
            w[0] = w[-1] = 0.5 * self.h
            if slices is not None:
                w = w[slices[ax]]
            out = w if out is None else np.multiply.outer(out, w)
        return out

    def contains_ball(self, center, r) -> bool:
        c = np.asarray(center, dtype=np.float64)
        lo, hi = np.asarray(self.origin), np.asarray(self.upper)
        return bool(np.all(c - r >= lo - 1e-12) and np.all(c + r <= hi + 1e-12))

    def box_slices(self, center, r) -> tuple[slice, ...]:
        c = np.asarray(center, dtype=np.float64)
        out = []
        for ax in range(self.ndim):
            lo = int(math.floor((c[ax] - r - self.origin[ax]) / self.h))
            hi = int(math.ceil((c[ax] + r - self.origin[ax]) / self.h)) + 1
            out.append(slice(max(lo, 0), min(hi, self.dims[ax])))
        return tuple(out)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "h": self.h, "origin": list(self.origin)}


@dataclass(frozen=True)
class LevelSetShape:
    grid: Grid
    phi: np.ndarray
    degenerate: bool = False
    metadata: dict = field(default_factory=dict, compare=False)

    def inside(self) -> np.ndarray:
        return self.phi < 0


class BoundarySample(NamedTuple):
    point: np.ndarray
    normal: np.ndarray
    anchor_cell: tuple


@dataclass(frozen=True)
class BoundarySamples:
    """Zero-level-set samples stored column-wise.

    ``weights`` approximate the boundary measure carried by each sample
    (``h**(n-1) / |normal|_1``), so ``weights.sum()`` approximates the perimeter.
    """

    points: np.ndarray
    normals: np.ndarray
    anchors: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i) -> BoundarySample:
        return BoundarySample(self.points[i], self.normals[i], tuple(int(a) for a in self.anchors[i]))

    def __iter__(self) -> Iterator[BoundarySample]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, idx) -> "BoundarySamples":
        return BoundarySamples(self.points[idx], self.normals[idx], self.anchors[idx], self.weights[idx])

    @classmethod
    def empty(cls, ndim: int) -> "BoundarySamples":
        return cls(np.zeros((0, ndim)), np.zeros((0, ndim)), np.zeros((0, ndim), dtype=np.int64), np.zeros(0))


def make_shape(grid: Grid, phi_init, metadata: dict | None = None) -> LevelSetShape:
    phi = np.array(phi_init, dtype=np.float64)
    if phi.shape != grid.dims:
        raise ValueError(f"field shape {phi.shape} does not match grid dims {grid.dims}")
    if not np.all(np.isfinite(phi)):
        raise ValueError("level-set field contains non-finite values")
    degenerate = not (np.any(phi < 0) and np.any(phi > 0))
    phi.setflags(write=False)
    return LevelSetShape(grid, phi, degenerate, dict(metadata or {}))


def _require(shape: LevelSetShape):
    if shape.degenerate:
        raise DegenerateShapeError("shape is degenerate (phi has a single sign)")


# -- smoothed indicator functions (cosine profile) --------------------------------

def heaviside(x, eps):
    x = np.asarray(x, dtype=np.float64)
    out = 0.5 * (1.0 + x / eps + np.sin(np.pi * x / eps) / np.pi)
    return np.where(x <= -eps, 0.0, np.where(x >= eps, 1.0, out))


def delta(x, eps):
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < eps, 0.5 / eps * (1.0 + np.cos(np.pi * x / eps)), 0.0)


def indicator(phi, eps):
    """Smoothed indicator of ``{phi < 0}``."""
    return 1.0 - heaviside(phi, eps)


def _eps(shape, width):
    return SMOOTHING_CELLS * shape.grid.h if width is None else float(width)


def volume(shape: LevelSetShape, smoothing_width: float | None = None) -> float:
    _require(shape)
    eps = _eps(shape, smoothing_width)
    return float(np.sum(shape.grid.weights() * indicator(shape.phi, eps)))


def gradient(field_, h):
    """Centered differences (one-sided at the border) along every axis."""
    return np.gradient(field_, h, edge_order=1) if field_.ndim > 1 else [np.gradient(field_, h)]


def perimeter(shape: LevelSetShape, smoothing_width: float | None = None) -> float:
    _require(shape)
    eps = _eps(shape, smoothing_width)
    g = gradient(shape.phi, shape.grid.h)
    norm = np.sqrt(sum(gi * gi for gi in g))
    return float(np.sum(shape.grid.weights() * delta(shape.phi, eps) * norm))


def boundary_points(shape: LevelSetShape) -> BoundarySamples:
    """One sample per sign-changing grid edge, located by linear interpolation."""
    grid = shape.grid
    if shape.degenerate:
        warnings.warn("boundary_points on a degenerate shape: no boundary", stacklevel=2)
        return BoundarySamples.empty(grid.ndim)
    phi = shape.phi
    g = np.stack(gradient(phi, grid.h), axis=-1)
    neg = phi < 0
    pts, nrm, anc = [], [], []
    for ax in range(grid.ndim):
        lo = [slice(None)] * grid.ndim
        hi = [slice(None)] * grid.ndim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        cut = neg[lo] != neg[hi]
        idx = np.argwhere(cut)
        if len(idx) == 0:
            continue
        pa = phi[lo][cut]
        pb = phi[hi][cut]
        theta = pa / (pa - pb)
        p = grid.nodes(idx)
        p[:, ax] += theta * grid.h
        ga = g[lo][cut]
        gb = g[hi][cut]
        n = (1.0 - theta)[:, None] * ga + theta[:, None] * gb
        pts.append(p)
        nrm.append(n)
        anc.append(idx)
    if not pts:
        return BoundarySamples.empty(grid.ndim)
    points = np.concatenate(pts)
    normals = np.concatenate(nrm)
    normals = normals / np.linalg.norm(normals, axis=1)[:, None]
    anchors = np.concatenate(anc).astype(np.int64)
    weights = grid.h ** (grid.ndim - 1) / np.abs(normals).sum(axis=1)
    return BoundarySamples(points, normals, anchors, weights)


# -- reinitialization -------------------------------------------------------------

def _interface_seeds(phi, h):
    """Edge-interpolated distances at nodes touching a sign change."""
    neg = phi < 0
    seed = np.full(phi.shape, np.inf)
    seed[phi == 0] = 0.0
    for ax in range(phi.ndim):
        lo = [slice(None)] * phi.ndim
        hi = [slice(None)] * phi.ndim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        cut = neg[lo] != neg[hi]
        pa, pb = phi[lo], phi[hi]
        with np.errstate(divide="ignore", invalid="ignore"):
            da = np.where(cut, np.abs(pa) / np.abs(pa - pb) * h, np.inf)
            db = np.where(cut, np.abs(pb) / np.abs(pa - pb) * h, np.inf)
        seed[lo] = np.minimum(seed[lo], da)
        seed[hi] = np.minimum(seed[hi], db)
    return seed


def closest_points(phi, grid: Grid, x0, iters: int = 50):
    """Project points onto the zero set of the cubic interpolant of ``phi``.

    Alternates a Newton step onto the zero set with a correction that makes
    ``x0 - x`` parallel to the gradient. Returns (points, converged mask).
    """
    h = grid.h
    x = np.array(x0, dtype=np.float64)
    done = np.zeros(len(x), dtype=bool)
    active = np.arange(len(x))
    for _ in range(iters):
        if len(active) == 0:
            break
        xa = x[active]
        p, gp = _interp.cubic(phi, grid.origin, h, xa, grad=True)
        gn2 = np.sum(gp * gp, axis=1)
        gn2 = np.where(gn2 > 0, gn2, np.inf)
        d1 = -(p / gn2)[:, None] * gp
        v = x0[active] - xa
        d2 = v - (np.sum(v * gp, axis=1) / gn2)[:, None] * gp
        step = d1 + d2
        sn = np.linalg.norm(step, axis=1)
        big = sn > 2.0 * h
        step[big] *= (2.0 * h / sn[big])[:, None]
        x[active] = xa + step
        fin = (np.linalg.norm(d1, axis=1) + np.linalg.norm(d2, axis=1)) < 1e-11 * h
        done[active[fin]] = True
        active = active[~fin]
    return x, done


def reinitialize(shape: LevelSetShape, band_cells: float = 8.0) -> LevelSetShape:
    """Replace phi by an approximate signed distance with the same zero set.

    Nodes within ``band_cells`` cells of the interface get their distance from a
    closest-point projection onto the cubic interpolant of phi; the rest of the
    grid is filled by fast marching from that band.
    """
    _require(shape)
    grid, phi, h = shape.grid, shape.phi, shape.grid.h
    seed = _interface_seeds(phi, h)
    seeds = np.isfinite(seed)
    crude = fast_march(np.where(seeds, seed, 0.0), seeds, h)

    band = crude < band_cells * h
    idx = np.argwhere(band)
    x0 = grid.nodes(idx)
    xc, ok = closest_points(phi, grid, x0)
    dcp = np.linalg.norm(xc - x0, axis=1)
    dcrude = crude[band]
    ok &= np.abs(dcp - dcrude) <= h
    accepted = np.zeros(phi.shape, dtype=bool)
    accepted[tuple(idx[ok].T)] = True
    values = np.zeros(phi.shape)
    values[tuple(idx[ok].T)] = dcp[ok]
    fallback = seeds & ~accepted
    values[fallback] = seed[fallback]
    dist = fast_march(values, accepted | fallback, h)
    new_phi = np.where(phi < 0, -dist, dist)
    new_phi[phi == 0] = 0.0
    meta = dict(shape.metadata)
    meta["reinit_fallback_nodes"] = int(fallback.sum())
    return make_shape(grid, new_phi, meta)


# -- motion -------------------------------------------------------------------------

def _one_sided(phi, h, ax):
    pad = [(0, 0)] * phi.ndim
    pad[ax] = (1, 1)
    ext = np.pad(phi, pad, mode="reflect", reflect_type="odd")
    sl = lambda a, b: tuple(slice(a, b) if i == ax else slice(None) for i in range(phi.ndim))
    dm = (ext[sl(1, -1)] - ext[sl(0, -2)]) / h
    dp = (ext[sl(2, None)] - ext[sl(1, -1)]) / h
    return dm, dp


def advect(shape: LevelSetShape, normal_velocity, dt: float) -> LevelSetShape:
    """One first-order Godunov step of ``phi_t + V |grad phi| = 0``."""
    grid = shape.grid
    v = np.asarray(normal_velocity, dtype=np.float64)
    if v.ndim == 0:
        v = np.full(grid.dims, float(v))
    if v.shape != grid.dims:
        raise ValueError("velocity field does not match grid")
    vmax = float(np.max(np.abs(v))) if v.size else 0.0
    if dt < 0 or dt * vmax > 0.5 * grid.h * (1 + 1e-12):
        raise CFLError(f"dt*max|V| = {dt * vmax:.3g} exceeds 0.5h = {0.5 * grid.h:.3g}")
    if vmax == 0.0:
        return make_shape(grid, shape.phi, shape.metadata)
    gp = np.zeros(grid.dims)
    gm = np.zeros(grid.dims)
    for ax in range(grid.ndim):
        dm, dp = _one_sided(shape.phi, grid.h, ax)
        gp += np.maximum(dm, 0.0) ** 2 + np.minimum(dp, 0.0) ** 2
        gm += np.minimum(dm, 0.0) ** 2 + np.maximum(dp, 0.0) ** 2
    phi = shape.phi - dt * (np.maximum(v, 0.0) * np.sqrt(gp) + np.minimum(v, 0.0) * np.sqrt(gm))
    return make_shape(grid, phi, shape.metadata)


# -- local measures -----------------------------------------------------------------

def ball_clip_volume(shape: LevelSetShape, center, r: float, smoothing_width: float | None = None) -> float:
    """Smoothed measure of ``B_r(center) ∩ {phi < 0}``."""
    grid = shape.grid
    if r < 2 * grid.h:
        raise ValueError(f"radius {r} below 2h")
    if not grid.contains_ball(center, r):
        raise ValueError("ball exits the grid")
    eps = _eps(shape, smoothing_width)
    sl = grid.box_slices(center, r + eps)
    mesh = _sub_mesh(grid, sl)
    dist = np.sqrt(sum((m - c) ** 2 for m, c in zip(mesh, center)))
    wb = grid.weights(sl) * indicator(dist - r, eps)
    # normalizing by the discrete ball mass removes the O(eps^2) curvature bias
    # of the smoothed ball, so a ball deep inside gets exactly |B_r|
    return float(np.sum(wb * indicator(shape.phi[sl], eps)) * ball_measure(r, grid.ndim) / np.sum(wb))


def _sub_mesh(grid: Grid, sl):
    return np.meshgrid(*[grid.axis(a)[sl[a]] for a in range(grid.ndim)], indexing="ij")


def tube_volume(shape: LevelSetShape, r: float, smoothing_width: float | None = None) -> float:
    """Smoothed measure of ``{|phi| < r}`` (phi should be a signed distance)."""
    if r < 2 * shape.grid.h:
        raise ValueError(f"radius {r} below 2h")
    eps = _eps(shape, smoothing_width)
    return float(np.sum(shape.grid.weights() * indicator(np.abs(shape.phi) - r, eps)))


def ball_measure(r: float, ndim: int) -> float:
    return math.pi ** (ndim / 2) / math.gamma(ndim / 2 + 1) * r ** ndim


# -- primitives and resampling ------------------------------------------------------

def disk_phi(grid: Grid, center, r) -> np.ndarray:
    mesh = grid.mesh()
    return np.sqrt(sum((m - c) ** 2 for m, c in zip(mesh, center))) - r


def box_phi(grid: Grid, center, side) -> np.ndarray:
    """Exact Euclidean signed distance to an axis-aligned cube of edge ``side``."""
    mesh = grid.mesh()
    q = [np.abs(m - c) - 0.5 * side for m, c in zip(mesh, center)]
    outside = np.sqrt(sum(np.maximum(qi, 0.0) ** 2 for qi in q))
    inside = np.minimum(np.maximum.reduce(q), 0.0)
    return outside + inside


def maxnorm_box_phi(grid: Grid, center, side) -> np.ndarray:
    mesh = grid.mesh()
    return np.maximum.reduce([np.abs(m - c) for m, c in zip(mesh, center)]) - 0.5 * side


def union_phi(*fields) -> np.ndarray:
    return np.minimum.reduce(fields)


def resample(shape: LevelSetShape, grid: Grid) -> LevelSetShape:
    """Transfer a shape onto another grid (cubic interpolation, then reinitialize)."""
    pts = np.stack([m.ravel() for m in grid.mesh()], axis=1)
    lo, hi = np.asarray(shape.grid.origin), np.asarray(shape.grid.upper)
    pts_c = np.clip(pts, lo, hi)
    vals = _interp.cubic(shape.phi, shape.grid.origin, shape.grid.h, pts_c)
    vals += np.linalg.norm(pts - pts_c, axis=1)
    return reinitialize(make_shape(grid, vals.reshape(grid.dims), shape.metadata))
