"""Dirichlet Laplacian on a level-set domain and its lowest eigenpairs.

The operator uses the symmetric cut-cell treatment of the Dirichlet condition:
a neighbour outside the domain is replaced by the boundary point on the grid
edge (distance ``theta*h`` found from phi), and the ghost value obtained by
linear extrapolation through ``u = 0`` there only modifies the diagonal
(``+1/(theta h^2)``).  The matrix therefore stays symmetric positive definite.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage, special

from . import _interp
from .grid_geometry import Grid, LevelSetShape, BoundarySamples, boundary_points

logger = logging.getLogger(__name__)

MIN_INTERIOR = 50
THETA_MIN = 1e-3


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (achieved residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class DirichletOperator:
    grid: Grid
    interior_index: np.ndarray  # grid-shaped, row number or -1
    nodes: np.ndarray  # (rows, ndim) grid indices of the unknowns
    matrix: sp.csr_matrix
    boundary_correction: np.ndarray  # (rows, 2*ndim) cut fractions, 1 where no cut
    metadata: dict = field(default_factory=dict)

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    def embed(self, vec) -> np.ndarray:
        """Zero-extend a vector of unknowns to a grid field."""
        out = np.zeros(self.grid.dims)
        out[tuple(self.nodes.T)] = vec
        return out


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # (N, *dims), zero outside the domain
    residuals: np.ndarray
    grid: Grid | None = None

    def __post_init__(self):
        for a in (self.eigenvalues, self.eigenfunctions, self.residuals):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


@dataclass(frozen=True)
class BoundaryTrace:
    samples: BoundarySamples
    normal_derivatives: np.ndarray  # (N, m)


def assemble(shape: LevelSetShape) -> DirichletOperator:
    """Symmetric cut-cell Dirichlet Laplacian on the nodes with ``phi < 0``.

    An arm that crosses the interface at fraction ``theta`` of the spacing adds
    ``1/(theta h^2)`` to the diagonal (boundary value zero at the crossing);
    other arms use the five/seven-point stencil.  The matrix stays symmetric
    positive definite, so the spectrum is real and variational.
    """
    if shape.degenerate:
        raise ValueError("cannot assemble on a degenerate shape")
    grid, phi, h = shape.grid, shape.phi, shape.grid.h
    ndim = grid.ndim
    inside = phi < 0
    border = np.zeros(grid.dims, dtype=bool)
    for ax in range(ndim):
        sl = [slice(None)] * ndim
        sl[ax] = 0
        border[tuple(sl)] = True
        sl[ax] = -1
        border[tuple(sl)] = True
    touches = bool(np.any(inside & border))
    unknown = inside & ~border
    nodes = np.argwhere(unknown)
    rows = len(nodes)
    if rows < MIN_INTERIOR:
        raise ValueError(f"only {rows} interior nodes, need at least {MIN_INTERIOR}")
    index = np.full(grid.dims, -1, dtype=np.int64)
    index[tuple(nodes.T)] = np.arange(rows)

    inv_h2 = 1.0 / (h * h)
    diag = np.zeros(rows)
    theta_all = np.ones((rows, 2 * ndim))
    ri, ci = [], []
    phi_i = phi[tuple(nodes.T)]
    for ax in range(ndim):
        for side, step in enumerate((-1, 1)):
            nb = nodes.copy()
            nb[:, ax] += step
            j = index[tuple(nb.T)]
            is_unknown = j >= 0
            diag[is_unknown] += inv_h2
            ri.append(np.flatnonzero(is_unknown))
            ci.append(j[is_unknown])
            cut = ~is_unknown
            phi_j = phi[tuple(nb[cut].T)]
            # neighbour on the box border but inside phi<0: boundary sits at the node
            theta = np.where(phi_j < 0, 1.0, phi_i[cut] / (phi_i[cut] - phi_j))
            theta = np.clip(theta, THETA_MIN, 1.0)
            diag[cut] += inv_h2 / theta
            theta_all[cut, 2 * ax + side] = theta
    ri = np.concatenate(ri)
    ci = np.concatenate(ci)
    data = np.full(len(ri), -inv_h2)
    off = sp.csr_matrix((data, (ri, ci)), shape=(rows, rows))
    mat = (off + sp.diags(diag)).tocsr()
    mat.sort_indices()

    labels, ncomp = ndimage.label(unknown)
    meta = {"components": int(ncomp), "touches_grid_box": touches}
    if touches:
        logger.warning("domain touches the grid box; box faces act as Dirichlet walls")
    return DirichletOperator(grid, index, nodes, mat, theta_all, meta)


def lowest_eigenpairs(op: DirichletOperator, N: int, tol: float = 1e-8, seed: int = 0,
                      max_refine: int = 20) -> Spectrum:
    """Lowest ``N`` eigenpairs by shift-invert Lanczos about zero.

    Eigenvectors are orthonormal in the grid L2 inner product and extended by
    zero; each is signed so that its integral is nonnegative (largest entry
    positive when the integral vanishes).
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    if N >= op.rows / 4:
        raise ValueError(f"N={N} too large for {op.rows} unknowns")
    A = op.matrix.tocsc()
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
    inv = spla.LinearOperator(A.shape, matvec=lu.solve, dtype=np.float64)
    rng = np.random.default_rng(seed)
    v0 = rng.random(op.rows) + 0.5
    ncv = min(op.rows - 1, max(2 * N + 1, 20))
    mu, vecs = spla.eigsh(inv, k=N, which="LM", v0=v0, ncv=ncv, tol=tol * 1e-3)
    lam = 1.0 / mu
    order = np.argsort(lam)
    lam, vecs = lam[order], vecs[:, order]

    def residual(lam, vecs):
        r = A @ vecs - vecs * lam
        return np.linalg.norm(r, axis=0) / (np.abs(lam) * np.linalg.norm(vecs, axis=0))

    res = residual(lam, vecs)
    it = 0
    while np.any(res > tol) and it < max_refine:
        # block inverse iteration + Rayleigh-Ritz
        vecs = np.linalg.qr(lu.solve(vecs))[0]
        H = vecs.T @ (A @ vecs)
        lam, Q = np.linalg.eigh(0.5 * (H + H.T))
        vecs = vecs @ Q
        res = residual(lam, vecs)
        it += 1
    if np.any(res > tol):
        raise ConvergenceError("eigensolver did not reach tolerance", float(res.max()))

    cell = op.grid.h ** op.grid.ndim
    vecs = vecs / math.sqrt(cell)
    fields = np.empty((N,) + op.grid.dims)
    for k in range(N):
        v = vecs[:, k]
        s = v.sum() * cell
        if abs(s) < 1e-8:
            s = v[np.argmax(np.abs(v))]
        if s < 0:
            v = -v
        fields[k] = op.embed(v)
    return Spectrum(lam.copy(), fields, res.copy(), op.grid)


def solve(shape: LevelSetShape, N: int, tol: float = 1e-8, seed: int = 0) -> Spectrum:
    return lowest_eigenpairs(assemble(shape), N, tol=tol, seed=seed)


def extend_linear(u: np.ndarray, phi: np.ndarray, h: float, width: int = 2) -> np.ndarray:
    """Continue ``u`` across ``{phi = 0}`` as a linear profile in phi.

    Outside nodes within ``width`` cells get ``phi * mean(u/phi)``, the mean taken
    over inside nodes at least ``h/2`` deep in the surrounding block. With phi a
    signed distance this continues the boundary slope, so interpolation near the
    boundary does not see the kink of the zero extension.
    """
    deep = phi <= -0.5 * h
    ratio = np.where(deep, u / np.where(deep, phi, 1.0), 0.0)
    size = 2 * width + 1
    num = ndimage.uniform_filter(ratio, size=size, mode="constant")
    cnt = ndimage.uniform_filter(deep.astype(np.float64), size=size, mode="constant")
    out = np.array(u, dtype=np.float64)
    fill = (phi >= 0) & (cnt > 0.5 / size ** phi.ndim)
    out[fill] = phi[fill] * num[fill] / cnt[fill]
    return out


def normal_derivative(u: np.ndarray, shape: LevelSetShape, samples: BoundarySamples,
                      depths=(1.0, 2.0, 3.0)) -> np.ndarray:
    """Outward normal derivative of ``u`` at boundary samples.

    ``u`` is sampled at ``point - t*h*normal`` and the slope of the line
    through the origin fitted to those samples is returned with outward sign.
    """
    grid = shape.grid
    h = grid.h
    if len(samples) == 0:
        return np.zeros(0)
    ext = extend_linear(u, shape.phi, h)
    t = np.asarray(depths, dtype=np.float64) * h
    lo, hi = np.asarray(grid.origin), np.asarray(grid.upper)
    vals = []
    for ti in t:
        q = samples.points - ti * samples.normals
        if np.any(q < lo) or np.any(q > hi):
            raise ValueError("boundary sample too close to the grid border")
        vals.append(_interp.linear(ext, grid.origin, h, q))
    vals = np.stack(vals)
    slope = (t @ vals) / np.dot(t, t)
    return -slope


def boundary_trace(spectrum: Spectrum, shape: LevelSetShape, samples: BoundarySamples | None = None) -> BoundaryTrace:
    if samples is None:
        samples = boundary_points(shape)
    dn = np.stack([normal_derivative(u, shape, samples) for u in spectrum.eigenfunctions])
    return BoundaryTrace(samples, dn)


# -- analytic oracle --------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def bessel_zero(m: int, l: int, tol: float = 1e-12) -> float:
    """l-th positive zero of J_m, bracketed on a 0.05 grid and bisected."""
    x, count = (1e-6 if m == 0 else float(m)), 0
    fx = special.jv(m, x)
    while True:
        y = x + 0.05
        fy = special.jv(m, y)
        if fx == 0.0 or fx * fy < 0:
            count += 1
            if count == l:
                a, b, fa = x, y, fx
                while b - a > tol:
                    c = 0.5 * (a + b)
                    fc = special.jv(m, c)
                    if fa * fc <= 0:
                        b = c
                    else:
                        a, fa = c, fc
                return 0.5 * (a + b)
        x, fx = y, fy


def analytic_spectrum(domain_name: str, N: int, size: float | None = None) -> list[float]:
    """Exact Dirichlet eigenvalues of a square of side ``a`` or a disk of radius ``R``.

    ``domain_name`` is ``"square"``/``"disk"`` with ``size`` given separately, or
    the compact forms ``"square(2)"``/``"disk(0.5)"``.
    """
    name = domain_name.strip().lower()
    if "(" in name:
        name, arg = name.rstrip(")").split("(", 1)
        size = float(arg)
    if size is None:
        size = 1.0
    if N > 20:
        raise ValueError("analytic spectrum limited to N <= 20")
    if name == "square":
        vals = sorted(math.pi ** 2 * (m * m + n * n) / size ** 2 for m in range(1, 12) for n in range(1, 12))
        return vals[:N]
    if name == "disk":
        vals = []
        for m in range(0, 16):
            for l in range(1, 8):
                j = bessel_zero(m, l)
                vals.extend([(j / size) ** 2] * (1 if m == 0 else 2))
        return sorted(vals)[:N]
    raise ValueError(f"unsupported domain {domain_name!r}")
