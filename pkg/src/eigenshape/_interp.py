"""Point interpolation of grid fields (tensor cubic Lagrange and multilinear)."""

import itertools

import numpy as np
from scipy import ndimage


def _cubic_weights(t):
    """Lagrange weights (and t-derivatives) for nodes 0..3 evaluated at t."""
    t0, t1, t2, t3 = t, t - 1.0, t - 2.0, t - 3.0
    w = np.stack([
        -t1 * t2 * t3 / 6.0,
        t0 * t2 * t3 / 2.0,
        -t0 * t1 * t3 / 2.0,
        t0 * t1 * t2 / 6.0,
    ])
    dw = np.stack([
        -(t2 * t3 + t1 * t3 + t1 * t2) / 6.0,
        (t2 * t3 + t0 * t3 + t0 * t2) / 2.0,
        -(t1 * t3 + t0 * t3 + t0 * t1) / 2.0,
        (t1 * t2 + t0 * t2 + t0 * t1) / 6.0,
    ])
    return w, dw


def cubic(field, origin, h, points, grad=False):
    """Tensor-product cubic Lagrange interpolation at ``points`` (m, ndim).

    The 4-node stencil is shifted inwards near the array border. Returns
    values, and gradients of shape (m, ndim) when ``grad`` is set.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    ndim = field.ndim
    base, ws, dws = [], [], []
    for ax in range(ndim):
        s = (points[:, ax] - origin[ax]) / h
        i0 = np.clip(np.floor(s).astype(np.int64) - 1, 0, field.shape[ax] - 4)
        w, dw = _cubic_weights(s - i0)
        base.append(i0)
        ws.append(w)
        dws.append(dw / h)
    val = np.zeros(len(points))
    g = np.zeros((len(points), ndim)) if grad else None
    for offs in itertools.product(range(4), repeat=ndim):
        idx = tuple(base[ax] + offs[ax] for ax in range(ndim))
        f = field[idx]
        w = np.ones(len(points))
        for ax in range(ndim):
            w = w * ws[ax][offs[ax]]
        val += w * f
        if grad:
            for a in range(ndim):
                wa = np.ones(len(points))
                for ax in range(ndim):
                    wa = wa * (dws[ax][offs[ax]] if ax == a else ws[ax][offs[ax]])
                g[:, a] += wa * f
    return (val, g) if grad else val


def linear(field, origin, h, points):
    """Multilinear interpolation at ``points`` (m, ndim); clamps outside the grid."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    coords = (points - np.asarray(origin)) / h
    return ndimage.map_coordinates(field, coords.T, order=1, mode="nearest")
