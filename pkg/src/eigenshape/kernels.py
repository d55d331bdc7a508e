"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting the environment
variable ``EIGENSHAPE_PURE=1`` forces the pure-Python fallback.
"""

import logging
import math
import os

import numpy as np

logger = logging.getLogger(__name__)

if os.environ.get("EIGENSHAPE_PURE", "") not in ("", "0"):
    from . import _fmm_py as _backend
    BACKEND = "python"
else:
    try:
        from . import _fmm as _backend
        BACKEND = "compiled"
    except ImportError:  # extension not built
        from . import _fmm_py as _backend
        BACKEND = "python"
        logger.info("compiled kernels unavailable, using pure-Python fallback")


def fast_march(dist, known, h, max_dist=math.inf, backend=None):
    """Fast-marching extension of unsigned distance from seed nodes.

    Parameters
    ----------
    dist : ndarray
        Grid array; values at ``known`` nodes are the seed distances.
    known : ndarray of bool
        Seed mask, same shape as ``dist``.
    h : float
        Grid spacing.
    max_dist : float
        Nodes accepted beyond this distance do not propagate further.
    backend : {"compiled", "python"}, optional
        Override the import-time choice (used by tests and benchmarks).

    Returns
    -------
    ndarray
        New array of distances, +inf where not reached.
    """
    impl = _backend
    if backend == "python":
        from . import _fmm_py as impl
    elif backend == "compiled":
        from . import _fmm as impl
    shape = dist.shape
    d = np.ascontiguousarray(dist, dtype=np.float64).ravel().copy()
    k = np.ascontiguousarray(known, dtype=np.uint8).ravel().copy()
    dims = np.asarray(shape, dtype=np.int64)
    impl.fast_march(d, k, dims, float(h), float(max_dist))
    return d.reshape(shape)
