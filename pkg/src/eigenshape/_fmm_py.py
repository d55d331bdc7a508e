"""Pure-Python fast-marching kernel (fallback for ``_fmm``).

Mirrors the compiled kernel step for step, including heap tie-breaking on the
flat node index, so both backends give identical distances.
"""

import heapq
import math

import numpy as np


def _solve(a, h):
    d = a[0] + h
    if len(a) == 1 or d <= a[1]:
        return d
    s = a[0] + a[1]
    d = 0.5 * (s + math.sqrt(2.0 * h * h - (a[0] - a[1]) * (a[0] - a[1])))
    if len(a) == 2 or d <= a[2]:
        return d
    s = a[0] + a[1] + a[2]
    q = a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
    disc = max(s * s - 3.0 * (q - h * h), 0.0)
    return (s + math.sqrt(disc)) / 3.0


def fast_march(dist, known, dims, h, max_dist=math.inf):
    """Extend unsigned distances from the ``known`` nodes over a C-ordered grid.

    ``dist`` is updated in place; unreached nodes stay at +inf. ``known`` is
    used as scratch state and is overwritten.
    """
    dims = [int(d) for d in dims]
    ndim = len(dims)
    strides = [1] * ndim
    for ax in range(ndim - 2, -1, -1):
        strides[ax] = strides[ax + 1] * dims[ax + 1]

    seeds = np.flatnonzero(known)
    dist[known == 0] = math.inf
    known[seeds] = 2
    heap = [(float(dist[i]), int(i)) for i in seeds]
    heapq.heapify(heap)
    dl = dist.tolist()
    kl = known.tolist()

    def coords(i):
        out = []
        for s in strides:
            c, i = divmod(i, s)
            out.append(c)
        return out

    while heap:
        v, i = heapq.heappop(heap)
        state = kl[i]
        if state == 1 or v > dl[i]:
            continue
        if state == 2 and v != dl[i]:
            continue
        kl[i] = 1
        if v > max_dist:
            continue
        ci = coords(i)
        for ax in range(ndim):
            for side in (0, 1):
                if side == 0:
                    if ci[ax] == 0:
                        continue
                    j = i - strides[ax]
                else:
                    if ci[ax] == dims[ax] - 1:
                        continue
                    j = i + strides[ax]
                if kl[j] != 0:
                    continue
                cj = coords(j)
                a = []
                for x in range(ndim):
                    m = math.inf
                    if cj[x] > 0:
                        nb = j - strides[x]
                        if kl[nb] == 1 and dl[nb] < m:
                            m = dl[nb]
                    if cj[x] < dims[x] - 1:
                        nb = j + strides[x]
                        if kl[nb] == 1 and dl[nb] < m:
                            m = dl[nb]
                    if m < math.inf:
                        a.append(m)
                a.sort()
                d = _solve(a, h)
                if d < dl[j]:
                    dl[j] = d
                    heapq.heappush(heap, (d, j))
    dist[:] = dl
    known[:] = kl
    return dist
