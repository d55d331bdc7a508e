# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fast-marching kernel.

Must produce the same node ordering and arithmetic as ``_fmm_py.fast_march``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


cdef inline bint _less(double da, long ia, double db, long ib) nogil:
    return da < db or (da == db and ia < ib)


cdef inline void _push(double* hv, long* hi, long* size, double v, long i) nogil:
    cdef long c = size[0]
    cdef long p
    size[0] += 1
    while c > 0:
        p = (c - 1) >> 1
        if _less(v, i, hv[p], hi[p]):
            hv[c] = hv[p]
            hi[c] = hi[p]
            c = p
        else:
            break
    hv[c] = v
    hi[c] = i


cdef inline void _pop(double* hv, long* hi, long* size) nogil:
    cdef long n = size[0] - 1
    cdef double v = hv[n]
    cdef long i = hi[n]
    cdef long c = 0
    cdef long ch
    size[0] = n
    if n == 0:
        return
    while True:
        ch = 2 * c + 1
        if ch >= n:
            break
        if ch + 1 < n and _less(hv[ch + 1], hi[ch + 1], hv[ch], hi[ch]):
            ch += 1
        if _less(hv[ch], hi[ch], v, i):
            hv[c] = hv[ch]
            hi[c] = hi[ch]
            c = ch
        else:
            break
    hv[c] = v
    hi[c] = i


cdef inline double _solve(double* a, int k, double h) nogil:
    # a[0..k) sorted ascending, finite
    cdef double d = a[0] + h
    cdef double s, q, disc
    if k == 1 or d <= a[1]:
        return d
    s = a[0] + a[1]
    disc = 2.0 * h * h - (a[0] - a[1]) * (a[0] - a[1])
    d = 0.5 * (s + sqrt(disc))
    if k == 2 or d <= a[2]:
        return d
    s = a[0] + a[1] + a[2]
    q = a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
    disc = s * s - 3.0 * (q - h * h)
    if disc < 0.0:
        disc = 0.0
    return (s + sqrt(disc)) / 3.0


def fast_march(double[::1] dist, unsigned char[::1] known, long[::1] dims,
               double h, double max_dist=INFINITY):
    """Extend unsigned distances from the ``known`` nodes over a C-ordered grid.

    ``dist`` is updated in place; unreached nodes stay at +inf. ``known`` is
    used as scratch state and is overwritten.
    """
    cdef int ndim = dims.shape[0]
    cdef long n = dist.shape[0]
    cdef long strides[3]
    cdef long coord[3]
    cdef double a[3]
    cdef double m, v, d
    cdef long c
    cdef long cap = n * (2 * ndim + 1) + 1
    cdef long size = 0
    cdef long i, j, nb, rem
    cdef int ax, k, x, y, side
    cdef cnp.ndarray[double, ndim=1] hv_arr = np.empty(cap, dtype=np.float64)
    cdef cnp.ndarray[long, ndim=1] hi_arr = np.empty(cap, dtype=np.int64)
    cdef double* hv = &hv_arr[0]
    cdef long* hi = &hi_arr[0]

    strides[ndim - 1] = 1
    for ax in range(ndim - 2, -1, -1):
        strides[ax] = strides[ax + 1] * dims[ax + 1]

    with nogil:
        for i in range(n):
            if known[i]:
                _push(hv, hi, &size, dist[i], i)
            else:
                dist[i] = INFINITY
        # known nodes are re-marked when popped so their neighbours get updated
        for i in range(n):
            if known[i]:
                known[i] = 2
        while size > 0:
            v = hv[0]
            i = hi[0]
            _pop(hv, hi, &size)
            if known[i] == 1 or v > dist[i]:
                continue
            if known[i] == 2 and v != dist[i]:
                continue
            known[i] = 1
            if v > max_dist:
                continue
            rem = i
            for ax in range(ndim):
                coord[ax] = rem // strides[ax]
                rem = rem - coord[ax] * strides[ax]
            for ax in range(ndim):
                for side in range(2):
                    if side == 0:
                        if coord[ax] == 0:
                            continue
                        j = i - strides[ax]
                    else:
                        if coord[ax] == dims[ax] - 1:
                            continue
                        j = i + strides[ax]
                    if known[j] != 0:
                        continue
                    # gather upwind minima per axis for node j
                    rem = j
                    k = 0
                    for x in range(ndim):
                        m = INFINITY
                        c = rem // strides[x]
                        rem = rem - c * strides[x]
                        if c > 0:
                            nb = j - strides[x]
                            if known[nb] == 1 and dist[nb] < m:
                                m = dist[nb]
                        if c < dims[x] - 1:
                            nb = j + strides[x]
                            if known[nb] == 1 and dist[nb] < m:
                                m = dist[nb]
                        if m < INFINITY:
                            y = k
                            while y > 0 and a[y - 1] > m:
                                a[y] = a[y - 1]
                                y -= 1
                            a[y] = m
                            k += 1
                    d = _solve(a, k, h)
                    if d < dist[j]:
                        dist[j] = d
                        _push(hv, hi, &size, d, j)
    return np.asarray(dist)
