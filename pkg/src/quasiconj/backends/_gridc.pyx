# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for grid interpolation and separated-set counting.

Same contract as the fallback `_gridnp`; operation order matches it so
the two backends agree to the last bit on the interpolation weights and
on greedy counts.
"""

from libc.math cimport floor, fmod, nearbyint

import numpy as np

cimport numpy as cnp

cnp.import_array()


def interp_weights(resolution, pts):
    """Corner indices and weights of periodic multilinear interpolation."""
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t d = p.shape[1]
    if len(resolution) != d:
        raise ValueError("resolution/point dimension mismatch")
    cdef long[::1] res = np.asarray(resolution, dtype=np.int64)
    cdef long[::1] strides = np.ones(d, dtype=np.int64)
    cdef Py_ssize_t a
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * res[a + 1]
    cdef Py_ssize_t ncorner = 1 << d
    idx_arr = np.zeros((n, ncorner), dtype=np.int32)
    wts_arr = np.ones((n, ncorner), dtype=np.float64)
    cdef int[:, ::1] idx = idx_arr
    cdef double[:, ::1] wts = wts_arr
    cdef long[:, ::1] lo = np.empty((n, d), dtype=np.int64)
    cdef double[:, ::1] fr = np.empty((n, d), dtype=np.float64)
    cdef Py_ssize_t i, corner, hi
    cdef double u, t, w
    cdef long i0, ia, flat
    with nogil:
        for i in range(n):
            for a in range(d):
                u = fmod(p[i, a], 1.0)
                if u < 0.0:
                    u += 1.0
                t = u * res[a]
                i0 = <long> floor(t)
                i0 = i0 % res[a]
                if i0 < 0:
                    i0 += res[a]
                lo[i, a] = i0
                fr[i, a] = t - floor(t)
            for corner in range(ncorner):
                flat = 0
                w = 1.0
                for a in range(d):
                    hi = (corner >> a) & 1
                    ia = lo[i, a] + hi
                    if ia == res[a]:
                        ia = 0
                    flat += ia * strides[a]
                    if hi:
                        w = w * fr[i, a]
                    else:
                        w = w * (1.0 - fr[i, a])
                idx[i, corner] = <int> flat
                wts[i, corner] = w
    return idx_arr, wts_arr


def interp_apply(flat_values, idx, wts):
    """Blend precomputed corners: flat_values (m, k), idx/wts (n, 2**d)."""
    cdef double[:, ::1] v = np.ascontiguousarray(flat_values, dtype=np.float64)
    cdef int[:, ::1] ix = np.ascontiguousarray(idx, dtype=np.int32)
    cdef double[:, ::1] w = np.ascontiguousarray(wts, dtype=np.float64)
    cdef Py_ssize_t n = ix.shape[0]
    cdef Py_ssize_t ncorner = ix.shape[1]
    cdef Py_ssize_t k = v.shape[1]
    out_arr = np.zeros((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, c, j
    cdef double wc
    cdef int base
    with nogil:
        for i in range(n):
            for c in range(ncorner):
                wc = w[i, c]
                base = ix[i, c]
                for j in range(k):
                    out[i, j] += v[base, j] * wc
    return out_arr


def interp_eval(values, pts):
    """Periodic multilinear interpolation of values (res..., k) at pts."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    shp = tuple(np.shape(arr))
    # positive indices only: wraparound is off module-wide
    nd = len(shp)
    idx, wts = interp_weights(shp[: nd - 1], pts)
    return interp_apply(np.reshape(arr, (-1, shp[nd - 1])), idx, wts)


def greedy_separated_count(orbits, double eps):
    """Size of a greedily built (n, eps)-separated subset of orbit clouds.

    Early-exits both loops: per kept orbit, the time scan stops at the
    first step exceeding eps, and the candidate is discarded at the
    first kept orbit it fails to separate from.
    """
    cdef double[:, :, ::1] o = np.ascontiguousarray(orbits, dtype=np.float64)
    cdef Py_ssize_t n = o.shape[0]
    cdef Py_ssize_t K = o.shape[1]
    cdef Py_ssize_t d = o.shape[2]
    if n == 0:
        return 0
    cdef double eps_sq = eps * eps
    cdef long[::1] kept = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t m = 1
    kept[0] = 0
    cdef Py_ssize_t i, j, t, a
    cdef double s, delta
    cdef bint sep_all, sep_one
    with nogil:
        for i in range(1, n):
            sep_all = True
            for j in range(m):
                sep_one = False
                for t in range(K):
                    s = 0.0
                    for a in range(d):
                        delta = o[i, t, a] - o[kept[j], t, a]
                        delta -= nearbyint(delta)
                        s += delta * delta
                    if s > eps_sq:
                        sep_one = True
                        break
                if not sep_one:
                    sep_all = False
                    break
            if sep_all:
                kept[m] = i
                m += 1
    return m
