"""Pure NumPy fallback kernels for grid interpolation and separated sets.

Same contract as the compiled module `_gridc`.  Points are assumed wrapped
into [0,1); a defensive mod keeps stray 1.0 values safe.  Grid values are
periodic in every axis with the node spacing 1/res.
"""

import numpy as np


def interp_weights(resolution, pts):
    """Corner indices and weights of periodic multilinear interpolation.

    Parameters
    ----------
    resolution : tuple of ints, grid nodes per axis.
    pts : (n, d) array of wrapped coordinates.

    Returns
    -------
    idx : (n, 2**d) int32 flat indices into the row-major grid.
    wts : (n, 2**d) float64 weights, each row summing to 1.
    """
    pts = np.asarray(pts, dtype=np.float64)
    n, d = pts.shape
    if len(resolution) != d:
        raise ValueError("resolution/point dimension mismatch")
    strides = np.ones(d, dtype=np.int64)
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * resolution[a + 1]
    lo = np.empty((n, d), dtype=np.int64)
    fr = np.empty((n, d))
    for a in range(d):
        t = np.mod(pts[:, a], 1.0) * resolution[a]
        i0 = np.floor(t).astype(np.int64)
        i0 = np.mod(i0, resolution[a])
        lo[:, a] = i0
        fr[:, a] = t - np.floor(t)
    ncorner = 1 << d
    idx = np.zeros((n, ncorner), dtype=np.int64)
    wts = np.ones((n, ncorner))
    for corner in range(ncorner):
        flat = np.zeros(n, dtype=np.int64)
        w = np.ones(n)
        for a in range(d):
            hi = (corner >> a) & 1
            ia = lo[:, a] + hi
            ia = np.where(ia == resolution[a], 0, ia)
            flat += ia * strides[a]
            w = w * (fr[:, a] if hi else 1.0 - fr[:, a])
        idx[:, corner] = flat
        wts[:, corner] = w
    return idx.astype(np.int32), wts


def interp_apply(flat_values, idx, wts):
    """Blend precomputed corners: flat_values (m, k), idx/wts (n, 2**d)."""
    gathered = flat_values[idx]
    return np.einsum("ncK,nc->nK", gathered, wts)


def interp_eval(values, pts):
    """Periodic multilinear interpolation of values (res..., k) at pts (n, d)."""
    values = np.asarray(values, dtype=np.float64)
    resolution = values.shape[:-1]
    k = values.shape[-1]
    idx, wts = interp_weights(resolution, pts)
    return interp_apply(values.reshape(-1, k), idx, wts)


def greedy_separated_count(orbits, eps):
    """Size of a greedily built (n, eps)-separated subset of the orbit cloud.

    orbits : (N, K, d) array, orbit i sampled at K successive times.
    Two orbits are separated when some time step puts them at flat-torus
    distance > eps.  Candidates are scanned in order; a candidate within
    eps of a kept orbit (at every step) is discarded.
    """
    orbits = np.asarray(orbits, dtype=np.float64)
    n = orbits.shape[0]
    if n == 0:
        return 0
    eps_sq = eps * eps
    kept = np.empty_like(orbits)
    kept[0] = orbits[0]
    m = 1
    for i in range(1, n):
        delta = orbits[i][None, :, :] - kept[:m]
        delta -= np.round(delta)
        dist_sq = np.einsum("mkd,mkd->mk", delta, delta)
        if bool(np.all(np.max(dist_sq, axis=1) > eps_sq)):
            kept[m] = orbits[i]
            m += 1
    return m
