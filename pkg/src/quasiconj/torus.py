"""Flat-torus geometry: wrapping, shortest displacements, exp/log charts.

Coordinates live on T^d = R^d / Z^d with every coordinate in [0, 1).  The
heavy numerical code works on bare float arrays whose last axis indexes
coordinates; a thin typed layer (TorusPoint, TangentVector) carries base
points for call sites where that bookkeeping matters.

The geometry classes at the bottom bundle the chart operations so that the
operator layer can treat the plain d-torus and the mapping torus of an
integer matrix (vertical wrap composed with the matrix) uniformly.
"""

from dataclasses import dataclass

import numpy as np

INJECTIVITY_RADIUS = 0.5


class InjectivityRadiusError(ValueError):
    """Raised when a chart operation leaves the injectivity radius."""


def wrap_coords(raw):
    """Reduce coordinates mod 1 into [0, 1).

    Parameters
    ----------
    raw : array_like, shape (..., d)
        Arbitrary finite real coordinates.

    Returns
    -------
    ndarray with every entry in [0, 1).
    """
    a = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("coordinates must be finite")
    out = np.mod(a, 1.0)
    # np.mod(-1e-17, 1.0) rounds to 1.0; keep the half-open invariant
    return np.where(out >= 1.0, out - 1.0, out)


def min_image(start, end):
    """Shortest displacement from start to end, componentwise in [-1/2, 1/2]."""
    d = np.asarray(end, dtype=np.float64) - np.asarray(start, dtype=np.float64)
    return d - np.round(d)


def dist_coords(a, b):
    """Flat-torus distance between coordinate arrays, over the last axis."""
    return np.linalg.norm(min_image(a, b), axis=-1)


def exp_coords(x, v):
    """Chart exponential: translate x by v and wrap.

    Requires ||v|| < 1/2 pointwise so the result determines its log.
    """
    v = np.asarray(v, dtype=np.float64)
    nrm = np.linalg.norm(v, axis=-1)
    worst = float(np.max(nrm)) if nrm.size else 0.0
    if worst >= INJECTIVITY_RADIUS:
        raise InjectivityRadiusError(
            f"tangent norm {worst:.6g} >= {INJECTIVITY_RADIUS}"
        )
    return wrap_coords(np.asarray(x, dtype=np.float64) + v)


def log_coords(x, y):
    """Chart logarithm: the unique shortest displacement from x to y.

    Requires dist(x, y) < 1/2 so the shortest representative is unique.
    """
    delta = min_image(x, y)
    nrm = np.linalg.norm(delta, axis=-1)
    worst = float(np.max(nrm)) if nrm.size else 0.0
    if worst >= INJECTIVITY_RADIUS:
        raise InjectivityRadiusError(
            f"distance {worst:.6g} >= {INJECTIVITY_RADIUS}"
        )
    return delta


@dataclass(frozen=True)
class TorusPoint:
    """A point of T^d; coordinates are wrapped into [0, 1) on construction."""

    coords: np.ndarray

    def __post_init__(self):
        c = wrap_coords(np.atleast_1d(np.asarray(self.coords, dtype=np.float64)))
        if c.ndim != 1:
            raise ValueError("a TorusPoint holds a single coordinate vector")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def d(self):
        return self.coords.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TorusPoint):
            return NotImplemented
        return bool(np.array_equal(self.coords, other.coords))


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector with its base point retained for precondition checks."""

    base: TorusPoint
    components: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.components, dtype=np.float64))
        if v.shape != self.base.coords.shape:
            raise ValueError("component shape must match the base point")
        if not np.all(np.isfinite(v)):
            raise ValueError("components must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "components", v)

    @property
    def norm(self):
        return float(np.linalg.norm(self.components))


def wrap(raw):
    """Wrap a raw coordinate vector into a TorusPoint."""
    return TorusPoint(np.asarray(raw, dtype=np.float64))


def dist(p, q):
    """Distance between two torus points."""
    return float(dist_coords(p.coords, q.coords))


def exp_map(x, v):
    """Exponential at x: requires v based at x and ||v|| < 1/2."""
    if x != v.base:
        raise ValueError("tangent vector is not based at x")
    return TorusPoint(exp_coords(x.coords, v.components))


def exp_inv(x, y):
    """Inverse exponential: the tangent at x pointing to y, dist(x, y) < 1/2."""
    return TangentVector(x, log_coords(x.coords, y.coords))


class TorusGeometry:
    """Chart operations on the plain d-torus."""

    def __init__(self, dim):
        self.dim = int(dim)

    def normalize(self, pts):
        return wrap_coords(pts)

    def displacement(self, a, b):
        return min_image(a, b)

    def gather_transport(self, a, b):
        """Matrices re-expressing chart components at b in the chart branch
        nearest a, or None when the identification is untwisted."""
        return None

    def dist(self, a, b):
        return np.linalg.norm(self.displacement(a, b), axis=-1)

    def exp(self, x, v):
        return exp_coords(x, v)

    def log(self, x, y):
        delta = self.displacement(x, y)
        nrm = np.linalg.norm(delta, axis=-1)
        worst = float(np.max(nrm)) if nrm.size else 0.0
        if worst >= INJECTIVITY_RADIUS:
            raise InjectivityRadiusError(
                f"distance {worst:.6g} >= {INJECTIVITY_RADIUS}"
            )
        return delta


class MappingTorusGeometry(TorusGeometry):
    """Chart operations on the mapping torus of an integer 2x2 matrix.

    Points are (x1, x2, s) with the base pair on T^2 and s in [0, 1); the
    vertical wrap identifies (y, s + 1) with (B y, s).  Displacements search
    the k in {-1, 0, 1} vertical unwindings, which covers every pair closer
    than the chart size.  With B the identity this is exactly the 3-torus.
    """

    def __init__(self, base_matrix):
        super().__init__(base_matrix.shape[0] + 1)
        B = np.asarray(base_matrix, dtype=np.float64)
        Binv = np.linalg.inv(B)
        if not np.allclose(Binv, np.round(Binv), atol=1e-9):
            raise ValueError("base matrix must be invertible over the integers")
        self.base = np.round(B)
        self.base_inv = np.round(Binv)

    def normalize(self, pts):
        pts = np.array(pts, dtype=np.float64, copy=True)
        base = wrap_coords(pts[..., :-1])
        s = pts[..., -1].copy()
        for _ in range(64):
            up = s >= 1.0
            if not np.any(up):
                break
            base[up] = wrap_coords(base[up] @ self.base.T)
            s[up] -= 1.0
        for _ in range(64):
            dn = s < 0.0
            if not np.any(dn):
                break
            base[dn] = wrap_coords(base[dn] @ self.base_inv.T)
            s[dn] += 1.0
        if np.any(s >= 1.0) or np.any(s < 0.0):
            raise ValueError("vertical coordinate failed to normalize")
        out = np.concatenate([base, s[..., None]], axis=-1)
        return out

    def _displacement_lift(self, a, b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        best = None
        best_sq = None
        best_k = None
        for k in (-1, 0, 1):
            if k == 0:
                b12 = b[..., :-1]
            elif k == 1:
                b12 = wrap_coords(b[..., :-1] @ self.base_inv.T)
            else:
                b12 = wrap_coords(b[..., :-1] @ self.base.T)
            delta12 = min_image(a[..., :-1], b12)
            delta3 = (b[..., -1] + k) - a[..., -1]
            cand = np.concatenate([delta12, delta3[..., None]], axis=-1)
            sq = np.sum(cand * cand, axis=-1)
            if best is None:
                best, best_sq = cand, sq
                best_k = np.full(sq.shape, k, dtype=np.int64)
            else:
                take = sq < best_sq
                best = np.where(take[..., None], cand, best)
                best_sq = np.where(take, sq, best_sq)
                best_k = np.where(take, k, best_k)
        return best, best_k

    def displacement(self, a, b):
        return self._displacement_lift(a, b)[0]

    def gather_transport(self, a, b):
        """Holonomy of the chosen vertical unwinding: crossing the seam
        twists horizontal components by the base matrix.  Returns None
        when no sampled pair crosses."""
        _, k = self._displacement_lift(a, b)
        if not np.any(k):
            return None
        d = self.dim
        mats = np.broadcast_to(np.eye(d), k.shape + (d, d)).copy()
        for kv, blk in ((1, self.base_inv), (-1, self.base)):
            sel = k == kv
            if np.any(sel):
                mats[sel, : d - 1, : d - 1] = blk
        return mats

    def exp(self, x, v):
        v = np.asarray(v, dtype=np.float64)
        nrm = np.linalg.norm(v, axis=-1)
        worst = float(np.max(nrm)) if nrm.size else 0.0
        if worst >= INJECTIVITY_RADIUS:
            raise InjectivityRadiusError(
                f"tangent norm {worst:.6g} >= {INJECTIVITY_RADIUS}"
            )
        raw = np.asarray(x, dtype=np.float64) + v
        raw = np.concatenate(
            [wrap_coords(raw[..., :-1]), raw[..., -1:]], axis=-1
        )
        return self.normalize(raw)
