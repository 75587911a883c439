"""Discrete sections of the tangent bundle over a uniform periodic grid.

A Section stores vector values on the uniform grid of T^d and evaluates
off-grid by periodic multilinear interpolation.  Norms are taken over grid
nodes.  The center/hyperbolic decomposition of a section goes through a
Splitting's projections; the split/combine pair and the ball-membership
predicates here are the solver's working vocabulary.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import backends

_MAGIC = b"QCS1"


def default_resolution(dim):
    """Grid defaults: 256 per axis on T^2, 64 per axis on T^3."""
    return (256, 256) if dim == 2 else (64,) * dim


def grid_nodes(resolution):
    """Row-major array of grid node coordinates, shape (prod(res), len(res))."""
    axes = [np.arange(r, dtype=np.float64) / r for r in resolution]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


@dataclass(frozen=True)
class Section:
    """Grid-sampled section; values has shape resolution + (ncomp,)."""

    resolution: tuple
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape[:-1] != tuple(self.resolution):
            raise ValueError("values shape does not match resolution")
        if not np.all(np.isfinite(vals)):
            raise ValueError("section values must be finite")
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        object.__setattr__(self, "values", vals)

    @property
    def dim(self):
        return len(self.resolution)

    @property
    def ncomp(self):
        return self.values.shape[-1]

    @property
    def flat(self):
        """(n_nodes, ncomp) row-major view of the values."""
        return self.values.reshape(-1, self.values.shape[-1])

    def eval(self, pts):
        """Interpolate at wrapped points (..., d) -> (..., ncomp)."""
        pts = np.asarray(pts, dtype=np.float64)
        lead = pts.shape[:-1]
        out = backends.interp_eval(self.values, pts.reshape(-1, self.dim))
        return out.reshape(lead + (self.ncomp,))

    def __add__(self, other):
        self._check_compatible(other)
        return Section(self.resolution, self.values + other.values)

    def __sub__(self, other):
        self._check_compatible(other)
        return Section(self.resolution, self.values - other.values)

    def __mul__(self, scalar):
        return Section(self.resolution, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return Section(self.resolution, -self.values)

    def _check_compatible(self, other):
        if not isinstance(other, Section):
            raise TypeError("expected a Section")
        if other.resolution != self.resolution or other.ncomp != self.ncomp:
            raise ValueError("section layouts differ")


@dataclass(frozen=True)
class SplitSection:
    """Decomposition of a section into center part u and hyperbolic part v."""

    u_part: Section
    v_part: Section


def sample_section(resolution, generator, ncomp=None):
    """Fill a Section by evaluating a vectorized generator at grid nodes.

    generator maps (n, d) wrapped points to (n, k) values; k defaults to d.
    """
    resolution = tuple(int(r) for r in resolution)
    nodes = grid_nodes(resolution)
    vals = np.asarray(generator(nodes), dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[:, None]
    k = vals.shape[-1] if ncomp is None else int(ncomp)
    return Section(resolution, vals.reshape(resolution + (k,)))


def zeros_section(resolution, ncomp):
    resolution = tuple(int(r) for r in resolution)
    return Section(resolution, np.zeros(resolution + (int(ncomp),)))


def constant_section(resolution, vector):
    resolution = tuple(int(r) for r in resolution)
    vector = np.atleast_1d(np.asarray(vector, dtype=np.float64))
    vals = np.broadcast_to(vector, resolution + vector.shape).copy()
    return Section(resolution, vals)


def sup_norm(s):
    """Largest pointwise Euclidean norm over grid nodes."""
    return float(np.max(np.linalg.norm(s.flat, axis=-1))) if s.flat.size else 0.0


def split(s, S):
    """Project a section pointwise into center and hyperbolic parts."""
    nodes = grid_nodes(s.resolution)
    u_vals = S.project_values(nodes, s.flat, "c")
    v_vals = s.flat - u_vals
    shape = s.values.shape
    return SplitSection(
        Section(s.resolution, u_vals.reshape(shape)),
        Section(s.resolution, v_vals.reshape(shape)),
    )


def combine(ss):
    """Reassemble a SplitSection; inverse of split up to round-off."""
    return ss.u_part + ss.v_part


def norm1(s, S):
    """The layered norm: sup-norm of the center part plus sup-norm of the rest."""
    if S is None or S.dims[1] == 0:
        return sup_norm(s)
    parts = split(s, S)
    return sup_norm(parts.u_part) + sup_norm(parts.v_part)


def in_ball(s, eps):
    """Membership in the sup-norm ball of radius eps."""
    return sup_norm(s) <= eps


def in_ball_us(s, S, eps, tol=1e-10):
    """Membership in the radius-eps ball of the hyperbolic subspace."""
    parts = split(s, S)
    return sup_norm(parts.u_part) <= tol and sup_norm(s) <= eps


def in_ball1(s, S, eps):
    """Membership in the layered-norm ball of radius eps."""
    return norm1(s, S) <= eps


def save_section(s, path):
    """Write a section to .json or to the package's flat binary format."""
    path = str(path)
    if path.endswith(".json"):
        payload = {
            "resolution": list(s.resolution),
            "ncomp": s.ncomp,
            "values": s.flat.reshape(-1).tolist(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)
    else:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<II", s.dim, s.ncomp))
            fh.write(struct.pack(f"<{s.dim}I", *s.resolution))
            fh.write(s.values.astype("<f8").tobytes())


def load_section(path):
    path = str(path)
    if path.endswith(".json"):
        with open(path) as fh:
            payload = json.load(fh)
        resolution = tuple(payload["resolution"])
        k = int(payload["ncomp"])
        vals = np.asarray(payload["values"], dtype=np.float64)
        return Section(resolution, vals.reshape(resolution + (k,)))
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError("not a section file")
        dim, k = struct.unpack("<II", fh.read(8))
        resolution = struct.unpack(f"<{dim}I", fh.read(4 * dim))
        count = int(np.prod(resolution)) * k
        vals = np.frombuffer(fh.read(8 * count), dtype="<f8").copy()
    return Section(tuple(resolution), vals.reshape(tuple(resolution) + (k,)))
