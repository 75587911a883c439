"""Model diffeomorphisms on flat tori and the suspension flows above them.

Every system is a MapSpec: vectorized forward/inverse/differential plus the
metadata the solver needs (center dimension, constancy of the differential,
chart geometry).  Constructors cover integer linear automorphisms, circle
extensions of a hyperbolic base (skew products), analytic perturbations
inverted by damped Newton iteration, and time-t maps of suspension flows.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fields import ScalarField, constant_scalar
from .sections import grid_nodes
from .torus import MappingTorusGeometry, TorusGeometry, wrap_coords


class MapInversionError(RuntimeError):
    """Newton iteration for a perturbed inverse failed to converge."""


@dataclass(frozen=True)
class MapSpec:
    """A torus diffeomorphism with vectorized evaluation.

    forward/inverse act on (..., d) wrapped coordinate arrays; differential
    returns (..., d, d).  is_linear means the differential is the same
    matrix everywhere (linear maps and rigid translates), in which case
    `matrix` holds it.
    """

    kind: str
    dim: int
    forward: Callable
    inverse: Callable
    differential: Callable
    center_dimension: int
    is_linear: bool
    matrix: Optional[np.ndarray] = None
    name: str = ""
    geometry: TorusGeometry = None

    def __post_init__(self):
        if self.geometry is None:
            object.__setattr__(self, "geometry", TorusGeometry(self.dim))

    def df_inverse(self, pts):
        """Differential of the inverse map at pts: inv(Df(f^{-1}(pts)))."""
        return np.linalg.inv(self.differential(self.inverse(pts)))


def _as_int_matrix(matrix):
    m = np.asarray(matrix, dtype=np.float64)
    r = np.round(m)
    if not np.allclose(m, r, atol=1e-9):
        raise ValueError("matrix entries must be integers")
    return r


def make_linear_ph(matrix):
    """Linear torus automorphism from an integer matrix with det = +-1."""
    A = _as_int_matrix(matrix)
    d = A.shape[0]
    if A.shape != (d, d):
        raise ValueError("matrix must be square")
    det = np.linalg.det(A)
    if abs(abs(det) - 1.0) > 1e-9:
        raise ValueError(f"|det| = {abs(det):.6g}, not a torus diffeomorphism")
    Ainv = np.round(np.linalg.inv(A))
    moduli = np.abs(np.linalg.eigvals(A))
    dc = int(np.sum(np.abs(moduli - 1.0) <= 1e-9))

    def forward(pts):
        return wrap_coords(np.asarray(pts, dtype=np.float64) @ A.T)

    def inverse(pts):
        return wrap_coords(np.asarray(pts, dtype=np.float64) @ Ainv.T)

    def differential(pts):
        pts = np.asarray(pts, dtype=np.float64)
        return np.broadcast_to(A, pts.shape[:-1] + (d, d)).copy()

    return MapSpec(
        kind="linear",
        dim=d,
        forward=forward,
        inverse=inverse,
        differential=differential,
        center_dimension=dc,
        is_linear=True,
        matrix=A,
        name=f"linear{A.astype(int).tolist()}",
    )


def make_translation(shift, geometry=None):
    """Rigid translation x -> x + c; the basic near-identity homeomorphism."""
    c = np.asarray(shift, dtype=np.float64)
    d = c.shape[0]
    eye = np.eye(d)
    geom = geometry if geometry is not None else TorusGeometry(d)

    def forward(pts):
        return geom.normalize(np.asarray(pts, dtype=np.float64) + c)

    def inverse(pts):
        return geom.normalize(np.asarray(pts, dtype=np.float64) - c)

    def differential(pts):
        pts = np.asarray(pts, dtype=np.float64)
        return np.broadcast_to(eye, pts.shape[:-1] + (d, d)).copy()

    return MapSpec(
        kind="translation",
        dim=d,
        forward=forward,
        inverse=inverse,
        differential=differential,
        center_dimension=d,
        is_linear=True,
        matrix=eye,
        name=f"translate{np.round(c, 6).tolist()}",
        geometry=geom,
    )


def make_skew_product(base, fiber_shift):
    """Circle extension over a hyperbolic 2x2 base: (x, s) -> (Bx, s + q(x)).

    fiber_shift is a ScalarField on T^2 or a plain number (rigid rotation).
    """
    B = _as_int_matrix(base)
    if B.shape != (2, 2):
        raise ValueError("base must be 2x2")
    if abs(abs(np.linalg.det(B)) - 1.0) > 1e-9:
        raise ValueError("base must have determinant +-1")
    moduli = np.abs(np.linalg.eigvals(B))
    if np.any(np.abs(moduli - 1.0) <= 1e-9):
        raise ValueError("base has a unit-modulus eigenvalue (not hyperbolic)")
    if not isinstance(fiber_shift, ScalarField):
        fiber_shift = constant_scalar(2, float(fiber_shift))
    Binv = np.round(np.linalg.inv(B))

    def forward(pts):
        pts = np.asarray(pts, dtype=np.float64)
        base_img = wrap_coords(pts[..., :2] @ B.T)
        s = wrap_coords(pts[..., 2] + fiber_shift(pts[..., :2]))
        return np.concatenate([base_img, s[..., None]], axis=-1)

    def inverse(pts):
        pts = np.asarray(pts, dtype=np.float64)
        base_pre = wrap_coords(pts[..., :2] @ Binv.T)
        s = wrap_coords(pts[..., 2] - fiber_shift(base_pre))
        return np.concatenate([base_pre, s[..., None]], axis=-1)

    def differential(pts):
        pts = np.asarray(pts, dtype=np.float64)
        out = np.zeros(pts.shape[:-1] + (3, 3))
        out[..., :2, :2] = B
        out[..., 2, 2] = 1.0
        out[..., 2, :2] = fiber_shift.gradient(pts[..., :2])
        return out

    is_const = fiber_shift.is_constant
    matrix = None
    if is_const:
        matrix = np.zeros((3, 3))
        matrix[:2, :2] = B
        matrix[2, 2] = 1.0
    return MapSpec(
        kind="skew_product",
        dim=3,
        forward=forward,
        inverse=inverse,
        differential=differential,
        center_dimension=1,
        is_linear=is_const,
        matrix=matrix,
        name=f"skew({B.astype(int).tolist()}, {fiber_shift.label})",
    )


def _newton_inverse(forward, differential, seed, geometry, tol=1e-12, max_steps=50):
    """Damped Newton solve of forward(z) = y, vectorized over points."""

    def inverse(y):
        y = np.asarray(y, dtype=np.float64)
        single = y.ndim == 1
        pts = np.atleast_2d(y)
        z = seed(pts)
        res = geometry.displacement(forward(z), pts)
        rn = np.linalg.norm(res, axis=-1)
        for _ in range(max_steps):
            if float(np.max(rn)) < tol:
                break
            step = np.linalg.solve(differential(z), res[..., None])[..., 0]
            cand = geometry.normalize(z + step)
            rc = np.linalg.norm(geometry.displacement(forward(cand), pts), axis=-1)
            # halve the step where the residual grew
            scale = np.ones_like(rn)
            for _ in range(6):
                worse = rc > rn
                if not np.any(worse):
                    break
                scale[worse] *= 0.5
                cand[worse] = geometry.normalize(
                    z[worse] + scale[worse, None] * step[worse]
                )
                rc[worse] = np.linalg.norm(
                    geometry.displacement(forward(cand[worse]), pts[worse]), axis=-1
                )
            z = cand
            res = geometry.displacement(forward(z), pts)
            rn = np.linalg.norm(res, axis=-1)
        else:
            raise MapInversionError(
                f"Newton inverse stalled at residual {float(np.max(rn)):.3e}"
            )
        return z[0] if single else z

    return inverse


def make_perturbed(f, field, amplitude, jacobian_grid=24, jacobian_floor=1e-8):
    """Analytic perturbation g(x) = f(x) + a * field(f(x)), wrapped.

    The differential uses the field's analytic Jacobian; the inverse is a
    damped Newton iteration seeded at f^{-1}.  Construction samples the
    Jacobian determinant on a coarse grid and rejects near-singular maps.
    """
    a = float(amplitude)
    if field.dim != f.dim:
        raise ValueError("field dimension does not match the map")
    if not isinstance(f.geometry, TorusGeometry) or isinstance(
        f.geometry, MappingTorusGeometry
    ):
        raise ValueError("perturbation requires a plain torus phase space")

    def forward(pts):
        y = f.forward(pts)
        return wrap_coords(y + a * field(y))

    def differential(pts):
        y = f.forward(pts)
        d = f.dim
        eye = np.eye(d)
        outer = eye + a * field.jacobian(y)
        return outer @ f.differential(pts)

    nodes = grid_nodes((jacobian_grid,) * f.dim)
    dets = np.linalg.det(differential(nodes))
    if float(np.min(np.abs(dets))) < jacobian_floor or len(set(np.sign(dets))) > 1:
        raise ValueError("perturbed map is singular on the sample grid")

    def seed(pts):
        return np.atleast_2d(f.inverse(pts))

    inverse = _newton_inverse(forward, differential, seed, f.geometry)
    return MapSpec(
        kind="perturbed",
        dim=f.dim,
        forward=forward,
        inverse=inverse,
        differential=differential,
        center_dimension=f.center_dimension,
        is_linear=(a == 0.0 and f.is_linear),
        matrix=f.matrix if a == 0.0 else None,
        name=f"perturbed({f.name}, {field.label}, {a})",
        geometry=f.geometry,
    )


def compose_with_inverse(g, f):
    """The composite h = g o f^{-1} as a MapSpec (artifact plumbing)."""
    if g.dim != f.dim:
        raise ValueError("dimension mismatch")

    def forward(pts):
        return g.forward(f.inverse(pts))

    def inverse(pts):
        return f.forward(g.inverse(pts))

    def differential(pts):
        pre = f.inverse(pts)
        return g.differential(pre) @ np.linalg.inv(f.differential(pre))

    is_lin = g.is_linear and f.is_linear
    matrix = None
    if is_lin and g.matrix is not None and f.matrix is not None:
        matrix = g.matrix @ np.linalg.inv(f.matrix)
    return MapSpec(
        kind="composite",
        dim=f.dim,
        forward=forward,
        inverse=inverse,
        differential=differential,
        center_dimension=f.center_dimension,
        is_linear=is_lin,
        matrix=matrix,
        name=f"({g.name}) o ({f.name})^-1",
        geometry=f.geometry,
    )


@dataclass(frozen=True)
class FlowSpec:
    """Unit-speed vertical suspension flow over a hyperbolic toral base.

    Chart coordinates are (x1, x2, s) with s in [0, roof(x1, x2)); crossing
    the roof applies the base matrix.  With roof = 1 the chart is the cube
    over T^2 and the geometry is the mapping torus of the base matrix.
    """

    base_matrix: np.ndarray
    roof: ScalarField
    geometry: Optional[MappingTorusGeometry] = None
    generator: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    dim: int = 3

    def roof_values(self, base_pts):
        return self.roof(base_pts)

    def time_map(self, pts, t):
        """Flow chart points by time t (scalar or per-point array)."""
        pts = np.asarray(pts, dtype=np.float64)
        single = pts.ndim == 1
        p = np.atleast_2d(pts)
        x = wrap_coords(p[:, :2]).copy()
        s = p[:, 2] + np.broadcast_to(np.asarray(t, dtype=np.float64), p[:, 2].shape)
        s = s.copy()
        B = self.base_matrix
        Binv = np.round(np.linalg.inv(B))
        for _ in range(1000):
            r = self.roof(x)
            up = s >= r
            if not np.any(up):
                break
            s[up] -= r[up]
            x[up] = wrap_coords(x[up] @ B.T)
        else:
            raise RuntimeError("flow crossing loop failed to terminate")
        for _ in range(1000):
            dn = s < 0.0
            if not np.any(dn):
                break
            x[dn] = wrap_coords(x[dn] @ Binv.T)
            s[dn] += self.roof(x[dn])
        else:
            raise RuntimeError("flow crossing loop failed to terminate")
        out = np.concatenate([x, s[:, None]], axis=-1)
        return out[0] if single else out

    def crossing_count(self, pts, t):
        """Net number of roof crossings experienced by each point over time t."""
        pts = np.asarray(pts, dtype=np.float64)
        p = np.atleast_2d(pts)
        x = wrap_coords(p[:, :2]).copy()
        s = p[:, 2] + np.broadcast_to(np.asarray(t, dtype=np.float64), p[:, 2].shape)
        s = s.copy()
        k = np.zeros(p.shape[0], dtype=np.int64)
        B = self.base_matrix
        Binv = np.round(np.linalg.inv(B))
        for _ in range(1000):
            r = self.roof(x)
            up = s >= r
            if not np.any(up):
                break
            s[up] -= r[up]
            x[up] = wrap_coords(x[up] @ B.T)
            k[up] += 1
        for _ in range(1000):
            dn = s < 0.0
            if not np.any(dn):
                break
            x[dn] = wrap_coords(x[dn] @ Binv.T)
            s[dn] += self.roof(x[dn])
            k[dn] -= 1
        return k if pts.ndim > 1 else int(k[0])


def suspension_flow(base, roof=None, roof_samples=64, roof_min=1e-6):
    """Suspension flow of an integer base matrix under a positive roof.

    roof defaults to the constant 1, in which case the phase space carries
    the mapping-torus chart geometry used by the solver and the entropy
    estimators.
    """
    B = _as_int_matrix(base)
    if B.shape != (2, 2):
        raise ValueError("base must be 2x2")
    if roof is None:
        roof = constant_scalar(2, 1.0)
    if not isinstance(roof, ScalarField):
        roof = constant_scalar(2, float(roof))
    sample = roof(grid_nodes((roof_samples, roof_samples)))
    if float(np.min(sample)) <= roof_min:
        raise ValueError("roof must be strictly positive")
    geometry = None
    if roof.is_constant and abs(roof.constant_value - 1.0) <= 1e-12:
        geometry = MappingTorusGeometry(B)
    return FlowSpec(base_matrix=B, roof=roof, geometry=geometry)


def vertical_rotation_flow():
    """Unit-speed rotation of the last circle factor of T^3.

    Realized as the roof-1 suspension of the identity gluing; this is the
    flow whose time function pairs with product maps A x id on the plain
    three-torus.
    """
    return FlowSpec(base_matrix=np.eye(2), roof=constant_scalar(2, 1.0))


def time_t_map(flow, t):
    """The time-t map of a suspension flow as a MapSpec (kind flow_time)."""
    t = float(t)
    if not flow.roof.is_constant:
        raise NotImplementedError(
            "time-t differentials are implemented for constant roofs only"
        )
    c = flow.roof.constant_value
    B = flow.base_matrix
    d = 3

    def forward(pts):
        return flow.time_map(pts, t)

    def inverse(pts):
        return flow.time_map(pts, -t)

    def differential(pts):
        pts = np.asarray(pts, dtype=np.float64)
        p = np.atleast_2d(pts)
        k = np.floor((p[:, 2] + t) / c).astype(np.int64)
        out = np.zeros((p.shape[0], d, d))
        out[:, 2, 2] = 1.0
        for kv in np.unique(k):
            Bk = np.linalg.matrix_power(B.astype(np.int64), int(kv)) if kv >= 0 else (
                np.round(np.linalg.matrix_power(np.linalg.inv(B), int(-kv)))
            )
            out[k == kv, :2, :2] = Bk
        if pts.ndim == 1:
            return out[0]
        return out.reshape(pts.shape[:-1] + (d, d))

    # crossing count independent of s only when t is a whole number of roofs
    whole = abs(t / c - round(t / c)) <= 1e-12
    matrix = None
    if whole:
        matrix = np.zeros((d, d))
        matrix[:2, :2] = np.linalg.matrix_power(B.astype(np.int64), int(round(t / c)))
        matrix[2, 2] = 1.0
    return MapSpec(
        kind="flow_time",
        dim=d,
        forward=forward,
        inverse=inverse,
        differential=differential,
        center_dimension=1,
        is_linear=whole,
        matrix=matrix,
        name=f"flow_time({B.astype(int).tolist()}, t={t})",
        geometry=flow.geometry,
    )


def _distance_grid(dim, samples_per_axis):
    if samples_per_axis is None:
        samples_per_axis = 128 if dim == 2 else 32
    return grid_nodes((samples_per_axis,) * dim)


def c0_distance(f, g, samples_per_axis=None):
    """Sup over a dense sample grid of the distance between image points."""
    pts = _distance_grid(f.dim, samples_per_axis)
    return float(np.max(f.geometry.dist(f.forward(pts), g.forward(pts))))


def c1_distance(f, g, samples_per_axis=None):
    """c0 distance plus the sup of the operator-norm differential gap."""
    pts = _distance_grid(f.dim, samples_per_axis)
    gap = f.differential(pts) - g.differential(pts)
    ops = np.linalg.svd(gap, compute_uv=False)[..., 0]
    return c0_distance(f, g, samples_per_axis) + float(np.max(ops))


def list_catalog():
    """Descriptors of the constructible system kinds, for the CLI."""
    return [
        {
            "kind": "linear",
            "params": ["matrix (integer, |det| = 1)"],
            "description": "linear torus automorphism",
        },
        {
            "kind": "skew_product",
            "params": ["matrix (hyperbolic 2x2)", "fiber {constant|cos_wave|sin_wave}"],
            "description": "circle extension (x, s) -> (Bx, s + q(x))",
        },
        {
            "kind": "perturbed",
            "params": ["base system", "field (trig vector field)", "amplitude"],
            "description": "analytic perturbation with Newton inverse",
        },
        {
            "kind": "suspension_time1",
            "params": ["matrix (hyperbolic 2x2)", "time (default 1)",
                       "roof (constant 1)"],
            "description": "time-t map of the unit-roof suspension flow",
        },
    ]


def cat_map():
    """The standard hyperbolic automorphism [[2,1],[1,1]]."""
    return make_linear_ph([[2, 1], [1, 1]])


__all__ = [
    "FlowSpec",
    "MapInversionError",
    "MapSpec",
    "c0_distance",
    "c1_distance",
    "cat_map",
    "compose_with_inverse",
    "list_catalog",
    "make_linear_ph",
    "make_perturbed",
    "make_skew_product",
    "suspension_flow",
    "time_t_map",
]
