"""Transport operators on discretized tangent-vector fields.

Conjugating two nearby torus maps reduces to a fixed point problem for a
displacement field with a center part and a hyperbolic part.  This module
realizes the ingredients on grid sections: the nonlinear pushforward beta,
its linearization F, the remainder eta, the comparison operators J_h and
theta_h attached to a near-identity homeomorphism h, the block transport
P_h with its series inverse, and the contraction map Phi whose fixed point
encodes the conjugacy.  Measurement helpers quantify the Lipschitz data
the solver checks before iterating.
"""

import numpy as np

from .sections import Section, grid_nodes, split, sup_norm, zeros_section
from .splitting import Splitting  # noqa: F401  (typed surface)


class OperatorError(ValueError):
    """Raised when an operator is applied outside its chart of validity."""


class GuardViolation(OperatorError):
    """Raised when the measured smallness conditions reject a solve."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


SERIES_TAIL_TARGET = 1e-12
# relative floor below which further series terms are pure round-off
_TERM_FLOOR = 1e-16


def _nodes_of(w):
    return grid_nodes(w.resolution)


def _vec(section_like_vals, resolution, shape):
    return Section(resolution, section_like_vals.reshape(shape))


def _check_sup(vals, limit, what):
    m = float(np.max(np.linalg.norm(vals, axis=-1))) if vals.size else 0.0
    if m >= limit:
        raise OperatorError(f"{what} leaves the injectivity chart: {m:.3g} >= {limit:.3g}")
    return m


def displacement_field(h, resolution):
    """Grid samples of x -> log_x(h(x)), the displacement of h from id."""
    nodes = grid_nodes(resolution)
    return h.geometry.displacement(nodes, h.forward(nodes))


def op_beta(f, w):
    """Pushforward of a displacement field through f, sampled at grid nodes.

    result(x) = log_x( f( exp_{f^{-1}x}( w(f^{-1}x) ) ) ).
    """
    _check_sup(w.flat, 0.5, "input field")
    geom = f.geometry
    nodes = _nodes_of(w)
    xi = f.inverse(nodes)
    wv = w.eval(xi)
    moved = f.forward(geom.exp(xi, wv))
    out = geom.displacement(nodes, moved)
    _check_sup(out, 0.5, "pushed field")
    return _vec(out, w.resolution, w.values.shape)


def op_F(f, w):
    """Linearized pushforward: result(x) = Df(f^{-1}x) w(f^{-1}x)."""
    nodes = _nodes_of(w)
    xi = f.inverse(nodes)
    wv = w.eval(xi)
    if f.is_linear and f.matrix is not None:
        out = wv @ f.matrix.T
    else:
        out = np.einsum("nij,nj->ni", f.differential(xi), wv)
    return _vec(out, w.resolution, w.values.shape)


def op_eta(f, w):
    """Nonlinear remainder of the pushforward: op_beta - op_F.

    For linear maps the two coincide as operators, so the remainder is
    returned as exact zeros rather than as float cancellation noise.
    """
    if f.is_linear:
        return zeros_section(w.resolution, w.ncomp)
    _check_sup(w.flat, 0.5, "input field")
    geom = f.geometry
    nodes = _nodes_of(w)
    xi = f.inverse(nodes)
    wv = w.eval(xi)
    moved = f.forward(geom.exp(xi, wv))
    beta = geom.displacement(nodes, moved)
    lin = np.einsum("nij,nj->ni", f.differential(xi), wv)
    return _vec(beta - lin, w.resolution, w.values.shape)


def _mix_matrices(S, at_pts, from_pts, transport=None):
    """Comparison matrices sum_i P_i(at) T P_i(from) of the block gather.

    transport re-expresses components at from_pts in the chart branch
    nearest at_pts (seam holonomy of a mapping torus); None means the
    trivial identification.  Returns None for the exact identity case.
    """
    if S.is_constant:
        # complementary constant projections: the mixed sum collapses to
        # the transport itself (the blocks are holonomy-invariant lines)
        return transport
    out = None
    for which in ("s", "c", "u"):
        a = S.proj_arrays(at_pts, which)
        b = S.proj_arrays(from_pts, which)
        if transport is not None:
            b = np.einsum("nij,njk->nik", transport, b)
        term = np.einsum("nij,njk->nik", a, b)
        out = term if out is None else out + term
    return out


def op_Jh(h, S, w):
    """Block comparison along h: result(x) = sum_i P_i(x) P_i(h(x)) w(h(x))."""
    nodes = _nodes_of(w)
    hp = h.forward(nodes)
    wv = w.eval(hp)
    mats = _mix_matrices(S, nodes, hp, h.geometry.gather_transport(nodes, hp))
    out = wv if mats is None else np.einsum("nij,nj->ni", mats, wv)
    return _vec(out, w.resolution, w.values.shape)


def op_Jh_inverse(h, S, w):
    """Inverse of op_Jh: result(x) = M(h^{-1}x)^{-1} w(h^{-1}x)."""
    nodes = _nodes_of(w)
    hq = h.inverse(nodes)
    wv = w.eval(hq)
    mats = _mix_matrices(S, hq, nodes, h.geometry.gather_transport(hq, nodes))
    out = wv if mats is None else np.einsum("nij,nj->ni", np.linalg.inv(mats), wv)
    return _vec(out, w.resolution, w.values.shape)


def op_thetah(h, S, w):
    """Chart-comparison remainder along h.

    result(x) = log_x( exp_{h(x)}( w(h(x)) ) ) - op_Jh(w)(x); at w = 0 this
    is the displacement field of h.
    """
    geom = h.geometry
    nodes = _nodes_of(w)
    hp = h.forward(nodes)
    dh = _check_sup(geom.displacement(nodes, hp), 0.5, "displacement of h")
    _check_sup(w.flat, 0.5 - dh, "input field")
    wv = w.eval(hp)
    full = geom.displacement(nodes, geom.exp(hp, wv))
    mats = _mix_matrices(S, nodes, hp, geom.gather_transport(nodes, hp))
    jpart = wv if mats is None else np.einsum("nij,nj->ni", mats, wv)
    return _vec(full - jpart, w.resolution, w.values.shape)


def op_Ph(f, h, S, w):
    """Forward block transport: P w = -J^{-1}u + v - J^{-1}F v."""
    parts = split(w, S)
    u, v = parts.u_part, parts.v_part
    out = op_Jh_inverse(h, S, u) * (-1.0) + v - op_Jh_inverse(h, S, op_F(f, v))
    return out


def auto_depth(lam, target=SERIES_TAIL_TARGET):
    """Series cutoff for contraction rate (1+lam)/2 and the given tail."""
    r = (1.0 + lam) / 2.0
    if not (0.0 < r < 1.0):
        raise OperatorError(f"series rate {r:.3g} outside (0, 1)")
    depth = int(np.ceil(np.log(target * (1.0 - r)) / np.log(r))) - 1
    return max(depth, 1)


class TransportContext:
    """Precomputed orbit data for repeated applications of the transport
    inverse and the contraction map on one grid.

    Orbit points (backward for the contracting block, forward for the
    expanding one) are grown lazily and cached; per-depth step matrices are
    cached only when the reference map is nonlinear or the splitting is
    curved, since otherwise every step uses one constant matrix.
    """

    def __init__(self, f, h, S, resolution, gmap=None, depth=None,
                 tail_target=SERIES_TAIL_TARGET):
        self.f, self.h, self.S = f, h, S
        self.resolution = tuple(resolution)
        self.geom = f.geometry
        self.nodes = grid_nodes(self.resolution)
        self.depth = auto_depth(S.lam, tail_target) if depth is None else int(depth)
        if gmap is not None:
            self._g_fwd, self._g_inv = gmap.forward, gmap.inverse
        else:
            self._g_fwd = lambda p: h.forward(f.forward(p))
            self._g_inv = lambda p: f.inverse(h.inverse(p))
        self._constant_steps = f.is_linear and S.is_constant
        self._s_orbit = [self.nodes]
        self._u_orbit = [self.nodes]
        self._s_mats = []
        self._u_mats = []
        # h-attached data reused by every Phi application
        self.h_pts = h.forward(self.nodes)
        self.hinv_pts = h.inverse(self.nodes)
        self.disp_h = self.geom.displacement(self.nodes, self.h_pts)
        self.finv_pts = f.inverse(self.nodes)
        self._df_finv = None if f.is_linear else f.differential(self.finv_pts)
        self._mix_h = _mix_matrices(
            S, self.nodes, self.h_pts,
            self.geom.gather_transport(self.nodes, self.h_pts))
        mats = _mix_matrices(
            S, self.hinv_pts, self.nodes,
            self.geom.gather_transport(self.hinv_pts, self.nodes))
        self._mixinv_hinv = None if mats is None else np.linalg.inv(mats)
        self._shape = self.resolution + (f.dim,)

    # -- orbits ---------------------------------------------------------

    def s_point(self, k):
        while len(self._s_orbit) <= k:
            self._s_orbit.append(self._g_inv(self._s_orbit[-1]))
        return self._s_orbit[k]

    def u_point(self, k):
        while len(self._u_orbit) <= k:
            self._u_orbit.append(self._g_fwd(self._u_orbit[-1]))
        return self._u_orbit[k]

    # -- step matrices --------------------------------------------------

    def _mix_inv_at(self, mid_pts, pts):
        mats = _mix_matrices(self.S, mid_pts, pts)
        return None if mats is None else np.linalg.inv(mats)

    def s_step(self, k):
        """Stable-block factor at depth k: D(z_k) P_s(z_{k+1}), where
        D(z) = M^{-1}(h^{-1}z) Df(z_next) along z_k = g^{-k}(nodes).

        The trailing projection keeps the running products contracting
        entrywise; raw products of the full matrices would grow like the
        expansion rate and cancel catastrophically.
        """
        if self._constant_steps:
            if not self._s_mats:
                self._s_mats.append(self.f.matrix @ self.S.proj_s)
            return self._s_mats[0]
        while len(self._s_mats) <= k:
            j = len(self._s_mats)
            z, znext = self.s_point(j), self.s_point(j + 1)
            d = self.f.differential(znext)
            minv = self._mix_inv_at(self.f.forward(znext), z)
            mat = d if minv is None else np.einsum("nij,njk->nik", minv, d)
            proj = self.S.proj_arrays(znext, "s")
            self._s_mats.append(np.einsum("nij,njk->nik", mat, proj))
        return self._s_mats[k]

    def u_step(self, k):
        """Expanding-block factor at depth k: E(y_k) P_u(y_{k+1}), where
        E(y) = Df(y)^{-1} M(f(y)) along y_k = g^{k}(nodes)."""
        if self._constant_steps:
            if not self._u_mats:
                self._u_mats.append(np.linalg.inv(self.f.matrix) @ self.S.proj_u)
            return self._u_mats[0]
        while len(self._u_mats) <= k:
            j = len(self._u_mats)
            y = self.u_point(j)
            ynext = self.u_point(j + 1)
            dinv = np.linalg.inv(self.f.differential(y))
            mid = self.f.forward(y)
            m = _mix_matrices(self.S, mid, self.h.forward(mid))
            mat = dinv if m is None else np.einsum("nij,njk->nik", dinv, m)
            proj = self.S.proj_arrays(ynext, "u")
            self._u_mats.append(np.einsum("nij,njk->nik", mat, proj))
        return self._u_mats[k]

    def _apply_step(self, acc, step):
        if acc is None:
            return step if step.ndim == 3 else np.broadcast_to(
                step, (len(self.nodes),) + step.shape)
        if step.ndim == 2:
            return acc @ step
        return np.einsum("nij,njk->nik", acc, step)

    # -- series ---------------------------------------------------------

    def _series(self, t_section, point_fn, step_fn, first_k):
        """sum_{k>=first_k} A_k t(orbit_k) with A_k the running products."""
        tv = t_section.flat
        scale = max(float(np.max(np.abs(tv))), 1.0)
        acc = tv.copy() if first_k == 0 else np.zeros_like(tv)
        run = None
        for k in range(1, self.depth + 1):
            run = self._apply_step(run, step_fn(k - 1))
            gathered = t_section.eval(point_fn(k))
            term = np.einsum("nij,nj->ni", run, gathered)
            if k >= first_k:
                acc += term
                if float(np.max(np.abs(term))) < _TERM_FLOOR * scale:
                    break
        return acc

    def shrink_factor(self, n_trials=8, rng=None):
        """Measured sup-norm ratio of one contracting-block step on random
        stable-valued fields (a sampled estimate of the block norm)."""
        rng = np.random.default_rng(0 if rng is None else rng)
        worst = 0.0
        step = self._apply_step(None, self.s_step(0))
        for _ in range(n_trials):
            t = rng.standard_normal((len(self.nodes), self.f.dim))
            t = self.S.project_values(self.nodes, t, "s")
            denom = float(np.max(np.linalg.norm(t, axis=-1)))
            if denom < 1e-12:
                continue
            sec = _vec(t, self.resolution, self._shape)
            out = np.einsum("nij,nj->ni", step, sec.eval(self.s_point(1)))
            worst = max(worst, float(np.max(np.linalg.norm(out, axis=-1))) / denom)
        return worst

    def check_block_guard(self):
        bound = (1.0 + self.S.lam) / 2.0
        measured = self.shrink_factor()
        if measured > bound:
            raise OperatorError(
                f"contracting transport block has measured norm {measured:.4f} "
                f"> (1+lam)/2 = {bound:.4f}; outside the series regime")
        return measured

    def ph_inverse(self, w):
        """Inverse transport: series on the contracting block, negative
        shifted series on the expanding block, -J_h on the center block."""
        nodes = self.nodes
        u_vals = self.S.project_values(nodes, w.flat, "c")
        s_vals = self.S.project_values(nodes, w.flat, "s")
        v_u = self.S.project_values(nodes, w.flat, "u")
        out = np.zeros_like(w.flat)
        ds, dc, du = self.S.dims
        if ds:
            out += self._series(_vec(s_vals, self.resolution, self._shape),
                                self.s_point, self.s_step, first_k=0)
        if du:
            out -= self._series(_vec(v_u, self.resolution, self._shape),
                                self.u_point, self.u_step, first_k=1)
        if dc:
            usec = _vec(u_vals, self.resolution, self._shape)
            jc = op_Jh(self.h, self.S, usec)
            out -= self.S.project_values(nodes, jc.flat, "c")
        return _vec(out, w.resolution, w.values.shape)

    def phi(self, omega):
        """One application of the contraction map Phi, using cached
        pullback points and block matrices."""
        parts = split(omega, self.S)
        v = parts.v_part
        geom = self.geom
        # nonlinear remainder of the pushforward (exact zero for linear f)
        if self.f.is_linear:
            e = 0.0
        else:
            wv = v.eval(self.finv_pts)
            moved = self.f.forward(geom.exp(self.finv_pts, wv))
            beta = geom.displacement(self.nodes, moved)
            e = beta - np.einsum("nij,nj->ni", self._df_finv, wv)
        # chart-comparison remainder along h
        wvh = v.eval(self.h_pts)
        full = geom.displacement(self.nodes, geom.exp(self.h_pts, wvh))
        jp = wvh if self._mix_h is None else np.einsum(
            "nij,nj->ni", self._mix_h, wvh)
        z = e - (full - jp)
        zsec = _vec(z, self.resolution, self._shape)
        zv = zsec.eval(self.hinv_pts)
        rhs = zv if self._mixinv_hinv is None else np.einsum(
            "nij,nj->ni", self._mixinv_hinv, zv)
        return self.ph_inverse(_vec(rhs, self.resolution, self._shape))


def op_Ph_inverse(f, h, S, w, depth=None, gmap=None):
    """Apply the inverse block transport to a section (one-shot API)."""
    ctx = TransportContext(f, h, S, w.resolution, gmap=gmap, depth=depth)
    ctx.check_block_guard()
    return ctx.ph_inverse(w)


def op_Phi(f, h, S, omega, depth=None, gmap=None):
    """One application of the contraction map (one-shot API)."""
    ctx = TransportContext(f, h, S, omega.resolution, gmap=gmap, depth=depth)
    ctx.check_block_guard()
    return ctx.phi(omega)


# -- measured smallness data -------------------------------------------


def measure_C(f, epsilon, n_samples=10_000, rng=None, safety=2.0):
    """Sampled Lipschitz constant of the nonlinear remainder on the
    radius-epsilon ball; exactly zero for linear maps."""
    if f.is_linear:
        return 0.0
    rng = np.random.default_rng(rng)
    d = f.dim
    geom = f.geometry
    x = geom.normalize(rng.random((n_samples, d)))
    xi = f.inverse(x)

    def kernel(a):
        moved = f.forward(geom.exp(xi, a))
        beta = geom.displacement(x, moved)
        return beta - np.einsum("nij,nj->ni", f.differential(xi), a)

    def ball(n):
        v = rng.standard_normal((n, d))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        return v * (epsilon * rng.random((n, 1)))

    a, b = ball(n_samples), ball(n_samples)
    gap = np.linalg.norm(a - b, axis=-1)
    keep = gap > epsilon * 1e-3
    diff = np.linalg.norm(kernel(a) - kernel(b), axis=-1)
    return safety * float(np.max(diff[keep] / gap[keep]))


def measure_K(h, S, epsilon, n_samples=10_000, rng=None, safety=2.0):
    """Sampled Lipschitz constant of the chart-comparison remainder."""
    rng = np.random.default_rng(rng)
    d = h.dim
    geom = h.geometry
    x = geom.normalize(rng.random((n_samples, d)))
    hp = h.forward(x)
    # the comparison matrices must see the same chart branch the
    # displacement search selects, or seam crossings read as false slope
    mats = _mix_matrices(S, x, hp, geom.gather_transport(x, hp))

    def kernel(a):
        full = geom.displacement(x, geom.exp(hp, a))
        ja = a if mats is None else np.einsum("nij,nj->ni", mats, a)
        return full - ja

    def ball(n):
        v = rng.standard_normal((n, d))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        return v * (epsilon * rng.random((n, 1)))

    a, b = ball(n_samples), ball(n_samples)
    gap = np.linalg.norm(a - b, axis=-1)
    keep = gap > epsilon * 1e-3
    diff = np.linalg.norm(kernel(a) - kernel(b), axis=-1)
    return safety * float(np.max(diff[keep] / gap[keep]))


def measure_J_norms(h, S, resolution=None):
    """Sup operator norms of J_h and its inverse from the block matrices."""
    if S.is_constant:
        return 1.0, 1.0
    res = S.grid_resolution if resolution is None else resolution
    nodes = grid_nodes(res)
    mats = _mix_matrices(S, nodes, h.forward(nodes))
    sing = np.linalg.svd(mats, compute_uv=False)
    return float(np.max(sing[:, 0])), float(np.max(1.0 / sing[:, -1]))
