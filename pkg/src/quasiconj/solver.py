"""Fixed-point solvers recovering conjugacies between nearby torus maps.

Three variants share one contraction loop: the general center-section
form (u along the center bundle), the flow form (center motion written as
a scalar time change of a given flow), and the transversal form (the
center coordinate absorbed into a slide map, leaving a hyperbolic-only
unknown).  Each returns the displacement data, an off-grid residual
report, and the measured guard quantities that justified iterating.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .catalog import c0_distance, compose_with_inverse
from .operators import (GuardViolation, TransportContext, measure_C,
                        measure_J_norms, measure_K)
from .sections import (Section, default_resolution, grid_nodes, norm1, split,
                       sup_norm, zeros_section)
from .splitting import estimate_splitting, exact_splitting


class SolverError(RuntimeError):
    """Non-convergence or an inconsistent problem setup."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


@dataclass(frozen=True)
class SolverParams:
    """Iteration controls; epsilon is the working ball radius."""

    epsilon: float = 0.1
    resolution: Optional[tuple] = None
    fixpoint_tol: float = 1e-10
    max_iterations: int = 200
    neumann_depth: Optional[int] = None
    residual_sample_count: int = 10_000
    seed: int = 42

    def __post_init__(self):
        if not (0.0 < self.epsilon < 0.5):
            raise ValueError(
                f"epsilon must lie in (0, 1/2), got {self.epsilon}")


@dataclass(frozen=True)
class QuasiConjugacy:
    """Solved displacement data plus verification statistics."""

    variant: str
    u: Optional[Section]
    v: Section
    tau_tilde: Optional[np.ndarray]
    iterations: int
    contraction_trace: tuple
    residual: dict
    surjectivity_ok: bool
    d_pi_id: float
    guard: dict
    params: SolverParams

    def pi(self, pts):
        """The conjugating map at arbitrary points: exp_x(v(x))."""
        pts = np.atleast_2d(pts)
        return self._geom.exp(self._geom.normalize(pts), self.v.eval(pts))

    @property
    def _geom(self):
        return self.guard["geometry"]


def random_section(resolution, ncomp, rng, max_mode=3, n_waves=4, scale=1.0):
    """Smooth band-limited random field for measurements and tests."""
    nodes = grid_nodes(resolution)
    d = len(resolution)
    vals = np.zeros((len(nodes), ncomp))
    for _ in range(n_waves):
        k = rng.integers(-max_mode, max_mode + 1, size=d)
        amp = rng.standard_normal(ncomp)
        phase = rng.random()
        vals += np.outer(np.cos(2 * np.pi * (nodes @ k + phase)), amp)
    peak = np.max(np.linalg.norm(vals, axis=-1))
    if peak > 0:
        vals *= scale / peak
    return Section(resolution, vals.reshape(tuple(resolution) + (ncomp,)))


def _splitting_for(f):
    return exact_splitting(f) if f.is_linear else estimate_splitting(f)


def guard_report(f, g, h, S, ctx, params):
    """Measured smallness conditions that license the contraction loop.

    The displacement condition is checked through the measured norm of the
    first iterate (the quantity the crude product (4L/(1-lam))*delta is a
    worst-case bound for); both numbers are reported.
    """
    eps = params.epsilon
    lam = S.lam
    amp = 4.0 * S.L / (1.0 - lam)
    C = measure_C(f, eps, rng=params.seed)
    K = measure_K(h, S, eps, rng=params.seed)
    jn, jni = measure_J_norms(h, S)
    phi0 = ctx.phi(zeros_section(ctx.resolution, f.dim))
    phi0_norm = norm1(phi0, S)
    delta = c0_distance(f, g)
    shrink = ctx.shrink_factor()
    j_bound = min(2.0, 0.5 * (1.0 + 1.0 / lam))
    checks = {
        "eta_lipschitz": amp * C < 0.25,
        "theta_lipschitz": amp * K < 0.25,
        "displacement": phi0_norm < eps / 4.0,
        "j_norm": max(jn, jni) <= j_bound + 1e-12,
        "block": shrink <= 0.5 * (1.0 + lam) + 1e-12,
    }
    return {
        "epsilon": eps,
        "lambda": lam,
        "L": S.L,
        "amplification": amp,
        "C_eps": C,
        "K_h": K,
        "delta_c0": delta,
        "delta_term_crude": amp * delta,
        "delta_term_measured": phi0_norm,
        "delta_threshold": eps / 4.0,
        "j_norm": jn,
        "j_inv_norm": jni,
        "j_bound": j_bound,
        "block_shrink": shrink,
        "block_bound": 0.5 * (1.0 + lam),
        "checks": checks,
        "passed": all(checks.values()),
        "geometry": f.geometry,
        "first_iterate": phi0,
    }


def _iterate(ctx, params, initial=None):
    omega = initial if initial is not None else zeros_section(
        ctx.resolution, ctx.f.dim)
    trace = []
    for k in range(1, params.max_iterations + 1):
        nxt = ctx.phi(omega)
        step = norm1(nxt - omega, ctx.S)
        trace.append(step)
        omega = nxt
        if step < params.fixpoint_tol:
            return omega, trace, k
    raise SolverError(
        f"no convergence in {params.max_iterations} iterations "
        f"(last step {trace[-1]:.3e})", trace)


def _sample_points(geom, dim, count, seed):
    rng = np.random.default_rng(seed)
    return geom.normalize(rng.random((count, dim))), rng


def _residual_stats(vals):
    return {"sup": float(np.max(vals)), "mean": float(np.mean(vals)),
            "count": int(len(vals))}


def _finish(variant, f, g, S, ctx, params, omega, trace, iterations,
            tau_from_u=None, flow=None):
    parts = split(omega, S)
    u_sec, v_sec = parts.u_part, parts.v_part
    geom = f.geometry
    guard = ctx.guard_cache

    pts, _ = _sample_points(geom, f.dim, params.residual_sample_count,
                            params.seed)
    gp = g.forward(pts)
    pi_g = geom.exp(gp, v_sec.eval(gp))
    f_pi = f.forward(geom.exp(pts, v_sec.eval(pts)))
    fp = f.forward(pts)
    if variant == "A":
        target = geom.exp(fp, u_sec.eval(fp) + geom.displacement(fp, f_pi))
        tau_tilde = None
    elif variant == "Bprime":
        tau_vals = tau_from_u(fp)
        target = flow.time_map(f_pi, tau_vals)
        tau_tilde = tau_from_u(grid_nodes(ctx.resolution)).reshape(
            ctx.resolution)
    else:
        raise ValueError(variant)
    res = _residual_stats(geom.dist(pi_g, target))

    d_pi = sup_norm(v_sec)
    return QuasiConjugacy(
        variant=variant,
        u=u_sec,
        v=v_sec,
        tau_tilde=tau_tilde,
        iterations=iterations,
        contraction_trace=tuple(trace),
        residual=res,
        surjectivity_ok=bool(d_pi < 0.5),
        d_pi_id=d_pi,
        guard=guard,
        params=params,
    )


def _prepare(f, g, params):
    S = _splitting_for(f)
    h = compose_with_inverse(g, f)
    resolution = (tuple(params.resolution) if params.resolution is not None
                  else default_resolution(f.dim))
    ctx = TransportContext(f, h, S, resolution, gmap=g,
                           depth=params.neumann_depth)
    guard = guard_report(f, g, h, S, ctx, params)
    ctx.guard_cache = guard
    if not guard["passed"]:
        failed = [k for k, ok in guard["checks"].items() if not ok]
        raise GuardViolation(
            "measured smallness conditions reject this pair: "
            + ", ".join(failed), guard)
    return S, h, ctx


def solve_theorem_A(f, g, params=None, initial=None):
    """Recover (u, pi) with pi o g = (center shift by u) o f o pi."""
    params = params or SolverParams()
    S, h, ctx = _prepare(f, g, params)
    if initial is None:
        # the guard already computed Phi(0); start from it
        omega, trace, iterations = _iterate(
            ctx, params, initial=ctx.guard_cache["first_iterate"])
        trace = [norm1(ctx.guard_cache["first_iterate"], S)] + trace
        iterations += 1
    else:
        if not norm1(initial, S) <= params.epsilon:
            raise SolverError("initial section outside the working ball")
        omega, trace, iterations = _iterate(ctx, params, initial=initial)
    return _finish("A", f, g, S, ctx, params, omega, trace, iterations)


def solve_theorem_Bprime(f, g, flow, params=None, initial=None):
    """Recover (tau_tilde, pi) with pi o g = (flow for time tau_tilde) o f o pi."""
    params = params or SolverParams()
    if f.center_dimension != 1:
        raise SolverError("flow form needs a one-dimensional center")
    S, h, ctx = _prepare(f, g, params)
    center_unit = S.center_field(grid_nodes(ctx.resolution))

    omega, trace, iterations = _iterate(ctx, params, initial=initial)

    parts = split(omega, S)

    def tau_from_u(pts):
        vals = parts.u_part.eval(pts)
        units = S.center_field(pts)
        return np.einsum("ni,ni->n", vals, units)

    # consistency: u must be parallel to the flow direction
    u_flat = parts.u_part.flat
    proj = np.einsum("ni,ni->n", u_flat, center_unit)[:, None] * center_unit
    mismatch = float(np.max(np.linalg.norm(u_flat - proj, axis=-1)))
    if mismatch > 1e-8:
        raise SolverError(
            f"center part is not parallel to the flow field ({mismatch:.2e})")
    return _finish("Bprime", f, g, S, ctx, params, omega, trace, iterations,
                   tau_from_u=tau_from_u, flow=flow)


# -- transversal variant ------------------------------------------------


class _SlideContext:
    """Series data for the hyperbolic-only equation v = b + A v with
    (A v)(x) = B(x) v(g^{-1}x), B = sum of the slide-projected blocks."""

    def __init__(self, f, g, S, resolution, depth=None):
        self.f, self.g, self.S = f, g, S
        self.resolution = tuple(resolution)
        self.geom = f.geometry
        self.nodes = grid_nodes(self.resolution)
        d = f.dim
        self.dtau = np.eye(d)
        self.dtau[-1, -1] = 0.0
        from .operators import auto_depth
        self.depth = auto_depth(S.lam) if depth is None else int(depth)
        self._back = [self.nodes]
        self._fwd = [self.nodes]
        self._s_mats = []
        self._u_mats = []

    def back(self, k):
        while len(self._back) <= k:
            self._back.append(self.g.inverse(self._back[-1]))
        return self._back[k]

    def fwd(self, k):
        while len(self._fwd) <= k:
            self._fwd.append(self.g.forward(self._fwd[-1]))
        return self._fwd[k]

    def _B(self, pts, pre_pts):
        df = self.f.differential(pre_pts)
        core = np.einsum("ij,njk->nik", self.dtau, df)
        ps, pu = (self.S.proj_arrays(pts, "s"), self.S.proj_arrays(pts, "u"))
        qs, qu = (self.S.proj_arrays(pre_pts, "s"),
                  self.S.proj_arrays(pre_pts, "u"))
        return (np.einsum("nij,njk,nkl->nil", ps, core, qs)
                + np.einsum("nij,njk,nkl->nil", pu, core, qu))

    def s_step(self, k):
        # fold the stable projector into each factor: the raw B chain has
        # the expanding block of norm mu, so roundoff leaking into the
        # unstable directions would grow like mu^k along the series
        while len(self._s_mats) <= k:
            j = len(self._s_mats)
            z, znext = self.back(j), self.back(j + 1)
            qs = self.S.proj_arrays(znext, "s")
            self._s_mats.append(np.einsum(
                "nij,njk->nik", self._B(z, znext), qs))
        return self._s_mats[k]

    def u_step(self, k):
        while len(self._u_mats) <= k:
            j = len(self._u_mats)
            y, ynext = self.fwd(j), self.fwd(j + 1)
            mats = self._B(ynext, y)
            # project at ynext: that is where the incoming vectors live
            pu = self.S.proj_arrays(ynext, "u")
            self._u_mats.append(np.einsum(
                "nij,njk->nik", np.linalg.pinv(mats), pu))
        return self._u_mats[k]

    def solve_linear(self, b_vals):
        """(id - A)^{-1} b via the two block series."""
        shape = self.resolution + (self.f.dim,)
        b_s = self.S.project_values(self.nodes, b_vals, "s")
        b_u = self.S.project_values(self.nodes, b_vals, "u")
        out = b_s.copy()
        sec_s = Section(self.resolution, b_s.reshape(shape))
        run = None
        scale = max(float(np.max(np.abs(b_vals))), 1e-30)
        for k in range(1, self.depth + 1):
            step = self.s_step(k - 1)
            run = step if run is None else np.einsum(
                "nij,njk->nik", run, step)
            term = np.einsum("nij,nj->ni", run, sec_s.eval(self.back(k)))
            out += term
            if float(np.max(np.abs(term))) < 1e-16 * scale:
                break
        sec_u = Section(self.resolution, b_u.reshape(shape))
        run = None
        for k in range(1, self.depth + 1):
            step = self.u_step(k - 1)
            run = step if run is None else np.einsum(
                "nij,njk->nik", run, step)
            term = np.einsum("nij,nj->ni", run, sec_u.eval(self.fwd(k)))
            out -= term
            if float(np.max(np.abs(term))) < 1e-16 * scale:
                break
        return out

    def nonlinear_rhs(self, v_sec):
        """N(v)(y) = log_y( slide_y( f( exp_{g^{-1}y} v(g^{-1}y) ) ) ) - A v(y)."""
        pre = self.back(1)
        vv = v_sec.eval(pre)
        moved = self.f.forward(self.geom.exp(pre, vv))
        slid = moved.copy()
        slid[:, -1] = self.nodes[:, -1]
        full = self.geom.displacement(self.nodes, slid)
        lin = np.einsum("nij,nj->ni", self._B(self.nodes, pre), vv)
        return full - lin


def measure_K1(samples=2_000, rng=None, dim=3):
    """Slide-map expansion constant d(slide_x(y), x) <= K1 d(y, x).

    Axis-aligned offsets are included so the supremum 1 is attained
    exactly on the linear models.
    """
    rng = np.random.default_rng(rng)
    offs = rng.standard_normal((samples, dim)) * 0.05
    offs = np.vstack([offs, np.eye(dim)[:-1] * 0.05])
    horiz = offs.copy()
    horiz[:, -1] = 0.0
    d_all = np.linalg.norm(offs, axis=-1)
    keep = d_all > 1e-12
    return float(np.max(np.linalg.norm(horiz[keep], axis=-1) / d_all[keep]))


def solve_theorem_B_transversal(f, g, params=None):
    """Recover pi with pi o g = slide o f o pi, the slide absorbing all
    center motion; only the hyperbolic displacement is solved for."""
    params = params or SolverParams()
    if f.center_dimension == 0:
        raise SolverError("transversal form needs a center direction")
    S = _splitting_for(f)
    resolution = (tuple(params.resolution) if params.resolution is not None
                  else default_resolution(f.dim))
    ctx = _SlideContext(f, g, S, resolution, depth=params.neumann_depth)
    shape = tuple(resolution) + (f.dim,)

    v_vals = np.zeros((len(ctx.nodes), f.dim))
    trace = []
    iterations = 0
    for k in range(1, params.max_iterations + 1):
        rhs = ctx.nonlinear_rhs(Section(resolution, v_vals.reshape(shape)))
        nxt = ctx.solve_linear(rhs)
        step = float(np.max(np.linalg.norm(nxt - v_vals, axis=-1)))
        trace.append(step)
        v_vals = nxt
        iterations = k
        if step < params.fixpoint_tol:
            break
    else:
        raise SolverError(
            f"no convergence in {params.max_iterations} iterations", trace)

    v_sec = Section(resolution, v_vals.reshape(shape))
    geom = f.geometry
    pts, _ = _sample_points(geom, f.dim, params.residual_sample_count,
                            params.seed)
    gp = g.forward(pts)
    pi_g = geom.exp(gp, v_sec.eval(gp))
    f_pi = f.forward(geom.exp(pts, v_sec.eval(pts)))
    slid = f_pi.copy()
    slid[:, -1] = gp[:, -1]
    res = _residual_stats(geom.dist(pi_g, slid))
    d_pi = sup_norm(v_sec)
    guard = {"K1": measure_K1(rng=params.seed, dim=f.dim),
             "geometry": geom, "epsilon": params.epsilon}
    return QuasiConjugacy(
        variant="B",
        u=None,
        v=v_sec,
        tau_tilde=None,
        iterations=iterations,
        contraction_trace=tuple(trace),
        residual=res,
        surjectivity_ok=bool(d_pi < 0.5),
        d_pi_id=d_pi,
        guard=guard,
        params=params,
    )


# -- verification -------------------------------------------------------


def verify_quasi_conjugacy(result, f, g, variant=None, flow=None,
                           residual_tol=1e-6, seed=None):
    """Fresh-sample residual and side-condition report."""
    variant = variant or result.variant
    params = result.params
    geom = f.geometry
    seed = params.seed + 1 if seed is None else seed
    pts, _ = _sample_points(geom, f.dim, params.residual_sample_count, seed)
    v_sec = result.v
    gp = g.forward(pts)
    pi_g = geom.exp(gp, v_sec.eval(gp))
    f_pi = f.forward(geom.exp(pts, v_sec.eval(pts)))
    fp = f.forward(pts)
    if variant == "A":
        target = geom.exp(fp, result.u.eval(fp) + geom.displacement(fp, f_pi))
    elif variant == "Bprime":
        if flow is None:
            raise ValueError("flow form needs the FlowSpec it was solved with")
        S = _splitting_for(f)
        tau = np.einsum("ni,ni->n", result.u.eval(fp), S.center_field(fp))
        target = flow.time_map(f_pi, tau)
    elif variant == "B":
        target = f_pi.copy()
        target[:, -1] = gp[:, -1]
    else:
        raise ValueError(variant)
    res = _residual_stats(geom.dist(pi_g, target))

    nodes = grid_nodes(v_sec.resolution)
    if variant == "B":
        center_dev = float(np.max(np.abs(v_sec.flat[:, -1])))
    else:
        S = _splitting_for(f)
        center_dev = float(np.max(np.linalg.norm(
            S.project_values(nodes, v_sec.flat, "c"), axis=-1)))
    d_pi = sup_norm(v_sec)
    flags = {
        "residual_ok": res["sup"] < residual_tol,
        "d_pi_lt_eps": d_pi < params.epsilon,
        "center_projection_ok": center_dev <= 1e-10,
        "surjectivity_ok": d_pi < 0.5,
    }
    return {"residual": res, "d_pi_id": d_pi, "center_projection": center_dev,
            "flags": flags, "passed": all(flags.values()),
            "residual_tol": residual_tol}


def verify_leaf_conjugacy(result, f, g, samples=200, seed=0,
                          arcs=(-0.1, -0.05, 0.05, 0.1)):
    """Check that pi carries center leaves of g to center leaves of f.

    Works on the vertical-foliation models: f-leaves are vertical circles,
    g-leaves are integrated from the estimated center field of g.
    """
    from .splitting import leaf_points

    geom = f.geometry
    rng = np.random.default_rng(seed)
    Sg = _splitting_for(g)
    x = geom.normalize(rng.random((samples, f.dim)))
    pi_x = geom.exp(x, result.v.eval(x))
    worst = 0.0
    for arc in arcs:
        y = leaf_points(Sg, x, arc)
        pi_y = geom.exp(y, result.v.eval(y))
        dev = geom.displacement(pi_x, pi_y)
        worst = max(worst, float(np.max(
            np.linalg.norm(dev[:, :-1], axis=-1))))

    pairs = np.random.default_rng(seed + 1)
    a = geom.normalize(pairs.random((10_000, f.dim)))
    b = geom.normalize(a + pairs.standard_normal((10_000, f.dim)) * 0.05)
    da = geom.dist(geom.exp(a, result.v.eval(a)), geom.exp(b, result.v.eval(b)))
    db = geom.dist(a, b)
    keep = db > 1e-6
    inj = float(np.min(da[keep] / db[keep]))
    return {"max_leaf_deviation": worst, "injectivity_proxy": inj,
            "samples": samples}


def empirical_contraction(f, h, S, params=None, n_pairs=200, seed=None):
    """Measured contraction data of the map Phi on the working ball."""
    params = params or SolverParams()
    seed = params.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    resolution = (tuple(params.resolution) if params.resolution is not None
                  else default_resolution(f.dim))
    ctx = TransportContext(f, h, S, resolution, depth=params.neumann_depth)
    eps = params.epsilon
    ratio = 0.0
    image_sup = 0.0
    for _ in range(n_pairs):
        w1 = random_section(resolution, f.dim, rng,
                            scale=eps * rng.random())
        w2 = random_section(resolution, f.dim, rng,
                            scale=eps * rng.random())
        n1 = norm1(w1, S)
        if n1 > eps:
            w1 = w1 * (eps / n1)
        n2 = norm1(w2, S)
        if n2 > eps:
            w2 = w2 * (eps / n2)
        p1, p2 = ctx.phi(w1), ctx.phi(w2)
        gap = norm1(w1 - w2, S)
        if gap > 1e-12:
            ratio = max(ratio, norm1(p1 - p2, S) / gap)
        image_sup = max(image_sup, norm1(p1, S), norm1(p2, S))
    return {"lipschitz_ratio": ratio, "image_sup": image_sup,
            "epsilon": eps, "image_bound": 0.75 * eps,
            "ratio_ok": ratio <= 0.5,
            "image_ok": image_sup <= 0.75 * eps + 1e-12,
            "n_pairs": n_pairs}
