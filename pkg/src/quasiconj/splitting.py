"""Invariant splittings E^s + E^c + E^u, their projections and constants.

Two representations: a constant splitting from the eigenstructure of a
linear model, and a per-grid-point splitting estimated by power iteration
of the differential cocycle along orbits.  Both store oblique projections
(each factor projected along the sum of the other two) and the growth
constants, with the expansion/contraction normalization C = 1.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backends
from .sections import grid_nodes


class SplittingError(ValueError):
    """Raised when no admissible splitting exists for the requested data."""


@dataclass(frozen=True)
class Splitting:
    """Stored splitting with projections, frames, and measured constants.

    For the constant representation the frame/projection arrays have shape
    (d, d); for per_grid_point they have shape (n_nodes, d, d) over the
    stated grid and interpolate off-node.  Frame columns are ordered
    stable block, center block, unstable block.
    """

    representation: str
    dims: tuple
    lam: float
    lam_prime: float
    mu_prime: float
    mu: float
    L: float
    L_measured: float
    frames: np.ndarray
    proj_s: np.ndarray
    proj_c: np.ndarray
    proj_u: np.ndarray
    grid_resolution: Optional[tuple] = None

    @property
    def d(self):
        return int(sum(self.dims))

    @property
    def is_constant(self):
        return self.representation == "constant"

    def _interp(self, arr, pts):
        k = arr.shape[-1] * arr.shape[-2]
        vals = backends.interp_eval(
            arr.reshape(self.grid_resolution + (k,)), np.atleast_2d(pts)
        )
        return vals.reshape(len(np.atleast_2d(pts)), arr.shape[-2], arr.shape[-1])

    def proj_arrays(self, pts, which):
        """Projection matrices at the given points, shape (n, d, d)."""
        proj = {"s": self.proj_s, "c": self.proj_c, "u": self.proj_u}[which]
        pts = np.atleast_2d(pts)
        if self.is_constant:
            return np.broadcast_to(proj, (pts.shape[0],) + proj.shape)
        return self._interp(proj, pts)

    def project_values(self, pts, vals, which):
        """Apply the chosen projection pointwise to (n, d) vectors."""
        mats = self.proj_arrays(pts, which)
        return np.einsum("nij,nj->ni", mats, np.atleast_2d(vals))

    def frames_at(self, pts):
        """Frame matrices at points (columns ordered s | c | u)."""
        pts = np.atleast_2d(pts)
        if self.is_constant:
            return np.broadcast_to(self.frames, (pts.shape[0],) + self.frames.shape)
        return self._interp(self.frames, pts)

    def basis(self, which):
        """Constant-representation basis of one block, columns (d, d_i)."""
        if not self.is_constant:
            raise SplittingError("per-grid splittings have no global basis")
        ds, dc, du = self.dims
        sl = {"s": slice(0, ds), "c": slice(ds, ds + dc), "u": slice(ds + dc, None)}
        return self.frames[:, sl[which]]

    def center_field(self, pts):
        """Unit center direction at points (d_c = 1 only), sign-aligned."""
        ds, dc, du = self.dims
        if dc != 1:
            raise SplittingError("center field requires a one-dimensional center")
        frames = self.frames_at(pts)
        vec = frames[:, :, ds]
        return vec / np.linalg.norm(vec, axis=-1, keepdims=True)


def _measure_L(proj_c_fn, d, n_samples=100_000, rng=None, margin=1.1):
    """Empirical norm-equivalence constant over random unit vectors."""
    rng = np.random.default_rng(0 if rng is None else rng)
    w = rng.standard_normal((n_samples, d))
    w /= np.linalg.norm(w, axis=-1, keepdims=True)
    wc = proj_c_fn(w)
    ratio = np.linalg.norm(wc, axis=-1) + np.linalg.norm(w - wc, axis=-1)
    measured = float(np.max(ratio))
    return margin * measured, measured


def _order_blocks(moduli, a, b, boundary_tol=1e-9, ambiguity_tol=1e-6):
    """Classify eigenvalue moduli into stable / center / unstable indices."""
    labels = []
    for m in moduli:
        if abs(m - a) <= boundary_tol or abs(m - b) <= boundary_tol:
            labels.append("c")
        elif boundary_tol < a - m < ambiguity_tol or boundary_tol < m - b < ambiguity_tol:
            raise SplittingError(
                f"eigenvalue modulus {m:.9g} sits on a center-band boundary"
            )
        elif m < a:
            labels.append("s")
        elif m > b:
            labels.append("u")
        else:
            labels.append("c")
    return labels


def exact_splitting(f, center_moduli_band=(1.0, 1.0)):
    """Constant splitting of a linear MapSpec from its eigenstructure.

    center_moduli_band = [a, b] fixes which eigenvalue moduli count as
    center.  Constants are the extreme moduli per block; L is measured on
    random vectors with a 10% safety margin.
    """
    if not f.is_linear or f.matrix is None:
        raise SplittingError("exact_splitting needs a linear MapSpec")
    a, b = center_moduli_band
    if not (a <= 1.0 <= b):
        raise SplittingError("center band must contain 1")
    A = f.matrix
    d = A.shape[0]
    evals, evecs = np.linalg.eig(A)
    # build real invariant lines/planes, pairing complex conjugates
    cols = []
    moduli = []
    used = np.zeros(len(evals), dtype=bool)
    for i in range(len(evals)):
        if used[i]:
            continue
        lam_i = evals[i]
        v = evecs[:, i]
        if abs(lam_i.imag) <= 1e-12:
            cols.append([np.real(v)])
            moduli.append(abs(lam_i.real))
            used[i] = True
        else:
            j = int(np.argmin(np.abs(evals - np.conj(lam_i))))
            used[i] = used[j] = True
            cols.append([np.real(v), np.imag(v)])
            moduli.append(abs(lam_i))
    labels = _order_blocks(moduli, a, b)
    ordered = {"s": [], "c": [], "u": []}
    block_moduli = {"s": [], "c": [], "u": []}
    for label, vecs, m in zip(labels, cols, moduli):
        for v in vecs:
            ordered[label].append(v / np.linalg.norm(v))
            block_moduli[label].append(m)
    ds, dc, du = (len(ordered[k]) for k in ("s", "c", "u"))
    frame = np.stack(ordered["s"] + ordered["c"] + ordered["u"], axis=-1)
    if np.linalg.cond(frame) > 1e8:
        raise SplittingError("eigenbasis is numerically defective")
    frame_inv = np.linalg.inv(frame)
    projs = {}
    offsets = {"s": (0, ds), "c": (ds, ds + dc), "u": (ds + dc, d)}
    for key, (lo, hi) in offsets.items():
        projs[key] = frame[:, lo:hi] @ frame_inv[lo:hi, :]
    lam = max(block_moduli["s"], default=0.0)
    mu = min(block_moduli["u"], default=np.inf)
    lam_p = min(block_moduli["c"], default=1.0)
    mu_p = max(block_moduli["c"], default=1.0)
    _check_ordering(lam, lam_p, mu_p, mu, dc)
    L, L_measured = _measure_L(lambda w: w @ projs["c"].T, d)
    return Splitting(
        representation="constant",
        dims=(ds, dc, du),
        lam=float(lam),
        lam_prime=float(lam_p),
        mu_prime=float(mu_p),
        mu=float(mu),
        L=L,
        L_measured=L_measured,
        frames=frame,
        proj_s=projs["s"],
        proj_c=projs["c"],
        proj_u=projs["u"],
    )


def _check_ordering(lam, lam_p, mu_p, mu, dc):
    ok = 0.0 <= lam < 1.0 < mu
    if dc > 0:
        ok = ok and lam < lam_p <= mu_p < mu
    if not ok:
        raise SplittingError(
            f"growth constants out of order: lam={lam:.6g} lam'={lam_p:.6g} "
            f"mu'={mu_p:.6g} mu={mu:.6g}"
        )


def _orbit_points(f, pts, steps, direction):
    """Orbit layers [pts, f(pts), ...] or backward under the inverse."""
    layers = [pts]
    cur = pts
    step_fn = f.forward if direction > 0 else f.inverse
    for _ in range(steps):
        cur = step_fn(cur)
        layers.append(cur)
    return layers


def _power_iteration_frames(matrices_seq, q0, measure_last=10):
    """Push an orthonormal frame through a matrix sequence with QR renorm.

    Returns the final frames (n, d, k) and per-step growth diagonals from
    the last `measure_last` steps, shape (n_steps_kept, n, k).
    """
    q = q0
    growth = []
    n_steps = len(matrices_seq)
    for j, mats in enumerate(matrices_seq):
        q = mats @ q
        q, r = np.linalg.qr(q)
        diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
        # keep QR deterministic: flip columns so R has positive diagonal
        sign = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
        sign = np.where(sign == 0.0, 1.0, sign)
        q = q * sign[..., None, :]
        if j >= n_steps - measure_last:
            growth.append(diag)
    return q, np.array(growth)


def _detect_dims(rates, gap=0.1):
    """Partition sorted-descending growth rates into u / c / s blocks."""
    du = int(np.sum(rates > gap))
    ds = int(np.sum(rates < -gap))
    dc = len(rates) - du - ds
    bands = sorted(rates, reverse=True)
    for i in range(len(bands) - 1):
        same_block = not (
            (i == du - 1 and dc + ds > 0) or (i == du + dc - 1 and ds > 0)
        )
        if not same_block and bands[i] - bands[i + 1] < gap:
            raise SplittingError("no spectral gap detected between growth bands")
    return ds, dc, du


def estimate_splitting(f, orbit_length=40, grid_resolution=None):
    """Per-grid-point splitting by power iteration along orbits.

    E^u(x) comes from pushing a frame forward along the backward orbit,
    E^s(x) from the same under f^{-1}, and E^c(x) as the annihilator
    intersection computed from the dual (inverse-transpose) cocycle, which
    is the invariant complement of E^s + E^u.  Growth constants are
    empirical min/max per-step factors over the grid; L is measured on
    random vectors with a 10% safety margin.
    """
    d = f.dim
    if grid_resolution is None:
        grid_resolution = (64, 64) if d == 2 else (24, 24, 24)
    grid_resolution = tuple(int(r) for r in grid_resolution)
    nodes = grid_nodes(grid_resolution)
    n = nodes.shape[0]
    rng = np.random.default_rng(7)

    # probe growth rates with a full frame to find the block dimensions
    probe = nodes[:: max(1, n // 8)][:8]
    back = _orbit_points(f, probe, orbit_length, -1)
    mats = [f.differential(back[j]) for j in range(orbit_length, 0, -1)]
    q0, _ = np.linalg.qr(rng.standard_normal((probe.shape[0], d, d)))
    q = q0
    logsum = np.zeros((probe.shape[0], d))
    for m in mats:
        q = m @ q
        q, r = np.linalg.qr(q)
        logsum += np.log(np.abs(np.diagonal(r, axis1=-2, axis2=-1)))
    rates = np.mean(logsum / orbit_length, axis=0)
    ds, dc, du = _detect_dims(np.sort(rates)[::-1])

    # forward push along backward orbits: E^u and the annihilator of E^cu
    back = _orbit_points(f, nodes, orbit_length, -1)
    fwd_mats = [f.differential(back[j]) for j in range(orbit_length, 0, -1)]
    dual_mats = [np.linalg.inv(m).swapaxes(-1, -2) for m in fwd_mats]
    qu0, _ = np.linalg.qr(rng.standard_normal((n, d, max(du, 1))))
    eu, gu = _power_iteration_frames(fwd_mats, qu0) if du else (None, None)
    qn0, _ = np.linalg.qr(rng.standard_normal((n, d, max(ds, 1))))
    ann_cu = _power_iteration_frames(dual_mats, qn0)[0] if ds else None

    # backward push along forward orbits: E^s and the annihilator of E^cs
    fwd = _orbit_points(f, nodes, orbit_length, +1)
    inv_mats = [np.linalg.inv(f.differential(fwd[j])) for j in range(orbit_length, 0, -1)]
    dualb_mats = [np.linalg.inv(m).swapaxes(-1, -2) for m in inv_mats]
    qs0, _ = np.linalg.qr(rng.standard_normal((n, d, max(ds, 1))))
    es, gs = _power_iteration_frames(inv_mats, qs0) if ds else (None, None)
    qm0, _ = np.linalg.qr(rng.standard_normal((n, d, max(du, 1))))
    ann_cs = _power_iteration_frames(dualb_mats, qm0)[0] if du else None

    # center = annihilator of span(ann_cu | ann_cs)
    if dc > 0:
        rows = []
        if ann_cu is not None:
            rows.append(ann_cu.swapaxes(-1, -2))
        if ann_cs is not None:
            rows.append(ann_cs.swapaxes(-1, -2))
        stacked = np.concatenate(rows, axis=-2)
        _, _, vt = np.linalg.svd(stacked)
        ec = vt[:, d - dc :, :].swapaxes(-1, -2)
    else:
        ec = None

    blocks = [blk for blk in (es, ec, eu) if blk is not None]
    frames = np.concatenate(blocks, axis=-1)
    frames = _align_frame_signs(frames)
    frame_inv = np.linalg.inv(frames)
    sl = {"s": (0, ds), "c": (ds, ds + dc), "u": (ds + dc, d)}
    projs = {}
    for key, (lo, hi) in sl.items():
        projs[key] = frames[:, :, lo:hi] @ frame_inv[:, lo:hi, :]

    # measured growth constants; center factors from single-step push
    lam = float(1.0 / np.min(gs)) if ds else 0.0
    mu = float(np.min(gu)) if du else np.inf
    if dc > 0:
        cvec = f.differential(nodes) @ frames[:, :, ds : ds + dc]
        sv = np.linalg.svd(cvec, compute_uv=False)
        lam_p = float(np.min(sv))
        mu_p = float(np.max(sv))
    else:
        lam_p = mu_p = 1.0
    _check_ordering(lam, lam_p, mu_p, mu, dc)
    L, L_measured = _measure_L(
        lambda w: np.einsum(
            "nij,nj->ni",
            projs["c"][rng.integers(0, n, len(w))],
            w,
        ),
        d,
    )
    return Splitting(
        representation="per_grid_point",
        dims=(ds, dc, du),
        lam=lam,
        lam_prime=lam_p,
        mu_prime=mu_p,
        mu=mu,
        L=L,
        L_measured=L_measured,
        frames=frames,
        proj_s=projs["s"],
        proj_c=projs["c"],
        proj_u=projs["u"],
        grid_resolution=grid_resolution,
    )


def _align_frame_signs(frames):
    """Flip column signs toward the grid-mean direction for interpolability."""
    mean = np.mean(frames, axis=0)
    mean /= np.maximum(np.linalg.norm(mean, axis=0, keepdims=True), 1e-30)
    dots = np.einsum("nij,ij->nj", frames, mean)
    sign = np.where(dots < 0.0, -1.0, 1.0)
    return frames * sign[:, None, :]


def estimate_frames_at(f, pts, orbit_length, dims):
    """Fresh power-iteration frames at arbitrary points (for invariance checks)."""
    ds, dc, du = dims
    d = f.dim
    pts = np.atleast_2d(pts)
    n = pts.shape[0]
    rng = np.random.default_rng(11)
    back = _orbit_points(f, pts, orbit_length, -1)
    fwd_mats = [f.differential(back[j]) for j in range(orbit_length, 0, -1)]
    qu0, _ = np.linalg.qr(rng.standard_normal((n, d, max(du, 1))))
    eu = _power_iteration_frames(fwd_mats, qu0)[0] if du else None
    fwd = _orbit_points(f, pts, orbit_length, +1)
    inv_mats = [np.linalg.inv(f.differential(fwd[j])) for j in range(orbit_length, 0, -1)]
    qs0, _ = np.linalg.qr(rng.standard_normal((n, d, max(ds, 1))))
    es = _power_iteration_frames(inv_mats, qs0)[0] if ds else None
    ec = None
    if dc > 0:
        dual_mats = [np.linalg.inv(m).swapaxes(-1, -2) for m in fwd_mats]
        qn0, _ = np.linalg.qr(rng.standard_normal((n, d, max(ds, 1))))
        ann_cu = _power_iteration_frames(dual_mats, qn0)[0] if ds else None
        dualb_mats = [np.linalg.inv(m).swapaxes(-1, -2) for m in inv_mats]
        qm0, _ = np.linalg.qr(rng.standard_normal((n, d, max(du, 1))))
        ann_cs = _power_iteration_frames(dualb_mats, qm0)[0] if du else None
        rows = [
            blk.swapaxes(-1, -2) for blk in (ann_cu, ann_cs) if blk is not None
        ]
        stacked = np.concatenate(rows, axis=-2)
        _, _, vt = np.linalg.svd(stacked)
        ec = vt[:, d - dc :, :].swapaxes(-1, -2)
    blocks = [blk for blk in (es, ec, eu) if blk is not None]
    return np.concatenate(blocks, axis=-1)


def project(S, x, w, which):
    """Oblique projection of a based tangent vector through the splitting."""
    from .torus import TangentVector

    if w.base != x:
        raise ValueError("vector is not based at x")
    vals = S.project_values(x.coords[None, :], w.components[None, :], which)
    return TangentVector(x, vals[0])


def leaf_points(S, pts, arc, step=0.01):
    """Points at signed arclength `arc` along center leaves through `pts`.

    Integrates the unit center field with classical RK4; constant
    splittings short-circuit to a single exact translation.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    if S.is_constant:
        direction = S.basis("c")[:, 0]
        return (pts + arc * direction) % 1.0
    n_steps = max(4, int(np.ceil(abs(arc) / step)))
    h = arc / n_steps
    y = pts % 1.0
    for _ in range(n_steps):
        k1 = S.center_field(y)
        k2 = S.center_field((y + 0.5 * h * k1) % 1.0)
        k3 = S.center_field((y + 0.5 * h * k2) % 1.0)
        k4 = S.center_field((y + h * k3) % 1.0)
        y = (y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)) % 1.0
    return y


@dataclass(frozen=True)
class HyperbolicityReport:
    """Worst margins of the C = 1 growth inequalities per bundle family."""

    passed: bool
    worst_margin: float
    margins: dict
    n_max: int
    tolerance: float


def verify_hyperbolicity(f, S, n_max=10, samples=200, tolerance=1e-9, rng=None):
    """Check the growth inequalities with C = 1 along sampled orbits.

    Stable vectors must contract at least like lam^n forward, unstable
    vectors like mu^{-n} backward, and center vectors must stay inside
    [lam'^n, mu'^n] forward (checked via both forward and backward push).
    Margins are (bound - attained) with positive meaning satisfied.
    """
    rng = np.random.default_rng(0 if rng is None else rng)
    d = f.dim
    ds, dc, du = S.dims
    if S.is_constant:
        pts = rng.random((samples, d))
    else:
        nodes = grid_nodes(S.grid_resolution)
        pts = nodes[rng.integers(0, nodes.shape[0], samples)]
    frames = S.frames_at(pts)
    margins = {}

    def run(block_lo, block_width, direction, bound_fn, label, side):
        if block_width == 0:
            return
        idx = rng.integers(block_lo, block_lo + block_width, samples)
        v = frames[np.arange(samples), :, idx]
        v = v / np.linalg.norm(v, axis=-1, keepdims=True)
        x = pts
        worst = np.inf
        for n_step in range(1, n_max + 1):
            if direction > 0:
                v = np.einsum("nij,nj->ni", f.differential(x), v)
                x = f.forward(x)
            else:
                x = f.inverse(x)
                v = np.einsum("nij,nj->ni", np.linalg.inv(f.differential(x)), v)
            nrm = np.linalg.norm(v, axis=-1)
            bound = bound_fn(n_step)
            if side > 0:
                m = float(np.min(bound - nrm))
            else:
                m = float(np.min(nrm - bound))
            worst = min(worst, m)
        margins[label] = worst

    run(0, ds, +1, lambda k: S.lam**k, "stable_forward", +1)
    run(ds + dc, du, -1, lambda k: S.mu ** (-k), "unstable_backward", +1)
    run(ds, dc, +1, lambda k: S.mu_prime**k, "center_forward_upper", +1)
    run(ds, dc, +1, lambda k: S.lam_prime**k, "center_forward_lower", -1)
    worst = min(margins.values()) if margins else 0.0
    return HyperbolicityReport(
        passed=bool(worst >= -tolerance),
        worst_margin=worst,
        margins=margins,
        n_max=n_max,
        tolerance=tolerance,
    )
