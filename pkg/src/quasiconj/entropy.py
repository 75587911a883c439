"""Entropy estimators and center-foliation diagnostics.

Volume growth of iterated unstable disks, separated-set entropy on orbit
clouds, the reparametrization entropy brackets, holonomy maps along the
center foliation with their equicontinuity modulus, and the two-manifold
volume comparison inequality used to transfer growth rates between
nearby systems.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import backends
from .torus import min_image, wrap_coords

SEGMENT_CAP = 1.0 / 64.0
# chart safety: an image chord must stay below the wrap scale
_CHORD_WRAP_LIMIT = 0.45


class EntropyError(ValueError):
    pass


@dataclass(frozen=True)
class GrowthSeries:
    """Log-volume growth record of an iterated unstable disk."""

    n_values: tuple
    volumes: tuple
    slope: float
    truncated: bool = False

    def __post_init__(self):
        if any(v <= 0.0 for v in self.volumes):
            raise EntropyError("volumes must be strictly positive")


def _fit_slope(n_values, volumes):
    """Least-squares slope of log volume over the last half of the series."""
    n = np.asarray(n_values, dtype=np.float64)
    lv = np.log(np.asarray(volumes, dtype=np.float64))
    half = len(n) // 2
    if len(n) - half < 2:
        half = max(len(n) - 2, 0)
    return float(np.polyfit(n[half:], lv[half:], 1)[0])


def _sup_differential_norm(f, samples=256):
    pts = wrap_coords(np.random.default_rng(0).random((samples, f.dim)))
    if f.is_linear and f.matrix is not None:
        return float(np.linalg.norm(f.matrix, 2))
    return float(np.max(np.linalg.svd(f.differential(pts),
                                      compute_uv=False)[..., 0]))


def _refine_polyline(pts, cap):
    """Insert chord subdivisions so every segment is at most cap long."""
    chords = min_image(pts[:-1], pts[1:])
    lengths = np.linalg.norm(chords, axis=-1)
    pieces = np.maximum(np.ceil(lengths / cap).astype(np.int64), 1)
    if int(pieces.max(initial=1)) == 1:
        return pts
    total = int(pieces.sum()) + 1
    out = np.empty((total, pts.shape[1]))
    # per-segment subdivision fractions k/c without a Python loop
    starts = np.repeat(np.cumsum(pieces) - pieces, pieces)
    frac = (np.arange(total - 1) - starts) / np.repeat(pieces, pieces)
    base = np.repeat(pts[:-1], pieces, axis=0)
    step = np.repeat(chords, pieces, axis=0)
    out[: total - 1] = base + frac[:, None] * step
    out[total - 1] = pts[-1]
    return wrap_coords(out)


def _polyline_length(pts):
    return float(np.sum(np.linalg.norm(min_image(pts[:-1], pts[1:]), axis=-1)))


def _triangle_areas(tris):
    e1 = min_image(tris[:, 0], tris[:, 1])
    e2 = min_image(tris[:, 0], tris[:, 2])
    g11 = np.einsum("nd,nd->n", e1, e1)
    g22 = np.einsum("nd,nd->n", e2, e2)
    g12 = np.einsum("nd,nd->n", e1, e2)
    return 0.5 * np.sqrt(np.maximum(g11 * g22 - g12 * g12, 0.0))


def _refine_patch(tris, cap):
    """Quadrisect triangles whose longest edge exceeds cap.

    Hanging nodes are harmless: areas are summed per triangle.
    """
    while True:
        e = np.stack([
            min_image(tris[:, 0], tris[:, 1]),
            min_image(tris[:, 1], tris[:, 2]),
            min_image(tris[:, 0], tris[:, 2]),
        ], axis=1)
        longest = np.max(np.linalg.norm(e, axis=-1), axis=-1)
        big = longest > cap
        if not np.any(big):
            return tris
        keep = tris[~big]
        t = tris[big]
        m01 = wrap_coords(t[:, 0] + 0.5 * min_image(t[:, 0], t[:, 1]))
        m12 = wrap_coords(t[:, 1] + 0.5 * min_image(t[:, 1], t[:, 2]))
        m02 = wrap_coords(t[:, 0] + 0.5 * min_image(t[:, 0], t[:, 2]))
        kids = np.concatenate([
            np.stack([t[:, 0], m01, m02], axis=1),
            np.stack([m01, t[:, 1], m12], axis=1),
            np.stack([m02, m12, t[:, 2]], axis=1),
            np.stack([m01, m12, m02], axis=1),
        ])
        tris = np.concatenate([keep, kids])


def unstable_polyline(f, S, x, r, n, cap=SEGMENT_CAP, max_points=4_000_000):
    """Refined polyline tracing f^n of the local unstable segment at x.

    Returns wrapped points; consecutive chords stay below the wrap-safe
    cap so lengths are chart-exact.
    """
    x = np.asarray(x, dtype=np.float64)
    ds, dc, _ = S.dims
    direction = S.frames_at(x[None, :])[0][:, ds + dc]
    direction = direction / np.linalg.norm(direction)
    m0 = max(int(np.ceil(2 * r / cap)), 8) + 1
    pts = wrap_coords(x[None, :] + np.linspace(-r, r, m0)[:, None] * direction)
    dnorm = _sup_differential_norm(f)
    cap_max = _CHORD_WRAP_LIMIT / dnorm
    for _ in range(n):
        length = _polyline_length(pts)
        cap_eff = min(max(cap, 1.05 * length / max_points), cap_max)
        pts = _refine_polyline(pts, cap_eff)
        pts = f.geometry.normalize(f.forward(pts))
    return pts


def iterate_unstable_disk(f, S, x, r, n_max, refine=True,
                          max_points=4_000_000):
    """Volume series of the iterated local unstable disk at x.

    One-dimensional unstable bundles are traced as adaptive polylines,
    two-dimensional ones as triangle patches.  The refinement cap starts
    at SEGMENT_CAP and relaxes (up to the chart wrap limit) when the
    point budget would be exceeded; on affine leaves chord summation is
    exact at any cap below the wrap limit, so only a genuinely curved
    over-budget run is truncated and flagged.
    """
    if not (0.0 < r < 0.25):
        raise EntropyError("disk radius must lie in (0, 1/4)")
    du = S.dims[2]
    if du not in (1, 2):
        raise EntropyError(f"unstable dimension {du} not supported")
    x = np.asarray(x, dtype=np.float64)
    dnorm = _sup_differential_norm(f)
    cap_max = _CHORD_WRAP_LIMIT / max(dnorm, 1.0)
    cap0 = SEGMENT_CAP if refine else cap_max
    geom = f.geometry
    truncated = False
    # seed directions from the frame at x (works for both representations)
    ds, dc, _ = S.dims
    u_frame = S.frames_at(x[None, :])[0][:, ds + dc:]
    u_frame = u_frame / np.linalg.norm(u_frame, axis=0, keepdims=True)

    n_values, volumes = [], []
    if du == 1:
        direction = u_frame[:, 0]
        m0 = max(int(np.ceil(2 * r / cap0)), 8) + 1
        pts = wrap_coords(x[None, :]
                          + np.linspace(-r, r, m0)[:, None] * direction)
        for n in range(n_max + 1):
            length = _polyline_length(pts)
            n_values.append(n)
            volumes.append(length)
            if n == n_max:
                break
            need = 1.05 * length / max_points
            cap_eff = min(max(cap0, need), cap_max)
            if need > cap_max:
                truncated = True
                break
            pts = _refine_polyline(pts, cap_eff)
            pts = geom.normalize(f.forward(pts))
    else:
        basis = u_frame
        half = r / np.sqrt(2.0)
        k = max(int(np.ceil(2 * half / cap0)), 4)
        ticks = np.linspace(-half, half, k + 1)
        uu, vv = np.meshgrid(ticks, ticks, indexing="ij")
        corners = (uu[..., None] * basis[:, 0] + vv[..., None] * basis[:, 1])
        grid = wrap_coords(x + corners)
        a = grid[:-1, :-1].reshape(-1, f.dim)
        b = grid[1:, :-1].reshape(-1, f.dim)
        c = grid[:-1, 1:].reshape(-1, f.dim)
        d4 = grid[1:, 1:].reshape(-1, f.dim)
        tris = np.concatenate([
            np.stack([a, b, c], axis=1),
            np.stack([b, d4, c], axis=1),
        ])
        for n in range(n_max + 1):
            area = float(np.sum(_triangle_areas(tris)))
            n_values.append(n)
            volumes.append(area)
            if n == n_max:
                break
            # relax the cap so stored vertices (3 per triangle) stay
            # within the point budget
            need = np.sqrt(12.0 * area / max_points)
            cap_eff = min(max(cap0, need), cap_max)
            if need > cap_max:
                truncated = True
                break
            tris = _refine_patch(tris, cap_eff)
            tris = geom.normalize(
                f.forward(tris.reshape(-1, f.dim))).reshape(tris.shape)

    slope = _fit_slope(n_values, volumes)
    return GrowthSeries(tuple(n_values), tuple(volumes), slope, truncated)


_DEFAULT_SAMPLES_2D = ((0.13, 0.71), (0.58, 0.29), (0.81, 0.47))


def _default_samples(dim):
    base = np.asarray(_DEFAULT_SAMPLES_2D)
    out = np.zeros((base.shape[0], dim))
    out[:, :2] = base
    if dim > 2:
        out[:, 2:] = 0.37
    return out


def chi_u(f, S, sample_points=None, r=0.1, n_max=15, with_diagnostics=False):
    """Volume-growth exponent: max fitted slope over sample points.

    The run is repeated at r/2; the spread of the two estimates is the
    radius-independence diagnostic available via with_diagnostics.
    """
    pts = (_default_samples(f.dim) if sample_points is None
           else np.atleast_2d(np.asarray(sample_points, dtype=np.float64)))
    slopes = [iterate_unstable_disk(f, S, p, r, n_max).slope for p in pts]
    value = float(np.max(slopes))
    if not with_diagnostics:
        return value
    slopes_half = [iterate_unstable_disk(f, S, p, r / 2, n_max).slope
                   for p in pts]
    value_half = float(np.max(slopes_half))
    return value, {
        "per_point": tuple(float(s) for s in slopes),
        "r": r,
        "value_half_r": value_half,
        "r_spread": abs(value - value_half),
    }


_ALIGN_STEPS = 6


def _aligned_candidates(f, sample_budget, n_curves, phase=0.0,
                        align_steps=_ALIGN_STEPS):
    """Candidate points sampled by arclength along expanded curves.

    Short generic segments at staggered seeds are pushed forward a few
    steps; expansion aligns them with the most-expanded direction, which
    is exactly where (m, eps)-distinguishability accumulates, so an
    arclength sample of the images stays dense in the Bowen metrics over
    a useful window.  The sample positions are jittered to break
    equal-spacing resonances in the separated counts.  Maps without
    expansion leave the segments short and every later count is flat,
    giving slope zero.
    """
    d = f.dim
    base = 0.1 + 0.61803398875 * np.arange(d)
    direction = np.cos(1.0 + np.arange(d))
    direction /= np.linalg.norm(direction)
    ticks = np.linspace(-0.02, 0.02, 65)
    curves = []
    for k in range(n_curves):
        x0 = base + (k / n_curves + phase) * (1.0 + 0.01 * np.arange(d))
        pts = wrap_coords(x0[None, :] + ticks[:, None] * direction)
        for _ in range(align_steps):
            pts = _refine_polyline(pts, SEGMENT_CAP)
            pts = f.geometry.normalize(f.forward(pts))
        chords = min_image(pts[:-1], pts[1:])
        seglen = np.linalg.norm(chords, axis=-1)
        curves.append((pts, chords, seglen,
                       np.concatenate([[0.0], np.cumsum(seglen)])))
    total_len = sum(c[3][-1] for c in curves)
    out = []
    # low-discrepancy stride: near-uniform gaps with no divisor locking,
    # and not commensurate with quadratic units in sqrt(5)
    stride = np.sqrt(2.0) - 1.0
    for pts, chords, seglen, cum in curves:
        # allocate by length so the sample spacing is curve-independent
        per_curve = max(int(round(sample_budget * cum[-1] / total_len)), 8)
        targets = np.sort((np.arange(per_curve) * stride) % 1.0) * cum[-1]
        idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0,
                      len(seglen) - 1)
        frac = (targets - cum[idx]) / np.maximum(seglen[idx], 1e-300)
        out.append(wrap_coords(pts[idx] + np.clip(frac, 0.0, 1.0)[:, None]
                               * chords[idx]))
    return np.concatenate(out)


def bowen_entropy(f, n, epsilon_list=(0.1, 0.05), sample_budget=16384,
                  n_curves=4, phase=0.0, window_fraction=0.1,
                  with_diagnostics=False):
    """Separated-set growth estimate of topological entropy.

    Greedy maximal (m, eps)-separated subsets of a forward-orbit sample
    (arclength-dense along expanded generic curves) are counted for
    m = 1..n; the normalized count (1/m) log N is extrapolated by a
    least-squares slope of log N over the window where the sample still
    resolves Bowen balls (counts below window_fraction of the budget, a
    proxy for sample spacing staying well under the ball width), and the
    final estimate takes the largest windowed slope over the epsilon
    list.  The sample is finite so the estimate is biased low, never
    high.  Systems whose expansion rate varies across a fibered
    coordinate need enough curves to sample it evenly; n_curves controls
    that tradeoff against the per-curve density, and phase shifts the
    seed anchors so short-window transients can be averaged out across
    repeated runs.  Callers that know the sample spacing resolves their
    scales may widen window_fraction accordingly.
    """
    pts = _aligned_candidates(f, sample_budget, n_curves, phase)
    cloud = len(pts)
    orbits = np.empty((cloud, n + 1, f.dim))
    orbits[:, 0] = pts
    cur = pts
    for k in range(1, n + 1):
        cur = f.geometry.normalize(f.forward(cur))
        orbits[:, k] = cur
    tables = {}
    estimates = []
    flagged = False
    for eps in epsilon_list:
        counts = []
        for m in range(1, n + 1):
            counts.append(backends.greedy_separated_count(
                orbits[:, : m + 1], eps))
            if counts[-1] > cloud * max(1.25 * window_fraction, 0.125):
                break
        m_vals = np.arange(1, len(counts) + 1)
        window = [i for i, c in enumerate(counts)
                  if c <= cloud * window_fraction]
        if len(window) < 2:
            flagged = True
            flat = len(counts) >= 3 and counts[-1] <= 2 * counts[0]
            est = 0.0 if flat else float("nan")
        elif counts[window[-1]] <= 2 * counts[window[0]]:
            # no real growth across the window: flat counts, zero rate
            est = 0.0
        else:
            sel = np.asarray(window)
            est = float(np.polyfit(m_vals[sel],
                                   np.log(np.asarray(counts)[sel]), 1)[0])
        tables[eps] = {"m": tuple(int(m) for m in m_vals),
                       "counts": tuple(int(c) for c in counts),
                       "window": tuple(int(m_vals[i]) for i in window),
                       "slope": est}
        if np.isfinite(est):
            estimates.append(est)
    value = float(np.max(estimates)) if estimates else float("nan")
    if not with_diagnostics:
        return value
    return value, {"tables": tables, "cloud": cloud,
                   "budget_ok": not flagged}


def thomas_bracket(h_f, tau_tilde):
    """Entropy brackets for g = (reparametrized flow at time 1+tau).

    Returns (low, high, low_single, high_single): the squared bracket
    [(1+min tau)^2 h_f, (1+max tau)^2 h_f] and the single-power bracket
    [(1+min tau) h_f, (1+max tau) h_f] obtained from the time-scaling law
    together with invariance of entropy under flow conjugacy.  The two
    disagree for nonzero tau; consumers should report which one the
    measured entropy satisfies rather than assert the squared lower
    bound.
    """
    tau = np.asarray(tau_tilde, dtype=np.float64)
    tmin = float(np.min(tau))
    tmax = float(np.max(tau))
    if 1.0 + tmin <= 0.0:
        raise EntropyError("time change must keep 1 + tau positive")
    return ((1.0 + tmin) ** 2 * h_f, (1.0 + tmax) ** 2 * h_f,
            (1.0 + tmin) * h_f, (1.0 + tmax) * h_f)


@dataclass(frozen=True)
class HolonomySpec:
    """Slide data between two transversals of a center foliation.

    source and target are points whose last coordinate fixes the affine
    transversal plane through them; leaf_direction is a vectorized unit
    center field, or None for the exactly vertical foliation.
    """

    source: np.ndarray
    target: np.ndarray
    leaf_direction: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(
            self, "source",
            np.atleast_1d(np.asarray(self.source, dtype=np.float64)))
        object.__setattr__(
            self, "target",
            np.atleast_1d(np.asarray(self.target, dtype=np.float64)))
        if self.leaf_direction is not None and len(self.source) >= 2:
            _check_transversal(self.leaf_direction, len(self.source))


def _check_transversal(leaf_direction, dim):
    # transversality: the leaf field must cross the height planes
    probe = leaf_direction(_default_samples(dim))
    if float(np.min(np.abs(np.atleast_2d(probe)[:, -1]))) < 0.2:
        raise EntropyError("leaf field is nearly tangent to a transversal")


def _slide_many(pts, target_height, leaf_direction):
    """Follow center leaves from pts to the plane at target_height."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    gap = np.ravel(min_image(pts[:, -1:], np.full((len(pts), 1),
                                                  target_height)))
    if float(np.max(np.abs(gap))) > 0.5 - 1e-9:
        raise EntropyError("no transversal intersection within range")
    if leaf_direction is None:
        out = pts.copy()
        out[:, -1] = target_height
        return out
    y = pts.copy()
    for _ in range(8):
        gap = np.ravel(min_image(y[:, -1:],
                                 np.full((len(y), 1), target_height)))
        if float(np.max(np.abs(gap))) < 1e-13:
            break
        # RK4 along the unit field for the signed remaining height
        h = gap / np.maximum(np.abs(leaf_direction(y)[:, -1]), 0.2)
        k1 = leaf_direction(y)
        k2 = leaf_direction(wrap_coords(y + 0.5 * h[:, None] * k1))
        k3 = leaf_direction(wrap_coords(y + 0.5 * h[:, None] * k2))
        k4 = leaf_direction(wrap_coords(y + h[:, None] * k3))
        y = wrap_coords(y + (h[:, None] / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
    out = y
    out[:, -1] = target_height
    return out


def holonomy_map(spec, x):
    """Slide x along its center leaf onto the target transversal."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if spec.leaf_direction is not None:
        _check_transversal(spec.leaf_direction, x.shape[-1])
    out = _slide_many(x, float(spec.target[-1]), spec.leaf_direction)
    return out[0] if single else out


def almost_parallel_modulus(f, S, beta_list=(0.1, 0.05, 0.01),
                            sample_budget=400, seed=7):
    """Equicontinuity modulus of the center holonomy maps.

    alpha(beta) = max over sampled transversal pairs and point pairs at
    distance <= beta of the holonomy-image distance; offsets at exactly
    beta are included so the product-system supremum is attained.
    """
    rng = np.random.default_rng(seed)
    d = f.dim
    leaf = None if S.is_constant else (lambda p: S.center_field(p))
    table = []
    for beta in beta_list:
        worst = 0.0
        for _ in range(max(sample_budget // 100, 2)):
            s1, s2 = rng.random(2)
            x = rng.random((100, d))
            x[:, -1] = s1
            off = rng.standard_normal((100, d))
            off[:, -1] = 0.0
            off /= np.linalg.norm(off, axis=-1, keepdims=True)
            mag = beta * rng.random((100, 1))
            mag[::2] = beta  # attain the supremum on half the samples
            y = wrap_coords(x + off * mag)
            tx = _slide_many(x, s2, leaf)
            ty = _slide_many(y, s2, leaf)
            dist = np.linalg.norm(min_image(tx, ty), axis=-1)
            worst = max(worst, float(np.max(dist)))
        table.append((float(beta), worst))
    ratios = [a / b for b, a in table]
    verdict = (all(r <= 2.0 + 1e-9 for r in ratios)
               and table[-1][1] <= 2.0 * table[-1][0] + 1e-9)
    return {"table": tuple(table), "equicontinuous": bool(verdict),
            "max_ratio": float(np.max(ratios))}


def _local_volumes(pts, centers, radius):
    """Chord mass of a polyline within extrinsic distance radius of each
    center (segment midpoints decide membership)."""
    chords = min_image(pts[:-1], pts[1:])
    lengths = np.linalg.norm(chords, axis=-1)
    mids = wrap_coords(pts[:-1] + 0.5 * chords)
    out = np.empty(len(centers))
    for i, c in enumerate(centers):
        dist = np.linalg.norm(min_image(mids, c[None, :]), axis=-1)
        out[i] = float(np.sum(lengths[dist <= radius]))
    return out


def volume_comparison_check(W, W_prime, psi, alpha, beta, samples=24,
                            seed=3):
    """Two-polyline volume comparison under a one-to-one point map.

    Measures the regularity constants on samples, spot-checks that psi
    maps beta-neighborhoods into alpha-neighborhoods, and when all
    hypotheses hold asserts Vol(W') <= C Vol(W) with the product-form
    constant; degenerate inputs produce a hypotheses-unmet report.
    """
    W = np.asarray(W, dtype=np.float64)
    Wp = np.asarray(W_prime, dtype=np.float64)
    k = 1
    rng = np.random.default_rng(seed)
    vol_w = _polyline_length(W)
    vol_wp = _polyline_length(Wp)

    iw = rng.integers(0, len(W), size=samples)
    iwp = rng.integers(0, len(Wp), size=samples)
    local_w = _local_volumes(W, W[iw], beta)
    local_wp = _local_volumes(Wp, Wp[iwp], alpha)
    c_under = float(np.min(local_w)) / beta ** k
    c_bar = float(np.max(local_wp)) / alpha ** k

    psi_w = np.asarray(psi(W), dtype=np.float64)
    checks = {}
    gaps = np.linalg.norm(min_image(psi_w[iw][:, None, :],
                                    psi_w[None, iw, :]), axis=-1)
    base = np.linalg.norm(min_image(W[iw][:, None, :], W[None, iw, :]),
                          axis=-1)
    distinct = base > 1e-9
    checks["psi_one_to_one"] = bool(
        np.all(gaps[distinct] > 1e-9)) if np.any(distinct) else True
    checks["regularity_lower"] = bool(c_under > 1e-12)
    checks["regularity_upper"] = bool(np.isfinite(c_bar) and c_bar > 0)
    inc_ok = True
    for i in rng.integers(0, len(W), size=samples):
        near = np.linalg.norm(min_image(W, W[i][None, :]), axis=-1) <= beta
        img_dist = np.linalg.norm(
            min_image(psi_w[near], psi_w[i][None, :]), axis=-1)
        if img_dist.size and float(np.max(img_dist)) > alpha + 1e-9:
            inc_ok = False
            break
    checks["neighborhood_inclusion"] = inc_ok

    hypotheses_met = all(checks.values())
    report = {
        "k": k, "alpha": float(alpha), "beta": float(beta),
        "vol_w": vol_w, "vol_w_prime": vol_wp,
        "c_bar": c_bar, "c_under": c_under,
        "checks": checks, "hypotheses_met": hypotheses_met,
    }
    if hypotheses_met:
        C = c_bar * (2 * alpha) ** k / (c_under * beta ** k)
        report["C"] = float(C)
        report["bound_holds"] = bool(vol_wp <= C * vol_w + 1e-12)
    else:
        report["C"] = None
        report["bound_holds"] = None
    return report


def entropy_local_constancy_experiment(f, perturbation_list, S=None,
                                       r=0.1, n_max=12, bowen_n=8,
                                       sample_budget=16384):
    """Growth exponents of f against a family of nearby maps.

    perturbation_list holds (label, map) pairs; the report carries chi_u
    and the separated-set estimate for every system plus the maximal
    deviations from the base values.
    """
    from .splitting import estimate_splitting, exact_splitting

    def splitting_of(m):
        return exact_splitting(m) if m.is_linear else estimate_splitting(m)

    Sf = S if S is not None else splitting_of(f)
    base_chi = chi_u(f, Sf, r=r, n_max=n_max)
    base_bowen = bowen_entropy(f, bowen_n, sample_budget=sample_budget)
    rows = []
    for label, g in perturbation_list:
        Sg = splitting_of(g)
        cg = chi_u(g, Sg, r=r, n_max=n_max)
        bg = bowen_entropy(g, bowen_n, sample_budget=sample_budget)
        rows.append({"label": str(label), "chi_u": cg, "bowen": bg,
                     "chi_deviation": abs(cg - base_chi),
                     "bowen_deviation": abs(bg - base_bowen)})
    return {
        "base": {"chi_u": base_chi, "bowen": base_bowen},
        "perturbed": tuple(rows),
        "max_chi_deviation": max((r["chi_deviation"] for r in rows),
                                 default=0.0),
        "max_bowen_deviation": max((r["bowen_deviation"] for r in rows),
                                   default=0.0),
    }
