"""Timing comparison of the compiled and pure NumPy kernel backends.

Runs the two hot kernels (periodic multilinear interpolation and greedy
separated-set counting) and one end-to-end entropy estimate on each
backend, checking agreement while timing.

Usage: python benchmarks/bench_backends.py [--budget N]
"""

import argparse
import time

import numpy as np

from quasiconj import backends
from quasiconj.backends import _gridnp
from quasiconj.catalog import cat_map
from quasiconj.entropy import bowen_entropy

try:
    from quasiconj.backends import _gridc
except ImportError:
    _gridc = None


def _time(fn, *args, repeat=3):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--budget", type=int, default=16384,
                    help="candidate budget for the end-to-end estimate")
    args = ap.parse_args()

    if _gridc is None:
        print("compiled backend not built; nothing to compare")
        return

    rng = np.random.default_rng(0)
    rows = []

    pts = rng.random((200_000, 3))
    vals = rng.standard_normal((64, 64, 8, 9))
    t_np, e1 = _time(_gridnp.interp_eval, vals, pts)
    t_c, e2 = _time(_gridc.interp_eval, vals, pts)
    assert np.allclose(e1, e2)
    rows.append(("interp_eval 200k pts, 64x64x8 grid, k=9", t_np, t_c))

    orb = rng.random((20_000, 5, 2))
    t_np, c1 = _time(_gridnp.greedy_separated_count, orb, 0.02, repeat=1)
    t_c, c2 = _time(_gridc.greedy_separated_count, orb, 0.02, repeat=1)
    assert c1 == c2
    rows.append(("greedy count 20k orbits, K=5, eps=0.02", t_np, t_c))

    f = cat_map()
    t_np, v1 = _time(
        lambda: _with_backend(_gridnp, f, args.budget), repeat=1)
    t_c, v2 = _time(
        lambda: _with_backend(_gridc, f, args.budget), repeat=1)
    assert v1 == v2
    rows.append((f"bowen_entropy cat map, budget {args.budget}", t_np, t_c))

    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'numpy':>9}  {'compiled':>9}  {'speedup':>8}")
    for name, t_np, t_c in rows:
        print(f"{name:<{width}}  {t_np:>8.3f}s  {t_c:>8.3f}s  "
              f"{t_np / t_c:>7.1f}x")
    print(f"live backend for normal imports: {backends.BACKEND}")


def _with_backend(impl, f, budget):
    old = backends._impl
    backends._impl = impl
    try:
        return bowen_entropy(f, 10, sample_budget=budget)
    finally:
        backends._impl = old


if __name__ == "__main__":
    main()
