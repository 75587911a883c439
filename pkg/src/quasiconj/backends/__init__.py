"""Kernel backend selection: compiled Cython core with a NumPy fallback.

The compiled module is used when it imported cleanly; setting the
environment variable QUASICONJ_PURE_PYTHON=1 forces the fallback.  Both
expose the same four kernels; `BACKEND` records which one is live.
"""

import os

from . import _gridnp

if os.environ.get("QUASICONJ_PURE_PYTHON", "") == "1":
    _impl = _gridnp
    BACKEND = "python"
else:
    try:
        from . import _gridc as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _gridnp
        BACKEND = "python"


def interp_weights(resolution, pts):
    return _impl.interp_weights(tuple(int(r) for r in resolution), pts)


def interp_apply(flat_values, idx, wts):
    return _impl.interp_apply(flat_values, idx, wts)


def interp_eval(values, pts):
    return _impl.interp_eval(values, pts)


def greedy_separated_count(orbits, eps):
    return int(_impl.greedy_separated_count(orbits, float(eps)))
