"""Quasi-conjugacy fixed-point solvers and entropy tools for partially
hyperbolic torus maps.

Subpackages by theme: torus (chart geometry), catalog (model systems),
splitting (invariant bundles), sections (discrete section space),
operators/solver (the fixed-point machinery), entropy (growth, separated
sets, holonomy), config/cli (experiment driver).  backends selects the
compiled kernel core or its NumPy fallback.
"""

from .backends import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
