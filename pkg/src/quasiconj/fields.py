"""Closed-form scalar and vector fields on the torus with exact derivatives.

The dynamics catalog only needs a small expression set (constants and single
trigonometric waves plus sums of those), so every field carries an analytic
gradient or Jacobian instead of a finite-difference fallback.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


class ScalarField:
    """Vectorized scalar field q: T^dim -> R with analytic gradient."""

    def __init__(self, dim, fn, grad, label="", is_constant=False, value=None):
        self.dim = int(dim)
        self._fn = fn
        self._grad = grad
        self.label = label
        self.is_constant = bool(is_constant)
        self.constant_value = value

    def __call__(self, pts):
        return self._fn(np.asarray(pts, dtype=np.float64))

    def gradient(self, pts):
        return self._grad(np.asarray(pts, dtype=np.float64))


class VectorField:
    """Vectorized vector field on T^dim with analytic Jacobian."""

    def __init__(self, dim, fn, jac, label=""):
        self.dim = int(dim)
        self._fn = fn
        self._jac = jac
        self.label = label

    def __call__(self, pts):
        return self._fn(np.asarray(pts, dtype=np.float64))

    def jacobian(self, pts):
        return self._jac(np.asarray(pts, dtype=np.float64))

    def __add__(self, other):
        if not isinstance(other, VectorField) or other.dim != self.dim:
            return NotImplemented

        def fn(p):
            return self(p) + other(p)

        def jac(p):
            return self.jacobian(p) + other.jacobian(p)

        return VectorField(self.dim, fn, jac, label=f"{self.label}+{other.label}")


def constant_scalar(dim, value):
    """Constant scalar field."""
    value = float(value)

    def fn(p):
        return np.full(p.shape[:-1], value)

    def grad(p):
        return np.zeros_like(p)

    return ScalarField(
        dim, fn, grad, label=f"const({value})", is_constant=True, value=value
    )


def trig_scalar(dim, amplitude, axis, frequency=1, kind="cos"):
    """Single wave a*cos(2 pi m x_axis) or the sine version."""
    a = float(amplitude)
    m = int(frequency)
    axis = int(axis)
    if not 0 <= axis < dim:
        raise ValueError("axis out of range")
    w = TWO_PI * m
    osc, dosc, sign = (np.cos, np.sin, -1.0) if kind == "cos" else (np.sin, np.cos, 1.0)
    if kind not in ("cos", "sin"):
        raise ValueError("kind must be 'cos' or 'sin'")

    def fn(p):
        return a * osc(w * p[..., axis])

    def grad(p):
        g = np.zeros_like(p)
        g[..., axis] = sign * a * w * dosc(w * p[..., axis])
        return g

    return ScalarField(dim, fn, grad, label=f"{kind}[{a}*2pi*{m}*x{axis}]")


def trig_vector(dim, component, axis, frequency=1, kind="sin", amplitude=1.0):
    """Vector field with one wave component: e_component * a*trig(2 pi m x_axis)."""
    comp = int(component)
    if not 0 <= comp < dim:
        raise ValueError("component out of range")
    scalar = trig_scalar(dim, amplitude, axis, frequency, kind)

    def fn(p):
        out = np.zeros_like(p)
        out[..., comp] = scalar(p)
        return out

    def jac(p):
        out = np.zeros(p.shape + (p.shape[-1],))
        out[..., comp, :] = scalar.gradient(p)
        return out

    return VectorField(dim, fn, jac, label=f"e{comp}*{scalar.label}")
