"""Poincare-ball gyrovector algebra.

All functions take ``(..., d)`` arrays (or graddiff ``Var``s) and broadcast over
leading axes.  ``c`` is the positive ball scale; the ball has radius
``1/sqrt(c)``.  Results that must stay in the ball go through
:func:`safe_project`.

The ``*_1d`` variants treat every coordinate as its own one-dimensional ball
point.  They carry the per-coordinate limit algebra of hyperboloids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import graddiff as gd
from .errors import NumericError, UsageError

EPS = 1e-5
MIN_NORM = 1e-15


@dataclass
class Curvature:
    c: float = 1.0
    trainable: bool = False

    def __post_init__(self):
        if not self.c > 0:
            raise UsageError(f"curvature scale must be positive, got {self.c}")

    def __float__(self):
        return float(self.c)


def _c(c):
    return float(c.c) if isinstance(c, Curvature) else c


def _sqrt_c(c):
    return gd.sqrt(c) if gd.is_var(c) else np.sqrt(c)


def _check(*xs):
    arrs = [np.asarray(x, dtype=np.float64) for x in xs]
    if len({a.shape[-1:] for a in arrs}) > 1:
        raise UsageError(f"dimension mismatch: {[a.shape for a in arrs]}")
    for a in arrs:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite input")
    return arrs


def _prep(*xs):
    if any(gd.is_var(x) for x in xs):
        return xs
    return _check(*xs)


def max_norm(c=1.0, eps=EPS):
    return (1.0 - eps) / _sqrt_c(_c(c))


def safe_project(x, c=1.0, eps=EPS):
    """Rescale rows whose norm reaches ``(1 - eps)/sqrt(c)`` onto that shell."""
    (x,) = _prep(x)
    c = _c(c)
    n = gd.norm(x)
    bound = max_norm(c, eps)
    scale = gd.minimum(1.0, bound / gd.clamp_min(n, MIN_NORM))
    return x * scale


def conformal_factor(x, c=1.0):
    (x,) = _prep(x)
    c = _c(c)
    return 2.0 / (1.0 - c * gd.dot(x, x))


def mobius_add(x, y, c=1.0):
    x, y = _prep(x, y)
    c = _c(c)
    xy = gd.dot(x, y)
    x2 = gd.dot(x, x)
    y2 = gd.dot(y, y)
    num = (1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    return safe_project(num / den, c)


def mobius_sub(x, y, c=1.0):
    return mobius_add(x, -y if gd.is_var(y) else -np.asarray(y, dtype=np.float64), c)


def exp_map(base, v, c=1.0):
    base, v = _prep(base, v)
    c = _c(c)
    sc = _sqrt_c(c)
    vn = gd.norm(v)
    safe_vn = gd.clamp_min(vn, MIN_NORM)
    lam = conformal_factor(base, c)
    step = gd.tanh(sc * lam * vn / 2.0) * v / (sc * safe_vn)
    out = mobius_add(base, step, c)
    small = gd.value_of(vn) < MIN_NORM
    if np.any(small):
        out = gd.where(small, base, out)
    return out


def log_map(base, y, c=1.0):
    base, y = _prep(base, y)
    c = _c(c)
    sc = _sqrt_c(c)
    diff = mobius_add(-base, y, c)
    n = gd.norm(diff)
    lam = conformal_factor(base, c)
    return 2.0 / (sc * lam) * gd.artanh(sc * n) * diff / gd.clamp_min(n, MIN_NORM)


def exp0(v, c=1.0):
    (v,) = _prep(v)
    c = _c(c)
    sc = _sqrt_c(c)
    vn = gd.norm(v)
    return safe_project(gd.tanh(sc * vn) * v / (sc * gd.clamp_min(vn, MIN_NORM)), c)


def log0(x, c=1.0):
    (x,) = _prep(x)
    c = _c(c)
    sc = _sqrt_c(c)
    n = gd.norm(x)
    return gd.artanh(sc * n) * x / (sc * gd.clamp_min(n, MIN_NORM))


def mobius_scalar(r, x, c=1.0):
    """``r (.) x = exp0(r log0(x))`` in closed form."""
    (x,) = _prep(x)
    c = _c(c)
    sc = _sqrt_c(c)
    n = gd.norm(x)
    out = gd.tanh(r * gd.artanh(sc * n)) * x / (sc * gd.clamp_min(n, MIN_NORM))
    return safe_project(out, c)


def hyp_distance(x, y, c=1.0):
    """Geodesic distance; the ``arccosh`` argument is clamped to at least 1."""
    x, y = _prep(x, y)
    c = _c(c)
    diff = x - y
    num = 2.0 * c * gd.dot(diff, diff, keepdims=False)
    den = (1.0 - c * gd.dot(x, x, keepdims=False)) * (1.0 - c * gd.dot(y, y, keepdims=False))
    return gd.arccosh(gd.clamp_min(1.0 + num / den, 1.0)) / _sqrt_c(c)


# -- per-coordinate (1-D) gyrovector ops ---------------------------------------

def _clip1(x, c):
    bound = max_norm(c)
    if gd.is_var(bound):
        return gd.minimum(gd.maximum(x, -bound), bound)
    return gd.clip(x, -bound, bound)


def mobius_add_1d(x, y, c=1.0):
    c = _c(c)
    return _clip1((x + y) / (1.0 + c * x * y), c)


def mobius_sub_1d(x, y, c=1.0):
    c = _c(c)
    return _clip1((x - y) / (1.0 - c * x * y), c)


def mobius_scalar_1d(r, x, c=1.0):
    c = _c(c)
    sc = _sqrt_c(c)
    return _clip1(gd.tanh(r * gd.artanh(sc * x)) / sc, c)
