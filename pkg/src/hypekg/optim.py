"""Riemannian Adam over ball points, nonnegative limits and Euclidean weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, UsageError
from .gyro import EPS, exp_map, safe_project

KINDS = ("ball", "nonneg", "euclid")
MIN_CURVATURE = 1e-2


@dataclass
class OptimState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    constant_speed: bool = True
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr < 0:
            raise UsageError("learning rate must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise UsageError("Adam betas must lie in [0, 1)")


def riemannian_scale(g, x, c=1.0):
    """Euclidean gradient divided by the squared conformal factor at ``x``."""
    x2 = np.sum(np.asarray(x) ** 2, axis=-1, keepdims=True)
    return np.asarray(g) * (1.0 - c * x2) ** 2 / 4.0


def step(params: dict, grads: dict, state: OptimState, kinds: dict, c=1.0) -> dict:
    """One Adam step; returns a new parameter dict and advances ``state`` in place.

    ``c`` is the ball scale used for ball parameters; a ``curvature`` entry in
    ``params`` overrides it.
    """
    if "curvature" in params:
        c = float(params["curvature"])
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    out = {}
    for name in sorted(params):
        x = params[name]
        g = grads.get(name)
        if g is None:
            out[name] = x
            continue
        kind = kinds.get(name, "euclid")
        if kind not in KINDS:
            raise UsageError(f"unknown manifold kind {kind!r} for {name}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
        if kind == "ball":
            g = riemannian_scale(g, x, c)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        direction = (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        if kind == "ball":
            tangent = -state.lr * direction
            if state.constant_speed:
                # 2/lambda_x: equal hyperbolic step length everywhere, unchanged at the origin
                tangent = tangent * (1.0 - c * np.sum(x * x, axis=-1, keepdims=True))
            new = safe_project(exp_map(x, tangent, c), c)
        elif kind == "nonneg":
            new = np.clip(x - state.lr * direction, 0.0, (1.0 - EPS) / np.sqrt(c))
        else:
            new = x - state.lr * direction
            if name == "curvature":
                new = np.maximum(new, MIN_CURVATURE)
        if not np.all(np.isfinite(new)):
            raise NumericError(f"non-finite update for parameter {name}")
        out[name] = new
    return out
