"""Center/limit hyperboloids, point-to-hyperboloid distance and translation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from . import graddiff as gd
from .errors import NumericError, UsageError
from .gyro import _c, _sqrt_c, hyp_distance, mobius_add, mobius_add_1d, mobius_sub, mobius_sub_1d, safe_project


@dataclass
class Hyperboloid:
    """``cen`` is a ball point, ``lim`` a nonnegative per-dimension extent.

    Both may carry leading batch axes, and both may be graddiff ``Var``s.
    """

    cen: Any
    lim: Any

    @property
    def d(self) -> int:
        return gd.value_of(self.cen).shape[-1]

    def numpy(self) -> "Hyperboloid":
        return Hyperboloid(np.array(gd.value_of(self.cen)), np.array(gd.value_of(self.lim)))


@dataclass
class DistanceWeights:
    gamma: float = 0.5
    combine_mode: str = "euclidean"  # or "mobius"
    form: str = "elementwise"  # or "literal"

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise UsageError("gamma must be finite")
        if self.combine_mode not in ("euclidean", "mobius"):
            raise UsageError(f"unknown combine_mode {self.combine_mode!r}")
        if self.form not in ("elementwise", "literal"):
            raise UsageError(f"unknown distance form {self.form!r}")


def corners(q: Hyperboloid, c=1.0):
    """Per-coordinate ``(cen - lim, cen + lim)`` in the 1-D gyro sense."""
    c = _c(c)
    lim = gd.value_of(q.lim)
    if not gd.is_var(c) and np.any(np.abs(lim) * np.sqrt(c) >= 1.0):
        raise NumericError("limit coordinate outside the 1-D ball")
    return mobius_sub_1d(q.cen, q.lim, c), mobius_add_1d(q.cen, q.lim, c)


def dist_outside(v, q: Hyperboloid, c=1.0):
    q_min, q_max = corners(q, c)
    above = gd.clamp_min(mobius_sub_1d(v, q_max, c), 0.0)
    below = gd.clamp_min(mobius_sub_1d(q_min, v, c), 0.0)
    return gd.reduce_sum(above + below, axis=-1)


def dist_inside(v, q: Hyperboloid, c=1.0):
    q_min, q_max = corners(q, c)
    clamped = gd.minimum(q_max, gd.maximum(q_min, v))
    return gd.reduce_sum(gd.absolute(mobius_sub_1d(q.cen, clamped, c)), axis=-1)


def _literal_terms(v, q, c):
    # q_min/q_max read as whole ball points; both distance terms are scalars.
    q_min, q_max = corners(q, c)
    q_min, q_max = safe_project(q_min, c), safe_project(q_max, c)
    d_out = gd.clamp_min(hyp_distance(v, q_max, c), 0.0) + gd.clamp_min(hyp_distance(q_min, v, c), 0.0)
    clamped = gd.minimum(q_max, gd.maximum(q_min, v))
    d_in = gd.reduce_sum(gd.absolute(mobius_sub(q.cen, clamped, c)), axis=-1)
    return d_out, d_in


def point_box_distance(v, q: Hyperboloid, w: DistanceWeights | None = None, c=1.0):
    """Distance from entity point(s) ``v`` to hyperboloid(s) ``q`` (broadcasting)."""
    w = w or DistanceWeights()
    c = _c(c)
    if w.form == "literal":
        d_out, d_in = _literal_terms(v, q, c)
    else:
        d_out, d_in = dist_outside(v, q, c), dist_inside(v, q, c)
    if w.combine_mode == "euclidean":
        return d_out + w.gamma * d_in
    sc = _sqrt_c(c)
    return mobius_add_1d(gd.tanh(d_out) / sc, gd.tanh(w.gamma * d_in) / sc, c)


def translate(e: Hyperboloid, r: Hyperboloid, c=1.0) -> Hyperboloid:
    c = _c(c)
    lim_r = gd.value_of(r.lim)
    if not gd.is_var(c) and np.any(np.abs(lim_r) * np.sqrt(c) >= 1.0):
        raise NumericError("relation limit coordinate outside the 1-D ball")
    return Hyperboloid(mobius_add(e.cen, r.cen, c), mobius_add_1d(e.lim, r.lim, c))
