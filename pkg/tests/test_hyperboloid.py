import math

import numpy as np
import pytest

from hypekg.errors import NumericError
from hypekg.hyperboloid import (DistanceWeights, Hyperboloid, corners, dist_inside, dist_outside,
                                point_box_distance, translate)

from conftest import random_ball


def H(cen, lim):
    return Hyperboloid(np.array(cen, dtype=float), np.array(lim, dtype=float))


def test_corner_examples():
    lo, hi = corners(H([0.0], [0.2]))
    assert lo[0] == pytest.approx(-0.2) and hi[0] == pytest.approx(0.2)
    lo, hi = corners(H([0.5], [0.0]))
    assert lo[0] == hi[0] == 0.5
    lo, hi = corners(H([0.5], [0.2]))
    assert hi[0] == pytest.approx(0.7 / 1.1, abs=1e-12)
    assert lo[0] == pytest.approx(0.3 / 0.9, abs=1e-12)
    with pytest.raises(NumericError):
        corners(H([0.0], [1.0]))


def test_running_example():
    q = H([0.0], [0.2])
    v = np.array([0.5])
    assert dist_outside(v, q) == pytest.approx(1 / 3, abs=1e-12)
    assert dist_outside(-v, q) == pytest.approx(1 / 3, abs=1e-12)
    assert dist_inside(v, q) == pytest.approx(0.2, abs=1e-12)
    assert dist_inside(np.array([0.1]), q) == pytest.approx(0.1, abs=1e-12)
    assert point_box_distance(v, q) == pytest.approx(1 / 3 + 0.1, abs=1e-12)
    a, b = math.tanh(1 / 3), math.tanh(0.1)
    mob = point_box_distance(v, q, DistanceWeights(0.5, "mobius"))
    assert mob == pytest.approx((a + b) / (1 + a * b), abs=1e-12)
    assert mob == pytest.approx(0.40811, abs=1e-4)


def test_center_is_at_distance_zero(rng):
    cen = random_ball(rng, 500, 4, 0.8)
    lim = rng.uniform(0, 0.5, size=(500, 4))
    q = Hyperboloid(cen, lim)
    for mode in ("euclidean", "mobius"):
        assert np.all(point_box_distance(cen, q, DistanceWeights(0.5, mode)) == 0)


def test_outside_zero_iff_within_corners(rng):
    cen = rng.uniform(-0.6, 0.6, size=(2000, 3))
    lim = rng.uniform(0, 0.3, size=(2000, 3))
    v = rng.uniform(-0.9, 0.9, size=(2000, 3))
    q = Hyperboloid(cen, lim)
    lo, hi = corners(q)
    inside = np.all((lo <= v) & (v <= hi), axis=1)
    assert np.array_equal(dist_outside(v, q) == 0, inside)


def _brute(v, cen, lim, gamma):
    # independent scalar transcription of the per-coordinate distance
    sub = lambda a, b: (a - b) / (1 - a * b)
    add = lambda a, b: (a + b) / (1 + a * b)
    qmin, qmax = sub(cen, lim), add(cen, lim)
    d_out = max(sub(v, qmax), 0.0) + max(sub(qmin, v), 0.0)
    clamped = min(qmax, max(qmin, v))
    return d_out + gamma * abs(sub(cen, clamped))


def test_one_dimensional_brute_force(rng):
    for _ in range(1000):
        cen, v = rng.uniform(-0.8, 0.8, size=2)
        lim = rng.uniform(0, 0.5)
        got = point_box_distance(np.array([v]), H([cen], [lim]), DistanceWeights(0.5))
        assert got == pytest.approx(_brute(v, cen, lim, 0.5), abs=1e-9)


def test_monotone_in_distance_terms():
    q = H([0.0, 0.0], [0.1, 0.1])
    near, far = np.array([0.3, 0.0]), np.array([0.6, 0.0])
    for mode in ("euclidean", "mobius"):
        w = DistanceWeights(0.5, mode)
        assert point_box_distance(far, q, w) > point_box_distance(near, q, w)


def test_translate_examples(rng):
    e = H([0.5, 0.0], [0.0, 0.0])
    o = translate(e, H([0.5, 0.0], [0.0, 0.0]))
    assert np.allclose(o.cen, [0.8, 0.0], atol=1e-12) and np.all(o.lim == 0)
    o = translate(H([0.1], [0.2]), H([0.0], [0.3]))
    assert o.lim[0] == pytest.approx(0.5 / 1.06, abs=1e-12)
    # identity relation
    cen, lim = random_ball(rng, 100, 3, 0.8), rng.uniform(0, 0.5, size=(100, 3))
    o = translate(Hyperboloid(cen, lim), Hyperboloid(np.zeros((100, 3)), np.zeros((100, 3))))
    assert np.array_equal(o.cen, cen) and np.array_equal(o.lim, lim)


def test_translate_grows_limits(rng):
    el, rl = rng.uniform(0, 0.6, size=(2, 500, 3))
    o = translate(Hyperboloid(random_ball(rng, 500, 3, 0.7), el), Hyperboloid(random_ball(rng, 500, 3, 0.7), rl))
    assert np.all(o.lim >= el - 1e-15) and np.all(o.lim >= rl - 1e-15)


def test_literal_form_is_selectable():
    w = DistanceWeights(0.5, "euclidean", "literal")
    d = point_box_distance(np.array([0.5, 0.1]), H([0.0, 0.0], [0.2, 0.2]), w)
    assert np.isfinite(d) and d > 0
