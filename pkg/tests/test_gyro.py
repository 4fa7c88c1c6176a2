import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypekg import gyro
from hypekg.errors import NumericError, UsageError

from conftest import random_ball


def test_mobius_add_examples():
    assert np.allclose(gyro.mobius_add([0.5, 0.0], [0.0, 0.0]), [0.5, 0.0], atol=1e-15)
    assert np.allclose(gyro.mobius_add([0.5, 0.0], [0.5, 0.0]), [0.8, 0.0], atol=1e-12)
    assert np.allclose(gyro.mobius_add([0.8, 0.0], [-0.5, 0.0]), [0.5, 0.0], atol=1e-12)


def test_mobius_sub_examples():
    assert np.allclose(gyro.mobius_sub([0.3, 0.4], [0.3, 0.4]), 0.0, atol=1e-15)
    assert np.allclose(gyro.mobius_sub([0.8, 0.0], [0.5, 0.0]), [0.5, 0.0], atol=1e-12)
    assert np.allclose(gyro.mobius_sub([0.0, 0.0], [0.5, 0.0]), [-0.5, 0.0], atol=1e-15)


def test_exp_log_examples():
    assert np.allclose(gyro.exp_map([0.0, 0.0], [0.5, 0.0]), [math.tanh(0.5), 0.0], atol=1e-12)
    assert np.array_equal(gyro.exp_map([0.0, 0.0], [0.0, 0.0]), [0.0, 0.0])
    assert np.allclose(gyro.log_map([0.0, 0.0], [math.tanh(0.5), 0.0]), [0.5, 0.0], atol=1e-12)
    assert np.allclose(gyro.log_map([0.2, 0.1], [0.2, 0.1]), 0.0, atol=1e-15)
    assert np.allclose(gyro.log_map([0.0, 0.0], [0.8, 0.0]), [math.atanh(0.8), 0.0], atol=1e-12)


def test_exp_map_tiny_tangent_returns_base_exactly():
    base = np.array([0.3, -0.2])
    assert np.array_equal(gyro.exp_map(base, [1e-17, 0.0]), base)


def test_scalar_examples():
    assert np.allclose(gyro.mobius_scalar(1.0, [0.3, 0.4]), [0.3, 0.4], atol=1e-12)
    assert np.allclose(gyro.mobius_scalar(2.0, [0.5, 0.0]), [0.8, 0.0], atol=1e-12)
    assert np.allclose(gyro.mobius_scalar(0.0, [0.3, 0.4]), 0.0, atol=1e-15)
    assert np.allclose(gyro.mobius_scalar(3.0, [0.0, 0.0]), 0.0)


def test_conformal_factor():
    assert gyro.conformal_factor([0.0, 0.0]) == pytest.approx(2.0)
    assert gyro.conformal_factor([0.5, 0.0]) == pytest.approx(2 / 0.75)
    eps = gyro.EPS
    edge = gyro.safe_project([2.0, 0.0])
    assert gyro.conformal_factor(edge) == pytest.approx(2 / (2 * eps - eps * eps), rel=1e-6)


def test_hyp_distance_examples():
    assert gyro.hyp_distance([0.0, 0.0], [0.6, 0.0]) == pytest.approx(math.log(4), abs=1e-12)
    assert gyro.hyp_distance([0.0, 0.0], [0.6, 0.0]) == pytest.approx(2 * math.atanh(0.6), abs=1e-12)
    assert gyro.hyp_distance([0.1, 0.2], [0.1, 0.2]) == 0.0


def test_safe_project_examples():
    assert np.array_equal(gyro.safe_project([0.3, 0.0]), [0.3, 0.0])
    assert np.allclose(gyro.safe_project([2.0, 0.0]), [0.99999, 0.0], atol=1e-15)
    assert np.array_equal(gyro.safe_project([0.0, 0.0]), [0.0, 0.0])


def test_errors():
    with pytest.raises(UsageError):
        gyro.mobius_add([0.1, 0.2], [0.1, 0.2, 0.3])
    with pytest.raises(NumericError):
        gyro.mobius_add([np.nan, 0.0], [0.1, 0.2])
    with pytest.raises(NumericError):
        gyro.safe_project([np.inf, 0.0])
    with pytest.raises(UsageError):
        gyro.Curvature(0.0)


def test_non_commutative_witness():
    x, y = np.array([0.5, 0.1]), np.array([-0.2, 0.6])
    assert not np.allclose(gyro.mobius_add(x, y), gyro.mobius_add(y, x))


def test_general_curvature_radius():
    c = 4.0
    x = gyro.safe_project([1.0, 0.0], c)
    assert np.linalg.norm(x) == pytest.approx((1 - gyro.EPS) / 2)
    # distance scales as 1/sqrt(c) times the artanh form
    y = np.array([0.3, 0.0])
    assert gyro.hyp_distance([0.0, 0.0], y, c) == pytest.approx(2 * math.atanh(0.6) / 2, abs=1e-12)


def test_vectorized_identities(rng):
    x, y = random_ball(rng, 2000, 5), random_ball(rng, 2000, 5)
    zero = np.zeros_like(x)
    assert np.max(np.abs(gyro.mobius_add(x, zero) - x)) < 1e-12
    assert np.max(np.abs(gyro.mobius_add(zero, x) - x)) < 1e-12
    assert np.max(np.abs(gyro.mobius_add(x, -x))) < 1e-9
    assert np.max(np.abs(gyro.exp_map(x, gyro.log_map(x, y)) - y)) < 1e-9
    # left cancellation: -x (+) (x (+) y) = y
    assert np.max(np.abs(gyro.mobius_add(-x, gyro.mobius_add(x, y)) - y)) < 1e-9


small_vec = st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3)


@settings(max_examples=200, deadline=None)
@given(small_vec, st.floats(-3, 3), st.floats(-3, 3))
def test_scalar_associativity(v, r1, r2):
    x = gyro.safe_project(np.array(v) * 0.9 / max(1.0, np.linalg.norm(v)))
    lhs = gyro.mobius_scalar(r1, gyro.mobius_scalar(r2, x))
    rhs = gyro.mobius_scalar(r1 * r2, x)
    # both sides saturate at the projection shell when |r1 r2| is large
    assert np.allclose(lhs, rhs, atol=1e-9) or np.linalg.norm(rhs) > 0.999


@settings(max_examples=200, deadline=None)
@given(small_vec, small_vec)
def test_closure(a, b):
    x = np.array(a) * 0.9 / max(1.0, np.linalg.norm(a))
    y = np.array(b) * 0.9 / max(1.0, np.linalg.norm(b))
    for out in (gyro.mobius_add(x, y), gyro.exp_map(x, np.array(b) * 5), gyro.mobius_scalar(7.0, x)):
        assert np.linalg.norm(out) < 1.0


def test_one_d_ops():
    assert gyro.mobius_add_1d(0.5, 0.5) == pytest.approx(0.8)
    assert gyro.mobius_sub_1d(0.5, 0.2) == pytest.approx(0.3 / 0.9)
    assert gyro.mobius_scalar_1d(0.5, 0.2) == pytest.approx(math.tanh(0.5 * math.atanh(0.2)))
    # 1-D ops agree with the vector ops in dimension one
    assert gyro.mobius_add_1d(0.3, -0.6) == pytest.approx(gyro.mobius_add([0.3], [-0.6])[0])
