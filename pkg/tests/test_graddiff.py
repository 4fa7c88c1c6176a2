import numpy as np
import pytest

from hypekg import graddiff as gd
from hypekg import gyro
from hypekg.errors import NumericError


def test_quadratic_gradient():
    loss, g = gd.value_and_grad(lambda P: gd.reduce_sum(P["x"] * P["x"]), {"x": np.array([0.3, 0.4])})
    assert loss == pytest.approx(0.25)
    assert np.allclose(g["x"], [0.6, 0.8])


def test_origin_distance_gradient():
    fn = lambda P: gyro.hyp_distance(np.zeros(2), P["x"])
    _, g = gd.value_and_grad(fn, {"x": np.array([0.6, 0.0])})
    assert g["x"][0] == pytest.approx(2 / (1 - 0.36), rel=1e-10)
    assert g["x"][1] == pytest.approx(0.0, abs=1e-12)


def test_unreachable_parameters_get_exact_zeros():
    params = {"x": np.array([1.0, 2.0]), "unused": np.array([[3.0, 4.0]])}
    _, g = gd.value_and_grad(lambda P: gd.reduce_sum(P["x"]), params)
    assert np.array_equal(g["unused"], np.zeros((1, 2)))


def test_constant_and_linear_checks():
    rep = gd.finite_diff_check(lambda P: 3.0, {"x": np.array([0.1, 0.2])})
    assert rep.max_rel_error == 0.0
    w = np.array([1.5, -2.0, 0.25])
    rep = gd.finite_diff_check(lambda P: gd.reduce_sum(P["x"] * w), {"x": np.array([0.1, 0.2, 0.3])})
    assert rep.max_rel_error < 1e-9


def test_nonfinite_node_is_named():
    with pytest.raises(NumericError, match="log"):
        gd.value_and_grad(lambda P: gd.reduce_sum(gd.log(P["x"] - 1.0)), {"x": np.array([0.5])})


def test_subgradient_conventions():
    _, g = gd.value_and_grad(lambda P: gd.reduce_sum(gd.clamp_min(P["x"], 0.0)), {"x": np.array([0.0, 1.0])})
    assert np.array_equal(g["x"], [0.0, 1.0])
    _, g = gd.value_and_grad(lambda P: gd.reduce_sum(gd.maximum(P["a"], P["b"])),
                             {"a": np.array([1.0]), "b": np.array([1.0])})
    assert g["a"][0] == 1.0 and g["b"][0] == 0.0
    _, g = gd.value_and_grad(lambda P: gd.reduce_sum(gd.minimum(P["a"], P["b"])),
                             {"a": np.array([2.0]), "b": np.array([2.0])})
    assert g["a"][0] == 1.0 and g["b"][0] == 0.0
    _, g = gd.value_and_grad(lambda P: gd.reduce_min(P["a"]), {"a": np.array([0.5, 0.5, 0.9])})
    assert np.array_equal(g["a"], [1.0, 0.0, 0.0])


def test_broadcast_and_gather_adjoints():
    table = np.arange(12.0).reshape(4, 3)
    idx = np.array([[0, 2], [2, 2]])
    rep = gd.finite_diff_check(lambda P: gd.reduce_sum(gd.gather(P["t"], idx) ** 2 * P["b"]),
                               {"t": table, "b": np.array([0.5, -1.0, 2.0])})
    assert rep.max_rel_error < 1e-6
    _, g = gd.value_and_grad(lambda P: gd.reduce_sum(gd.gather(P["t"], idx)), {"t": table})
    assert np.array_equal(g["t"][:, 0], [1.0, 0.0, 3.0, 0.0])


def test_softmax_matmul_concat_stack(rng):
    params = {"a": rng.normal(size=(3, 4)), "w": rng.normal(size=(8, 2)), "b": rng.normal(size=(3, 4))}

    def fn(P):
        x = gd.concat([P["a"], P["b"]], axis=-1)
        s = gd.softmax(gd.stack([gd.matmul(x, P["w"]), gd.tanh(gd.matmul(x, P["w"]))], axis=0), axis=0)
        return gd.reduce_sum(s[0] * gd.sigmoid(P["a"][:, :2]))
    assert gd.finite_diff_check(fn, params).max_rel_error < 1e-6


def test_ball_perturbation_retry_and_failure():
    near_edge = np.array([[1 - 5e-7, 0.0]])
    rep = gd.finite_diff_check(lambda P: gd.reduce_sum(P["x"]), {"x": near_edge}, kinds={"x": "ball"})
    assert rep.max_rel_error < 1e-6
    with pytest.raises(NumericError):
        gd.finite_diff_check(lambda P: gd.reduce_sum(P["x"]), {"x": np.array([[1 - 1e-8, 0.0]])},
                             kinds={"x": "ball"})


def test_deterministic_gradients(rng):
    params = {"x": rng.normal(size=(5, 3)) * 0.2}
    fn = lambda P: gd.reduce_sum(gyro.exp0(P["x"]) * gyro.log0(gyro.exp0(P["x"])))
    a = gd.value_and_grad(fn, params)[1]["x"]
    b = gd.value_and_grad(fn, params)[1]["x"]
    assert a.tobytes() == b.tobytes()


def test_relative_error_definition():
    a, n = np.array([1.0, 2.0]), np.array([1.0, 2.0 + 2e-6])
    assert gd.relative_error(a, n) == pytest.approx(2e-6 / (2.0 + 2e-6))
    assert gd.relative_error(np.zeros(2), np.zeros(2)) == 0.0


def test_overall_error_ignores_noise_in_zero_gradient_blocks():
    # softmax is shift invariant, so the gradient for "s" is exactly zero
    w = np.array([0.3, -1.2, 2.0])
    fn = lambda P: gd.reduce_sum(gd.softmax(P["x"] + P["s"], axis=0) * w)
    rep = gd.finite_diff_check(fn, {"x": np.array([0.1, 0.5, -0.4]), "s": np.array(0.7)})
    assert rep.max_rel_error < 1e-6
    assert np.abs(rep.analytic["s"]) < 1e-12
