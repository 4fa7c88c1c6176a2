"""Finite-difference audit of every differentiable layer."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import graddiff as gd
from . import gyro
from . import model as M
from . import query as qd
from .hyperboloid import DistanceWeights, Hyperboloid, point_box_distance, translate

THRESHOLD = 1e-4


@dataclass
class OpResult:
    name: str
    configs: int
    max_rel_error: float
    worst_config: int
    seconds: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error < THRESHOLD


def _ball(rng, shape, radius=0.9):
    x = rng.normal(size=shape)
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / n * radius * rng.uniform(0.05, 1.0, size=n.shape)


def _weighted(out, w):
    return gd.reduce_sum(out * w)


def _case_binary(op):
    def build(rng):
        d = int(rng.integers(1, 5))
        x, y = _ball(rng, (3, d)), _ball(rng, (3, d))
        w = rng.normal(size=op(x, y).shape)
        return (lambda P: _weighted(op(P["x"], P["y"]), w)), {"x": x, "y": y}, {"x": "ball", "y": "ball"}
    return build


def _case_unary_ball(op):
    def build(rng):
        d = int(rng.integers(1, 5))
        x = _ball(rng, (3, d))
        w = rng.normal(size=op(x).shape)
        return (lambda P: _weighted(op(P["x"]), w)), {"x": x}, {"x": "ball"}
    return build


def _case_tangent(op):
    def build(rng):
        d = int(rng.integers(1, 5))
        v = rng.normal(0.0, 0.7, size=(3, d))
        w = rng.normal(size=op(v).shape)
        return (lambda P: _weighted(op(P["v"]), w)), {"v": v}, {}
    return build


def _case_exp_map(rng):
    d = int(rng.integers(1, 5))
    x, v = _ball(rng, (3, d), 0.7), rng.normal(0.0, 0.5, size=(3, d))
    w = rng.normal(size=(3, d))
    return (lambda P: _weighted(gyro.exp_map(P["x"], P["v"]), w)), {"x": x, "v": v}, {"x": "ball"}


def _case_scalar(rng):
    d = int(rng.integers(1, 5))
    x, r = _ball(rng, (3, d), 0.8), rng.uniform(-2, 2, size=(3, 1))
    w = rng.normal(size=(3, d))
    return (lambda P: _weighted(gyro.mobius_scalar(P["r"], P["x"]), w)), {"x": x, "r": r}, {"x": "ball"}


def _case_1d(op):
    def build(rng):
        x, y = rng.uniform(-0.8, 0.8, size=(2, 5))
        w = rng.normal(size=5)
        return (lambda P: _weighted(op(P["x"], P["y"]), w)), {"x": x, "y": y}, {}
    return build


def _case_distance(combine, form="elementwise"):
    def build(rng):
        d = int(rng.integers(1, 5))
        v, cen = _ball(rng, (3, d), 0.6), _ball(rng, (3, d), 0.6)
        lim = rng.uniform(0.0, 0.3, size=(3, d))
        w = rng.normal(size=3)
        wt = DistanceWeights(float(rng.uniform(0.1, 1.0)), combine, form)
        fn = lambda P: _weighted(point_box_distance(P["v"], Hyperboloid(P["cen"], P["lim"]), wt), w)
        return fn, {"v": v, "cen": cen, "lim": lim}, {"v": "ball", "cen": "ball"}
    return build


def _case_translate(rng):
    d = int(rng.integers(1, 5))
    e, r = _ball(rng, (3, d), 0.6), _ball(rng, (3, d), 0.6)
    el, rl = rng.uniform(0, 0.4, size=(2, 3, d))
    w1, w2 = rng.normal(size=(2, 3, d))

    def fn(P):
        h = translate(Hyperboloid(P["e"], P["el"]), Hyperboloid(P["r"], P["rl"]))
        return _weighted(h.cen, w1) + _weighted(h.lim, w2)
    return fn, {"e": e, "r": r, "el": el, "rl": rl}, {"e": "ball", "r": "ball"}


def _small_store(rng, d=4, n_ent=6, n_rel=3, **cfg):
    config = M.ModelConfig(d=d, negatives=3, margin=1.0, **cfg)
    store = M.ParameterStore.init(n_ent, n_rel, config, rng)
    arrays = store.arrays
    # move off the tiny init so every layer sees generic inputs
    arrays["ent_cen"] = _ball(rng, (n_ent, d), 0.6)
    arrays["rel_cen"] = _ball(rng, (n_rel, d), 0.5)
    arrays["ent_lim"] = rng.uniform(0.02, 0.3, size=(n_ent, d))
    arrays["rel_lim"] = rng.uniform(0.02, 0.3, size=(n_rel, d))
    return store, config


def _case_mlp(name):
    def build(rng):
        store, config = _small_store(rng, d=int(rng.integers(1, 5)))
        P = {k: v for k, v in store.arrays.items() if k.startswith(name + ".")}
        n_in = P[f"{name}.W1"].shape[0]
        x = rng.normal(size=(3, n_in))
        w = rng.normal(size=(3, config.d))
        return (lambda Q: _weighted(M.mlp(Q, name, x), w)), P, {}
    return build


def _case_intersect(center_agg):
    def build(rng):
        d = int(rng.integers(1, 5))
        store, config = _small_store(rng, d=d, center_agg=center_agg)
        n = int(rng.integers(2, 4))
        members = {f"c{i}": _ball(rng, (2, d), 0.6) for i in range(n)}
        lims = {f"l{i}": rng.uniform(0.02, 0.3, size=(2, d)) for i in range(n)}
        w1, w2 = rng.normal(size=(2, 2, d))
        P = {**{k: v for k, v in store.arrays.items() if "." in k}, **members, **lims}

        def fn(Q):
            h = M.intersect([Hyperboloid(Q[f"c{i}"], Q[f"l{i}"]) for i in range(n)], Q, config)
            return _weighted(h.cen, w1) + _weighted(h.lim, w2)
        return fn, P, {k: "ball" for k in members}
    return build


def _case_margin_loss(rng):
    dist = rng.uniform(0.0, 3.0, size=(3, 5))
    return (lambda P: M.margin_loss(P["dist"], 1.0)), {"dist": dist}, {}


def _case_pi_loss(rng):
    """Full loss of one translate-then-intersect query at d=4."""
    store, config = _small_store(rng, d=4)
    q = qd.parse("I(T(T(E(0),0),1),T(E(1),2))")
    q = qd.Intersect(tuple(_ints(ch) for ch in q.children))
    pos, neg = np.array([2]), np.array([[3, 4, 5]])
    return (lambda P: M.batch_loss([q], pos, neg, P, config)), store.arrays, dict(store.kinds)


def _ints(q):
    if isinstance(q, qd.Entity):
        return qd.Entity(int(q.id))
    if isinstance(q, qd.Translate):
        return qd.Translate(_ints(q.child), int(q.rel))
    return type(q)(tuple(_ints(ch) for ch in q.children))


CASES = {
    "mobius_add": _case_binary(gyro.mobius_add),
    "mobius_sub": _case_binary(gyro.mobius_sub),
    "hyp_distance": _case_binary(gyro.hyp_distance),
    "log_map": _case_binary(gyro.log_map),
    "exp_map": _case_exp_map,
    "exp0": _case_tangent(gyro.exp0),
    "log0": _case_unary_ball(gyro.log0),
    "safe_project": _case_unary_ball(gyro.safe_project),
    "mobius_scalar": _case_scalar,
    "mobius_add_1d": _case_1d(gyro.mobius_add_1d),
    "mobius_sub_1d": _case_1d(gyro.mobius_sub_1d),
    "mobius_scalar_1d": _case_1d(lambda r, x: gyro.mobius_scalar_1d(r, x)),
    "distance_euclidean": _case_distance("euclidean"),
    "distance_mobius": _case_distance("mobius"),
    "translate": _case_translate,
    "mlp_att": _case_mlp("att"),
    "mlp_dsi": _case_mlp("dsi"),
    "mlp_dso": _case_mlp("dso"),
    "intersect_attention": _case_intersect("attention"),
    "intersect_deepsets": _case_intersect("deepsets"),
    "intersect_avg": _case_intersect("avg"),
    "margin_loss": _case_margin_loss,
    "pi_query_loss": _case_pi_loss,
}


def check_case(name: str, configs: int = 100, seed: int = 0, step: float = 1e-6) -> OpResult:
    build = CASES[name]
    worst, worst_i = 0.0, -1
    t0 = time.perf_counter()
    for i in range(configs):
        rng = np.random.default_rng([seed, i, sum(map(ord, name))])
        fn, params, kinds = build(rng)
        err = gd.finite_diff_check(fn, params, step=step, kinds=kinds).max_rel_error
        if err > worst or worst_i < 0:
            worst, worst_i = err, i
    return OpResult(name, configs, worst, worst_i, time.perf_counter() - t0)


def run_suite(configs: int = 100, seed: int = 0, step: float = 1e-6, names=None) -> list:
    return [check_case(n, configs, seed, step) for n in (names or CASES)]


def report_lines(results) -> list:
    lines = ["operation\tconfigs\tmax_rel_error\tworst_config\tstatus"]
    for r in results:
        lines.append(f"{r.name}\t{r.configs}\t{r.max_rel_error:.3e}\t{r.worst_config}\t{'ok' if r.ok else 'FAIL'}")
    return lines
