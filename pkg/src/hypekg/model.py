"""Hyperboloid query embedding: parameters, operators, scoring and loss.

Forward functions take a parameter mapping ``P`` whose values are either
numpy arrays (plain evaluation) or graddiff ``Var``s (recorded for training).
Only the layers a query actually uses appear on the tape, so layers an
operator does not use get exactly zero gradient.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from . import graddiff as gd
from . import query as qd
from .errors import NumericError, UsageError
from .gyro import exp0, log0, mobius_scalar_1d, safe_project
from .hyperboloid import DistanceWeights, Hyperboloid, point_box_distance, translate

MLP_NAMES = ("att", "dsi", "dso")


@dataclass
class ModelConfig:
    d: int = 16
    hidden: int = 0  # 0 means 2*d
    center_agg: str = "attention"  # avg | attention | deepsets
    center_combine: str = "tangent"  # tangent | literal
    limit_agg: str = "deepsets"  # deepsets | min
    share_f: bool = False
    gamma: float = 0.5
    combine_mode: str = "euclidean"
    distance_form: str = "elementwise"
    margin: float = 6.0
    negatives: int = 128
    query_mix: tuple = qd.STRUCTURES
    curvature: float = 1.0
    trainable_curvature: bool = False

    def __post_init__(self):
        if self.d < 1:
            raise UsageError("d must be >= 1")
        if self.negatives < 1:
            raise UsageError("negatives must be >= 1")
        if not self.margin > 0:
            raise UsageError("margin must be > 0")
        if self.center_agg not in ("avg", "attention", "deepsets"):
            raise UsageError(f"unknown center aggregator {self.center_agg!r}")
        if self.center_combine not in ("tangent", "literal"):
            raise UsageError(f"unknown center combination {self.center_combine!r}")
        if self.limit_agg not in ("deepsets", "min"):
            raise UsageError(f"unknown limit aggregator {self.limit_agg!r}")
        bad = set(self.query_mix) - set(qd.STRUCTURES)
        if bad:
            raise UsageError(f"unknown structures in query mix: {sorted(bad)}")
        self.query_mix = tuple(self.query_mix)
        self.weights = DistanceWeights(self.gamma, self.combine_mode, self.distance_form)

    @property
    def h(self) -> int:
        return self.hidden or 2 * self.d


def mlp_shapes(d: int, h: int) -> dict:
    shapes = {}
    for name, n_in in (("att", 2 * d), ("dsi", 2 * d), ("dso", d)):
        shapes[f"{name}.W1"] = (n_in, h)
        shapes[f"{name}.b1"] = (h,)
        shapes[f"{name}.W2"] = (h, d)
        shapes[f"{name}.b2"] = (d,)
    return shapes


@dataclass
class ParameterStore:
    arrays: dict
    config: ModelConfig
    kinds: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in self.arrays:
            if k.endswith("_cen"):
                self.kinds[k] = "ball"
            elif k.endswith("_lim"):
                self.kinds[k] = "nonneg"
            else:
                self.kinds[k] = "euclid"

    @property
    def n_entities(self):
        return self.arrays["ent_cen"].shape[0]

    @property
    def n_relations(self):
        return self.arrays["rel_cen"].shape[0]

    @property
    def curvature(self) -> float:
        if "curvature" in self.arrays:
            return float(self.arrays["curvature"])
        return float(self.config.curvature)

    @classmethod
    def init(cls, n_entities: int, n_relations: int, config: ModelConfig, rng) -> "ParameterStore":
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        d, h, c = config.d, config.h, config.curvature
        arrays = {}
        for prefix, n in (("ent", n_entities), ("rel", n_relations)):
            arrays[f"{prefix}_cen"] = exp0(rng.normal(0.0, 0.1 / np.sqrt(d), size=(n, d)), c)
            arrays[f"{prefix}_lim"] = np.abs(rng.normal(0.0, 0.01, size=(n, d)))
        for name, shape in mlp_shapes(d, h).items():
            fan_in = shape[0] if len(shape) == 2 else mlp_shapes(d, h)[name.replace(".b", ".W")][0]
            bound = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-bound, bound, size=shape)
        if config.trainable_curvature:
            arrays["curvature"] = np.array(float(c))
        return cls(arrays, config)

    def copy(self) -> "ParameterStore":
        return ParameterStore({k: v.copy() for k, v in self.arrays.items()}, self.config)

    def hyperboloid(self, kind: str, ids) -> Hyperboloid:
        return Hyperboloid(self.arrays[f"{kind}_cen"][ids], self.arrays[f"{kind}_lim"][ids])

    def check_manifold(self, eps: float = 1e-5) -> None:
        bound = (1.0 - eps) / np.sqrt(self.curvature)
        for k, kind in self.kinds.items():
            a = self.arrays[k]
            if kind == "ball" and np.any(np.linalg.norm(a, axis=-1) > bound):
                raise NumericError(f"{k} has a row outside the ball")
            if kind == "nonneg" and np.any(a < 0):
                raise NumericError(f"{k} has a negative entry")


def _curv(P, cfg):
    return P["curvature"] if "curvature" in P else cfg.curvature


def mlp(P: Mapping, name: str, x):
    """Two-layer perceptron ``W2 relu(W1 x + b1) + b2`` on the last axis."""
    hidden = gd.relu(gd.matmul(x, P[f"{name}.W1"]) + P[f"{name}.b1"])
    return gd.matmul(hidden, P[f"{name}.W2"]) + P[f"{name}.b2"]


def _features(h: Hyperboloid):
    return gd.concat([h.cen, h.lim], axis=-1)


def _ds_inner(P, cfg):
    return "att" if cfg.share_f else "dsi"


def deepsets(members: Sequence[Hyperboloid], P, cfg):
    inner = _ds_inner(P, cfg)
    pooled = None
    for m in members:
        z = mlp(P, inner, _features(m))
        pooled = z if pooled is None else pooled + z
    return mlp(P, "dso", pooled / float(len(members)))


def center_weights(members: Sequence[Hyperboloid], P, cfg, mode=None):
    """Per-dimension member weights, shape ``(n, ..., d)``, summing to 1 over members."""
    mode = mode or cfg.center_agg
    n = len(members)
    if mode == "avg":
        shape = (n,) + np.shape(gd.value_of(members[0].cen))
        return np.full(shape, 1.0 / n)
    if mode == "attention":
        logits = [mlp(P, "att", _features(m)) for m in members]
    elif mode == "deepsets":
        inner = _ds_inner(P, cfg)
        logits = [mlp(P, "dso", mlp(P, inner, _features(m))) for m in members]
    else:
        raise UsageError(f"unknown center aggregator {mode!r}")
    return gd.softmax(gd.stack(logits, axis=0), axis=0)


def aggregate_centers(members: Sequence[Hyperboloid], P, cfg, mode=None):
    if len(members) == 1:
        return members[0].cen
    c = _curv(P, cfg)
    a = center_weights(members, P, cfg, mode)
    if cfg.center_combine == "literal":
        acc = None
        for i, m in enumerate(members):
            term = mobius_scalar_1d(a[i], m.cen, c)
            acc = term if acc is None else acc + term
        return safe_project(acc, c)
    acc = None
    for i, m in enumerate(members):
        term = a[i] * log0(m.cen, c)
        acc = term if acc is None else acc + term
    return exp0(acc, c)


def intersect(members: Sequence[Hyperboloid], P, cfg) -> Hyperboloid:
    if len(members) < 2:
        raise UsageError("intersection needs at least two members")
    c = _curv(P, cfg)
    cen = aggregate_centers(members, P, cfg)
    lim = members[0].lim
    for m in members[1:]:
        lim = gd.minimum(lim, m.lim)
    if cfg.limit_agg == "deepsets":
        lim = mobius_scalar_1d(gd.sigmoid(deepsets(members, P, cfg)), lim, c)
    return Hyperboloid(cen, lim)


def embed_batch(nodes: Sequence, P, cfg) -> Hyperboloid:
    """Embed union-free queries that share one ordered shape; result is ``(B, d)``."""
    head = nodes[0]
    if isinstance(head, qd.Entity):
        ids = np.array([n.id for n in nodes])
        return Hyperboloid(gd.gather(P["ent_cen"], ids), gd.gather(P["ent_lim"], ids))
    if isinstance(head, qd.Translate):
        child = embed_batch([n.child for n in nodes], P, cfg)
        ids = np.array([n.rel for n in nodes])
        rel = Hyperboloid(gd.gather(P["rel_cen"], ids), gd.gather(P["rel_lim"], ids))
        return translate(child, rel, _curv(P, cfg))
    if isinstance(head, qd.Intersect):
        members = [embed_batch([n.children[i] for n in nodes], P, cfg) for i in range(len(head.children))]
        return intersect(members, P, cfg)
    raise UsageError("embed_batch needs union-free queries; apply to_dnf first")


def embed_query(q, P, cfg) -> Hyperboloid:
    h = embed_batch([q], P, cfg)
    return Hyperboloid(h.cen[0], h.lim[0])


def branch_batches(queries: Sequence) -> list:
    """DNF every query; returns one list of branches per branch position."""
    dnfs = [qd.to_dnf(q).branches for q in queries]
    n = len(dnfs[0])
    if any(len(b) != n for b in dnfs):
        raise UsageError("queries in a batch must share one shape")
    return [[b[j] for b in dnfs] for j in range(n)]


def distances(queries: Sequence, ent_ids, P, cfg):
    """``(B, K)`` scores of entities ``ent_ids[b]`` against query ``b``; min over DNF branches."""
    ent_ids = np.asarray(ent_ids)
    c = _curv(P, cfg)
    v = gd.gather(P["ent_cen"], ent_ids)
    per_branch = []
    for branch in branch_batches(queries):
        h = embed_batch(branch, P, cfg)
        hq = Hyperboloid(gd.expand_dims(h.cen, 1), gd.expand_dims(h.lim, 1))
        per_branch.append(point_box_distance(v, hq, cfg.weights, c))
    if len(per_branch) == 1:
        return per_branch[0]
    return gd.reduce_min(gd.stack(per_branch, axis=-1), axis=-1)


def score(q, entity: int, P, cfg) -> float:
    return float(gd.value_of(distances([q], np.array([[entity]]), P, cfg))[0, 0])


def score_all(queries: Sequence, P, cfg, chunk: int = 256) -> np.ndarray:
    """Plain-array scores of every entity for each query: ``(len(queries), n_entities)``."""
    P = {k: gd.value_of(v) for k, v in P.items()}
    n = P["ent_cen"].shape[0]
    groups = defaultdict(list)
    for i, q in enumerate(queries):
        groups[qd.shape_key(q)].append(i)
    out = np.empty((len(queries), n))
    all_ids = np.arange(n)
    for idx in groups.values():
        for s in range(0, len(idx), chunk):
            part = idx[s:s + chunk]
            ids = np.broadcast_to(all_ids, (len(part), n))
            out[part] = distances([queries[i] for i in part], ids, P, cfg)
    return out


def margin_loss(dist, margin: float):
    """Sum over positives of ``-log s(m - d+) - mean_k log s(d- - m)``; column 0 is the positive."""
    pos = dist[:, 0]
    neg = dist[:, 1:]
    k = gd.value_of(neg).shape[1]
    pos_term = -gd.reduce_sum(gd.log_sigmoid(margin - pos))
    neg_term = -gd.reduce_sum(gd.log_sigmoid(neg - margin)) / float(k)
    return pos_term + neg_term


def batch_loss(queries: Sequence, positives, negatives, P, cfg):
    ids = np.concatenate([np.asarray(positives)[:, None], np.asarray(negatives)], axis=1)
    return margin_loss(distances(queries, ids, P, cfg), cfg.margin)


def training_loss(pairs: Sequence, negatives, P, cfg):
    """Loss over ``(query, answer)`` pairs with one row of negatives per pair.

    Pairs are grouped by query shape so each group runs as one batch.
    """
    if len(pairs) == 0:
        return 0.0
    negatives = np.asarray(negatives)
    groups = defaultdict(list)
    for i, (q, _) in enumerate(pairs):
        groups[qd.shape_key(q)].append(i)
    total = 0.0
    for idx in groups.values():
        loss = batch_loss([pairs[i][0] for i in idx], np.array([pairs[i][1] for i in idx]),
                          negatives[idx], P, cfg)
        total = total + loss
    if not np.isfinite(gd.value_of(total)):
        raise NumericError("training loss is not finite")
    return total


def config_from_dict(d: Mapping) -> ModelConfig:
    names = {f.name for f in fields(ModelConfig)}
    return ModelConfig(**{k: v for k, v in d.items() if k in names})
