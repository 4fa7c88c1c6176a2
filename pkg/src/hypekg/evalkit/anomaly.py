"""Pseudo-tree construction and per-level anomalous-child detection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..data import TripleStore, ceil_count, node_depths
from ..errors import DataError, UsageError

log = logging.getLogger(__name__)
from ..hyperboloid import Hyperboloid, point_box_distance, translate


@dataclass
class PseudoTree:
    base: TripleStore
    store: TripleStore  # base plus injected edges
    injected: dict  # parent -> sorted foreign child ids
    rate: float
    levels: dict  # parent -> level (1 = parents of leaves)
    parent_relation: dict = field(default_factory=dict)

    def children(self, p) -> list:
        """Genuine children followed by injected ones."""
        genuine = sorted(self.base_children.get(p, ()))
        return genuine + list(self.injected.get(p, ()))

    @cached_property
    def base_children(self) -> dict:
        return self.base.children()

    def parents_at(self, level: int) -> list:
        return sorted(p for p, l in self.levels.items() if l == level)

    @property
    def max_level(self) -> int:
        return max(self.levels.values())


def parent_levels(tree: TripleStore) -> dict:
    depth = node_depths(tree)
    bottom = int(depth.max())
    return {p: bottom - int(depth[p]) for p in tree.children()}


def _descendants(kids: dict, p) -> set:
    out, stack = set(), [p]
    while stack:
        for c in kids.get(stack.pop(), ()):
            if c not in out:
                out.add(c)
                stack.append(c)
    return out


def build_pseudo_tree(tree: TripleStore, rate: float = 0.10, seed: int = 0) -> PseudoTree:
    """Attach ``ceil(rate * |children(p)|)`` foreign leaves to every parent ``p``.

    Foreign leaves are genuine leaves outside the subtree of ``p``; their
    original edges stay in place.  A root has no outside leaves and is left
    clean.
    """
    if not 0 <= rate <= 1:
        raise UsageError("noise rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    levels = parent_levels(tree)
    kids = tree.children()
    rel = {}
    for h, r, _ in tree.triples.tolist():
        rel.setdefault(h, r)
    leaves = sorted(set(range(tree.n_entities)) - set(kids))
    has_parent = set(tree.triples[:, 2].tolist())
    injected, extra = {}, []
    for p in sorted(levels):
        n = ceil_count(rate, len(kids[p]))
        if n == 0:
            continue
        if p not in has_parent:
            log.warning("%s is a root; no foreign leaves injected", tree.entities[p])
            continue
        below = _descendants(kids, p)
        pool = [c for c in leaves if c not in below]
        if len(pool) < n:
            raise DataError(f"tree too small: parent {tree.entities[p]} needs {n} foreign leaves, "
                            f"{len(pool)} available")
        chosen = sorted(rng.choice(pool, size=n, replace=False).tolist())
        injected[p] = chosen
        extra.extend((p, rel[p], c) for c in chosen)
    store = tree.with_triples(np.concatenate([tree.triples, np.array(extra, dtype=np.int64).reshape(-1, 3)]))
    return PseudoTree(tree, store, injected, rate, levels, rel)


def child_scores(pt: PseudoTree, params, config, parents) -> tuple:
    """Scores, labels (1 = injected) and parent of every child of ``parents``."""
    c = config.curvature if "curvature" not in params else float(params["curvature"])
    scores, labels, owner = [], [], []
    for p in parents:
        ch = np.array(pt.children(p))
        r = pt.parent_relation[p]
        box = translate(Hyperboloid(params["ent_cen"][p], params["ent_lim"][p]),
                        Hyperboloid(params["rel_cen"][r], params["rel_lim"][r]), c)
        scores.append(point_box_distance(params["ent_cen"][ch], box, config.weights, c))
        bad = set(pt.injected.get(p, ()))
        labels.append([int(x in bad) for x in ch])
        owner.append(np.full(len(ch), p))
    if not scores:
        return np.zeros(0), np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    return np.concatenate(scores), np.concatenate(labels), np.concatenate(owner)


def prf(pred, truth) -> dict:
    pred, truth = np.asarray(pred, dtype=bool), np.asarray(truth, dtype=bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1, "tp": tp, "fp": fp, "fn": fn}


def best_f1_threshold(scores, labels) -> float:
    """Threshold ``t`` maximising F1 of the rule ``score > t``; ties go to the smallest ``t``."""
    candidates = np.concatenate([[-np.inf], np.unique(scores)])
    best_t, best = -np.inf, -1.0
    for t in candidates:
        f1 = prf(scores > t, labels)["f1"]
        if f1 > best:
            best_t, best = t, f1
    return float(best_t)


def split_parents(parents, fraction: float, seed: int):
    """``(calibration, evaluation)`` parents; a lone parent serves as both."""
    parents = np.array(sorted(parents))
    if len(parents) == 1:
        return parents.tolist(), parents.tolist()
    rng = np.random.default_rng(seed)
    n_cal = max(1, int(round(fraction * len(parents))))
    perm = rng.permutation(len(parents))
    return sorted(parents[perm[:n_cal]].tolist()), sorted(parents[perm[n_cal:]].tolist())


def anomaly_detect(pt: PseudoTree, params, config, level: int, policy="calibrated",
                   calibration: float = 0.2, seed: int = 0, score_fn=None) -> dict:
    """Precision/recall/F1 on the injected class among children of level-``level`` parents.

    ``policy`` is ``"calibrated"`` (F1-best threshold on a held-out subset of
    parents), ``("quantile", q)`` or a fixed float threshold.  ``score_fn``
    may rescore ``(scores, owner)`` arrays, e.g. with semantic vectors.
    """
    parents = pt.parents_at(level)
    if not parents:
        raise UsageError(f"no parents at level {level}")
    if np.max(parents) >= len(params["ent_cen"]):
        raise DataError("parameters do not cover the pseudo-tree entities")
    rescore = score_fn or (lambda s, owner: s)
    if policy == "calibrated":
        cal, test = split_parents(parents, calibration, seed)
        s, y, o = child_scores(pt, params, config, cal)
        threshold = best_f1_threshold(rescore(s, o), y)
    else:
        test = parents
        if isinstance(policy, tuple) and policy[0] == "quantile":
            s, _, o = child_scores(pt, params, config, test)
            threshold = float(np.quantile(rescore(s, o), policy[1]))
        elif isinstance(policy, (int, float)):
            threshold = float(policy)
        else:
            raise UsageError(f"unknown threshold policy {policy!r}")
    s, y, o = child_scores(pt, params, config, test)
    out = prf(rescore(s, o) > threshold, y)
    out.update(level=level, threshold=threshold, parents=len(test), children=len(y))
    return out
