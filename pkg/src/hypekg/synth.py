"""Seeded synthetic graphs: b-ary trees and dense random multi-relational graphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TripleStore, depth_encode, node_depths
from .errors import DataError, UsageError

MAX_NODES = 10**6


@dataclass(frozen=True)
class TreeSpec:
    depth: int = 4
    branching: int = 4
    relations: str = "per_level"  # or "single"
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1 or self.branching < 2:
            raise UsageError("tree needs depth >= 1 and branching >= 2")
        if self.relations not in ("single", "per_level"):
            raise UsageError(f"unknown relation mode {self.relations!r}")

    @property
    def n_nodes(self) -> int:
        return sum(self.branching ** l for l in range(self.depth + 1))


def gen_tree(spec: TreeSpec) -> TripleStore:
    """Rooted ``branching``-ary tree of the given depth, parent -> child edges.

    Nodes are numbered breadth first (``n0`` is the root).  The shape is
    fully determined by depth and branching; ``seed`` has no effect.
    """
    if spec.n_nodes > MAX_NODES:
        raise DataError(f"tree would have {spec.n_nodes} nodes (limit {MAX_NODES})")
    n = spec.n_nodes
    children = np.arange(1, n)
    parents = (children - 1) // spec.branching
    triples = np.stack([parents, np.zeros_like(parents), children], axis=1)
    kg = TripleStore([f"n{i}" for i in range(n)], ["edge"], triples)
    return depth_encode(kg, spec.relations)


def tree_levels(kg: TripleStore) -> dict:
    """Depth -> sorted node ids."""
    depth = node_depths(kg)
    return {int(l): np.flatnonzero(depth == l) for l in np.unique(depth)}


def _has_2i(triples) -> bool:
    t = triples[triples[:, 0] != triples[:, 2]]
    _, counts = np.unique(t[:, 2], return_counts=True)
    return bool(np.any(counts >= 2))


def gen_overlap_kg(n: int, m: int, density: float, seed: int = 0, max_attempts: int = 100) -> TripleStore:
    """Each ``(h, r, t)`` present independently with probability ``density``.

    Redraws until some entity has two distinct non-loop incoming edges, which
    is what a two-way intersection query needs.
    """
    if not 0 < density <= 1:
        raise UsageError("density must lie in (0, 1]")
    if n < 1 or m < 1:
        raise UsageError("need at least one entity and one relation")
    rng = np.random.default_rng(seed)
    h, r, t = np.meshgrid(np.arange(n), np.arange(m), np.arange(n), indexing="ij")
    grid = np.stack([h.ravel(), r.ravel(), t.ravel()], axis=1)
    for _ in range(max_attempts):
        triples = grid[rng.random(len(grid)) < density]
        if len(triples) and _has_2i(triples):
            return TripleStore([f"e{i}" for i in range(n)], [f"r{i}" for i in range(m)], triples)
    raise DataError(f"no graph with a realizable 2i query after {max_attempts} draws")
