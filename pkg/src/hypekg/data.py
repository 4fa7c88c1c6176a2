"""Triple stores, edge splits, depth encoding and query/negative sampling."""

from __future__ import annotations

import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import query as qd
from .errors import DataError, UsageError

log = logging.getLogger(__name__)


class TripleStore:
    """Directed multi-relational graph over a fixed entity/relation vocabulary.

    Ids are contiguous from 0.  ``triples`` is an ``(m, 3)`` int array of
    ``(head, relation, tail)`` rows, deduplicated.  Splits of one store share
    its vocabularies.
    """

    def __init__(self, entities: Sequence[str], relations: Sequence[str], triples):
        self.entities = list(entities)
        self.relations = list(relations)
        self.entity_index = {e: i for i, e in enumerate(self.entities)}
        self.relation_index = {r: i for i, r in enumerate(self.relations)}
        t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if len(t):
            t = np.unique(t, axis=0)
            if t[:, [0, 2]].max() >= len(self.entities) or t[:, 1].max() >= len(self.relations) or t.min() < 0:
                raise DataError("triple id outside the vocabulary")
        self.triples = t
        adj = defaultdict(list)
        radj = defaultdict(list)
        for h, r, tl in t.tolist():
            adj[(h, r)].append(tl)
            radj[tl].append((h, r))
        self.adjacency = {k: np.array(sorted(v), dtype=np.int64) for k, v in adj.items()}
        self.reverse = {k: sorted(v) for k, v in radj.items()}

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def __len__(self):
        return len(self.triples)

    def successors(self, h, r):
        return self.adjacency.get((h, r), ())

    def predecessors(self, t):
        return self.reverse.get(t, [])

    def edge_set(self) -> set:
        return set(map(tuple, self.triples.tolist()))

    def with_triples(self, triples) -> "TripleStore":
        return TripleStore(self.entities, self.relations, triples)

    def children(self) -> dict:
        out = defaultdict(set)
        for h, _, t in self.triples.tolist():
            out[h].add(t)
        return out

    def write_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for h, r, t in self.triples.tolist():
                fh.write(f"{self.entities[h]}\t{self.relations[r]}\t{self.entities[t]}\n")


def from_named_triples(rows) -> TripleStore:
    """Build a store from ``(head, rel, tail)`` names, vocabularies in first-appearance order."""
    ents, rels = {}, {}
    ids = []
    for h, r, t in rows:
        for name in (h, t):
            if name not in ents:
                ents[name] = len(ents)
        if r not in rels:
            rels[r] = len(rels)
        ids.append((ents[h], rels[r], ents[t]))
    return TripleStore(list(ents), list(rels), ids)


def load_tsv(path) -> TripleStore:
    rows = []
    seen = set()
    dups = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise DataError(f"{path}:{lineno}: expected head<TAB>relation<TAB>tail")
            key = tuple(parts)
            if key in seen:
                dups += 1
                continue
            seen.add(key)
            rows.append(key)
    if not rows:
        raise DataError(f"{path}: no triples")
    if dups:
        log.warning("%s: dropped %d duplicate triple(s)", path, dups)
    kg = from_named_triples(rows)
    kg.duplicates = dups
    return kg


# -- splits ---------------------------------------------------------------------------

@dataclass
class SplitBundle:
    train: TripleStore
    valid: TripleStore
    test: TripleStore
    ratios: tuple = (0.75, 0.10, 0.15)

    @property
    def full(self) -> TripleStore:
        return self.train.with_triples(np.concatenate([self.train.triples, self.valid.triples, self.test.triples]))

    def answer_graphs(self, split: str):
        """``(base, full)`` graphs for held-out queries on ``split``."""
        if split == "test":
            base = np.concatenate([self.train.triples, self.valid.triples])
            return self.train.with_triples(base), self.full
        if split == "valid":
            return self.train, self.train.with_triples(np.concatenate([self.train.triples, self.valid.triples]))
        raise UsageError(f"unknown split {split!r}")


def _covered(train_idx, other_idx, triples):
    seen = np.zeros(triples[:, [0, 2]].max() + 1, dtype=bool)
    seen[triples[train_idx][:, 0]] = True
    seen[triples[train_idx][:, 2]] = True
    held = triples[other_idx]
    return bool(seen[held[:, 0]].all() and seen[held[:, 2]].all())


def split(kg: TripleStore, ratios=(0.75, 0.10, 0.15), seed: int = 0,
          require_coverage: bool = True, max_attempts: int = 100) -> SplitBundle:
    """Uniform random edge partition.

    With ``require_coverage`` every entity of a valid/test edge must also occur
    in a train edge; the partition is redrawn up to ``max_attempts`` times.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise UsageError(f"split ratios must be three nonnegative numbers summing to 1, got {ratios}")
    m = len(kg)
    n_valid = int(round(ratios[1] * m))
    n_test = int(round(ratios[2] * m))
    n_train = m - n_valid - n_test
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        perm = rng.permutation(m)
        tr, va, te = perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:]
        if not require_coverage or m == n_train or _covered(tr, np.concatenate([va, te]), kg.triples):
            return SplitBundle(kg.with_triples(kg.triples[tr]), kg.with_triples(kg.triples[va]),
                               kg.with_triples(kg.triples[te]), ratios)
    raise DataError(f"could not draw a split with held-out entities covered by train after "
                    f"{max_attempts} attempts; try a larger train ratio or require_coverage=False")


# -- depth encoding --------------------------------------------------------------------

def node_depths(kg: TripleStore) -> np.ndarray:
    """Shortest-path depth from the roots (in-degree 0); raises on cycles."""
    n = kg.n_entities
    indeg = np.zeros(n, dtype=np.int64)
    out = defaultdict(list)
    for h, _, t in kg.triples.tolist():
        if h == t:
            raise DataError("graph has a self-loop; depths undefined")
        out[h].append(t)
        indeg[t] += 1
    order = []
    deg = indeg.copy()
    queue = deque(np.flatnonzero(deg == 0).tolist())
    while queue:
        u = queue.popleft()
        order.append(u)
        for v in out[u]:
            deg[v] -= 1
            if deg[v] == 0:
                queue.append(v)
    if len(order) != n:
        raise DataError("graph has a cycle; per-level depth encoding needs a DAG/forest")
    depth = np.full(n, -1, dtype=np.int64)
    queue = deque(np.flatnonzero(indeg == 0).tolist())
    depth[list(queue)] = 0
    while queue:
        u = queue.popleft()
        for v in out[u]:
            if depth[v] < 0:
                depth[v] = depth[u] + 1
                queue.append(v)
    return depth


def depth_encode(kg: TripleStore, mode: str = "single") -> TripleStore:
    """``single``: one relation for every edge; ``per_level``: relation = depth of the head."""
    if mode == "single":
        t = kg.triples.copy()
        t[:, 1] = 0
        return TripleStore(kg.entities, ["edge"], t)
    if mode == "per_level":
        depth = node_depths(kg)
        t = kg.triples.copy()
        t[:, 1] = depth[t[:, 0]]
        p = int(t[:, 1].max()) + 1 if len(t) else 0
        return TripleStore(kg.entities, [f"depth{i}" for i in range(p)], t)
    raise UsageError(f"unknown depth encoding {mode!r}")


# -- query sampling -------------------------------------------------------------------

@dataclass
class QuerySample:
    ast: object
    tag: str
    answers: frozenset

    def text(self, kg: TripleStore) -> str:
        return qd.format_query(self.ast, kg.entities, kg.relations)


class UnrealizableStructure(DataError):
    pass


@dataclass
class _Grounder:
    graph: TripleStore
    rng: np.random.Generator
    heads: np.ndarray = field(init=False)
    targets: np.ndarray = field(init=False)

    def __post_init__(self):
        t = self.graph.triples
        loops = t[:, 0] == t[:, 2]
        self.heads = np.unique(t[~loops, 0])
        self.targets = np.unique(t[~loops, 2])

    def ground(self, node, target):
        if isinstance(node, qd.Entity):
            return qd.Entity(int(target))
        if isinstance(node, qd.Translate):
            preds = [(h, r) for h, r in self.graph.predecessors(int(target)) if h != target]
            if not preds:
                return None
            h, r = preds[self.rng.integers(len(preds))]
            child = self.ground(node.child, h)
            return None if child is None else qd.Translate(child, int(r))
        kids = []
        for i, ch in enumerate(node.children):
            if isinstance(node, qd.Union) and i > 0:
                pool = self.heads if isinstance(ch, qd.Entity) else self.targets
                t = pool[self.rng.integers(len(pool))]
            else:
                t = target
            g = self.ground(ch, t)
            if g is None:
                return None
            kids.append(g)
        if len({qd.format_query(k) for k in kids}) < len(kids):
            return None
        return type(node)(tuple(kids))


def sample_queries(bundle, tag: str, count: int, seed: int = 0, answer_graph: str = "train",
                   split_name: str = "test", max_answers: int = 100, require_held_out: bool = True,
                   max_attempts: int = 10**6) -> list[QuerySample]:
    """Rejection-sample ``count`` queries of structure ``tag``.

    Templates are grounded backwards from a random answer entity.  With
    ``answer_graph="train"`` answers come from the train graph.  With
    ``"full"`` answers come from the graph that includes the ``split_name``
    edges and, when ``require_held_out``, at least one answer must depend on
    a held-out edge.  Raises :class:`UnrealizableStructure` once the attempt
    budget is spent with an acceptance rate under 0.1%.
    """
    if tag not in qd.TEMPLATES:
        raise UsageError(f"unknown structure {tag!r}")
    if count <= 0:
        return []
    if isinstance(bundle, TripleStore):
        bundle = SplitBundle(bundle, bundle.with_triples([]), bundle.with_triples([]), (1.0, 0.0, 0.0))
    if answer_graph == "train":
        graph, base = bundle.train, None
    elif answer_graph == "full":
        base, graph = bundle.answer_graphs(split_name)
        if not require_held_out:
            base = None
    else:
        raise UsageError(f"answer_graph must be 'train' or 'full', got {answer_graph!r}")
    template = qd.parse(qd.TEMPLATES[tag])
    rng = np.random.default_rng(seed)
    g = _Grounder(graph, rng)
    if len(g.targets) == 0:
        raise UnrealizableStructure(f"structure {tag}: graph has no usable edges")
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > max_attempts and len(out) < 0.001 * attempts:
            raise UnrealizableStructure(
                f"structure {tag}: acceptance rate {len(out)}/{attempts - 1} below 0.1%")
        ast = g.ground(template, g.targets[rng.integers(len(g.targets))])
        if ast is None:
            continue
        answers = qd.oracle_answers(ast, graph)
        if not answers or len(answers) > max_answers:
            continue
        if base is not None and not (answers - qd.oracle_answers(ast, base)):
            continue
        out.append(QuerySample(ast, tag, answers))
    return out


def sample_negatives(answers, k: int, n_entities: int, rng) -> np.ndarray:
    """``k`` entity ids drawn uniformly (with replacement) outside ``answers``."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    answers = np.fromiter(answers, dtype=np.int64)
    if len(np.unique(answers)) >= n_entities:
        raise DataError("no entities left to draw negatives from")
    pool = np.setdiff1d(np.arange(n_entities), answers)
    return pool[rng.integers(len(pool), size=k)]


def batch_negatives(answer_sets, k: int, n_entities: int, rng) -> np.ndarray:
    """``(len(answer_sets), k)`` negatives; rejection-resamples collisions."""
    b = len(answer_sets)
    out = rng.integers(n_entities, size=(b, k))
    for i, ans in enumerate(answer_sets):
        if len(ans) * 2 > n_entities:
            out[i] = sample_negatives(ans, k, n_entities, rng)
            continue
        ans_arr = np.fromiter(ans, dtype=np.int64)
        bad = np.isin(out[i], ans_arr)
        while bad.any():
            out[i, bad] = rng.integers(n_entities, size=int(bad.sum()))
            bad = np.isin(out[i], ans_arr)
    return out


def queries_from_jsonl(rows, kg: TripleStore) -> list[QuerySample]:
    """Resolve JSONL rows against ``kg``'s vocabularies; unknown ids are reported together."""
    out, bad = [], set()
    for row in rows:
        try:
            ast = qd.parse(row["query"], kg.entity_index, kg.relation_index)
        except DataError as exc:
            bad.add(str(exc))
            continue
        missing = [a for a in row["answers"] if a not in kg.entity_index]
        if missing:
            bad.update(f"unknown entity id {a!r}" for a in missing)
            continue
        out.append(QuerySample(ast, row["structure"], frozenset(kg.entity_index[a] for a in row["answers"])))
    if bad:
        raise DataError("query file does not match the vocabulary: " + "; ".join(sorted(bad)))
    return out


def samples_to_rows(samples, kg: TripleStore):
    for s in samples:
        yield s.tag, s.text(kg), [kg.entities[a] for a in sorted(s.answers)]


def ceil_count(rate: float, n: int) -> int:
    return int(math.ceil(rate * n - 1e-12))
