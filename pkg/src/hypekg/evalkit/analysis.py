"""Within-level and cross-level average distances of tree embeddings."""

from __future__ import annotations

import numpy as np

from ..data import TripleStore, node_depths
from ..errors import UsageError
from ..gyro import hyp_distance


def pairwise(a, b, metric: str = "hyp", c: float = 1.0) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if metric == "hyp":
        return hyp_distance(a[:, None, :], b[None, :, :], c)
    if metric == "euclid":
        return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    raise UsageError(f"unknown metric {metric!r}")


def delta_intra(points, metric: str = "hyp", c: float = 1.0, conventional: bool = False) -> float:
    """Upper-triangle sum (diagonal included) over ``n(n-1)``.

    ``conventional=True`` gives the plain mean over unordered distinct pairs.
    """
    n = len(points)
    if n < 2:
        raise UsageError("a level needs at least two entities")
    dist = pairwise(points, points, metric, c)
    if conventional:
        return float(dist[np.triu_indices(n, 1)].mean())
    return float(dist[np.triu_indices(n)].sum() / (n * (n - 1)))


def delta_inter(a, b, metric: str = "hyp", c: float = 1.0) -> float:
    if len(a) == 0 or len(b) == 0:
        raise UsageError("levels must be nonempty")
    return float(pairwise(a, b, metric, c).mean())


def levels(kg: TripleStore) -> dict:
    """``{l: node ids}`` where level ``l`` sits ``l`` steps above the deepest nodes (0 = leaves)."""
    depth = node_depths(kg)
    bottom = int(depth.max())
    return {bottom - int(d): np.flatnonzero(depth == d) for d in sorted(np.unique(depth), reverse=True)}


def distance_table(kg: TripleStore, cen, metric: str = "hyp", c: float = 1.0,
                   conventional: bool = False) -> tuple:
    """``(intra, inter)``: intra maps level -> value (None for singleton levels); inter is a matrix."""
    lv = levels(kg)
    keys = sorted(lv)
    intra = {l: delta_intra(cen[lv[l]], metric, c, conventional) if len(lv[l]) >= 2 else None for l in keys}
    inter = np.array([[delta_inter(cen[lv[a]], cen[lv[b]], metric, c) for b in keys] for a in keys])
    return intra, inter, keys


def table_csv(intra: dict, inter, keys, metric: str) -> str:
    lines = [f"# metric={metric}", "kind,level," + ",".join(f"P{k}" for k in keys)]
    for k in keys:
        v = intra[k]
        lines.append(f"intra,P{k}," + ("" if v is None else repr(v)) + "," * (len(keys) - 1))
    for i, k in enumerate(keys):
        lines.append(f"inter,P{k}," + ",".join(repr(float(x)) for x in inter[i]))
    return "\n".join(lines) + "\n"
