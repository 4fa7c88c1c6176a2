"""External per-entity vectors: center initialisation and anomaly rescoring."""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..gyro import exp0


def load_vectors(path, entity_index: dict) -> np.ndarray:
    """Read ``name v1 v2 ...`` lines (whitespace separated) into an ``(n_entities, s)`` array."""
    rows, dim = {}, None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric vector entry") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DataError(f"{path}:{lineno}: vector has {len(vec)} entries, expected {dim}")
            rows[parts[0]] = vec
    return vectors_for(rows, entity_index)


def vectors_for(rows: dict, entity_index: dict) -> np.ndarray:
    missing = sorted(set(entity_index) - set(rows))
    if missing:
        raise DataError("no semantic vector for entities: " + ", ".join(missing[:20])
                        + (" ..." if len(missing) > 20 else ""))
    dims = {len(v) for v in rows.values()}
    if len(dims) != 1:
        raise DataError(f"semantic vectors have mixed dimensions {sorted(dims)}")
    out = np.zeros((len(entity_index), dims.pop()))
    for name, i in entity_index.items():
        out[i] = rows[name]
    if not np.all(np.isfinite(out)):
        raise DataError("semantic vectors contain non-finite values")
    return out


def fit_dimension(vectors: np.ndarray, d: int, seed: int = 0) -> np.ndarray:
    """Seeded Gaussian random projection to ``d`` columns (identity when already ``d``)."""
    s = vectors.shape[1]
    if s == d:
        return vectors
    proj = np.random.default_rng(seed).normal(0.0, 1.0 / np.sqrt(d), size=(s, d))
    return vectors @ proj


def semantic_init(ent_cen: np.ndarray, vectors: np.ndarray, alpha: float = 0.5, c: float = 1.0,
                  seed: int = 0) -> np.ndarray:
    """Centers at ``exp0(alpha * v/|v| * min(|v|, 1))``; zero vectors keep their current center."""
    v = fit_dimension(vectors, ent_cen.shape[1], seed)
    n = np.linalg.norm(v, axis=1, keepdims=True)
    safe = np.where(n > 0, n, 1.0)
    tangent = alpha * v / safe * np.minimum(n, 1.0)
    return np.where(n > 0, exp0(tangent, c), ent_cen)


def _cosine(a, b):
    na, nb = np.linalg.norm(a, axis=-1), np.linalg.norm(b, axis=-1)
    denom = na * nb
    return np.where(denom > 0, np.sum(a * b, axis=-1) / np.where(denom > 0, denom, 1.0), 0.0)


def semantic_rescorer(pt, vectors: np.ndarray, beta: float = 1.0, reference: str = "genuine"):
    """``score_fn`` for :func:`anomaly_detect` combining distance and text dissimilarity.

    Distances are min-max scaled within each parent's children, then
    ``beta * (1 - cos(v_child, mean reference vector))`` is added.  The
    reference is the mean over the parent's genuine children (``"genuine"``)
    or over every current child (``"all"``).  ``beta == 0`` returns the
    plain distances unchanged.
    """
    if reference not in ("genuine", "all"):
        raise DataError(f"unknown semantic reference {reference!r}")

    def rescore(scores, owner):
        if beta == 0:
            return scores
        out = np.empty_like(scores, dtype=np.float64)
        for p in np.unique(owner):
            idx = np.flatnonzero(owner == p)
            kids = np.array(pt.children(int(p)))
            s = scores[idx]
            span = s.max() - s.min()
            norm = (s - s.min()) / span if span > 0 else np.zeros_like(s)
            ref_ids = sorted(pt.base_children.get(int(p), ())) if reference == "genuine" else kids
            ref = vectors[np.asarray(ref_ids)].mean(axis=0)
            out[idx] = norm + beta * (1.0 - _cosine(vectors[kids], ref))
        return out

    return rescore
