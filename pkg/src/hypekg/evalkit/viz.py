"""Two-dimensional projection of hyperboloids for plotting."""

from __future__ import annotations

import json
import logging

import numpy as np

from ..errors import UsageError

log = logging.getLogger(__name__)

DISPLAY_RADIUS = 0.95
LIMIT_DISPLAY_SCALE = 10.0


def pca_project_2d(cen, lim, tol: float = 1e-12) -> tuple:
    """PCA of concatenated ``(cen, lim)`` rows onto two axes.

    Returns ``(centers, limits)``, both ``(n, 2)``.  Centers are the projected
    rows, rescaled by one global factor so the largest norm is 0.95.  Limits
    map through the absolute limit block of the loadings and share that factor.
    """
    cen, lim = np.asarray(cen, dtype=np.float64), np.asarray(lim, dtype=np.float64)
    if len(cen) < 2:
        raise UsageError("need at least two hyperboloids")
    x = np.concatenate([cen, lim], axis=1)
    xc = x - x.mean(axis=0)
    _, sv, vt = np.linalg.svd(xc, full_matrices=False)
    w = np.zeros((x.shape[1], 2))
    keep = min(2, len(sv))
    w[:, :keep] = vt[:keep].T
    small = sv[:keep] <= tol * max(sv[0] if len(sv) else 0.0, 1.0)
    w[:, :keep][:, small] = 0.0
    if np.all(w == 0):
        log.warning("rank-deficient input; projecting everything to the origin")
        return np.zeros((len(x), 2)), np.zeros((len(x), 2))
    centers = xc @ w
    limits = lim @ np.abs(w[cen.shape[1]:])
    top = np.linalg.norm(centers, axis=1).max()
    scale = DISPLAY_RADIUS / top if top > 0 else 1.0
    return centers * scale, limits * scale


def viz_records(ids, labels, levels, centers, limits) -> list:
    return [{"id": str(i), "label": str(lab), "level": int(lv),
             "center": [float(c[0]), float(c[1])],
             "limit": [float(l[0]) * LIMIT_DISPLAY_SCALE, float(l[1]) * LIMIT_DISPLAY_SCALE]}
            for i, lab, lv, c, l in zip(ids, labels, levels, centers, limits)]


def write_viz_json(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(records, fh, indent=1, ensure_ascii=False)
        fh.write("\n")
