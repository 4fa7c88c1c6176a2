"""Ranking metrics and per-structure reports."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .. import model as M
from .. import query as qd
from ..errors import UsageError

METRICS = ("hits@1", "hits@3", "hits@10", "mrr_paper", "mrr_standard")


@dataclass
class RankedOutput:
    ids: np.ndarray  # best first
    scores: np.ndarray
    answers: frozenset

    def __len__(self):
        return len(self.ids)


def rank(scores, answers=frozenset(), top_n: int | None = None) -> RankedOutput:
    """Ascending score, ties broken by ascending entity id."""
    scores = np.asarray(scores)
    ids = np.arange(len(scores))
    order = np.lexsort((ids, scores))
    if top_n is not None:
        order = order[:top_n]
    return RankedOutput(order, scores[order], frozenset(answers))


def _hit_mask(output: RankedOutput) -> np.ndarray:
    if not output.answers:
        return np.zeros(len(output), dtype=bool)
    return np.isin(output.ids, np.fromiter(output.answers, dtype=np.int64))


def hits_at_k(output: RankedOutput, k: int) -> float:
    """Fraction of the top ``k`` ids that are answers."""
    if k <= 0:
        raise UsageError("k must be positive")
    if k > len(output):
        raise UsageError(f"k={k} exceeds output length {len(output)}")
    return float(_hit_mask(output)[:k].sum()) / k


def mrr_paper(output: RankedOutput) -> float:
    """Sum of ``1/position`` over every answer in the output, divided by the output length."""
    n = len(output)
    if n == 0:
        raise UsageError("empty output")
    pos = np.flatnonzero(_hit_mask(output)) + 1
    return float(np.sum(1.0 / pos)) / n


def mrr_standard(output: RankedOutput) -> float:
    pos = np.flatnonzero(_hit_mask(output))
    return 1.0 / (pos[0] + 1) if len(pos) else 0.0


def query_metrics(output: RankedOutput) -> dict:
    out = {f"hits@{k}": hits_at_k(output, min(k, len(output))) for k in (1, 3, 10)}
    out["mrr_paper"] = mrr_paper(output)
    out["mrr_standard"] = mrr_standard(output)
    return out


def evaluate(samples, params, config, top_n: int | None = None) -> dict:
    """Report keyed by every structure tag plus ``avg``; absent structures map to None.

    ``avg`` is the unweighted mean over the structures that have queries.
    """
    report = {tag: None for tag in qd.STRUCTURES}
    if samples:
        scores = M.score_all([s.ast for s in samples], params, config)
        per_tag = {}
        for s, row in zip(samples, scores):
            per_tag.setdefault(s.tag, []).append(query_metrics(rank(row, s.answers, top_n)))
        for tag, rows in per_tag.items():
            if tag not in report:
                raise UsageError(f"unknown structure tag {tag!r}")
            report[tag] = {m: float(np.mean([r[m] for r in rows])) for m in METRICS}
    present = [report[t] for t in qd.STRUCTURES if report[t] is not None]
    report["avg"] = {m: float(np.mean([r[m] for r in present])) for m in METRICS} if present else None
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False) + "\n"


def report_lines(report: dict, counts: dict | None = None) -> list[str]:
    """Tab-separated text table, one row per structure with queries."""
    lines = ["structure\t" + "\t".join(METRICS) + ("\tqueries" if counts else "")]
    for tag in qd.STRUCTURES + ("avg",):
        row = report.get(tag)
        if row is None:
            continue
        cells = [f"{row[m]:.4f}" for m in METRICS]
        if counts:
            cells.append(str(counts.get(tag, "")))
        lines.append(qd.PRETTY.get(tag, tag) + "\t" + "\t".join(cells))
    return lines
