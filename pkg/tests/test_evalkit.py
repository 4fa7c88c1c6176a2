import json
import math

import numpy as np
import pytest

from hypekg import data, synth
from hypekg import model as M
from hypekg import query as qd
from hypekg.errors import DataError, UsageError
from hypekg.evalkit import analysis, anomaly, metrics, semantic, viz


def _out(ids, answers):
    return metrics.RankedOutput(np.array(ids), np.zeros(len(ids)), frozenset(answers))


def test_hits_and_mrr_examples():
    out = _out([0, 1, 2], {0, 2})
    assert metrics.hits_at_k(out, 3) == pytest.approx(2 / 3)
    assert metrics.mrr_paper(out) == pytest.approx(4 / 9)
    assert metrics.mrr_standard(out) == 1.0
    assert metrics.mrr_standard(_out([0, 1, 2], {2})) == pytest.approx(1 / 3)
    assert metrics.mrr_standard(_out([0, 1], set())) == 0.0
    with pytest.raises(UsageError):
        metrics.hits_at_k(out, 4)
    with pytest.raises(UsageError):
        metrics.hits_at_k(out, 0)


def test_rank_breaks_ties_by_id():
    out = metrics.rank([0.5, 0.1, 0.5, 0.1], {2}, top_n=3)
    assert out.ids.tolist() == [1, 3, 0]


def test_evaluate_schema(overlap_kg):
    cfg = M.ModelConfig(d=4)
    store = M.ParameterStore.init(overlap_kg.n_entities, overlap_kg.n_relations, cfg, 0)
    samples = data.sample_queries(overlap_kg, "1t", 5, seed=0)
    rep = metrics.evaluate(samples, store.arrays, cfg)
    assert list(rep) == list(qd.STRUCTURES) + ["avg"]
    assert set(rep["1t"]) == set(metrics.METRICS)
    assert rep["2i"] is None and rep["avg"] == rep["1t"]
    json.loads(metrics.report_json(rep))
    assert metrics.evaluate([], store.arrays, cfg)["avg"] is None
    lines = metrics.report_lines(rep, {"1t": 5})
    assert len(lines) == 3 and lines[1].endswith("\t5")


def test_delta_examples():
    assert analysis.delta_intra(np.array([[0.0], [1.0]]), "euclid") == pytest.approx(0.5)
    assert analysis.delta_inter(np.array([[0.0], [1.0]]), np.array([[2.0], [4.0]]), "euclid") == pytest.approx(2.5)
    pts = np.array([[0.6, 0.0], [-0.6, 0.0]])
    assert analysis.pairwise(pts, pts, "euclid")[0, 1] == pytest.approx(1.2)
    assert analysis.pairwise(pts, pts, "hyp")[0, 1] == pytest.approx(4 * math.atanh(0.6), abs=1e-9)
    assert analysis.pairwise(pts, pts, "hyp")[0, 1] == pytest.approx(2.7726, abs=1e-4)
    assert analysis.delta_intra(pts, "euclid", conventional=True) == pytest.approx(1.2)
    with pytest.raises(UsageError):
        analysis.delta_intra(pts[:1])


def test_distance_table_on_tree(tree3):
    cen = np.random.default_rng(0).normal(size=(tree3.n_entities, 2)) * 0.2
    intra, inter, keys = analysis.distance_table(tree3, cen)
    assert keys == [0, 1, 2, 3]
    assert intra[3] is None and intra[0] > 0
    assert inter.shape == (4, 4) and np.allclose(inter, inter.T)
    csv = analysis.table_csv(intra, inter, keys, "hyp")
    assert csv.splitlines()[1] == "kind,level,P0,P1,P2,P3"


def _pseudo():
    tree = synth.gen_tree(synth.TreeSpec(3, 4))
    return tree, anomaly.build_pseudo_tree(tree, 0.10, seed=0)


def test_pseudo_tree_injection():
    tree, pt = _pseudo()
    kids = tree.children()
    leaves = set(range(tree.n_entities)) - set(kids)
    assert pt.parents_at(1) and pt.max_level == 3
    assert 0 not in pt.injected
    for p, foreign in pt.injected.items():
        assert len(foreign) == math.ceil(0.1 * len(kids[p]))
        assert set(foreign) <= leaves
        assert not set(foreign) & anomaly._descendants(kids, p)
    assert len(pt.store) == len(tree) + sum(len(v) for v in pt.injected.values())
    assert anomaly.build_pseudo_tree(tree, 0.0).injected == {}
    assert anomaly.build_pseudo_tree(tree, 0.0).store.edge_set() == tree.edge_set()


def test_best_threshold_and_ties():
    scores = np.array([0.1, 0.2, 0.9, 0.8])
    labels = np.array([0, 0, 1, 1])
    t = anomaly.best_f1_threshold(scores, labels)
    assert anomaly.prf(scores > t, labels)["f1"] == 1.0
    flat = np.ones(10)
    y = np.array([1, 1, 1] + [0] * 7)
    t = anomaly.best_f1_threshold(flat, y)
    pi = 0.3
    assert anomaly.prf(flat > t, y)["f1"] == pytest.approx(2 * pi / (1 + pi))


def test_anomaly_detect_policies():
    _, pt = _pseudo()
    cfg = M.ModelConfig(d=2)
    params = M.ParameterStore.init(pt.base.n_entities, pt.base.n_relations, cfg, 0).arrays

    flat = lambda scores, owner: np.zeros_like(scores)
    res = anomaly.anomaly_detect(pt, params, cfg, 1, policy=0.5, score_fn=flat)
    assert res["tp"] == 0 and res["f1"] == 0.0
    assert res["children"] == sum(len(pt.children(p)) for p in pt.parents_at(1))
    res = anomaly.anomaly_detect(pt, params, cfg, 1)
    assert 0 <= res["f1"] <= 1 and res["parents"] >= 1
    with pytest.raises(UsageError):
        anomaly.anomaly_detect(pt, params, cfg, 9)


def test_semantic_contrast_fixture():
    _, pt = _pseudo()
    n = pt.base.n_entities
    vecs = np.tile([1.0, 0.0], (n, 1))
    bad = {c for v in pt.injected.values() for c in v}
    p = pt.parents_at(1)[0]
    kids = pt.children(p)
    for c in kids:
        vecs[c] = [0.0, 1.0] if c in pt.injected[p] else [1.0, 0.0]
    scores = np.linspace(0, 1, len(kids))
    owner = np.full(len(kids), p)
    out = semantic.semantic_rescorer(pt, vecs, beta=0.7)(scores, owner)
    extra = out - (scores - scores.min()) / np.ptp(scores)
    for c, e in zip(kids, extra):
        assert e == pytest.approx(0.7 if c in pt.injected[p] else 0.0, abs=1e-12)
    assert bad
    assert semantic.semantic_rescorer(pt, vecs, beta=0)(scores, owner) is scores


def test_semantic_vectors(tmp_path):
    idx = {"a": 0, "b": 1}
    p = tmp_path / "v.txt"
    p.write_text("a 1 0 0\nb 0 2 0\n")
    v = semantic.load_vectors(p, idx)
    assert v.shape == (2, 3)
    with pytest.raises(DataError, match="b"):
        semantic.vectors_for({"a": np.ones(2)}, idx)
    cen = np.zeros((2, 3))
    init = semantic.semantic_init(cen, np.array([[1.0, 0, 0], [0, 0, 0]]), alpha=0.5)
    assert init[0] == pytest.approx([math.tanh(0.5), 0, 0])
    assert np.array_equal(init[1], cen[1])
    assert semantic.fit_dimension(np.ones((2, 5)), 3).shape == (2, 3)


def test_pca_projection(rng):
    cen = rng.normal(size=(10, 4)) * 0.1
    lim = np.abs(rng.normal(size=(10, 4))) * 0.01
    c2, l2 = viz.pca_project_2d(cen, lim)
    assert c2.shape == (10, 2) and l2.shape == (10, 2)
    assert np.linalg.norm(c2, axis=1).max() == pytest.approx(viz.DISPLAY_RADIUS)
    assert np.all(l2 >= 0)
    same = np.tile(cen[:1], (3, 1))
    c0, l0 = viz.pca_project_2d(same, np.zeros((3, 4)))
    assert not np.any(c0) and not np.any(l0)
    rec = viz.viz_records([1, 2], ["a", "b"], [0, 1], c2[:2], l2[:2])
    assert rec[0]["limit"][0] == pytest.approx(l2[0, 0] * 10)
