import numpy as np
import pytest

from hypekg import data, query as qd, synth
from hypekg.errors import UsageError


def random_ball(rng, n, d, radius=0.9):
    x = rng.normal(size=(n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * radius * rng.uniform(0, 1, size=(n, 1)) ** (1 / d)


def random_ast(rng, depth, n_ent=50, n_rel=5):
    if depth == 0:
        return qd.Entity(int(rng.integers(n_ent)))
    kind = rng.integers(4)
    if kind == 0:
        return qd.Entity(int(rng.integers(n_ent)))
    if kind == 1:
        return qd.Translate(random_ast(rng, depth - 1, n_ent, n_rel), int(rng.integers(n_rel)))
    kids = tuple(random_ast(rng, depth - 1, n_ent, n_rel) for _ in range(int(rng.integers(2, 4))))
    return qd.Intersect(kids) if kind == 2 else qd.Union(kids)


def dnf_ready_ast(rng, depth, n_ent=50, n_rel=5):
    """A random AST whose DNF stays within the branch cap (oversized draws are redrawn)."""
    while True:
        q = random_ast(rng, depth, n_ent, n_rel)
        try:
            qd.to_dnf(q)
        except UsageError:
            continue
        return q


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def two_triples():
    return data.from_named_triples([("a", "r", "b"), ("a", "r", "c")])


@pytest.fixture(scope="session")
def tree3():
    return synth.gen_tree(synth.TreeSpec(3, 2, "per_level"))


@pytest.fixture(scope="session")
def overlap_kg():
    return synth.gen_overlap_kg(50, 5, 0.02, seed=3)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
