"""Positive existential queries: AST, text syntax, DNF rewriting and set semantics.

Concrete syntax::

    E(id)            anchor entity
    T(q, rel)        relation translation (projection)
    I(q, q, ...)     intersection, arity >= 2
    U(q, q, ...)     union, arity >= 2

Whitespace is insignificant.  Ids are any run of characters other than
whitespace, parentheses and commas.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union as TUnion

from .errors import DataError, UsageError

MAX_DNF_BRANCHES = 64

STRUCTURES = ("1t", "2t", "3t", "2i", "3i", "2u", "ip", "pi", "up")
# unicode spellings used in reports
PRETTY = {"1t": "1t", "2t": "2t", "3t": "3t", "2i": "2∩", "3i": "3∩", "2u": "2∪",
          "ip": "∩t", "pi": "t∩", "up": "∪t"}
TRANSLATION = ("1t", "2t", "3t")
INTERSECTION = ("2i", "3i", "ip", "pi")
UNION = ("2u", "up")


@dataclass(frozen=True)
class Entity:
    id: TUnion[int, str]


@dataclass(frozen=True)
class Translate:
    child: "Query"
    rel: TUnion[int, str]


@dataclass(frozen=True)
class Intersect:
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise UsageError(f"intersection needs at least 2 operands, got {len(self.children)}")


@dataclass(frozen=True)
class Union:
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise UsageError(f"union needs at least 2 operands, got {len(self.children)}")


Query = TUnion[Entity, Translate, Intersect, Union]


@dataclass(frozen=True)
class DNFQuery:
    branches: tuple

    def __post_init__(self):
        if not self.branches:
            raise UsageError("DNF query needs at least one branch")


class QuerySyntaxError(UsageError):
    def __init__(self, msg, offset):
        super().__init__(f"{msg} at byte {offset}")
        self.offset = offset


# -- text syntax ------------------------------------------------------------------

_DELIMS = set("(),") | set(" \t\r\n")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def offset(self):
        return len(self.text[: self.pos].encode("utf-8"))

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, ch):
        self.skip()
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            got = self.text[self.pos] if self.pos < len(self.text) else "end of input"
            raise QuerySyntaxError(f"expected {ch!r}, got {got!r}", self.offset())
        self.pos += 1

    def peek(self):
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def ident(self):
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in _DELIMS:
            self.pos += 1
        if start == self.pos:
            raise QuerySyntaxError("expected an identifier", self.offset())
        return self.text[start:self.pos]

    def query(self) -> Query:
        self.skip()
        start = self.offset()
        head = self.ident()
        self.expect("(")
        if head == "E":
            node = Entity(self.ident())
        elif head == "T":
            child = self.query()
            self.expect(",")
            node = Translate(child, self.ident())
        elif head in ("I", "U"):
            children = [self.query()]
            while self.peek() == ",":
                self.pos += 1
                children.append(self.query())
            if len(children) < 2:
                raise QuerySyntaxError(f"{head} needs at least 2 operands (arity error)", start)
            node = Intersect(tuple(children)) if head == "I" else Union(tuple(children))
        else:
            raise QuerySyntaxError(f"unknown operator {head!r}", start)
        self.expect(")")
        return node


def parse(text: str, entities: Mapping[str, int] | None = None,
          relations: Mapping[str, int] | None = None) -> Query:
    """Parse the text syntax.  With vocabularies given, ids are resolved to ints."""
    p = _Parser(text)
    q = p.query()
    p.skip()
    if p.pos != len(text):
        raise QuerySyntaxError("trailing input", p.offset())
    if entities is not None or relations is not None:
        q = resolve(q, entities or {}, relations or {})
    return q


def resolve(q: Query, entities: Mapping[str, int], relations: Mapping[str, int]) -> Query:
    if isinstance(q, Entity):
        if q.id not in entities:
            raise DataError(f"unknown entity id {q.id!r}")
        return Entity(entities[q.id])
    if isinstance(q, Translate):
        if q.rel not in relations:
            raise DataError(f"unknown relation id {q.rel!r}")
        return Translate(resolve(q.child, entities, relations), relations[q.rel])
    return type(q)(tuple(resolve(ch, entities, relations) for ch in q.children))


def format_query(q: Query, entity_names=None, relation_names=None) -> str:
    """Inverse of :func:`parse`; name tables map int ids back to strings."""
    if isinstance(q, Entity):
        return f"E({entity_names[q.id] if entity_names is not None else q.id})"
    if isinstance(q, Translate):
        rel = relation_names[q.rel] if relation_names is not None else q.rel
        return f"T({format_query(q.child, entity_names, relation_names)},{rel})"
    op = "I" if isinstance(q, Intersect) else "U"
    return f"{op}({','.join(format_query(ch, entity_names, relation_names) for ch in q.children)})"


def canonical(q: Query) -> Query:
    """Sort intersection/union operands and drop duplicate operands."""
    if isinstance(q, Entity):
        return q
    if isinstance(q, Translate):
        return Translate(canonical(q.child), q.rel)
    kids = {format_query(k): k for k in (canonical(ch) for ch in q.children)}
    ordered = tuple(kids[key] for key in sorted(kids))
    if len(ordered) == 1:
        return ordered[0]
    return type(q)(ordered)


def shape_key(q: Query) -> str:
    """Structure signature with ids erased, e.g. ``I(T(E),T(T(E)))``."""
    if isinstance(q, Entity):
        return "E"
    if isinstance(q, Translate):
        return f"T({shape_key(q.child)})"
    op = "I" if isinstance(q, Intersect) else "U"
    return f"{op}({','.join(shape_key(ch) for ch in q.children)})"


def has_union(q: Query) -> bool:
    if isinstance(q, Union):
        return True
    if isinstance(q, Entity):
        return False
    if isinstance(q, Translate):
        return has_union(q.child)
    return any(has_union(ch) for ch in q.children)


# -- DNF ----------------------------------------------------------------------------

def _dnf(q: Query) -> list:
    if isinstance(q, Entity):
        return [q]
    if isinstance(q, Translate):
        return [Translate(b, q.rel) for b in _dnf(q.child)]
    if isinstance(q, Union):
        out = [b for ch in q.children for b in _dnf(ch)]
    else:
        out = [Intersect(tuple(combo)) for combo in itertools.product(*(_dnf(ch) for ch in q.children))]
    if len(out) > MAX_DNF_BRANCHES:
        raise UsageError(f"DNF expansion exceeds {MAX_DNF_BRANCHES} branches")
    return out


def to_dnf(q: Query) -> DNFQuery:
    """Push every union to the top: a union of union-free branches."""
    if isinstance(q, DNFQuery):
        return q
    return DNFQuery(tuple(_dnf(q)))


# -- structure tags ------------------------------------------------------------------

_SHAPES = {
    "T(E)": "1t",
    "T(T(E))": "2t",
    "T(T(T(E)))": "3t",
    "I(T(E),T(E))": "2i",
    "I(T(E),T(E),T(E))": "3i",
    "U(T(E),T(E))": "2u",
    "T(I(T(E),T(E)))": "ip",
    "I(T(E),T(T(E)))": "pi",
    "T(U(E,E))": "up",
}

# templates for sampling; operand order is the one the sampler grounds
TEMPLATES = {
    "1t": "T(E(_),_)",
    "2t": "T(T(E(_),_),_)",
    "3t": "T(T(T(E(_),_),_),_)",
    "2i": "I(T(E(_),_),T(E(_),_))",
    "3i": "I(T(E(_),_),T(E(_),_),T(E(_),_))",
    "2u": "U(T(E(_),_),T(E(_),_))",
    "ip": "T(I(T(E(_),_),T(E(_),_)),_)",
    "pi": "I(T(T(E(_),_),_),T(E(_),_))",
    "up": "T(U(E(_),E(_)),_)",
}


def _sorted_shape(q: Query) -> str:
    if isinstance(q, Entity):
        return "E"
    if isinstance(q, Translate):
        return f"T({_sorted_shape(q.child)})"
    op = "I" if isinstance(q, Intersect) else "U"
    return f"{op}({','.join(sorted(_sorted_shape(ch) for ch in q.children))})"


def classify(q: Query) -> str:
    """Structure tag of ``q``; operand order does not matter."""
    key = _sorted_shape(q)
    if key not in _SHAPES:
        raise UsageError(f"query shape {key} is not one of the benchmark structures")
    return _SHAPES[key]


# -- set semantics -----------------------------------------------------------------

def oracle_answers(q: Query, kg) -> frozenset:
    """Exact answer set by graph traversal.  ``kg`` needs ``successors(h, r)``."""
    if isinstance(q, DNFQuery):
        return frozenset().union(*(oracle_answers(b, kg) for b in q.branches))
    if isinstance(q, Entity):
        return frozenset((q.id,))
    if isinstance(q, Translate):
        out = set()
        for h in oracle_answers(q.child, kg):
            out.update(kg.successors(h, q.rel))
        return frozenset(out)
    sets = [oracle_answers(ch, kg) for ch in q.children]
    if isinstance(q, Intersect):
        return frozenset.intersection(*sets)
    return frozenset.union(*sets)


def entities_in(q: Query) -> Iterator:
    if isinstance(q, Entity):
        yield q.id
    elif isinstance(q, Translate):
        yield from entities_in(q.child)
    else:
        for ch in q.children:
            yield from entities_in(ch)


def relations_in(q: Query) -> Iterator:
    if isinstance(q, Translate):
        yield q.rel
        yield from relations_in(q.child)
    elif not isinstance(q, Entity):
        for ch in q.children:
            yield from relations_in(ch)


# -- JSONL ---------------------------------------------------------------------------

def dumps_sample(structure: str, query_text: str, answers: Iterable[str]) -> str:
    obj = {"structure": structure, "query": query_text, "answers": list(answers)}
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def write_jsonl(path, rows) -> None:
    """``rows`` yields ``(structure, query_text, answer_names)`` triples."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for structure, text, answers in rows:
            fh.write(dumps_sample(structure, text, answers))


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            missing = {"structure", "query", "answers"} - set(obj)
            if missing:
                raise DataError(f"{path}:{lineno}: missing fields {sorted(missing)}")
            rows.append(obj)
    return rows
