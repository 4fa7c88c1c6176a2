"""Reverse-mode differentiation over numpy arrays.

Every op in this module accepts either plain arrays or :class:`Var` inputs.
With plain inputs it simply evaluates with numpy; as soon as one input is a
``Var`` the result is recorded on that variable's :class:`Tape`.  The tape is
an append-only list, so node order is already a topological order and the
backward pass is a single reversed sweep.

Subgradient conventions: ``clamp_min(a, lo)`` has derivative 0 at ``a == lo``;
``maximum``/``minimum``/``reduce_min`` route the gradient to the selected
operand, ties going to the first one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import NumericError, UsageError

_TINY = 1e-15


class Tape:
    """Append-only record of differentiable operations."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Var] = []
        self.check_finite = check_finite

    def param(self, value, name: str | None = None) -> "Var":
        return Var(np.asarray(value, dtype=np.float64), self, (), None, name or "param")

    def backward(self, out: "Var", seed=1.0) -> list:
        if out.tape is not self:
            raise UsageError("output does not belong to this tape")
        grads: list = [None] * len(self.nodes)
        grads[out.index] = np.broadcast_to(np.asarray(seed, dtype=np.float64), out.value.shape)
        for i in range(out.index, -1, -1):
            g = grads[i]
            node = self.nodes[i]
            if g is None or node.vjp is None:
                continue
            for p, gp in zip(node.parents, node.vjp(g)):
                if gp is None or not isinstance(p, Var):
                    continue
                gp = _unbroadcast(gp, p.value.shape)
                j = p.index
                grads[j] = gp if grads[j] is None else grads[j] + gp
            grads[i] = None  # interior adjoints are not needed once propagated
        return grads

    def release(self) -> None:
        """Break node/tape reference cycles so intermediates free immediately."""
        for node in self.nodes:
            node.parents = ()
            node.vjp = None
        self.nodes = []


class Var:
    __slots__ = ("value", "tape", "parents", "vjp", "name", "index")
    __array_priority__ = 1000

    def __init__(self, value, tape, parents, vjp, name):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.vjp = vjp
        self.name = name
        self.index = len(tape.nodes)
        tape.nodes.append(self)
        if tape.check_finite and not np.all(np.isfinite(value)):
            raise NumericError(f"non-finite value at tape node {self.index} ({name})")

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var({self.name}, shape={self.value.shape})"

    def __len__(self):
        return len(self.value)

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, key):
        return getitem(self, key)


def value_of(x):
    return x.value if isinstance(x, Var) else x


def is_var(x) -> bool:
    return isinstance(x, Var)


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return np.broadcast_to(g, shape)


def _record(name, value, parents, vjp):
    tape = next(p.tape for p in parents if isinstance(p, Var))
    return Var(np.asarray(value, dtype=np.float64), tape, parents, vjp, name)


def _any_var(*xs):
    return any(isinstance(x, Var) for x in xs)


# -- arithmetic -------------------------------------------------------------

def add(a, b):
    if not _any_var(a, b):
        return np.add(a, b)
    return _record("add", value_of(a) + value_of(b), (a, b), lambda g: (g, g))


def sub(a, b):
    if not _any_var(a, b):
        return np.subtract(a, b)
    return _record("sub", value_of(a) - value_of(b), (a, b), lambda g: (g, -g))


def mul(a, b):
    if not _any_var(a, b):
        return np.multiply(a, b)
    av, bv = value_of(a), value_of(b)
    return _record("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def div(a, b):
    if not _any_var(a, b):
        return np.divide(a, b)
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return _record("div", out, (a, b), lambda g: (g / bv, -g * out / bv))


def neg(a):
    if not _any_var(a):
        return np.negative(a)
    return _record("neg", -a.value, (a,), lambda g: (-g,))


def power(a, p: float):
    if not _any_var(a):
        return np.power(a, p)
    av = a.value
    return _record("pow", av**p, (a,), lambda g: (g * p * av ** (p - 1),))


def square(a):
    if not _any_var(a):
        return np.square(a)
    av = a.value
    return _record("square", av * av, (a,), lambda g: (2.0 * g * av,))


def matmul(a, b):
    if not _any_var(a, b):
        return np.matmul(a, b)
    av, bv = value_of(a), value_of(b)

    def vjp(g):
        return (g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g)

    return _record("matmul", av @ bv, (a, b), vjp)


# -- reductions and shape ops -----------------------------------------------

def reduce_sum(a, axis=None, keepdims=False):
    if not _any_var(a):
        return np.sum(a, axis=axis, keepdims=keepdims)
    shape = a.value.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _record("sum", np.sum(a.value, axis=axis, keepdims=keepdims), (a,), vjp)


def reduce_mean(a, axis=None, keepdims=False):
    n = np.size(value_of(a)) if axis is None else np.prod(
        [np.shape(value_of(a))[ax] for ax in np.atleast_1d(axis)])
    return reduce_sum(a, axis=axis, keepdims=keepdims) / float(n)


def reduce_min(a, axis=-1):
    """Minimum along ``axis``; the gradient goes to the first minimiser."""
    if not _any_var(a):
        return np.min(a, axis=axis)
    av = a.value
    idx = np.expand_dims(np.argmin(av, axis=axis), axis)

    def vjp(g):
        out = np.zeros_like(av)
        np.put_along_axis(out, idx, np.expand_dims(g, axis), axis=axis)
        return (out,)

    return _record("min_reduce", np.take_along_axis(av, idx, axis=axis).squeeze(axis), (a,), vjp)


def reshape(a, shape):
    if not _any_var(a):
        return np.reshape(a, shape)
    old = a.value.shape
    return _record("reshape", a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def expand_dims(a, axis):
    return reshape(a, np.expand_dims(value_of(a), axis).shape)


def broadcast_to(a, shape):
    if not _any_var(a):
        return np.broadcast_to(a, shape)
    return _record("broadcast", np.broadcast_to(a.value, shape), (a,), lambda g: (g,))


def getitem(a, key):
    if not _any_var(a):
        return a[key]
    av = a.value

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, key, g)
        return (out,)

    return _record("getitem", av[key], (a,), vjp)


def gather(table, idx):
    """Rows of ``table`` at integer ``idx`` (any shape); scatter-add backward."""
    idx = np.asarray(idx)
    if not _any_var(table):
        return table[idx]
    tv = table.value

    def vjp(g):
        out = np.zeros_like(tv)
        np.add.at(out, idx.reshape(-1), g.reshape((-1,) + tv.shape[1:]))
        return (out,)

    return _record("gather", tv[idx], (table,), vjp)


def concat(xs, axis=-1):
    xs = list(xs)
    if not _any_var(*xs):
        return np.concatenate(xs, axis=axis)
    vals = [np.asarray(value_of(x)) for x in xs]
    ax = axis % vals[0].ndim
    bounds = np.cumsum([v.shape[ax] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _record("concat", np.concatenate(vals, axis=ax), tuple(xs), vjp)


def stack(xs, axis=0):
    xs = list(xs)
    if not _any_var(*xs):
        return np.stack(xs, axis=axis)
    vals = [np.asarray(value_of(x)) for x in xs]
    out = np.stack(vals, axis=axis)
    ax = axis % out.ndim

    def vjp(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(vals)))

    return _record("stack", out, tuple(xs), vjp)


# -- elementwise nonlinearities ----------------------------------------------

def _unary(name, fn, dfn):
    def op(a):
        if not _any_var(a):
            return fn(a)
        av = a.value
        out = fn(av)
        return _record(name, out, (a,), lambda g: (g * dfn(av, out),))

    op.__name__ = name
    return op


exp = _unary("exp", np.exp, lambda x, y: y)
log = _unary("log", np.log, lambda x, y: 1.0 / x)
sqrt = _unary("sqrt", np.sqrt, lambda x, y: 0.5 / y)
tanh = _unary("tanh", np.tanh, lambda x, y: 1.0 - y * y)
artanh = _unary("artanh", np.arctanh, lambda x, y: 1.0 / (1.0 - x * x))
arccosh = _unary("arccosh", np.arccosh, lambda x, y: 1.0 / np.sqrt(np.maximum(x * x - 1.0, _TINY)))
absolute = _unary("abs", np.abs, lambda x, y: np.sign(x))
relu = _unary("relu", lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(np.float64))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_sigmoid(x):
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


sigmoid = _unary("sigmoid", _sigmoid, lambda x, y: y * (1.0 - y))
log_sigmoid = _unary("log_sigmoid", _log_sigmoid, lambda x, y: _sigmoid(-x))


def clamp_min(a, lo):
    """``max(a, lo)`` for a constant ``lo``; derivative 0 at the kink."""
    if not _any_var(a):
        return np.maximum(a, lo)
    av = a.value
    return _record("clamp_min", np.maximum(av, lo), (a,), lambda g: (g * (av > lo),))


def clip(a, lo, hi):
    if not _any_var(a):
        return np.clip(a, lo, hi)
    av = a.value
    return _record("clip", np.clip(av, lo, hi), (a,), lambda g: (g * ((av > lo) & (av < hi)),))


def maximum(a, b):
    if not _any_var(a, b):
        return np.maximum(a, b)
    av, bv = value_of(a), value_of(b)
    first = av >= bv
    return _record("maximum", np.where(first, av, bv), (a, b), lambda g: (g * first, g * ~first))


def minimum(a, b):
    if not _any_var(a, b):
        return np.minimum(a, b)
    av, bv = value_of(a), value_of(b)
    first = av <= bv
    return _record("minimum", np.where(first, av, bv), (a, b), lambda g: (g * first, g * ~first))


def where(cond, a, b):
    cond = np.asarray(cond, dtype=bool)
    if not _any_var(a, b):
        return np.where(cond, a, b)
    return _record("where", np.where(cond, value_of(a), value_of(b)), (a, b),
                   lambda g: (g * cond, g * ~cond))


def softmax(a, axis=-1):
    av = value_of(a)
    z = np.exp(av - np.max(av, axis=axis, keepdims=True))
    s = z / np.sum(z, axis=axis, keepdims=True)
    if not _any_var(a):
        return s
    return _record("softmax", s, (a,),
                   lambda g: (s * (g - np.sum(g * s, axis=axis, keepdims=True)),))


def norm(a, axis=-1, keepdims=True):
    """Euclidean norm with a zero (sub)gradient at the origin."""
    av = value_of(a)
    n = np.sqrt(np.sum(av * av, axis=axis, keepdims=True))
    out = n if keepdims else np.squeeze(n, axis=axis)
    if not _any_var(a):
        return out

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * av / np.maximum(n, _TINY),)

    return _record("norm", out, (a,), vjp)


def dot(a, b, axis=-1, keepdims=True):
    return reduce_sum(a * b, axis=axis, keepdims=keepdims)


# -- driver API ----------------------------------------------------------------

def value_and_grad(fn: Callable, params: Mapping[str, np.ndarray], check_finite: bool = True):
    """Evaluate ``fn(vars)`` on a fresh tape and differentiate it.

    ``fn`` receives a dict of :class:`Var` leaves keyed like ``params`` and must
    return a scalar.  Parameters the loss never touches get exact zeros.
    """
    tape = Tape(check_finite=check_finite)
    try:
        return _value_and_grad(fn, params, tape)
    finally:
        tape.release()


def _value_and_grad(fn, params, tape):
    leaves = {k: tape.param(v, k) for k, v in params.items()}
    out = fn(leaves)
    grads = {k: np.zeros_like(np.asarray(v, dtype=np.float64)) for k, v in params.items()}
    if not isinstance(out, Var):
        loss = float(np.asarray(out))
        if not np.isfinite(loss):
            raise NumericError("loss is not finite")
        return loss, grads
    if out.value.size != 1:
        raise UsageError(f"loss must be scalar, got shape {out.value.shape}")
    node_grads = tape.backward(out)
    for k, leaf in leaves.items():
        g = node_grads[leaf.index]
        if g is not None:
            grads[k] = np.array(g, dtype=np.float64)
    return float(out.value), grads


@dataclass
class GradientReport:
    analytic: dict
    numeric: dict
    rel_errors: dict = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        """Relative error of the whole gradient, all parameters stacked.

        Per-parameter values in ``rel_errors`` are diagnostic: a block whose true
        gradient is (nearly) zero compares rounding noise with rounding noise.
        """
        if not self.analytic:
            return 0.0
        keys = sorted(self.analytic)
        stack = lambda d: np.concatenate([np.ravel(d[k]) for k in keys])
        return relative_error(stack(self.analytic), stack(self.numeric))

    def table(self) -> str:
        lines = [f"{'parameter':<24}{'size':>8}{'rel_error':>14}"]
        for k, e in self.rel_errors.items():
            lines.append(f"{k:<24}{self.analytic[k].size:>8}{e:>14.3e}")
        lines.append(f"{'overall':<24}{'':>8}{self.max_rel_error:>14.3e}")
        return "\n".join(lines)


def relative_error(a: np.ndarray, n: np.ndarray) -> float:
    """Normwise relative error ``|a - n|_inf / max(|a|_inf, |n|_inf, 1e-8)``."""
    if a.size == 0:
        return 0.0
    denom = max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n)) / denom)


def finite_diff_check(fn: Callable, params: Mapping[str, np.ndarray], step: float = 1e-6,
                      kinds: Mapping[str, str] | None = None, ball_radius: float = 1.0) -> GradientReport:
    """Compare ``value_and_grad`` against central differences, coordinate by coordinate.

    ``kinds`` tags parameters as ``ball`` (rows must stay inside the ball of
    radius ``ball_radius``), ``nonneg`` or ``euclid``.  A ball perturbation that
    would leave the ball is retried once with a tenth of the step.
    """
    kinds = kinds or {}
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    _, analytic = value_and_grad(fn, params)
    numeric = {}
    for name, p in params.items():
        num = np.zeros_like(p)
        flat = p.reshape(-1)
        for i in range(flat.size):
            h = step
            for attempt in range(2):
                plus, minus = p.copy(), p.copy()
                plus.reshape(-1)[i] += h
                minus.reshape(-1)[i] -= h
                if kinds.get(name) != "ball" or (_inside(plus, ball_radius) and _inside(minus, ball_radius)):
                    break
                if attempt == 1:
                    raise NumericError(f"finite-difference step leaves the ball for {name}[{i}]")
                h = step / 10.0
            fp = float(np.asarray(fn({**params, name: plus})))
            fm = float(np.asarray(fn({**params, name: minus})))
            num.reshape(-1)[i] = (fp - fm) / (2.0 * h)
        numeric[name] = num
    report = GradientReport(analytic=analytic, numeric=numeric)
    report.rel_errors = {k: relative_error(analytic[k], numeric[k]) for k in params}
    return report


def _inside(x, radius):
    x = np.atleast_1d(x)
    return bool(np.all(np.linalg.norm(x, axis=-1) < radius))
