"""Reverse-mode automatic differentiation on an append-only tape.

Values held by tape variables are numpy float64 arrays (scalars are 0-d
arrays), so a whole batch of collocation points rides on one tape. Every
recorded node stores its parents' indices and a vector-Jacobian closure;
a single backward sweep from a seed node yields adjoints for every node
that the seed depends on.

Parent indices of a node are always smaller than the node's own index, so
the reverse sweep in index order is a valid reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


def _as_value(x) -> Array:
    return np.asarray(x, dtype=np.float64)


def unbroadcast(grad: Array, shape: tuple) -> Array:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tape:
    """Append-only record of operations plus per-node adjoint storage."""

    __slots__ = ("values", "parents", "vjps")

    def __init__(self):
        self.values: list[Array] = []
        self.parents: list[tuple[int, ...]] = []
        self.vjps: list[Callable | None] = []

    def __len__(self) -> int:
        return len(self.values)

    def var(self, value) -> "TapeVar":
        """Create a leaf variable (inputs / trainable parameters)."""
        return self._append(_as_value(value), (), None)

    def _append(self, value: Array, parents: tuple[int, ...], vjp) -> "TapeVar":
        idx = len(self.values)
        self.values.append(value)
        self.parents.append(parents)
        self.vjps.append(vjp)
        return TapeVar(self, idx, value)

    def record(self, value, parents: Sequence["TapeVar"], vjp: Callable) -> "TapeVar":
        """Record an operation node.

        `vjp(adjoint)` must return one gradient array per parent, each
        already shaped like the corresponding parent value.
        """
        idxs = tuple(p.index for p in parents)
        return self._append(_as_value(value), idxs, vjp)

    def backward(self, seed: "TapeVar") -> list:
        """Reverse sweep from `seed`; returns per-node adjoints.

        The returned list is indexed by node index; entries the seed does
        not depend on are None. adjoint[seed] == 1.
        """
        n = seed.index + 1
        adjoints: list = [None] * len(self.values)
        adjoints[seed.index] = np.ones_like(self.values[seed.index])
        for i in range(seed.index, -1, -1):
            adj = adjoints[i]
            if adj is None:
                continue
            vjp = self.vjps[i]
            if vjp is None:
                continue
            grads = vjp(adj)
            for p, g in zip(self.parents[i], grads):
                if g is None:
                    continue
                if adjoints[p] is None:
                    adjoints[p] = g if g.flags.owndata else g.copy()
                else:
                    adjoints[p] = adjoints[p] + g
        del n
        return adjoints


class TapeVar:
    """Handle to one tape node; carries the node's value for convenience."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: Tape, index: int, value: Array):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    # arithmetic sugar (constants fold without recording)
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __repr__(self):
        return f"TapeVar(index={self.index}, shape={self.value.shape})"


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, TapeVar):
            return x.tape
    return None


def _val(x) -> Array:
    return x.value if isinstance(x, TapeVar) else _as_value(x)


# ---------------------------------------------------------------------------
# primitive operations
#
# Each op accepts TapeVar or plain array/scalar operands. If no operand is
# a TapeVar the result is a plain numpy array (constant folding).
# ---------------------------------------------------------------------------

def add(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av + bv
    if tape is None:
        return out
    parents, sides = [], []
    if isinstance(a, TapeVar):
        parents.append(a)
        sides.append(av.shape)
    if isinstance(b, TapeVar):
        parents.append(b)
        sides.append(bv.shape)

    def vjp(adj):
        return tuple(unbroadcast(adj, s) for s in sides)

    return tape.record(out, parents, vjp)


def sub(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av - bv
    if tape is None:
        return out
    parents, signs, sides = [], [], []
    if isinstance(a, TapeVar):
        parents.append(a)
        signs.append(1.0)
        sides.append(av.shape)
    if isinstance(b, TapeVar):
        parents.append(b)
        signs.append(-1.0)
        sides.append(bv.shape)

    def vjp(adj):
        return tuple(unbroadcast(s * adj, sh) for s, sh in zip(signs, sides))

    return tape.record(out, parents, vjp)


def mul(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    out = av * bv
    if tape is None:
        return out
    if isinstance(a, TapeVar) and isinstance(b, TapeVar):
        def vjp(adj):
            return (unbroadcast(adj * bv, av.shape), unbroadcast(adj * av, bv.shape))

        return tape.record(out, (a, b), vjp)
    if isinstance(a, TapeVar):
        def vjp(adj):
            return (unbroadcast(adj * bv, av.shape),)

        return tape.record(out, (a,), vjp)

    def vjp(adj):
        return (unbroadcast(adj * av, bv.shape),)

    return tape.record(out, (b,), vjp)


def div(a, b):
    tape = _tape_of(a, b)
    av, bv = _val(a), _val(b)
    if np.any(bv == 0.0):
        raise ZeroDivisionError("division by zero on the tape")
    out = av / bv
    if tape is None:
        return out
    if isinstance(a, TapeVar) and isinstance(b, TapeVar):
        def vjp(adj):
            return (
                unbroadcast(adj / bv, av.shape),
                unbroadcast(-adj * out / bv, bv.shape),
            )

        return tape.record(out, (a, b), vjp)
    if isinstance(a, TapeVar):
        def vjp(adj):
            return (unbroadcast(adj / bv, av.shape),)

        return tape.record(out, (a,), vjp)

    def vjp(adj):
        return (unbroadcast(-adj * out / bv, bv.shape),)

    return tape.record(out, (b,), vjp)


def neg(a):
    if not isinstance(a, TapeVar):
        return -_val(a)
    return a.tape.record(-a.value, (a,), lambda adj: (-adj,))


def power(a, p):
    """a ** p for a constant exponent p."""
    p = float(p)
    av = _val(a)
    if p != int(p) and np.any(av < 0.0):
        raise ValueError("fractional power of a negative value")
    out = av ** p
    if not isinstance(a, TapeVar):
        return out
    coef = p * av ** (p - 1.0)
    return a.tape.record(out, (a,), lambda adj: (adj * coef,))


def _unary(a, fval, dcoef):
    out = fval
    if not isinstance(a, TapeVar):
        return out
    return a.tape.record(out, (a,), lambda adj: (adj * dcoef,))


def tanh(a):
    t = np.tanh(_val(a))
    return _unary(a, t, 1.0 - t * t)


def sin(a):
    v = _val(a)
    return _unary(a, np.sin(v), np.cos(v))


def cos(a):
    v = _val(a)
    return _unary(a, np.cos(v), -np.sin(v))


def exp(a):
    e = np.exp(_val(a))
    return _unary(a, e, e)


def sqrt(a):
    v = _val(a)
    if np.any(v < 0.0):
        raise ValueError("sqrt of a negative value")
    s = np.sqrt(v)
    return _unary(a, s, 0.5 / s)


def reciprocal(a):
    v = _val(a)
    if np.any(v == 0.0):
        raise ZeroDivisionError("reciprocal of zero")
    r = 1.0 / v
    return _unary(a, r, -r * r)


def absolute(a):
    """Sign-safe |x|: subgradient 0 at x == 0."""
    v = _val(a)
    return _unary(a, np.abs(v), np.sign(v))


def total(a):
    """Sum of all elements, a 0-d result (used for scalar losses)."""
    av = _val(a)
    out = np.asarray(av.sum())
    if not isinstance(a, TapeVar):
        return out
    return a.tape.record(out, (a,), lambda adj: (np.broadcast_to(adj, av.shape),))


def sum_axis(a, axis):
    av = _val(a)
    out = av.sum(axis=axis)
    if not isinstance(a, TapeVar):
        return out

    def vjp(adj):
        return (np.broadcast_to(np.expand_dims(adj, axis), av.shape),)

    return a.tape.record(out, (a,), vjp)


def linear(x, w):
    """x @ w.T with w of shape (out, in); x may have extra leading axes."""
    xv, wv = _val(x), _val(w)
    out = xv @ wv.T
    tape = _tape_of(x, w)
    if tape is None:
        return out
    if isinstance(x, TapeVar) and isinstance(w, TapeVar):
        def vjp(adj):
            gx = adj @ wv
            gw = np.tensordot(adj, xv, axes=(range(adj.ndim - 1), range(xv.ndim - 1)))
            return (gx, gw)

        return tape.record(out, (x, w), vjp)
    if isinstance(x, TapeVar):
        def vjp(adj):
            return (adj @ wv,)

        return tape.record(out, (x,), vjp)

    def vjp(adj):
        gw = np.tensordot(adj, xv, axes=(range(adj.ndim - 1), range(xv.ndim - 1)))
        return (gw,)

    return tape.record(out, (w,), vjp)


def take0(x, idx):
    """Gather rows x[idx] along axis 0; idx is an integer array."""
    xv = _val(x)
    idx = np.asarray(idx)
    out = xv[idx]
    if not isinstance(x, TapeVar):
        return out

    def vjp(adj):
        g = np.zeros_like(xv)
        np.add.at(g, idx, adj)
        return (g,)

    return x.tape.record(out, (x,), vjp)


def row0(x, i: int):
    """Row x[i] for a static integer index."""
    xv = _val(x)
    out = xv[i]
    if not isinstance(x, TapeVar):
        return out

    def vjp(adj):
        g = np.zeros_like(xv)
        g[i] = adj
        return (g,)

    return x.tape.record(out, (x,), vjp)


def slice0(x, lo: int, hi: int):
    """Rows x[lo:hi] for static bounds."""
    xv = _val(x)
    out = xv[lo:hi]
    if not isinstance(x, TapeVar):
        return out

    def vjp(adj):
        g = np.zeros_like(xv)
        g[lo:hi] = adj
        return (g,)

    return x.tape.record(out, (x,), vjp)


def stack0(parts):
    """Stack equal-shape parts along a new leading axis."""
    vals = [_val(p) for p in parts]
    out = np.stack(vals)
    tape = _tape_of(*parts)
    if tape is None:
        return out
    parents = [p for p in parts if isinstance(p, TapeVar)]
    var_slots = [i for i, p in enumerate(parts) if isinstance(p, TapeVar)]

    def vjp(adj):
        return tuple(adj[i] for i in var_slots)

    return tape.record(out, parents, vjp)


def reshape(x, shape):
    xv = _val(x)
    out = xv.reshape(shape)
    if not isinstance(x, TapeVar):
        return out
    return x.tape.record(out, (x,), lambda adj: (adj.reshape(xv.shape),))


def lincomb(coeffs, xs):
    """sum_i coeffs[i] * xs[i] with constant coefficient arrays.

    Fused into one node to keep tape traffic low in the encoders.
    """
    vals = [_val(x) for x in xs]
    out = coeffs[0] * vals[0]
    for c, v in zip(coeffs[1:], vals[1:]):
        out += c * v
    tape = _tape_of(*xs)
    if tape is None:
        return out
    parents = [x for x in xs if isinstance(x, TapeVar)]
    pc = [c for c, x in zip(coeffs, xs) if isinstance(x, TapeVar)]
    shapes = [p.value.shape for p in parents]

    def vjp(adj):
        return tuple(unbroadcast(adj * c, s) for c, s in zip(pc, shapes))

    return tape.record(out, parents, vjp)


# spec-style aliases -------------------------------------------------------

def tape_record(tape: Tape, value, parents, vjp) -> TapeVar:
    return tape.record(value, parents, vjp)


def backward(tape: Tape, seed: TapeVar) -> dict:
    """Gradient map {node index: adjoint} for nodes the seed depends on."""
    adjoints = tape.backward(seed)
    return {i: a for i, a in enumerate(adjoints) if a is not None}
