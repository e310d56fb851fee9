"""Degree-2 jets: value, first and pure second derivatives per input axis.

A `MultiJet2` carries, for a scalar quantity u evaluated at a batch of
points, the primal value together with du/dx_k and d2u/dx_k2 for each of
the D input axes. No mixed partials are tracked; every implemented PDE
residual uses only pure derivatives, and requesting a mixed partial is a
hard error by construction (there is simply no slot for one).

Components are tape variables, so the reverse sweep of the tape produces
parameter gradients of any loss assembled from jet components
(reverse-over-forward).

`PackedJet` is the throughput-oriented twin used inside models: the
2D+1 components of an M-vector of jets live in one (2D+1, B, M) array so
dense layers cost one matmul and activations one fused node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tape as tp
from .tape import Tape, TapeVar


@dataclass
class MultiJet2:
    """value / first / second derivative components w.r.t. D input axes.

    v  : scalar component, shape S (typically (B,) or ())
    d  : shape (D,) + S, d[k] = du/dx_k, or None when not tracked
    dd : shape (D,) + S, dd[k] = d2u/dx_k2, or None when not tracked
    """

    v: object
    d: object = None
    dd: object = None

    @property
    def naxes(self) -> int:
        if self.d is None:
            return 0
        return _shape(self.d)[0]

    def d_axis(self, k: int):
        return tp.row0(self.d, k)

    def dd_axis(self, k: int):
        if self.dd is None:
            raise ValueError("second derivatives were not propagated")
        return tp.row0(self.dd, k)


def _shape(x):
    return x.value.shape if isinstance(x, TapeVar) else np.shape(x)


def _check_compatible(a: MultiJet2, b: MultiJet2):
    da, db = a.d is not None, b.d is not None
    if da and db:
        assert _shape(a.d)[0] == _shape(b.d)[0], "jet axis counts differ"


def seed_jet(values, axis: int, naxes: int, second: bool = True) -> MultiJet2:
    """Input jet for coordinate axis `axis`: d[axis] = 1, dd = 0."""
    v = np.asarray(values, dtype=np.float64)
    d = np.zeros((naxes,) + v.shape)
    d[axis] = 1.0
    dd = np.zeros_like(d) if second else None
    return MultiJet2(v=v, d=d, dd=dd)


def constant_jet(values, naxes: int, second: bool = True) -> MultiJet2:
    v = np.asarray(values, dtype=np.float64)
    d = np.zeros((naxes,) + v.shape)
    dd = np.zeros_like(d) if second else None
    return MultiJet2(v=v, d=d, dd=dd)


def jet_add(a: MultiJet2, b: MultiJet2) -> MultiJet2:
    _check_compatible(a, b)
    d = None if a.d is None else tp.add(a.d, b.d)
    dd = None if a.dd is None else tp.add(a.dd, b.dd)
    return MultiJet2(tp.add(a.v, b.v), d, dd)


def jet_sub(a: MultiJet2, b: MultiJet2) -> MultiJet2:
    _check_compatible(a, b)
    d = None if a.d is None else tp.sub(a.d, b.d)
    dd = None if a.dd is None else tp.sub(a.dd, b.dd)
    return MultiJet2(tp.sub(a.v, b.v), d, dd)


def jet_scale(a: MultiJet2, c) -> MultiJet2:
    d = None if a.d is None else tp.mul(a.d, c)
    dd = None if a.dd is None else tp.mul(a.dd, c)
    return MultiJet2(tp.mul(a.v, c), d, dd)


def jet_shift(a: MultiJet2, c) -> MultiJet2:
    """Add a constant (derivatives unchanged)."""
    return MultiJet2(tp.add(a.v, c), a.d, a.dd)


def jet_mul(a: MultiJet2, b: MultiJet2) -> MultiJet2:
    """Leibniz rule; (uv)'' = u''v + 2u'v' + uv'' per axis."""
    _check_compatible(a, b)
    v = tp.mul(a.v, b.v)
    d = dd = None
    if a.d is not None:
        d = tp.add(tp.mul(a.d, b.v), tp.mul(a.v, b.d))
        if a.dd is not None:
            dd = tp.add(
                tp.add(tp.mul(a.dd, b.v), tp.mul(a.v, b.dd)),
                tp.mul(2.0, tp.mul(a.d, b.d)),
            )
    return MultiJet2(v, d, dd)


# registered elementwise functions: value, f', f'' ---------------------------

def _fn_tanh(v):
    t = np.tanh(v)
    fp = 1.0 - t * t
    return t, fp, -2.0 * t * fp


def _fn_sin(v):
    s, c = np.sin(v), np.cos(v)
    return s, c, -s


def _fn_cos(v):
    s, c = np.sin(v), np.cos(v)
    return c, -s, -c


def _fn_exp(v):
    e = np.exp(v)
    return e, e, e


def _fn_sqrt(v):
    if np.any(v <= 0.0):
        raise ValueError("sqrt jet requires strictly positive values")
    s = np.sqrt(v)
    return s, 0.5 / s, -0.25 / (s * v)


def _fn_reciprocal(v):
    if np.any(v == 0.0):
        raise ZeroDivisionError("reciprocal jet at zero")
    r = 1.0 / v
    return r, -r * r, 2.0 * r * r * r


def _fn_abs(v):
    s = np.sign(v)
    return np.abs(v), s, np.zeros_like(v)


JET_FUNCTIONS = {
    "tanh": _fn_tanh,
    "sin": _fn_sin,
    "cos": _fn_cos,
    "exp": _fn_exp,
    "sqrt": _fn_sqrt,
    "reciprocal": _fn_reciprocal,
    "abs": _fn_abs,
}


def jet_apply(name: str, x: MultiJet2, p: float | None = None) -> MultiJet2:
    """Apply a registered elementwise function with full chain rules.

    f(x).d[k]  = f'(x) d[k]
    f(x).dd[k] = f''(x) d[k]^2 + f'(x) dd[k]
    """
    xv = x.v.value if isinstance(x.v, TapeVar) else np.asarray(x.v, dtype=float)
    if name == "power":
        if p is None:
            raise ValueError("power requires an exponent")
        fv = xv ** p
        fp = p * xv ** (p - 1.0)
        fpp = p * (p - 1.0) * xv ** (p - 2.0)
    else:
        if name not in JET_FUNCTIONS:
            raise KeyError(f"no derivative rules registered for {name!r}")
        fv, fp, fpp = JET_FUNCTIONS[name](xv)

    # value through a standard unary tape node so parameter gradients flow
    if isinstance(x.v, TapeVar):
        v = x.v.tape.record(fv, (x.v,), lambda adj: (adj * fp,))
    else:
        v = fv
    d = dd = None
    if x.d is not None:
        d = tp.mul(fp, x.d)
        if x.dd is not None:
            dd = tp.add(tp.mul(fpp, tp.mul(x.d, x.d)), tp.mul(fp, x.dd))
    return MultiJet2(v, d, dd)


def jet_tanh(x: MultiJet2) -> MultiJet2:
    return jet_apply("tanh", x)


# ---------------------------------------------------------------------------
# packed jets: all components in one array, fused kernels
# ---------------------------------------------------------------------------

@dataclass
class PackedJet:
    """(2D+1, B, M) array: row 0 = value, rows 1..D = d, rows D+1..2D = dd.

    When `second` is False the array is (D+1, B, M) and dd rows are absent.
    """

    data: object  # TapeVar or ndarray
    naxes: int
    second: bool

    @property
    def nrows(self) -> int:
        return 2 * self.naxes + 1 if self.second else self.naxes + 1


def pack_jet(j: MultiJet2) -> PackedJet:
    naxes = j.naxes
    second = j.dd is not None
    parts = [j.v] + [tp.row0(j.d, k) for k in range(naxes)]
    if second:
        parts += [tp.row0(j.dd, k) for k in range(naxes)]
    return PackedJet(tp.stack0(parts), naxes, second)


def unpack_jet(p: PackedJet) -> MultiJet2:
    D = p.naxes
    v = tp.row0(p.data, 0)
    d = tp.slice0(p.data, 1, 1 + D)
    dd = tp.slice0(p.data, 1 + D, 1 + 2 * D) if p.second else None
    return MultiJet2(v, d, dd)


def packed_seeds(X: np.ndarray, second: bool = True) -> PackedJet:
    """Seed rows for raw coordinates: value row X, one-hot derivative rows."""
    X = np.asarray(X, dtype=np.float64)
    B, D = X.shape
    nrows = 2 * D + 1 if second else D + 1
    data = np.zeros((nrows, B, D))
    data[0] = X
    for k in range(D):
        data[1 + k, :, k] = 1.0
    return PackedJet(data, D, second)


def packed_linear(p: PackedJet, w, b) -> PackedJet:
    """Dense layer on a packed jet (fused node)."""
    xv = p.data.value if isinstance(p.data, TapeVar) else np.asarray(p.data)
    wv = w.value if isinstance(w, TapeVar) else np.asarray(w)
    out = xv @ wv.T
    if b is not None:
        bv = b.value if isinstance(b, TapeVar) else np.asarray(b)
        out[0] = out[0] + bv

    tape = tp._tape_of(p.data, w, b)
    if tape is None:
        return PackedJet(out, p.naxes, p.second)

    parents, which = [], []
    for item, tag in ((p.data, "x"), (w, "w"), (b, "b")):
        if isinstance(item, TapeVar):
            parents.append(item)
            which.append(tag)

    def vjp(adj):
        grads = []
        for tag in which:
            if tag == "x":
                grads.append(adj @ wv)
            elif tag == "w":
                grads.append(np.tensordot(adj, xv, axes=([0, 1], [0, 1])))
            else:
                grads.append(adj[0].sum(axis=0))
        return tuple(grads)

    node = tape.record(out, parents, vjp)
    return PackedJet(node, p.naxes, p.second)


def packed_tanh(p: PackedJet) -> PackedJet:
    """tanh on a packed jet, all chain rules in one fused node."""
    D, second = p.naxes, p.second
    xv = p.data.value if isinstance(p.data, TapeVar) else np.asarray(p.data)
    v = xv[0]
    t = np.tanh(v)
    fp = 1.0 - t * t
    out = np.empty_like(xv)
    out[0] = t
    d_in = xv[1:1 + D]
    np.multiply(d_in, fp, out=out[1:1 + D])
    fpp = -2.0 * t * fp
    if second:
        dd_in = xv[1 + D:]
        out[1 + D:] = fpp * d_in * d_in + fp * dd_in

    if not isinstance(p.data, TapeVar):
        return PackedJet(out, D, second)

    def vjp(adj):
        g = np.empty_like(xv)
        # d rows: out_d = fp * d
        np.multiply(adj[1:1 + D], fp, out=g[1:1 + D])
        gv = adj[0] * fp
        if second:
            add = adj[1 + D:]
            # out_dd = fpp*d^2 + fp*dd
            np.multiply(add, fp, out=g[1 + D:])
            g[1:1 + D] += 2.0 * fpp * d_in * add
            # d/dv terms: fp' = fpp ; fpp' = -2*fp^2 - 2*t*fpp
            fppp = -2.0 * fp * fp - 2.0 * t * fpp
            gv = gv + (adj[1:1 + D] * d_in).sum(axis=0) * fpp
            gv = gv + (add * (fppp * d_in * d_in + fpp * dd_in)).sum(axis=0)
        else:
            gv = gv + (adj[1:1 + D] * d_in).sum(axis=0) * fpp
        g[0] = gv
        return (g,)

    node = p.data.tape.record(out, (p.data,), vjp)
    return PackedJet(node, D, second)


def hadamard_fuse(axis_parts: list[tuple]) -> PackedJet:
    """Hadamard product across axes of per-axis encodings.

    `axis_parts[k]` is (v_k, d_k, dd_k): the axis-k feature vector and its
    own-axis first/second derivatives, each (B, M) (dd_k may be None).
    The product depends on x_k only through part k, so
        phi.d[k]  = (prod_{j != k} v_j) * d_k
        phi.dd[k] = (prod_{j != k} v_j) * dd_k
    computed with prefix/suffix products. Returns a packed jet.
    """
    D = len(axis_parts)
    second = axis_parts[0][2] is not None
    vs = [part[0] for part in axis_parts]
    if D == 1:
        v, d1, dd1 = axis_parts[0]
        rows = [v, d1] + ([dd1] if second else [])
        return PackedJet(tp.stack0(rows), 1, second)

    prefix = [None] * D  # prefix[k] = v_0 * ... * v_{k-1}
    suffix = [None] * D  # suffix[k] = v_{k+1} * ... * v_{D-1}
    acc = vs[0]
    prefix[0] = None
    for k in range(1, D):
        prefix[k] = acc
        if k < D - 1:
            acc = tp.mul(acc, vs[k])
    acc = vs[D - 1]
    suffix[D - 1] = None
    for k in range(D - 2, -1, -1):
        suffix[k] = acc
        if k > 0:
            acc = tp.mul(acc, vs[k])

    def excl(k):
        if prefix[k] is None:
            return suffix[k]
        if suffix[k] is None:
            return prefix[k]
        return tp.mul(prefix[k], suffix[k])

    rows = []
    value = tp.mul(prefix[D - 1], vs[D - 1])
    rows.append(value)
    others = [excl(k) for k in range(D)]
    for k in range(D):
        rows.append(tp.mul(others[k], axis_parts[k][1]))
    if second:
        for k in range(D):
            rows.append(tp.mul(others[k], axis_parts[k][2]))
    return PackedJet(tp.stack0(rows), D, second)


def cp_combine(axis_parts: list[tuple]) -> MultiJet2:
    """Rank-sum of products across axes (CP readout).

    `axis_parts[k]` = (y_k, y'_k, y''_k), each (B, r): the axis-k network
    output and its derivatives w.r.t. x_k. Returns the scalar jet of
    u = sum_r prod_k y_k[:, r].
    """
    D = len(axis_parts)
    second = axis_parts[0][2] is not None
    if D == 1:
        v, d1, dd1 = axis_parts[0]
        u = tp.sum_axis(v, 1)
        d = tp.stack0([tp.sum_axis(d1, 1)])
        dd = tp.stack0([tp.sum_axis(dd1, 1)]) if second else None
        return MultiJet2(u, d, dd)

    vs = [part[0] for part in axis_parts]
    prefix = [None] * D
    suffix = [None] * D
    acc = vs[0]
    for k in range(1, D):
        prefix[k] = acc
        if k < D - 1:
            acc = tp.mul(acc, vs[k])
    acc = vs[D - 1]
    for k in range(D - 2, -1, -1):
        suffix[k] = acc
        if k > 0:
            acc = tp.mul(acc, vs[k])

    def excl(k):
        if prefix[k] is None:
            return suffix[k]
        if suffix[k] is None:
            return prefix[k]
        return tp.mul(prefix[k], suffix[k])

    value = tp.sum_axis(tp.mul(prefix[D - 1], vs[D - 1]), 1)
    others = [excl(k) for k in range(D)]
    d_rows = [tp.sum_axis(tp.mul(others[k], axis_parts[k][1]), 1) for k in range(D)]
    d = tp.stack0(d_rows)
    dd = None
    if second:
        dd_rows = [tp.sum_axis(tp.mul(others[k], axis_parts[k][2]), 1) for k in range(D)]
        dd = tp.stack0(dd_rows)
    return MultiJet2(value, d, dd)
