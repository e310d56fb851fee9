"""Coordinate encoders: trainable grid features + interpolation kernels.

Per-axis encoders (used by the linear-grid models) interpolate an
(R+1) x M feature table along one axis with one of four kernels:

  natural-cubic  C2 piecewise cubic; curvatures solve the tridiagonal
                 continuity system with zero end curvature, recorded on
                 the tape so gradients flow through the solve
  linear         hat functions; zero second derivative inside cells
  cosine         raised-cosine weights, optionally on two half-cell
                 shifted lattices (multigrid)
  hermite        quintic Hermite kernels with trainable value/slope/
                 curvature coefficients per knot (3M feature channels)

Full-grid encoders back the two exponential-memory baselines: a two-grid
cosine lattice in the full D-dimensional box, and a tensor-product
Hermite field that outputs the solution value directly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import tape as tp
from .errors import ConfigurationError, DomainError
from .jets import MultiJet2, PackedJet

Array = np.ndarray


class Kernel(enum.Enum):
    NATURAL_CUBIC = "natural-cubic"
    LINEAR = "linear"
    COSINE = "cosine"
    HERMITE = "hermite"


# ---------------------------------------------------------------------------
# interpolation kernels in cell units (signed distance d, support [-1, 1])
# ---------------------------------------------------------------------------

# quintic Hermite kernels as (parity, poly coeffs in |d|, highest power first)
_HERMITE_POLYS = {
    "hermite0": (0, np.array([-6.0, 15.0, -10.0, 0.0, 0.0, 1.0])),
    "hermite1": (1, 2.0 * np.array([-3.0, 8.0, -6.0, 0.0, 1.0, 0.0])),
    "hermite2": (0, 8.0 * np.array([-1.0, 3.0, -3.0, 1.0, 0.0, 0.0])),
}


def _poly_eval_with_parity(parity: int, coeffs: Array, d: Array):
    """Evaluate s^parity * P(|d|) and its first two d-derivatives.

    d/dd of s^p P(q) is s^(p+1) P'(q); even powers of s evaluate to 1
    everywhere (including d=0), odd powers to sign(d).
    """
    q = np.abs(d)
    s = np.sign(d)
    dc = np.polyder(coeffs)
    ddc = np.polyder(dc)

    def factor(p):
        return s if p % 2 else 1.0

    w = factor(parity) * np.polyval(coeffs, q)
    w1 = factor(parity + 1) * np.polyval(dc, q)
    w2 = factor(parity) * np.polyval(ddc, q)
    return w, w1, w2


def kernel_eval(kind: str, d):
    """Weight and its first two derivatives w.r.t. the signed cell-unit
    distance d; all three vanish outside [-1, 1]."""
    d = np.asarray(d, dtype=np.float64)
    inside = np.abs(d) <= 1.0
    if kind == "linear":
        s = np.sign(d)
        w = 1.0 - np.abs(d)
        w1 = -s
        w2 = np.zeros_like(d)
    elif kind == "cosine":
        # k(d) = (1 - cos(pi (1 - |d|))) / 2 = (1 + cos(pi |d|)) / 2
        q = np.abs(d)
        s = np.sign(d)
        w = 0.5 * (1.0 + np.cos(np.pi * q))
        w1 = -0.5 * np.pi * s * np.sin(np.pi * q)
        w2 = -0.5 * np.pi ** 2 * np.cos(np.pi * q)
    elif kind in _HERMITE_POLYS:
        parity, coeffs = _HERMITE_POLYS[kind]
        w, w1, w2 = _poly_eval_with_parity(parity, coeffs, d)
    else:
        raise KeyError(f"unknown kernel kind {kind!r}")
    zero = np.zeros_like(d)
    return (
        np.where(inside, w, zero),
        np.where(inside, w1, zero),
        np.where(inside, w2, zero),
    )


# ---------------------------------------------------------------------------
# per-axis encoders
# ---------------------------------------------------------------------------

@dataclass
class AxisEncoder:
    """One axis's trainable grid over [a, b] with R cells (R+1 knots)."""

    a: float
    b: float
    cells: int  # R
    width: int  # M
    kernel: Kernel = Kernel.NATURAL_CUBIC
    multigrid: bool = False  # cosine only: two half-cell shifted lattices

    def __post_init__(self):
        if self.cells < 2:
            raise ConfigurationError("axis encoder needs at least 2 cells")
        if not self.b > self.a:
            raise ConfigurationError("axis bounds must satisfy a < b")
        if self.multigrid and self.kernel is not Kernel.COSINE:
            raise ConfigurationError("multigrid applies to the cosine kernel only")

    @property
    def spacing(self) -> float:
        return (self.b - self.a) / self.cells

    @property
    def knots(self) -> Array:
        return self.a + np.arange(self.cells + 1) * self.spacing

    def feature_shape(self) -> tuple:
        R, M = self.cells, self.width
        if self.kernel is Kernel.HERMITE:
            return (R + 1, 3 * M)
        if self.multigrid:
            return (2, R + 1, M)
        return (R + 1, M)

    def n_params(self) -> int:
        return int(np.prod(self.feature_shape()))

    def init_features(self, rng: np.random.Generator) -> Array:
        lim = 1.0 / np.sqrt(self.width)
        return rng.uniform(-lim, lim, size=self.feature_shape())

    def locate(self, x: Array, offset: float = 0.0) -> tuple:
        """Cell index, local coordinate and clamp scale for one lattice.

        Rejects out-of-domain queries. A half-cell shifted lattice clamps
        queries in its outer half-cell to the last knot; the returned
        scale is 0 there so derivative weights match the constant value.
        """
        x = np.asarray(x, dtype=np.float64)
        tol = 1e-9 * (self.b - self.a)
        if np.any(x < self.a - tol) or np.any(x > self.b + tol):
            raise DomainError(
                f"query outside [{self.a}, {self.b}] on an encoded axis"
            )
        u_raw = (x - self.a) / self.spacing + offset
        u = np.clip(u_raw, 0.0, float(self.cells))
        scale = np.where(np.abs(u_raw - u) > tol, 0.0, 1.0)
        j = np.minimum(u.astype(np.int64), self.cells - 1)
        return j, u - j, scale


def spline_factorize(features, R: int, h: float):
    """Natural-spline curvatures per feature channel via the Thomas
    algorithm, recorded on the tape.

    Interior rows solve m[j-1] + 4 m[j] + m[j+1] = 6 (g[j+1] - 2 g[j] +
    g[j-1]) / h^2; end curvatures are exactly zero. The constant matrix
    factors are precomputed; only the right-hand side rides the tape.
    """
    if R < 2:
        raise ConfigurationError("natural spline factorization requires R >= 2")
    width = (features.value if isinstance(features, tp.TapeVar) else features).shape[1]
    g = [tp.row0(features, r) for r in range(R + 1)]
    c = 6.0 / (h * h)
    rhs = [
        tp.lincomb([c, -2.0 * c, c], [g[j - 1], g[j], g[j + 1]])
        for j in range(1, R)
    ]
    # forward elimination against the constant (1, 4, 1) tridiagonal
    n = R - 1
    cp = np.empty(n)
    inv = np.empty(n)
    inv[0] = 0.25
    cp[0] = 0.25
    for i in range(1, n):
        inv[i] = 1.0 / (4.0 - cp[i - 1])
        cp[i] = inv[i]
    dp = [None] * n
    dp[0] = tp.mul(rhs[0], inv[0])
    for i in range(1, n):
        dp[i] = tp.lincomb([inv[i], -inv[i]], [rhs[i], dp[i - 1]])
    m = [None] * (R + 1)
    zero_row = np.zeros(width)
    m[0] = zero_row
    m[R] = zero_row
    m[R - 1] = dp[n - 1]
    for j in range(R - 2, 0, -1):
        m[j] = tp.lincomb([1.0, -cp[j - 1]], [dp[j - 1], m[j + 1]])
    return tp.stack0(m)


class SplineSystem:
    """Curvature table of a natural-spline axis, recomputed per pass."""

    def __init__(self, second_derivs):
        self.second_derivs = second_derivs


def encode_axis(enc: AxisEncoder, features, x, second: bool = True, curvatures=None):
    """Interpolate the feature table at coordinates x (shape (B,)).

    Returns (v, d1, dd1): the (B, M) feature vector and its first/second
    derivatives along this axis (dd1 is None when `second` is False).
    `features` is the tape leaf for this axis's table; for the
    natural-cubic kernel pass the curvatures from spline_factorize.
    """
    h = enc.spacing
    if enc.kernel is Kernel.NATURAL_CUBIC:
        if curvatures is None:
            curvatures = spline_factorize(features, enc.cells, h)
        j, t, _ = enc.locate(x)
        gj = tp.take0(features, j)
        gj1 = tp.take0(features, j + 1)
        mj = tp.take0(curvatures, j)
        mj1 = tp.take0(curvatures, j + 1)
        A = (1.0 - t)[:, None]
        B = t[:, None]
        cC = (h * h / 6.0) * (A ** 3 - A)
        cD = (h * h / 6.0) * (B ** 3 - B)
        v = tp.lincomb([A, B, cC, cD], [gj, gj1, mj, mj1])
        d1 = tp.lincomb(
            [
                np.full_like(A, -1.0 / h),
                np.full_like(B, 1.0 / h),
                -(h / 6.0) * (3.0 * A ** 2 - 1.0),
                (h / 6.0) * (3.0 * B ** 2 - 1.0),
            ],
            [gj, gj1, mj, mj1],
        )
        dd1 = tp.lincomb([A, B], [mj, mj1]) if second else None
        return v, d1, dd1

    if enc.kernel is Kernel.LINEAR:
        j, t, _ = enc.locate(x)
        gj = tp.take0(features, j)
        gj1 = tp.take0(features, j + 1)
        A = (1.0 - t)[:, None]
        B = t[:, None]
        v = tp.lincomb([A, B], [gj, gj1])
        d1 = tp.lincomb(
            [np.full_like(A, -1.0 / h), np.full_like(B, 1.0 / h)], [gj, gj1]
        )
        dd1 = np.zeros_like(v.value if isinstance(v, tp.TapeVar) else v) if second else None
        return v, d1, dd1

    if enc.kernel is Kernel.COSINE:
        grids = [(features, 0.0)]
        if enc.multigrid:
            grids = [(tp.row0(features, 0), 0.0), (tp.row0(features, 1), 0.5)]
        outs = []
        for table, offset in grids:
            j, t, sc = enc.locate(x, offset)
            gj = tp.take0(table, j)
            gj1 = tp.take0(table, j + 1)
            w0, w01, w02 = kernel_eval("cosine", t)
            w1, w11, w12 = kernel_eval("cosine", t - 1.0)
            sc = sc[:, None]
            v = tp.lincomb([w0[:, None], w1[:, None]], [gj, gj1])
            d1 = tp.lincomb(
                [sc * w01[:, None] / h, sc * w11[:, None] / h], [gj, gj1])
            dd1 = (
                tp.lincomb(
                    [sc * w02[:, None] / h ** 2, sc * w12[:, None] / h ** 2],
                    [gj, gj1])
                if second
                else None
            )
            outs.append((v, d1, dd1))
        if len(outs) == 1:
            return outs[0]
        v = tp.lincomb([0.5, 0.5], [outs[0][0], outs[1][0]])
        d1 = tp.lincomb([0.5, 0.5], [outs[0][1], outs[1][1]])
        dd1 = (
            tp.lincomb([0.5, 0.5], [outs[0][2], outs[1][2]]) if second else None
        )
        return v, d1, dd1

    if enc.kernel is Kernel.HERMITE:
        M = enc.width
        j, t, _ = enc.locate(x)
        B = t.shape[0]
        out = [None, None, None]
        orders = range(3 if second else 2)
        rows = {0: tp.take0(features, j), 1: tp.take0(features, j + 1)}
        for eps in (0, 1):
            arg = t - eps
            ks = [kernel_eval(f"hermite{i}", arg) for i in range(3)]
            for order in orders:
                tile = np.repeat(
                    np.stack([ks[i][order] for i in range(3)], axis=1), M, axis=1
                ) / h ** order
                contrib = tp.sum_axis(
                    tp.reshape(tp.mul(rows[eps], tile), (B, 3, M)), 1
                )
                out[order] = contrib if out[order] is None else tp.add(out[order], contrib)
        return out[0], out[1], out[2]

    raise ConfigurationError(f"unsupported kernel {enc.kernel}")


# ---------------------------------------------------------------------------
# full-grid encoders (exponential-memory baselines)
# ---------------------------------------------------------------------------

@dataclass
class FullGridEncoder:
    """Trainable features on a full D-dimensional lattice.

    variant "pixel": two cosine-kernel grids offset by half a cell,
    feature tensors of shape ((R+1)^D, M) each, combined by averaging.
    variant "hspline": one tensor-product quintic Hermite field with
    3^D coefficients at each of R^D lattice points; the interpolant IS
    the field value (no network head follows).
    """

    box: list  # [(a_d, b_d)] per axis
    cells: int  # R
    width: int = 1  # M (pixel only)
    variant: str = "pixel"

    def __post_init__(self):
        if len(self.box) > 3:
            raise ConfigurationError(
                "unsupported: exponential grid (full-grid encoders stop at D=3)"
            )
        if self.variant not in ("pixel", "hspline"):
            raise ConfigurationError(f"unknown full-grid variant {self.variant!r}")
        if self.variant == "hspline" and self.cells < 2:
            raise ConfigurationError("hspline grid needs at least 2 points per axis")

    @property
    def naxes(self) -> int:
        return len(self.box)

    def feature_shape(self) -> tuple:
        D, R = self.naxes, self.cells
        if self.variant == "pixel":
            return (2, (R + 1) ** D, self.width)
        return (R ** D, 3 ** D)

    def n_params(self) -> int:
        return int(np.prod(self.feature_shape()))

    def init_features(self, rng: np.random.Generator) -> Array:
        if self.variant == "pixel":
            lim = 1.0 / np.sqrt(self.width)
        else:
            lim = 1.0
        return rng.uniform(-lim, lim, size=self.feature_shape())

    def _locate(self, X: Array, offset: float):
        """Per-axis cell indices, local coordinates and clamp masks.

        The shifted pixel lattice clamps queries in its outer half-cells
        to the outer knots; the returned scale is 0 there so derivative
        weights stay consistent with the (locally constant) value.
        """
        D = self.naxes
        js, ts, hs, scales = [], [], [], []
        for d in range(D):
            a, b = self.box[d]
            if self.variant == "pixel":
                R = self.cells
                h = (b - a) / R
                top = float(R)
                tol = 1e-9 * (b - a)
                x = X[:, d]
                if np.any(x < a - tol) or np.any(x > b + tol):
                    raise DomainError("query outside the domain box")
                u_raw = (x - a) / h + offset
                u = np.clip(u_raw, 0.0, top)
                scales.append(np.where(u_raw == u, 1.0, 0.0))
                j = np.minimum(u.astype(np.int64), R - 1)
            else:
                R = self.cells
                h = (b - a) / (R - 1)
                tol = 1e-9 * (b - a)
                x = X[:, d]
                if np.any(x < a - tol) or np.any(x > b + tol):
                    raise DomainError("query outside the domain box")
                u = np.clip((x - a) / h, 0.0, float(R - 1))
                j = np.minimum(u.astype(np.int64), R - 2)
                scales.append(np.ones_like(u))
            js.append(j)
            ts.append(u - j)
            hs.append(h)
        return js, ts, hs, scales


def _corner_bits(D: int):
    for c in range(2 ** D):
        yield [(c >> d) & 1 for d in range(D)]


def encode_fullgrid(enc: FullGridEncoder, features, X, second: bool = True):
    """Interpolate the full-grid features at points X (shape (B, D)).

    pixel -> PackedJet of M feature channels; hspline -> scalar MultiJet2
    (the field value itself).
    """
    X = np.asarray(X, dtype=np.float64)
    D = enc.naxes
    if enc.variant == "pixel":
        return _encode_pixel(enc, features, X, second)
    return _encode_hspline(enc, features, X, second)


def _encode_pixel(enc: FullGridEncoder, features, X, second: bool):
    D, R = enc.naxes, enc.cells
    npts = (R + 1) ** D
    strides = [(R + 1) ** d for d in range(D)]
    grid_outputs = []
    for g, offset in ((0, 0.0), (1, 0.5)):
        table = tp.row0(features, g)
        js, ts, hs, scales = enc._locate(X, offset)
        per_axis = []
        for d in range(D):
            w_lo = kernel_eval("cosine", ts[d])
            w_hi = kernel_eval("cosine", ts[d] - 1.0)
            per_axis.append((w_lo, w_hi))
        gathered, cval, cd, cdd = [], [], [], []
        for bits in _corner_bits(D):
            idx = sum((js[d] + bits[d]) * strides[d] for d in range(D))
            assert np.all(idx < npts)
            gathered.append(tp.take0(table, idx))
            ws = [per_axis[d][bits[d]] for d in range(D)]
            val = np.prod([w[0] for w in ws], axis=0)
            cval.append(val[:, None])
            row_d, row_dd = [], []
            for k in range(D):
                others = np.prod(
                    [ws[d][0] for d in range(D) if d != k], axis=0
                ) if D > 1 else 1.0
                row_d.append(others * scales[k] * ws[k][1] / hs[k])
                if second:
                    row_dd.append(others * scales[k] * ws[k][2] / hs[k] ** 2)
            cd.append([r[:, None] for r in row_d])
            cdd.append([r[:, None] for r in row_dd])
        rows = [tp.lincomb(cval, gathered)]
        for k in range(D):
            rows.append(tp.lincomb([c[k] for c in cd], gathered))
        if second:
            for k in range(D):
                rows.append(tp.lincomb([c[k] for c in cdd], gathered))
        grid_outputs.append(rows)
    rows = [
        tp.lincomb([0.5, 0.5], [a, b]) for a, b in zip(*grid_outputs)
    ]
    return PackedJet(tp.stack0(rows), D, second)


def _encode_hspline(enc: FullGridEncoder, features, X, second: bool):
    D, R = enc.naxes, enc.cells
    strides = [R ** d for d in range(D)]
    js, ts, hs, _ = enc._locate(X, 0.0)
    B = X.shape[0]
    kcube = 3 ** D

    def axis_kernels(d, eps):
        return kernel_eval_triplet(ts[d] - eps)

    def kernel_eval_triplet(arg):
        return [kernel_eval(f"hermite{i}", arg) for i in range(3)]

    value = None
    drows = [None] * D
    ddrows = [None] * D
    for bits in _corner_bits(D):
        idx = sum((js[d] + bits[d]) * strides[d] for d in range(D))
        rows = tp.take0(features, idx)  # (B, 3^D)
        per_axis = [axis_kernels(d, bits[d]) for d in range(D)]

        def combo_weights(deriv_axis=None):
            W = np.ones((B, 1))
            for d in range(D):
                order = 0
                scale = 1.0
                if deriv_axis is not None and d == deriv_axis[0]:
                    order = deriv_axis[1]
                    scale = 1.0 / hs[d] ** order
                k3 = np.stack(
                    [per_axis[d][i][order] * scale for i in range(3)], axis=1
                )
                W = (W[:, :, None] * k3[:, None, :]).reshape(B, -1)
            return W

        contr = tp.sum_axis(tp.mul(rows, combo_weights()), 1)
        value = contr if value is None else tp.add(value, contr)
        for k in range(D):
            c = tp.sum_axis(tp.mul(rows, combo_weights((k, 1))), 1)
            drows[k] = c if drows[k] is None else tp.add(drows[k], c)
            if second:
                c2 = tp.sum_axis(tp.mul(rows, combo_weights((k, 2))), 1)
                ddrows[k] = c2 if ddrows[k] is None else tp.add(ddrows[k], c2)
    assert kcube == 3 ** D
    d = tp.stack0(drows)
    dd = tp.stack0(ddrows) if second else None
    return MultiJet2(value, d, dd)
