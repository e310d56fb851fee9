"""The six compared architectures behind one jet-evaluation interface.

Every model exposes `forward(tape, X)`, returning the predicted field and
its first/second derivatives w.r.t. each input axis as a MultiJet2 over
the batch, plus a tape-free `predict(X)` fast path for evaluation grids.

Pipelines (axis 0 is time for time-dependent problems):
  celg      per-axis natural-spline encoding -> Hadamard fuse -> MLP head
  celg-cp   per-axis encoding -> per-axis MLP -> rank-sum of products
  vanilla   raw coordinates -> MLP head
  cp-pinn   per-axis scalar coordinate -> per-axis MLP -> rank-sum
  pixel     two-grid cosine full-lattice encoding -> MLP head
  h-spline  tensor-product Hermite field (the interpolant is the output)
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import tape as tp
from .encoding import (
    AxisEncoder,
    FullGridEncoder,
    Kernel,
    encode_axis,
    encode_fullgrid,
    kernel_eval,
    spline_factorize,
)
from .errors import ConfigurationError
from .jets import (
    MultiJet2,
    PackedJet,
    cp_combine,
    hadamard_fuse,
    packed_linear,
    packed_seeds,
    packed_tanh,
)


class Method(enum.Enum):
    CELG = "celg"
    CELG_CP = "celg-cp"
    VANILLA = "vanilla"
    CP_PINN = "cp-pinn"
    PIXEL = "pixel"
    H_SPLINE = "h-spline"


GRID_METHODS = {Method.CELG, Method.CELG_CP, Method.PIXEL, Method.H_SPLINE}
FULL_GRID_METHODS = {Method.PIXEL, Method.H_SPLINE}


@dataclass
class ModelSpec:
    method: Method
    naxes: int  # D, time included as an axis
    cells: int = 0  # R (grid methods)
    width: int = 64  # M, feature channels per axis
    hidden_layers: int = 2
    hidden_width: int = 64
    kernel: Kernel = Kernel.NATURAL_CUBIC
    multigrid: bool = False

    def __post_init__(self):
        if isinstance(self.method, str):
            self.method = Method(self.method)
        if isinstance(self.kernel, str):
            self.kernel = Kernel(self.kernel)
        if self.method in GRID_METHODS and self.cells < 2:
            raise ConfigurationError("grid methods need cells >= 2")
        if self.method in FULL_GRID_METHODS and self.naxes > 3:
            raise ConfigurationError("unsupported: exponential grid")

    @property
    def rank(self) -> int:
        # CP variants read the rank off the last hidden layer
        return self.hidden_width


def _mlp_params(n_in: int, layers: int, width: int, head: bool) -> int:
    n = (n_in * width + width) + (layers - 1) * (width * width + width)
    if head:
        n += width + 1
    return n


def count_params(spec: ModelSpec) -> int:
    """Exact trainable-real count for a model specification."""
    D, R, M = spec.naxes, spec.cells, spec.width
    L, H = spec.hidden_layers, spec.hidden_width
    m = spec.method
    # per-axis feature table size depends on the interpolation kernel:
    # Hermite carries value/slope/curvature channels, multigrid two lattices
    axis_feats = (R + 1) * M
    if spec.kernel is Kernel.HERMITE:
        axis_feats *= 3
    if spec.multigrid:
        axis_feats *= 2
    if m is Method.CELG:
        return D * axis_feats + _mlp_params(M, L, H, True)
    if m is Method.CELG_CP:
        return D * axis_feats + D * _mlp_params(M, L, H, False)
    if m is Method.VANILLA:
        return _mlp_params(D, L, H, True)
    if m is Method.CP_PINN:
        return D * _mlp_params(1, L, H, False)
    if m is Method.PIXEL:
        return 2 * (R + 1) ** D * M + _mlp_params(M, L, H, True)
    if m is Method.H_SPLINE:
        return R ** D * 3 ** D
    raise ConfigurationError(f"unknown method {m}")


@dataclass
class ParamStore:
    """Named parameter arrays with a fixed flat layout."""

    arrays: dict
    order: list

    @classmethod
    def from_arrays(cls, arrays: dict) -> "ParamStore":
        return cls(arrays=arrays, order=list(arrays.keys()))

    @property
    def size(self) -> int:
        return sum(self.arrays[k].size for k in self.order)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in self.order])

    def unflatten(self, flat: np.ndarray) -> None:
        if flat.size != self.size:
            raise ValueError("flat vector size does not match layout")
        pos = 0
        for k in self.order:
            a = self.arrays[k]
            self.arrays[k] = flat[pos:pos + a.size].reshape(a.shape).copy()
            pos += a.size

    def zeros_like_flat(self) -> np.ndarray:
        return np.zeros(self.size)


def _glorot(rng, n_out, n_in):
    lim = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-lim, lim, size=(n_out, n_in))


class Model:
    """A built architecture: spec + domain box + parameter store."""

    def __init__(self, spec: ModelSpec, box: list, seed: int = 0):
        self.spec = spec
        self.box = [tuple(map(float, ab)) for ab in box]
        if len(self.box) != spec.naxes:
            raise ConfigurationError("box does not match the axis count")
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.axis_encoders: list[AxisEncoder] = []
        self.full_grid: FullGridEncoder | None = None
        arrays: dict = {}

        m = spec.method
        if m in (Method.CELG, Method.CELG_CP):
            for d, (a, b) in enumerate(self.box):
                enc = AxisEncoder(
                    a, b, spec.cells, spec.width,
                    kernel=spec.kernel, multigrid=spec.multigrid,
                )
                self.axis_encoders.append(enc)
                arrays[f"enc{d}"] = enc.init_features(rng)
        elif m is Method.PIXEL:
            self.full_grid = FullGridEncoder(
                box=self.box, cells=spec.cells, width=spec.width, variant="pixel"
            )
            arrays["grid"] = self.full_grid.init_features(rng)
        elif m is Method.H_SPLINE:
            self.full_grid = FullGridEncoder(
                box=self.box, cells=spec.cells, variant="hspline"
            )
            arrays["grid"] = self.full_grid.init_features(rng)

        L, H = spec.hidden_layers, spec.hidden_width
        if m in (Method.CELG, Method.PIXEL, Method.VANILLA):
            n_in = spec.width if m is not Method.VANILLA else spec.naxes
            for i in range(L):
                arrays[f"w{i}"] = _glorot(rng, H, n_in if i == 0 else H)
                arrays[f"b{i}"] = np.zeros(H)
            arrays["w_out"] = _glorot(rng, 1, H)
            arrays["b_out"] = np.zeros(1)
        elif m in (Method.CELG_CP, Method.CP_PINN):
            n_in = spec.width if m is Method.CELG_CP else 1
            for d in range(spec.naxes):
                for i in range(L):
                    arrays[f"a{d}_w{i}"] = _glorot(rng, H, n_in if i == 0 else H)
                    arrays[f"a{d}_b{i}"] = np.zeros(H)

        self.params = ParamStore.from_arrays(arrays)
        assert self.params.size == count_params(spec), (
            self.params.size, count_params(spec)
        )

    # -- tape forward -------------------------------------------------------

    def forward(self, tape: tp.Tape, X, second: bool = True,
                leaves: dict | None = None) -> MultiJet2:
        """Evaluate the field and its derivatives at points X (B, D).

        `leaves` maps parameter names to already-created tape leaves; when
        omitted, fresh leaves are created from the current parameters.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.spec.naxes:
            raise ValueError("X must have shape (B, D)")
        if leaves is None:
            leaves = self.make_leaves(tape)
        m = self.spec.method
        if m is Method.CELG:
            return self._forward_celg(X, second, leaves)
        if m is Method.CELG_CP:
            return self._forward_cp(X, second, leaves, encoded=True)
        if m is Method.VANILLA:
            packed = packed_seeds(X, second)
            return self._head(packed, leaves)
        if m is Method.CP_PINN:
            return self._forward_cp(X, second, leaves, encoded=False)
        if m is Method.PIXEL:
            packed = encode_fullgrid(self.full_grid, leaves["grid"], X, second)
            return self._head(packed, leaves)
        if m is Method.H_SPLINE:
            return encode_fullgrid(self.full_grid, leaves["grid"], X, second)
        raise ConfigurationError(f"unknown method {m}")

    def make_leaves(self, tape: tp.Tape) -> dict:
        return {k: tape.var(self.params.arrays[k]) for k in self.params.order}

    def _axis_parts(self, X, second, leaves):
        parts = []
        for d, enc in enumerate(self.axis_encoders):
            feat = leaves[f"enc{d}"]
            curv = None
            if enc.kernel is Kernel.NATURAL_CUBIC:
                curv = spline_factorize(feat, enc.cells, enc.spacing)
            parts.append(encode_axis(enc, feat, X[:, d], second, curv))
        return parts

    def _forward_celg(self, X, second, leaves):
        packed = hadamard_fuse(self._axis_parts(X, second, leaves))
        return self._head(packed, leaves)

    def _head(self, packed: PackedJet, leaves) -> MultiJet2:
        for i in range(self.spec.hidden_layers):
            packed = packed_tanh(
                packed_linear(packed, leaves[f"w{i}"], leaves[f"b{i}"])
            )
        packed = packed_linear(packed, leaves["w_out"], leaves["b_out"])
        D = packed.naxes
        flat = tp.reshape(packed.data, packed.data.shape[:2])
        v = tp.row0(flat, 0)
        d = tp.slice0(flat, 1, 1 + D)
        dd = tp.slice0(flat, 1 + D, 1 + 2 * D) if packed.second else None
        return MultiJet2(v, d, dd)

    def _forward_cp(self, X, second, leaves, encoded: bool):
        D = self.spec.naxes
        parts = []
        for d in range(D):
            if encoded:
                v, d1, dd1 = self._axis_part(X, d, second, leaves)
            else:
                col = X[:, d:d + 1]
                v, d1 = col, np.ones_like(col)
                dd1 = np.zeros_like(col) if second else None
            rows = [v, d1] + ([dd1] if second else [])
            packed = PackedJet(tp.stack0(rows), 1, second)
            for i in range(self.spec.hidden_layers):
                packed = packed_tanh(
                    packed_linear(packed, leaves[f"a{d}_w{i}"], leaves[f"a{d}_b{i}"])
                )
            data = packed.data
            y = tp.row0(data, 0)
            yd = tp.row0(data, 1)
            ydd = tp.row0(data, 2) if second else None
            parts.append((y, yd, ydd))
        return cp_combine(parts)

    def _axis_part(self, X, d, second, leaves):
        enc = self.axis_encoders[d]
        feat = leaves[f"enc{d}"]
        curv = None
        if enc.kernel is Kernel.NATURAL_CUBIC:
            curv = spline_factorize(feat, enc.cells, enc.spacing)
        return encode_axis(enc, feat, X[:, d], second, curv)

    # -- tape-free evaluation ----------------------------------------------

    def predict(self, X, chunk: int = 65536) -> np.ndarray:
        """Field values only, plain numpy (for evaluation grids)."""
        X = np.asarray(X, dtype=np.float64)
        outs = []
        for lo in range(0, X.shape[0], chunk):
            outs.append(self._predict_chunk(X[lo:lo + chunk]))
        return np.concatenate(outs) if len(outs) > 1 else outs[0]

    def _predict_chunk(self, X) -> np.ndarray:
        arrs = self.params.arrays
        m = self.spec.method
        if m is Method.VANILLA:
            return self._head_np(X)
        if m is Method.CELG:
            zs = [self._axis_values_np(X[:, d], d) for d in range(self.spec.naxes)]
            phi = zs[0]
            for z in zs[1:]:
                phi = phi * z
            return self._head_np(phi)
        if m is Method.PIXEL:
            packed = encode_fullgrid(self.full_grid, arrs["grid"], X, second=False)
            return self._head_np(packed.data[0])
        if m is Method.H_SPLINE:
            jet = encode_fullgrid(self.full_grid, arrs["grid"], X, second=False)
            return np.asarray(jet.v)
        if m in (Method.CELG_CP, Method.CP_PINN):
            prod = None
            for d in range(self.spec.naxes):
                if m is Method.CELG_CP:
                    y = self._axis_values_np(X[:, d], d)
                else:
                    y = X[:, d:d + 1]
                for i in range(self.spec.hidden_layers):
                    y = np.tanh(
                        y @ arrs[f"a{d}_w{i}"].T + arrs[f"a{d}_b{i}"]
                    )
                prod = y if prod is None else prod * y
            return prod.sum(axis=1)
        raise ConfigurationError(f"unknown method {m}")

    def _axis_values_np(self, x, d) -> np.ndarray:
        enc = self.axis_encoders[d]
        feat = self.params.arrays[f"enc{d}"]
        curv = None
        if enc.kernel is Kernel.NATURAL_CUBIC:
            curv = spline_factorize(feat, enc.cells, enc.spacing)
        v, _, _ = encode_axis(enc, feat, x, second=False, curvatures=curv)
        return np.asarray(v)

    def _head_np(self, phi) -> np.ndarray:
        arrs = self.params.arrays
        h = phi
        for i in range(self.spec.hidden_layers):
            h = np.tanh(h @ arrs[f"w{i}"].T + arrs[f"b{i}"])
        return (h @ arrs["w_out"].T + arrs["b_out"]).ravel()

    # -- checkpoints --------------------------------------------------------

    MAGIC = b"CELG\x01\x00"

    def save_checkpoint(self, path) -> None:
        header = {
            "method": self.spec.method.value,
            "naxes": self.spec.naxes,
            "cells": self.spec.cells,
            "width": self.spec.width,
            "hidden_layers": self.spec.hidden_layers,
            "hidden_width": self.spec.hidden_width,
            "kernel": self.spec.kernel.value,
            "multigrid": self.spec.multigrid,
            "box": self.box,
            "seed": self.seed,
            "layout": [[k, list(self.params.arrays[k].shape)]
                       for k in self.params.order],
        }
        blob = json.dumps(header).encode()
        flat = self.params.flatten().astype("<f8")
        with open(path, "wb") as f:
            f.write(self.MAGIC)
            f.write(struct.pack("<I", len(blob)))
            f.write(blob)
            f.write(struct.pack("<Q", flat.size))
            f.write(flat.tobytes())

    @classmethod
    def load_checkpoint(cls, path) -> "Model":
        with open(path, "rb") as f:
            magic = f.read(len(cls.MAGIC))
            if magic != cls.MAGIC:
                raise ValueError("not a model checkpoint")
            (hlen,) = struct.unpack("<I", f.read(4))
            header = json.loads(f.read(hlen).decode())
            (n,) = struct.unpack("<Q", f.read(8))
            flat = np.frombuffer(f.read(n * 8), dtype="<f8").astype(np.float64)
        spec = ModelSpec(
            method=header["method"], naxes=header["naxes"],
            cells=header["cells"], width=header["width"],
            hidden_layers=header["hidden_layers"],
            hidden_width=header["hidden_width"],
            kernel=header["kernel"], multigrid=header["multigrid"],
        )
        model = cls(spec, header["box"], seed=header["seed"])
        model.params.unflatten(flat)
        return model
