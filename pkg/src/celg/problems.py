"""Benchmark PDE definitions.

Each problem bundles a domain box, a residual operator written in jet
arithmetic, initial/boundary condition targets, default loss weights and
a ground truth (analytic, or an attached numerical reference for Burgers
and Allen-Cahn). Axis 0 is time for the time-dependent problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import tape as tp
from .errors import ConfigurationError
from .jets import MultiJet2

Array = np.ndarray


@dataclass
class PdeProblem:
    """Domain box, residual operator, condition targets and truth."""

    name: str
    box: list  # per-axis (a, b), axis 0 = time when has_time
    has_time: bool
    needs_second: bool  # residual uses pure second derivatives
    weights: tuple  # (pde, init, bc); init entry unused when not has_time
    periodic_bc: bool = False

    def residual(self, jet: MultiJet2, X: Array):
        raise NotImplementedError

    def truth(self, X: Array) -> Array:
        raise NotImplementedError

    def ic_values(self, X: Array) -> Array:
        """Target g at t=0 points (full coordinates, t column included)."""
        raise NotImplementedError

    def bc_values(self, X: Array) -> Array:
        """Dirichlet target h at boundary points."""
        raise NotImplementedError

    @property
    def naxes(self) -> int:
        return len(self.box)


@dataclass
class PoissonProblem(PdeProblem):
    """Multi-band Poisson: Laplacian(u) = -sum_i sum_d w_i pi^2 c_i^2 sin(pi c_i x_d)."""

    band_weights: Sequence[float] = (1.0,)
    band_freqs: Sequence[float] = (1.0,)

    def __post_init__(self):
        if len(self.band_weights) != len(self.band_freqs):
            raise ConfigurationError("band weight/frequency length mismatch")

    def source(self, X: Array) -> Array:
        f = np.zeros(X.shape[0])
        for w, c in zip(self.band_weights, self.band_freqs):
            f -= w * np.pi ** 2 * c ** 2 * np.sin(np.pi * c * X).sum(axis=1)
        return f

    def residual(self, jet, X):
        lap = tp.sum_axis(jet.dd, 0)
        return lap - self.source(X)

    def truth(self, X):
        u = np.zeros(X.shape[0])
        for w, c in zip(self.band_weights, self.band_freqs):
            u += w * np.sin(np.pi * c * X).sum(axis=1)
        return u

    def bc_values(self, X):
        return self.truth(X)


@dataclass
class BurgersProblem(PdeProblem):
    """u_t + u u_x - nu u_xx = 0 on t in [0,1], x in [-1,1]."""

    nu: float = 0.01 / np.pi
    truth_fn: Optional[Callable] = field(default=None, repr=False)

    def residual(self, jet, X):
        u = jet.v
        return jet.d_axis(0) + u * jet.d_axis(1) - self.nu * jet.dd_axis(1)

    def truth(self, X):
        if self.truth_fn is None:
            raise ConfigurationError(
                "Burgers ground truth not attached; generate the reference "
                "solution first (solve oracle --problem burgers)")
        return self.truth_fn(X[:, 1], X[:, 0])

    def ic_values(self, X):
        return -np.sin(np.pi * X[:, 1])

    def bc_values(self, X):
        return np.zeros(X.shape[0])


@dataclass
class AllenCahnProblem(PdeProblem):
    """u_t - nu u_xx + 5 u^3 - 5 u = 0, periodic in x on [-1,1]."""

    nu: float = 1e-4
    truth_fn: Optional[Callable] = field(default=None, repr=False)

    def residual(self, jet, X):
        u = jet.v
        return (jet.d_axis(0) - self.nu * jet.dd_axis(1)
                + 5.0 * u * u * u - 5.0 * u)

    def truth(self, X):
        if self.truth_fn is None:
            raise ConfigurationError(
                "Allen-Cahn ground truth not attached; generate the reference "
                "solution first (solve oracle --problem allen_cahn)")
        return self.truth_fn(X[:, 1], X[:, 0])

    def ic_values(self, X):
        x = X[:, 1]
        return x ** 2 * np.cos(np.pi * x)

    def bc_values(self, X):
        raise ConfigurationError("Allen-Cahn uses periodic pairs, not targets")


def _mixing_rate(x1: Array, x2: Array, v_tmax: float) -> Array:
    """sech^2(r) tanh(r) / (r v_tmax), with a series guard near r=0.

    tanh(r)/r -> 1 - r^2/3 + 2 r^4/15, so the ratio stays bounded by
    1/v_tmax everywhere including the domain center.
    """
    r = np.sqrt(x1 ** 2 + x2 ** 2)
    small = np.abs(r) < 1e-6
    rs = np.where(small, 1.0, r)
    ratio = np.where(small, 1.0 - r ** 2 / 3.0 + 2.0 * r ** 4 / 15.0,
                     np.tanh(rs) / rs)
    return ratio / np.cosh(r) ** 2 / v_tmax


@dataclass
class FlowMixingProblem(PdeProblem):
    """u_t + a u_x1 + b u_x2 = 0: rigid rotation with radius-dependent rate."""

    v_tmax: float = 0.385

    def coefficients(self, X: Array):
        s = _mixing_rate(X[:, 1], X[:, 2], self.v_tmax)
        return -X[:, 2] * s, X[:, 1] * s

    def residual(self, jet, X):
        a, b = self.coefficients(X)
        return jet.d_axis(0) + a * jet.d_axis(1) + b * jet.d_axis(2)

    def truth(self, X):
        t, x1, x2 = X[:, 0], X[:, 1], X[:, 2]
        omega = _mixing_rate(x1, x2, self.v_tmax)
        return -np.tanh(0.5 * x2 * np.cos(omega * t)
                        - 0.5 * x1 * np.sin(omega * t))

    def ic_values(self, X):
        return self.truth(X)

    def bc_values(self, X):
        return self.truth(X)


@dataclass
class HelmholtzProblem(PdeProblem):
    """Laplacian(u) + k^2 u = -k^2 (D-1) prod_d sin(k x_d), zero Dirichlet BC."""

    k: float = 10.0 * np.pi

    def source(self, X: Array) -> Array:
        D = self.naxes
        return -self.k ** 2 * (D - 1) * np.prod(np.sin(self.k * X), axis=1)

    def residual(self, jet, X):
        lap = tp.sum_axis(jet.dd, 0)
        return lap + self.k ** 2 * jet.v - self.source(X)

    def truth(self, X):
        return np.prod(np.sin(self.k * X), axis=1)

    def bc_values(self, X):
        return np.zeros(X.shape[0])


def make_problem(name: str, **params) -> PdeProblem:
    """Build a benchmark problem by name.

    Names: poisson (params ndim, weights, freqs, box), burgers, allen_cahn,
    flow_mixing, helmholtz (param ndim).
    """
    if name == "poisson":
        ndim = int(params.get("ndim", 1))
        weights = tuple(params.get("weights", (1.0,)))
        freqs = tuple(params.get("freqs", (1.0,)))
        lo, hi = params.get("range", (0.0, 1.0))
        return PoissonProblem(
            name="poisson", box=[(float(lo), float(hi))] * ndim,
            has_time=False, needs_second=True,
            weights=(1.0, 0.0, 0.01),
            band_weights=weights, band_freqs=freqs)
    if name == "burgers":
        return BurgersProblem(
            name="burgers", box=[(0.0, 1.0), (-1.0, 1.0)],
            has_time=True, needs_second=True,
            weights=(1.0, 1.0, 0.001))
    if name == "allen_cahn":
        return AllenCahnProblem(
            name="allen_cahn", box=[(0.0, 1.0), (-1.0, 1.0)],
            has_time=True, needs_second=True,
            weights=(0.1, 1.0, 1.0), periodic_bc=True)
    if name == "flow_mixing":
        return FlowMixingProblem(
            name="flow_mixing", box=[(0.0, 8.0), (-4.0, 4.0), (-4.0, 4.0)],
            has_time=True, needs_second=False,
            weights=(100.0, 1.0, 1.0))
    if name == "helmholtz":
        ndim = int(params.get("ndim", 3))
        return HelmholtzProblem(
            name="helmholtz", box=[(0.0, 1.0)] * ndim,
            has_time=False, needs_second=True,
            weights=(1.0, 0.0, 1.0))
    raise ConfigurationError(f"unknown problem: {name}")
