"""Independent reference solutions for Burgers and Allen-Cahn.

Burgers uses the exact Cole-Hopf integral representation evaluated by
Gauss-Hermite quadrature. Allen-Cahn uses a Fourier pseudo-spectral
solver with fourth-order exponential time differencing (ETDRK4), cached
to disk as a CSV table with a JSON sidecar of generation parameters.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import NumericalAbort

Array = np.ndarray

BURGERS_NU = 0.01 / np.pi


def _cache_dir() -> Path:
    root = os.environ.get("SOLVE_CACHE")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "celg"


def burgers_solution(x, t, nu: float = BURGERS_NU, nodes: int = 128) -> Array:
    """Viscous Burgers solution with initial condition -sin(pi x).

    Cole-Hopf gives u as a ratio of two Gaussian-weighted integrals,
    computed here with Gauss-Hermite quadrature after the substitution
    eta = 2 sqrt(nu t) z. Exponents are shifted before exponentiation
    because cos(pi y) / (2 pi nu) reaches about 50 at this viscosity.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), x.shape)
    z, w = np.polynomial.hermite.hermgauss(nodes)
    logw = np.log(w)

    out = np.empty(x.shape)
    zero = t <= 0.0
    out[zero] = -np.sin(np.pi * x[zero])
    idx = np.nonzero(~zero)[0]
    if idx.size:
        xs = x[idx][:, None]
        ts = t[idx][:, None]
        y = xs - 2.0 * np.sqrt(nu * ts) * z  # (B, nodes)
        loggain = logw - np.cos(np.pi * y) / (2.0 * np.pi * nu)
        loggain -= loggain.max(axis=1, keepdims=True)
        gain = np.exp(loggain)
        num = (np.sin(np.pi * y) * gain).sum(axis=1)
        den = gain.sum(axis=1)
        out[idx] = -num / den
    return out


def burgers_self_check(points: int = 64, tol: float = 1e-6) -> float:
    """Max change between 100- and 200-node quadrature on a sample grid."""
    rng = np.random.default_rng(7)
    x = rng.uniform(-1.0, 1.0, points)
    t = rng.uniform(0.0, 1.0, points)
    a = burgers_solution(x, t, nodes=100)
    b = burgers_solution(x, t, nodes=200)
    gap = float(np.max(np.abs(a - b)))
    if gap > tol:
        raise NumericalAbort(f"Burgers quadrature not converged: {gap:.3e}")
    return gap


def _etdrk4_coeffs(L: Array, dt: float, contour_pts: int = 32):
    """Kassam-Trefethen contour evaluation of the phi functions."""
    r = np.exp(2j * np.pi * (np.arange(1, contour_pts + 1) - 0.5) / contour_pts)
    LR = dt * L[:, None] + r[None, :]
    Q = dt * np.real(np.mean((np.exp(LR / 2) - 1) / LR, axis=1))
    f1 = dt * np.real(np.mean(
        (-4 - LR + np.exp(LR) * (4 - 3 * LR + LR ** 2)) / LR ** 3, axis=1))
    f2 = dt * np.real(np.mean(
        (2 + LR + np.exp(LR) * (-2 + LR)) / LR ** 3, axis=1))
    f3 = dt * np.real(np.mean(
        (-4 - 3 * LR - LR ** 2 + np.exp(LR) * (4 - LR)) / LR ** 3, axis=1))
    E = np.exp(dt * L)
    E2 = np.exp(dt * L / 2)
    return E, E2, Q, f1, f2, f3


def allen_cahn_integrate(nu: float = 1e-4, modes: int = 512,
                         dt: float = 1e-4, t_end: float = 1.0,
                         snapshots: int = 1001):
    """Integrate u_t = nu u_xx + 5u - 5u^3 on periodic [-1, 1].

    Returns (x grid of `modes` points, snapshot times, snapshot matrix
    of shape (snapshots, modes)).
    """
    steps = int(round(t_end / dt))
    if steps % (snapshots - 1) != 0:
        raise NumericalAbort("snapshot count must divide the step count")
    stride = steps // (snapshots - 1)

    x = -1.0 + 2.0 * np.arange(modes) / modes
    k = np.fft.fftfreq(modes, d=2.0 / modes) * 2.0 * np.pi
    L = -nu * k ** 2 + 5.0
    E, E2, Q, f1, f2, f3 = _etdrk4_coeffs(L, dt)

    u = x ** 2 * np.cos(np.pi * x)
    v = np.fft.fft(u)
    out = np.empty((snapshots, modes))
    out[0] = u
    times = np.linspace(0.0, t_end, snapshots)

    def N(vhat):
        u = np.real(np.fft.ifft(vhat))
        return np.fft.fft(-5.0 * u ** 3)

    row = 1
    for step in range(1, steps + 1):
        Nv = N(v)
        a = E2 * v + Q * Nv
        Na = N(a)
        b = E2 * v + Q * Na
        Nb = N(b)
        c = E2 * a + Q * (2 * Nb - Nv)
        Nc = N(c)
        v = E * v + Nv * f1 + 2 * (Na + Nb) * f2 + Nc * f3
        if step % stride == 0:
            u = np.real(np.fft.ifft(v))
            if np.max(np.abs(u)) > 10.0:
                raise NumericalAbort("Allen-Cahn integration blew up")
            out[row] = u
            row += 1
    return x, times, out


@dataclass
class OracleTable:
    """Tabulated reference solution with bicubic off-grid interpolation."""

    x: Array  # spatial grid
    t: Array  # time grid
    u: Array  # (len(t), len(x))
    meta: dict
    periodic: bool = True

    def __post_init__(self):
        x, u = self.x, self.u
        if self.periodic:
            # append the wrapped column so queries cover the full box
            x = np.append(self.x, self.x[-1] + (self.x[1] - self.x[0]))
            u = np.column_stack([self.u, self.u[:, 0]])
        self._spline = RectBivariateSpline(self.t, x, u, kx=3, ky=3)

    def query(self, x, t) -> Array:
        return self._spline(np.asarray(t), np.asarray(x), grid=False)

    def save(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        header = "t," + ",".join(f"x{i}" for i in range(len(self.x)))
        table = np.column_stack([self.t, self.u])
        np.savetxt(path, table, delimiter=",", header=header, comments="")
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps(
            {"x0": float(self.x[0]), "dx": float(self.x[1] - self.x[0]),
             "nx": len(self.x), **self.meta}, indent=2))

    @classmethod
    def load(cls, path: Path) -> "OracleTable":
        meta = json.loads(path.with_suffix(".json").read_text())
        table = np.loadtxt(path, delimiter=",", skiprows=1)
        t = table[:, 0]
        u = table[:, 1:]
        x = meta["x0"] + meta["dx"] * np.arange(meta["nx"])
        return cls(x=x, t=t, u=u, meta=meta)


def allen_cahn_table(cache: Path | None = None,
                     regenerate: bool = False) -> OracleTable:
    """Load the cached Allen-Cahn reference table, generating if needed."""
    path = (cache or _cache_dir()) / "allen_cahn.csv"
    if path.exists() and not regenerate:
        return OracleTable.load(path)
    nu, modes, dt = 1e-4, 512, 1e-4
    x, t, u = allen_cahn_integrate(nu=nu, modes=modes, dt=dt)
    table = OracleTable(x=x, t=t, u=u,
                        meta={"problem": "allen_cahn", "nu": nu,
                              "modes": modes, "dt": dt})
    table.save(path)
    return table
