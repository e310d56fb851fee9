"""Loss assembly, point sampling and the Adam training loop."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from . import tape as tp
from .errors import ConfigurationError, NumericalAbort
from .models import Model
from .problems import PdeProblem

Array = np.ndarray


@dataclass
class PointSets:
    """Collocation, initial and boundary point sets for one epoch."""

    collocation: Array
    initial: Optional[Array] = None
    boundary: Optional[Array] = None
    boundary_pairs: Optional[tuple] = None  # (left, right) for periodic


@dataclass
class SampleConfig:
    sampler: str  # "grid" or "random"
    colloc: Sequence[int]  # per-axis counts (grid) or totals (random)
    n_init: Sequence[int] = ()  # per space-axis counts at t=0
    n_bc: Sequence[int] = ()  # per-face lattice counts over remaining axes

    def __post_init__(self):
        if self.sampler not in ("grid", "random"):
            raise ConfigurationError(f"unknown sampler: {self.sampler}")


def _lattice(box, counts) -> Array:
    if not box:
        return np.zeros((1, 0))  # a face of a 1D domain is a single point
    axes = [np.linspace(a, b, n) for (a, b), n in zip(box, counts)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _faces(box, has_time):
    """Axis/side pairs describing the spatial boundary."""
    start = 1 if has_time else 0
    for axis in range(start, len(box)):
        for side in (0, 1):
            yield axis, side


def sample_points(problem: PdeProblem, config: SampleConfig,
                  epoch: int = 0, seed: int = 0) -> PointSets:
    box = problem.box
    D = problem.naxes
    if len(config.colloc) != D:
        raise ConfigurationError("collocation counts must match axis count")

    if config.sampler == "grid":
        colloc = _lattice(box, config.colloc)
    else:
        rng = np.random.default_rng([seed, epoch])
        n = int(np.prod(config.colloc))
        colloc = np.stack(
            [rng.uniform(a, b, n) for a, b in box], axis=1)

    initial = None
    if problem.has_time:
        space = box[1:]
        if config.sampler == "grid":
            pts = _lattice(space, config.n_init)
        else:
            rng = np.random.default_rng([seed, epoch, 1])
            n = int(np.prod(config.n_init))
            pts = np.stack([rng.uniform(a, b, n) for a, b in space], axis=1)
        initial = np.column_stack([np.zeros(len(pts)), pts])

    def face_points(axis, side, k):
        others = [box[i] for i in range(D) if i != axis]
        if config.sampler == "grid" or not others:
            pts = _lattice(others, config.n_bc)
        else:
            rng = np.random.default_rng([seed, epoch, 2, axis, side, k])
            n = int(np.prod(config.n_bc))
            pts = np.stack([rng.uniform(a, b, n) for a, b in others], axis=1)
        full = np.empty((len(pts), D))
        full[:, axis] = box[axis][side]
        full[:, [i for i in range(D) if i != axis]] = pts
        return full

    boundary = None
    boundary_pairs = None
    if problem.periodic_bc:
        # pair the two faces of each periodic space axis pointwise
        left = np.concatenate(
            [face_points(axis, 0, 0) for axis, side in _faces(box, True)
             if side == 0])
        right = np.concatenate(
            [face_points(axis, 1, 0) for axis, side in _faces(box, True)
             if side == 1])
        boundary_pairs = (left, right)
    else:
        boundary = np.concatenate(
            [face_points(axis, side, 0)
             for axis, side in _faces(box, problem.has_time)])
    return PointSets(collocation=colloc, initial=initial,
                     boundary=boundary, boundary_pairs=boundary_pairs)


@dataclass
class LossBreakdown:
    """Weighted loss terms; the tape scalar of the total is kept for backward."""

    l_pde: float
    l_init: float
    l_bc: float
    l_total: float
    total_var: tp.TapeVar = field(repr=False, default=None)


def _mean_sq(r) -> tp.TapeVar:
    n = (r.value if isinstance(r, tp.TapeVar) else r).size
    return tp.mul(tp.total(tp.mul(r, r)), 1.0 / n)


def compute_loss(tape: tp.Tape, model: Model, problem: PdeProblem,
                 points: PointSets, leaves: dict) -> LossBreakdown:
    """Mean-of-squares residual, initial and boundary penalties on the tape.

    Means keep the weighted terms comparable across point-set sizes; with
    a single point per term they reduce to plain squared residuals.
    """
    lam_pde, lam_init, lam_bc = problem.weights

    jet = model.forward(tape, points.collocation,
                        second=problem.needs_second, leaves=leaves)
    l_pde = _mean_sq(problem.residual(jet, points.collocation))

    l_init = None
    if points.initial is not None:
        jet0 = model.forward(tape, points.initial, second=False, leaves=leaves)
        l_init = _mean_sq(jet0.v - problem.ic_values(points.initial))

    l_bc = None
    if points.boundary_pairs is not None:
        left, right = points.boundary_pairs
        jl = model.forward(tape, left, second=False, leaves=leaves)
        jr = model.forward(tape, right, second=False, leaves=leaves)
        l_bc = tp.add(_mean_sq(jl.v - jr.v),
                      _mean_sq(jl.d_axis(1) - jr.d_axis(1)))
    elif points.boundary is not None:
        jb = model.forward(tape, points.boundary, second=False, leaves=leaves)
        l_bc = _mean_sq(jb.v - problem.bc_values(points.boundary))

    total = tp.mul(l_pde, lam_pde)
    if l_init is not None:
        total = tp.add(total, tp.mul(l_init, lam_init))
    if l_bc is not None:
        total = tp.add(total, tp.mul(l_bc, lam_bc))

    out = LossBreakdown(
        l_pde=float(l_pde.value),
        l_init=float(l_init.value) if l_init is not None else 0.0,
        l_bc=float(l_bc.value) if l_bc is not None else 0.0,
        l_total=float(total.value),
        total_var=total)
    if not np.isfinite(out.l_total):
        raise NumericalAbort(
            f"non-finite loss: pde={out.l_pde} init={out.l_init} "
            f"bc={out.l_bc} (method {model.spec.method.value})")
    return out


@dataclass
class AdamState:
    m: Array
    v: Array
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: Model, lr: float) -> "AdamState":
        n = model.params.size
        return cls(m=np.zeros(n), v=np.zeros(n), lr=lr)


def adam_step(state: AdamState, params: Array, grads: Array) -> Array:
    """One bias-corrected Adam update; returns the new parameter vector."""
    if not np.all(np.isfinite(grads)):
        raise NumericalAbort("non-finite gradient")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads ** 2
    mhat = state.m / (1.0 - state.beta1 ** state.step)
    vhat = state.v / (1.0 - state.beta2 ** state.step)
    return params - state.lr * mhat / (np.sqrt(vhat) + state.eps)


def parameter_gradients(tape: tp.Tape, loss: tp.TapeVar, model: Model,
                        leaves: dict) -> Array:
    adjoints = tape.backward(loss)
    parts = []
    for k in model.params.order:
        g = adjoints[leaves[k].index]
        if g is None:
            g = np.zeros_like(model.params.arrays[k])
        parts.append(np.asarray(g).ravel())
    return np.concatenate(parts)


@dataclass
class RunRecord:
    epoch: int
    l_pde: float
    l_init: float
    l_bc: float
    l_total: float
    relative_error: float
    elapsed_ms_per_iter: float

    CSV_HEADER = ("epoch,l_pde,l_init,l_bc,l_total,"
                  "relative_error,elapsed_ms_per_iter")

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.l_pde:.10e},{self.l_init:.10e},"
                f"{self.l_bc:.10e},{self.l_total:.10e},"
                f"{self.relative_error:.10e},{self.elapsed_ms_per_iter:.3f}")


@dataclass
class TrainConfig:
    epochs: int
    lr: float
    sample: SampleConfig
    seed: int = 0
    eval_interval: int = 100
    divergence_limit: float = 1e12


def train(model: Model, problem: PdeProblem, config: TrainConfig,
          test_points: Array, test_truth: Array) -> Iterator[RunRecord]:
    """Full-batch Adam loop; yields one record per eval interval.

    The final epoch is always evaluated. Non-finite losses abort; the
    caller owns checkpointing.
    """
    state = AdamState.for_model(model, config.lr)
    fixed = None
    if config.sample.sampler == "grid":
        fixed = sample_points(problem, config.sample, 0, config.seed)

    def evaluate() -> float:
        pred = model.predict(test_points)
        return float(np.linalg.norm(pred - test_truth)
                     / np.linalg.norm(test_truth))

    t_start = time.perf_counter()
    iters_done = 0

    def record(epoch, loss) -> RunRecord:
        elapsed = (time.perf_counter() - t_start) * 1000.0
        per_iter = elapsed / iters_done if iters_done else 0.0
        return RunRecord(epoch=epoch, l_pde=loss.l_pde, l_init=loss.l_init,
                         l_bc=loss.l_bc, l_total=loss.l_total,
                         relative_error=evaluate(),
                         elapsed_ms_per_iter=per_iter)

    if config.epochs == 0:
        tape = tp.Tape()
        leaves = model.make_leaves(tape)
        pts = fixed or sample_points(problem, config.sample, 0, config.seed)
        yield record(0, compute_loss(tape, model, problem, pts, leaves))
        return

    for epoch in range(1, config.epochs + 1):
        pts = fixed
        if pts is None:
            pts = sample_points(problem, config.sample, epoch, config.seed)
        tape = tp.Tape()
        leaves = model.make_leaves(tape)
        loss = compute_loss(tape, model, problem, pts, leaves)
        if loss.l_total > config.divergence_limit:
            raise NumericalAbort(f"loss diverged: {loss.l_total:.3e}")
        grads = parameter_gradients(tape, loss.total_var, model, leaves)
        model.params.unflatten(adam_step(state, model.params.flatten(), grads))
        iters_done += 1
        if epoch % config.eval_interval == 0 or epoch == config.epochs:
            yield record(epoch, loss)
