"""Steepest descent with step backtracking, multi-start search and basin mapping.

The update is a_{n+1} = P(a_n - eps * grad F(a_n)), where P projects onto the
constraint set.  A trial that increases F is discarded and eps is multiplied by
``shrink``.  After an accepted step eps grows by ``grow``, capped at the
initial step.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import write_csv
from .errors import ConfigError, DimensionError, NumericError
from .objective import ConstraintMode, Objective

CONVERGED = "converged"
STAGNATED = "stagnated"
ITERATION_CAPPED = "iteration_capped"


@dataclass(frozen=True)
class DescentOptions:
    step: float = 1e-2
    shrink: float = 0.5
    grow: float = 1.1
    grad_tol: float = 1e-10
    f_tol: float = 1e-16
    max_iters: int = 100_000
    min_step: float = 1e-300
    keep_trace: bool = False

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError(f"step must be positive, got {self.step}")
        if not 0 < self.shrink < 1:
            raise ConfigError(f"shrink must lie in (0, 1), got {self.shrink}")
        if not self.grow >= 1:
            raise ConfigError(f"grow must be >= 1, got {self.grow}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0 < self.min_step <= self.step:
            raise ConfigError("min_step must lie in (0, step]")


@dataclass
class FitResult:
    params: np.ndarray
    objective: float
    grad_norm: float
    iters: int
    exit_reason: str
    start: Optional[np.ndarray] = None
    trace: Optional[list] = None  # (iteration, F, step) per accepted iterate

    def to_dict(self, with_trace=False):
        out = {
            "params": [float(v) for v in self.params],
            "objective": float(self.objective),
            "grad_norm": float(self.grad_norm),
            "iters": int(self.iters),
            "exit_reason": self.exit_reason,
        }
        if self.start is not None:
            out["start"] = [float(v) for v in self.start]
        if with_trace and self.trace is not None:
            out["trace"] = [list(row) for row in self.trace]
        return out


def steepest_descent(
    obj: Objective,
    start,
    opts: Optional[DescentOptions] = None,
    constraint: Optional[ConstraintMode] = None,
) -> FitResult:
    """Minimize ``obj`` from ``start``.

    The start is projected onto the constraint set first.  Stops when the
    (constraint-tangent) gradient's max-norm falls below ``grad_tol``, when an
    accepted step lowers F by less than ``f_tol`` relative, when backtracking
    pushes the step below ``min_step``, or after ``max_iters`` accepted steps.
    """
    opts = opts or DescentOptions()
    constraint = constraint if constraint is not None else obj.constraint
    a = np.array(start, dtype=float).reshape(-1)
    if a.size != obj.dim:
        raise DimensionError(f"start has {a.size} entries, objective takes {obj.dim}")
    constraint.check(obj.dim)
    start_point = a.copy()
    a = constraint.project(a)

    F, g = obj(a)
    if not (np.isfinite(F) and np.all(np.isfinite(g))):
        raise NumericError(f"objective or gradient not finite at start {a.tolist()}")
    eps = opts.step
    trace = [(0, F, eps)] if opts.keep_trace else None
    iters = 0
    reason = ITERATION_CAPPED

    while True:
        gt = constraint.tangent(a, g)
        gnorm = float(np.max(np.abs(gt))) if gt.size else 0.0
        if gnorm < opts.grad_tol or F == 0.0:
            reason = CONVERGED
            break
        if iters >= opts.max_iters:
            break
        while True:
            trial = constraint.project(a - eps * g)
            F_new, g_new = obj(trial)
            if np.isfinite(F_new) and F_new <= F and np.all(np.isfinite(g_new)):
                break
            eps *= opts.shrink
            if eps < opts.min_step:
                reason = STAGNATED
                break
        if reason == STAGNATED:
            break
        iters += 1
        decrease = (F - F_new) / F
        a, F, g = trial, F_new, g_new
        if trace is not None:
            trace.append((iters, F, eps))
        eps = min(eps * opts.grow, opts.step)
        if decrease < opts.f_tol:
            reason = CONVERGED
            gt = constraint.tangent(a, g)
            gnorm = float(np.max(np.abs(gt))) if gt.size else 0.0
            break

    return FitResult(a, float(F), gnorm, iters, reason, start_point, trace)


def _as_box(box, dim=None) -> np.ndarray:
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2 or box.shape[0] == 0:
        raise ConfigError(f"box must be a list of (low, high) pairs, got shape {box.shape}")
    if not np.all(box[:, 0] < box[:, 1]):
        raise ConfigError("box is empty: every low must be below its high")
    if dim is not None and box.shape[0] != dim:
        raise DimensionError(f"box has {box.shape[0]} axes, objective takes {dim} parameters")
    return box


def draw_starts(box, k: int, seed: int) -> np.ndarray:
    """k uniform pseudo-random points in the box, fixed by ``seed``."""
    box = _as_box(box)
    rng = np.random.default_rng(seed)
    return box[:, 0] + rng.random((k, box.shape[0])) * (box[:, 1] - box[:, 0])


def _run_many(obj, starts, opts, constraint, threads):
    def one(s):
        try:
            return steepest_descent(obj, s, opts, constraint)
        except NumericError:
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, starts))
    return [one(s) for s in starts]


def _best(results):
    return min(results, key=lambda r: (r.objective, tuple(r.params)))


def shotgun(
    obj: Objective,
    box,
    k: int,
    opts: Optional[DescentOptions] = None,
    seed: int = 0,
    constraint: Optional[ConstraintMode] = None,
    threads: int = 1,
):
    """Descend from k seeded random starts; return (best, results in start order).

    Starts where F is not finite are skipped.  Ties on the final objective go
    to the lexicographically smallest parameter vector.
    """
    if k < 1:
        raise ConfigError("shotgun needs at least one start")
    box = _as_box(box, obj.dim)
    results = [r for r in _run_many(obj, draw_starts(box, k, seed), opts, constraint, threads) if r]
    if not results:
        raise NumericError("objective not finite at any shotgun start")
    return _best(results), results


@dataclass
class BasinGrid:
    """Descent outcome for each node of a 2D grid of starts.

    ``labels[i, j]`` indexes ``minima`` for the start (axes[0][i], axes[1][j]);
    -1 marks a start where F was not finite.
    """

    box: np.ndarray
    resolution: int
    axes: tuple
    labels: np.ndarray
    minima: list
    objectives: np.ndarray
    cluster_radius: float
    results: list = field(default_factory=list, repr=False)

    @property
    def n_labels(self) -> int:
        return len(set(self.labels[self.labels >= 0].ravel().tolist()))

    def rows(self):
        A1, A2 = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        return np.column_stack([A1.ravel(), A2.ravel(), self.labels.ravel()])

    def write_csv(self, dest):
        write_csv(dest, ["a1", "a2", "label"], self.rows())


def cluster_points(points, radius):
    """Greedy clustering in input order: join the first centre within ``radius``."""
    centres, labels = [], []
    for p in points:
        if p is None:
            labels.append(-1)
            continue
        for k, c in enumerate(centres):
            if np.linalg.norm(p - c) <= radius:
                labels.append(k)
                break
        else:
            centres.append(np.array(p))
            labels.append(len(centres) - 1)
    return centres, labels


def basin_map(
    obj: Objective,
    box,
    resolution: int,
    opts: Optional[DescentOptions] = None,
    cluster_radius: Optional[float] = None,
    constraint: Optional[ConstraintMode] = None,
    threads: int = 1,
) -> BasinGrid:
    """Label each start on a resolution x resolution grid by the minimum it reaches.

    Default cluster radius is 1e-3 times the box diagonal.
    """
    if obj.dim != 2:
        raise DimensionError(f"basin mapping is limited to 2 parameters, objective has {obj.dim}")
    if resolution < 2:
        raise ConfigError("resolution must be at least 2")
    box = _as_box(box, 2)
    if cluster_radius is None:
        cluster_radius = 1e-3 * float(np.linalg.norm(box[:, 1] - box[:, 0]))
    axes = tuple(np.linspace(lo, hi, resolution) for lo, hi in box)
    A1, A2 = np.meshgrid(*axes, indexing="ij")
    starts = np.column_stack([A1.ravel(), A2.ravel()])
    results = _run_many(obj, starts, opts, constraint, threads)
    minima, labels = cluster_points([r.params if r else None for r in results], cluster_radius)
    objectives = np.array([r.objective if r else np.nan for r in results])
    shape = (resolution, resolution)
    return BasinGrid(
        box, resolution, axes, np.array(labels).reshape(shape), minima,
        objectives.reshape(shape), cluster_radius, results,
    )


def write_trace(result: FitResult, dest):
    if result.trace is None:
        raise ConfigError("descent was run without keep_trace")
    write_csv(dest, ["iter", "F", "step"], np.array(result.trace, dtype=float))
