"""Trajectories built from data and a fitted model.

* ``polygon_interpolant``: continuous piecewise-linear P(t) through the samples.
* ``euler_piecewise``: p(t) = x_i + f(t_i, x_i)(t - t_i) on [t_i, t_{i+1}); every
  segment restarts at the datum, so p is right-continuous and may jump at
  interior breakpoints.
* ``rk4_solve``: fixed-step classical Runge-Kutta solution y of y' = f(t, y).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TimeSeries, write_csv
from .errors import DomainError, NumericError
from .expr import ModelExpr, evaluate, evaluate_batch

BLOWUP = 1e12


@dataclass(frozen=True, eq=False)
class PiecewiseTrajectory:
    """Linear on each [t_i, t_{i+1}): value starts[i] + slopes[i] * (t - t_i).

    Evaluation at an interior breakpoint returns the right limit; at the final
    time it returns the left limit of the last segment.
    """

    breakpoints: np.ndarray
    starts: np.ndarray
    slopes: np.ndarray
    kind: str

    def segment(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.breakpoints[0], self.breakpoints[-1]
        if np.any(t < lo) or np.any(t > hi) or np.any(np.isnan(t)):
            raise DomainError(f"evaluation outside [{lo!r}, {hi!r}]")
        i = np.searchsorted(self.breakpoints, t, side="right") - 1
        return np.minimum(i, self.breakpoints.size - 2)

    def __call__(self, t):
        """Value at t (scalar -> (d,), array of shape (N,) -> (N, d))."""
        i = self.segment(t)
        dt = np.asarray(t, dtype=float) - self.breakpoints[i]
        return self.starts[i] + self.slopes[i] * dt[..., None]

    def left_limits(self) -> np.ndarray:
        """Values approaching t_{i+1} from the left, one row per segment."""
        return self.starts + self.slopes * np.diff(self.breakpoints)[:, None]


def polygon_interpolant(ts: TimeSeries) -> PiecewiseTrajectory:
    return PiecewiseTrajectory(ts.times, ts.values[:-1], ts.difference_quotients(), "polygon")


def euler_piecewise(model: ModelExpr, a, ts: TimeSeries) -> PiecewiseTrajectory:
    slopes = evaluate_batch(model, a, ts.times[:-1], ts.values[:-1])
    if not np.all(np.isfinite(slopes)):
        i = int(np.argmax(~np.all(np.isfinite(slopes), axis=1)))
        raise NumericError(f"f is not finite at sample {i} (t={ts.times[i]!r})")
    return PiecewiseTrajectory(ts.times, ts.values[:-1], slopes, "euler")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), d)
    h: float
    truncated: bool = False

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def x0(self):
        return self.states[0]

    def __call__(self, t):
        """Linear interpolation between steps; only meaningful on the solved span."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise DomainError(f"evaluation outside [{self.times[0]!r}, {self.times[-1]!r}]")
        cols = [np.interp(t, self.times, self.states[:, k]) for k in range(self.states.shape[1])]
        return np.stack(cols, axis=-1)

    def write_csv(self, dest):
        header = ["t"] + [f"y{k}" for k in range(1, self.states.shape[1] + 1)]
        write_csv(dest, header, np.column_stack([self.times, self.states]))


def step_times(t0: float, t_end: float, h: float) -> np.ndarray:
    """t0, t0 + h, ... with a shortened last step that lands exactly on t_end."""
    n = int(np.floor((t_end - t0) / h))
    times = t0 + h * np.arange(n + 1)
    if t_end - times[-1] > 1e-9 * h:
        times = np.append(times, t_end)
    else:
        times[-1] = t_end
    return times


def rk4_solve(model: ModelExpr, a, t0: float, x0, t_end: float, h: float = 1e-4) -> Trajectory:
    """Integrate y' = f(a, t, y) from (t0, x0) to t_end with classical RK4.

    Integration stops early, with ``truncated`` set, once a state is non-finite
    or exceeds 1e12 in magnitude.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    if not t_end > t0:
        raise ValueError(f"t_end must exceed t0, got [{t0}, {t_end}]")
    y = np.array(x0, dtype=float).reshape(-1)
    if not np.all(np.isfinite(evaluate(model, a, t0, y))):
        raise NumericError(f"f is not finite at the initial point t={t0!r}, x={y.tolist()}")
    a = np.asarray(a, dtype=float)
    fns = model._compiled
    f = lambda t, y: np.array([fn(a, t, y) for fn in fns], dtype=float)  # noqa: E731
    times = step_times(float(t0), float(t_end), float(h))
    states = np.empty((times.size, y.size))
    states[0] = y
    with np.errstate(all="ignore"):
        return _rk4_loop(f, times, states, h)


def _rk4_loop(f, times, states, h):
    y = states[0]
    for n in range(times.size - 1):
        t, dt = times[n], times[n + 1] - times[n]
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt / 2 * k1)
        k3 = f(t + dt / 2, y + dt / 2 * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > BLOWUP:
            return Trajectory(times[: n + 1], states[: n + 1], h, truncated=True)
        states[n + 1] = y
    return Trajectory(times, states, h)


def default_step(A: float) -> float:
    """RK4 step used when none is given: a tenth of min(smallest data gap, 1e-3)."""
    return min(A, 1e-3) * 0.1
