"""Observation containers, CSV ingestion and the per-series constants used by the bounds."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Samples (t_i, x(t_i)); ``values`` has one row per time and d columns."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        values = _frozen(values)
        if times.ndim != 1 or times.size < 2:
            raise DataError("a time series needs at least 2 samples")
        if values.ndim != 2 or values.shape[0] != times.size:
            raise DataError(f"{times.size} times but values of shape {values.shape}")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise DataError("time series contains non-finite entries")
        gaps = np.diff(times)
        if np.any(gaps <= 0):
            i = int(np.argmax(gaps <= 0))
            raise DataError(
                f"times not strictly increasing: t[{i}]={times[i]!r}, t[{i + 1}]={times[i + 1]!r}"
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.times.size

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.values, other.values)

    def difference_quotients(self) -> np.ndarray:
        """Forward quotients (x_{i+1} - x_i) / (t_{i+1} - t_i), shape (n, d)."""
        return np.diff(self.values, axis=0) / np.diff(self.times)[:, None]


@dataclass(frozen=True)
class SeriesStats:
    A: float  # smallest gap
    B: float  # largest gap
    Delta: float  # largest forward-quotient norm
    t_start: float
    t_end: float


def series_stats(ts: TimeSeries) -> SeriesStats:
    gaps = np.diff(ts.times)
    slopes = np.linalg.norm(ts.difference_quotients(), axis=1)
    return SeriesStats(
        A=float(gaps.min()),
        B=float(gaps.max()),
        Delta=float(slopes.max()),
        t_start=float(ts.times[0]),
        t_end=float(ts.times[-1]),
    )


@dataclass(frozen=True)
class NoisePair:
    lower: TimeSeries
    upper: TimeSeries
    epsilon: float


def perturb_series(ts: TimeSeries, epsilon: float) -> NoisePair:
    """Shift every component by -epsilon and +epsilon."""
    if not epsilon >= 0:
        raise DataError(f"epsilon must be non-negative, got {epsilon}")
    return NoisePair(
        lower=TimeSeries(ts.times, ts.values - epsilon),
        upper=TimeSeries(ts.times, ts.values + epsilon),
        epsilon=float(epsilon),
    )


@dataclass(frozen=True, eq=False)
class GridField:
    """Scalar field u[i, j] = u(xs[i], ts[j]) on a rectangular grid."""

    xs: np.ndarray
    ts: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        xs, ts, u = _frozen(self.xs), _frozen(self.ts), _frozen(self.u)
        for name, axis in (("x", xs), ("t", ts)):
            if axis.ndim != 1 or axis.size < 3:
                raise DataError(f"{name} axis needs at least 3 points")
            if np.any(np.diff(axis) <= 0):
                raise DataError(f"{name} axis not strictly increasing")
        if u.shape != (xs.size, ts.size):
            raise DataError(f"u has shape {u.shape}, expected {(xs.size, ts.size)}")
        if not np.all(np.isfinite(u)):
            raise DataError("grid contains non-finite values")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "u", u)

    @classmethod
    def from_function(cls, fn, xs, ts):
        X, T = np.meshgrid(np.asarray(xs, float), np.asarray(ts, float), indexing="ij")
        return cls(xs, ts, fn(X, T))


# ---------------------------------------------------------------------------
# CSV


def _open_text(source):
    """Accept a path, bytes, str content, or an open binary/text stream."""
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, (str, os.PathLike)):
        if isinstance(source, str) and "\n" in source:
            return io.StringIO(source)
        with open(source, encoding="utf-8") as fh:
            return io.StringIO(fh.read())
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data)


def _read_table(source, expected_header=None):
    reader = csv.reader(_open_text(source))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError("empty CSV")
    header = [h.strip() for h in rows[0]]
    if expected_header is not None and header != expected_header:
        raise DataError(f"expected header {','.join(expected_header)}, got {','.join(header)}")
    body = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"line {r}: expected {len(header)} cells, got {len(row)}")
        for c, cell in enumerate(row):
            try:
                body[r - 2, c] = float(cell)
            except ValueError:
                raise DataError(f"line {r}: non-numeric cell {cell.strip()!r}") from None
    return header, body


def load_time_series(source) -> TimeSeries:
    """Read a ``t,x1,...,xd`` CSV.  Unsorted times are rejected, never reordered."""
    header, body = _read_table(source)
    d = len(header) - 1
    if d < 1 or header != ["t"] + [f"x{k}" for k in range(1, d + 1)]:
        raise DataError(f"expected header t,x1,...,xd, got {','.join(header)}")
    if body.shape[0] < 2:
        raise DataError("a time series needs at least 2 rows")
    return TimeSeries(body[:, 0], body[:, 1:])


def write_time_series(ts: TimeSeries, dest) -> None:
    header = ["t"] + [f"x{k}" for k in range(1, ts.dim + 1)]
    write_csv(dest, header, np.column_stack([ts.times, ts.values]))


def load_grid(source) -> GridField:
    """Read an ``x,t,u`` CSV with one row per node of a complete rectangular grid."""
    _, body = _read_table(source, ["x", "t", "u"])
    xs, ix = np.unique(body[:, 0], return_inverse=True)
    ts, it = np.unique(body[:, 1], return_inverse=True)
    u = np.full((xs.size, ts.size), np.nan)
    seen = np.zeros(u.shape, dtype=bool)
    for i, j, val in zip(ix, it, body[:, 2]):
        if seen[i, j]:
            raise DataError(f"duplicate grid node (x={xs[i]!r}, t={ts[j]!r})")
        seen[i, j] = True
        u[i, j] = val
    if not seen.all():
        i, j = np.argwhere(~seen)[0]
        raise DataError(f"non-rectangular grid: missing node (x={xs[i]!r}, t={ts[j]!r})")
    return GridField(xs, ts, u)


def write_grid(grid: GridField, dest) -> None:
    X, T = np.meshgrid(grid.xs, grid.ts, indexing="ij")
    write_csv(dest, ["x", "t", "u"], np.column_stack([X.ravel(), T.ravel(), grid.u.ravel()]))


def write_csv(dest, header, rows) -> None:
    """Numbers are written with 17 significant digits so doubles round-trip exactly."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    lines = [",".join(header)]
    lines += [",".join(format(v, ".17g") for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
