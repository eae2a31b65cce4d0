"""Closed-form systems used as ground truth by the scripts and tests."""

import numpy as np

from .data import GridField, TimeSeries

RICCATI_MODEL = "a1*x1^2 + a2*x1"
RICCATI_BLOWUP = np.log(3.0) / 2.0


def riccati_solution(t):
    """Solution of x' = x^2 + 2x with x(0) = 1; it has a pole at ln(3)/2."""
    e = np.exp(2.0 * np.asarray(t, dtype=float))
    return -2.0 * e / (e - 3.0)


def uniform_times(t0, t1, step):
    """Grid from t0 to t1 inclusive; the step must divide the span."""
    n = int(round((t1 - t0) / step))
    return np.linspace(t0, t1, n + 1)


def riccati_series(t0, t1, step) -> TimeSeries:
    t = uniform_times(t0, t1, step)
    return TimeSeries(t, riccati_solution(t))


def heat_kernel(x, t, diffusivity=7.0):
    """Fundamental solution of u_t = k u_xx."""
    x, t = np.asarray(x, float), np.asarray(t, float)
    return np.exp(-(x**2) / (4.0 * diffusivity * t)) / np.sqrt(4.0 * np.pi * diffusivity * t)


def heat_kernel_grid(lo=2.0, hi=3.0, step=1 / 40, diffusivity=7.0) -> GridField:
    axis = uniform_times(lo, hi, step)
    return GridField.from_function(lambda X, T: heat_kernel(X, T, diffusivity), axis, axis)


def linear_solution(t, rate, x0, t0=0.0):
    """x' = rate * x."""
    return x0 * np.exp(rate * (np.asarray(t, float) - t0))


def logistic_solution(t, rate, capacity, x0, t0=0.0):
    """x' = rate * x * (1 - x / capacity)."""
    e = np.exp(rate * (np.asarray(t, float) - t0))
    return capacity * x0 * e / (capacity + x0 * (e - 1.0))


def euler_series(f, t, x0) -> TimeSeries:
    """Samples produced by forward Euler on the grid ``t``; f(t, x) -> dx/dt."""
    t = np.asarray(t, float)
    xs = [np.atleast_1d(np.asarray(x0, float))]
    for i in range(t.size - 1):
        xs.append(xs[-1] + (t[i + 1] - t[i]) * np.asarray(f(t[i], xs[-1]), float))
    return TimeSeries(t, np.array(xs))
