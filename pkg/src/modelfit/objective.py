"""Least-squares objectives F(a) with exact gradients.

Three families:

* function fit:  F(a) = sum_i |f(a, t_i) - x_i|^2
* ODE fit:       F(a) = sum_i |f(a, t_i, x_i) - (x_{i+1} - x_i) / (t_{i+1} - t_i)|^2
* PDE fit:       F(a) = sum over grid nodes of (sum_k a_k * stencil_k + c)^2
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import GridField, TimeSeries
from .errors import ConfigError, DataError, DimensionError
from .expr import ModelExpr, State, eval_with_param_gradient_batch


@dataclass(frozen=True)
class ConstraintMode:
    """Feasible set for the descent iterates.

    kind is ``none``, ``unit_norm`` (|a|_2 = 1) or ``pin`` (a[index] = value,
    index 0-based).  The text form used on the command line is
    ``none``, ``unit-norm`` or ``pin:<k>=<v>`` with k 1-based.
    """

    kind: str = "none"
    index: Optional[int] = None
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "unit_norm", "pin"):
            raise ConfigError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "pin" and (self.index is None or self.index < 0):
            raise ConfigError("pin constraint needs a non-negative index")

    @classmethod
    def parse(cls, text: str) -> "ConstraintMode":
        text = text.strip()
        if text == "none":
            return cls()
        if text in ("unit-norm", "unit_norm"):
            return cls("unit_norm")
        m = re.fullmatch(r"pin:(\d+)=(.+)", text)
        if m:
            try:
                value = float(m.group(2))
            except ValueError:
                raise ConfigError(f"bad pin value in {text!r}") from None
            k = int(m.group(1))
            if k < 1:
                raise ConfigError("pin index is 1-based")
            return cls("pin", k - 1, value)
        raise ConfigError(f"constraint must be none, unit-norm or pin:<k>=<v>, got {text!r}")

    def __str__(self):
        if self.kind == "pin":
            return f"pin:{self.index + 1}={self.value!r}"
        return self.kind.replace("_", "-")

    def check(self, dim: int):
        if self.kind == "pin" and self.index >= dim:
            raise DimensionError(f"pin index {self.index + 1} exceeds parameter count {dim}")

    def project(self, a: np.ndarray) -> np.ndarray:
        if self.kind == "unit_norm":
            norm = np.linalg.norm(a)
            if norm == 0.0 or not np.isfinite(norm):
                raise DimensionError("cannot project a zero or non-finite vector to the unit sphere")
            return a / norm
        if self.kind == "pin":
            a = a.copy()
            a[self.index] = self.value
        return a

    def tangent(self, a: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Component of the gradient along the feasible set (used for stopping)."""
        if self.kind == "unit_norm":
            return g - np.dot(g, a) * a
        if self.kind == "pin":
            g = g.copy()
            g[self.index] = 0.0
        return g


NO_CONSTRAINT = ConstraintMode()


@dataclass(frozen=True)
class Objective:
    dim: int
    evaluate: Callable  # a -> (F, gradient)
    name: str = ""
    constraint: ConstraintMode = NO_CONSTRAINT
    info: dict = field(default_factory=dict, compare=False)

    def __call__(self, a):
        a = np.asarray(a, dtype=float).reshape(-1)
        if a.size != self.dim:
            raise DimensionError(f"{self.name or 'objective'} takes {self.dim} parameters, got {a.size}")
        return self.evaluate(a)

    def value(self, a) -> float:
        return self(a)[0]


def _least_squares(residual_and_jac):
    def evaluate(a):
        r, J = residual_and_jac(a)
        return float(np.sum(r * r)), 2.0 * np.einsum("nd,ndp->p", r, J)

    return evaluate


def fn_fit_objective(model: ModelExpr, ts: TimeSeries) -> Objective:
    """Fit f(a, t) directly to the samples; the model may not reference x."""
    if model.uses(State):
        raise DimensionError("function fitting predicts x from t; the model must not reference x")
    if model.output_dim != ts.dim:
        raise DimensionError(f"model has {model.output_dim} outputs, data has {ts.dim} columns")
    t = ts.times
    placeholder = np.zeros((t.size, model.state_dim))

    def residual_and_jac(a):
        v, J = eval_with_param_gradient_batch(model, a, t, placeholder)
        return v - ts.values, J

    return Objective(model.param_count, _least_squares(residual_and_jac), "fn-fit")


def ode_objective(model: ModelExpr, ts: TimeSeries) -> Objective:
    """Match f(a, t_i, x_i) to the forward difference quotients of the data."""
    if not model.output_dim == model.state_dim == ts.dim:
        raise DimensionError(
            f"ODE model needs output_dim = state_dim = data dim; got "
            f"{model.output_dim}, {model.state_dim}, {ts.dim}"
        )
    t, x = ts.times[:-1], ts.values[:-1]
    quotients = ts.difference_quotients()

    def residual_and_jac(a):
        v, J = eval_with_param_gradient_batch(model, a, t, x)
        return v - quotients, J

    return Objective(model.param_count, _least_squares(residual_and_jac), "ode-fit")


# ---------------------------------------------------------------------------
# PDE


@dataclass(frozen=True)
class PdeTerm:
    coef: int  # 1-based coefficient index
    var: str  # "x", "t", or "u" for the undifferentiated field
    order: int

    def __post_init__(self):
        if self.order == 0 and self.var != "u":
            object.__setattr__(self, "var", "u")
        if self.var not in ("x", "t", "u") or not 0 <= self.order <= 2:
            raise ConfigError(f"unsupported term {self.var!r} of order {self.order}")
        if (self.var == "u") != (self.order == 0):
            raise ConfigError("order-0 terms use var 'u'")
        if self.coef < 1:
            raise ConfigError("coefficient indices are 1-based")

    @property
    def label(self):
        return "u" if self.order == 0 else "u_" + self.var * self.order


def parse_terms(text: str) -> list:
    """``"u_x,u_xx,u_t,u_tt"`` -> terms with coefficients a1..a4 in order."""
    terms = []
    for k, name in enumerate((s.strip() for s in text.split(",")), start=1):
        m = re.fullmatch(r"u(?:_(x{1,2}|t{1,2}))?", name)
        if m is None:
            raise ConfigError(f"unsupported term {name!r}; use u, u_x, u_xx, u_t or u_tt")
        d = m.group(1)
        terms.append(PdeTerm(k, d[0] if d else "u", len(d) if d else 0))
    return terms


def approx_partial(grid: GridField, var: str, order: int, i: int, j: int) -> float:
    """Difference quotient for u at node (i, j).

    First order is the backward quotient (u[i] - u[i-1]) / (x[i] - x[i-1]);
    second order is the three-point quotient centred on i with denominator
    (x[i+1] - x[i]) * (x[i] - x[i-1]).  ``var`` selects the axis.
    """
    nx, nt = grid.u.shape
    if not (0 <= i < nx and 0 <= j < nt):
        raise IndexError(f"node ({i}, {j}) outside a {nx}x{nt} grid")
    if order == 0:
        return float(grid.u[i, j])
    if var == "x":
        axis, k, n = grid.xs, i, nx
        u = lambda s: grid.u[s, j]  # noqa: E731
    elif var == "t":
        axis, k, n = grid.ts, j, nt
        u = lambda s: grid.u[i, s]  # noqa: E731
    else:
        raise ConfigError(f"unknown variable {var!r}")
    if order == 1:
        if not 1 <= k <= n - 1:
            raise IndexError(f"first-order {var} stencil needs 1 <= index <= {n - 1}, got {k}")
        return float((u(k) - u(k - 1)) / (axis[k] - axis[k - 1]))
    if order == 2:
        if not 1 <= k <= n - 2:
            raise IndexError(f"second-order {var} stencil needs 1 <= index <= {n - 2}, got {k}")
        return float(
            (u(k + 1) - 2.0 * u(k) + u(k - 1)) / ((axis[k + 1] - axis[k]) * (axis[k] - axis[k - 1]))
        )
    raise ConfigError(f"derivative order {order} not supported")


def _anchored_stencil(grid, term, i, j):
    """Stencil whose newest point is node (i, j); i, j are broadcastable index arrays.

    A first-order quotient ends at the node; a second-order one is centred one
    step behind it, so every term of the residual shares the point u[i, j].
    """
    u = grid.u
    if term.order == 0:
        return u[i, j]
    if term.var == "x":
        axis, k = grid.xs, i
        at = lambda s: u[i - s, j]  # noqa: E731
    else:
        axis, k = grid.ts, j
        at = lambda s: u[i, j - s]  # noqa: E731
    h1 = axis[k] - axis[k - 1]
    if term.order == 1:
        return (at(0) - at(1)) / h1
    h0 = axis[k - 1] - axis[k - 2]
    return (at(0) - 2.0 * at(1) + at(2)) / (h1 * h0)


def pde_design(terms, grid: GridField, include_constant: bool = False):
    """Matrix S with F(a) = |S a|^2, one row per node where every stencil is defined."""
    if not terms:
        raise ConfigError("empty term list")
    nx, nt = grid.u.shape
    lo_x = max([t.order for t in terms if t.var == "x"], default=0)
    lo_t = max([t.order for t in terms if t.var == "t"], default=0)
    if lo_x >= nx or lo_t >= nt:
        raise DataError("grid too small for the requested derivative orders")
    i = np.arange(lo_x, nx)[:, None]
    j = np.arange(lo_t, nt)[None, :]
    n_coef = max(t.coef for t in terms)
    dim = n_coef + (1 if include_constant else 0)
    n_nodes = (nx - lo_x) * (nt - lo_t)
    S = np.zeros((n_nodes, dim))
    for term in terms:
        block = np.broadcast_to(_anchored_stencil(grid, term, i, j), (nx - lo_x, nt - lo_t))
        S[:, term.coef - 1] += block.ravel()
    if include_constant:
        S[:, -1] = 1.0
    return S


def pde_objective(
    terms,
    grid: GridField,
    constraint: ConstraintMode = NO_CONSTRAINT,
    include_constant: bool = False,
) -> Objective:
    """Residual of sum_k a_k D_k u (+ c) over interior nodes; gradient in closed form.

    With no constraint a = 0 is a global minimizer.  ``unit_norm`` or ``pin``
    constraints rule it out.
    """
    S = pde_design(terms, grid, include_constant)
    constraint.check(S.shape[1])

    def evaluate(a):
        r = S @ a
        return float(r @ r), 2.0 * (S.T @ r)

    info = {
        "terms": [t.label for t in terms],
        "nodes": S.shape[0],
        "constant": include_constant,
    }
    return Objective(S.shape[1], evaluate, "pde-fit", constraint, info)
