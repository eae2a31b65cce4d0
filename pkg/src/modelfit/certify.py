"""A-posteriori error bounds for fitted ODE models.

For an ODE model fitted with objective value m on data with gap range
[A, B] and largest difference-quotient norm Delta, the distance between the
data polygon P and the model solution y started at the first datum obeys

    |P(t) - y(t)| <= B * (sqrt(m) * B + sqrt(1 + F_m^2) * (exp(L (t - t1)) - 1))

where L is a Lipschitz constant of f in (t, x) and F_m = sqrt(m) + Delta
bounds |f| at the samples.  The bound assumes f is Lipschitz on the region
the trajectories visit.  L is estimated here by sampling the Jacobian of f,
so every certificate carries a tag naming how L was obtained.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .data import SeriesStats, TimeSeries, perturb_series, series_stats, write_csv
from .descent import DescentOptions, FitResult, steepest_descent
from .errors import CertificateError, DataError, LipschitzError, NumericError
from .expr import ModelExpr, eval_with_state_jacobian_batch, evaluate_batch
from .objective import ode_objective

# exp(x) overflows a double beyond this
MAX_EXPONENT = float(np.log(np.finfo(float).max))


@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    method: str
    argmax: tuple  # (t, x1, ..., xn) where the largest Jacobian norm was seen

    def __float__(self):
        return self.value


def sampling_box(ts: TimeSeries, inflation: float = 0.1) -> np.ndarray:
    """Bounding box of the points (t_i, x_i), each axis widened by ``inflation`` of its width."""
    pts = np.column_stack([ts.times, ts.values])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    width = hi - lo
    pad = 0.5 * inflation * width
    flat = width == 0
    pad[flat] = 0.5 * inflation * np.maximum(np.abs(lo[flat]), 1.0)
    return np.column_stack([lo - pad, hi + pad])


def estimate_lipschitz(
    model: ModelExpr,
    a,
    ts: TimeSeries,
    n_samples: int = 10_000,
    inflation: float = 0.1,
    safety: float = 1.1,
) -> LipschitzEstimate:
    """L = safety * max |J(t, x)|_2 over Halton points, box corners and the samples.

    J is the Jacobian of f with respect to (t, x) from forward-mode
    differentiation.  Raises LipschitzError if J is not finite somewhere,
    or if exp(L * (t_end - t1)) overflows: no finite bound exists then, which
    is what happens when the data straddle a blow-up of the solution.
    """
    box = sampling_box(ts, inflation)
    k = box.shape[0]
    unit = qmc.Halton(d=k, scramble=False).random(n_samples)
    if k <= 12:
        unit = np.vstack([unit, np.array(list(product((0.0, 1.0), repeat=k)))])
    pts = box[:, 0] + unit * (box[:, 1] - box[:, 0])
    pts = np.vstack([pts, np.column_stack([ts.times, ts.values])])
    _, J = eval_with_state_jacobian_batch(model, a, pts[:, 0], pts[:, 1:])
    bad = ~np.all(np.isfinite(J), axis=(1, 2))
    if bad.any():
        point = tuple(float(v) for v in pts[np.argmax(bad)])
        raise LipschitzError(f"Jacobian of f is not finite at (t, x) = {point}", point)
    norms = np.linalg.norm(J, ord=2, axis=(1, 2))
    i = int(np.argmax(norms))
    L = safety * float(norms[i])
    span = float(ts.times[-1] - ts.times[0])
    if L * span > MAX_EXPONENT:
        point = tuple(float(v) for v in pts[i])
        raise LipschitzError(
            f"Lipschitz estimate {L:.6g} over a span of {span:.6g} makes exp(L*span) overflow; "
            f"largest Jacobian norm at (t, x) = {point}",
            point,
        )
    method = f"sampled-jacobian(halton n={n_samples}, inflation={inflation}, safety={safety})"
    return LipschitzEstimate(L, method, tuple(float(v) for v in pts[i]))


@dataclass(frozen=True)
class ErrorCertificate:
    B: float
    Delta: float
    m: float
    L: float
    L_method: str
    F_m: float
    M: float
    t0: float
    t_end: float
    f_max_direct: Optional[float] = None  # max |f(t_i, x_i)|, reported alongside F_m

    def bound(self, t):
        """Upper bound on |P(t) - y(t)|; t measured on the data's own axis."""
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            growth = np.expm1(self.L * (t - self.t0))
        return self.B * (np.sqrt(self.m) * self.B + np.sqrt(1.0 + self.F_m**2) * growth)

    __call__ = bound

    def to_dict(self):
        out = {
            "B": self.B, "Delta": self.Delta, "m": self.m, "L": self.L,
            "L_method": self.L_method, "F_m": self.F_m, "M": self.M,
            "t0": self.t0, "t_end": self.t_end,
            "bound_at_end": float(self.bound(self.t_end)),
        }
        if self.f_max_direct is not None:
            out["f_max_direct"] = self.f_max_direct
        return out


def error_certificate(
    m: float,
    stats: SeriesStats,
    L: float,
    method: str = "given",
    f_max_direct: Optional[float] = None,
) -> ErrorCertificate:
    """Assemble the bound from the achieved objective m, the data constants and L.

    F_m is the data-only estimate sqrt(m) + Delta.  A certificate whose bound
    is not finite over the data span is refused.
    """
    if isinstance(L, LipschitzEstimate):
        L, method = L.value, L.method
    for name, v in (("m", m), ("L", L), ("B", stats.B), ("Delta", stats.Delta)):
        if not v >= 0:
            raise DataError(f"{name} must be non-negative, got {v}")
    F_m = float(np.sqrt(m) + stats.Delta)
    cert = ErrorCertificate(
        B=stats.B, Delta=stats.Delta, m=float(m), L=float(L), L_method=method,
        F_m=F_m, M=float(L) * stats.B * float(np.sqrt(1.0 + F_m**2)),
        t0=stats.t_start, t_end=stats.t_end, f_max_direct=f_max_direct,
    )
    if not (np.isfinite(cert.M) and np.isfinite(cert.bound(stats.t_end))):
        raise CertificateError(
            f"bound is not finite on [{stats.t_start!r}, {stats.t_end!r}] (L={L!r}); refusing certificate"
        )
    return cert


def certify_fit(model: ModelExpr, a, ts: TimeSeries, m: Optional[float] = None, **lipschitz) -> ErrorCertificate:
    """Certificate for parameters ``a``; m defaults to the ODE objective at ``a``."""
    a = np.asarray(a, dtype=float)
    if m is None:
        m = ode_objective(model, ts).value(a)
    if not np.isfinite(m):
        raise NumericError(f"objective is not finite at {a.tolist()}")
    f_vals = evaluate_batch(model, a, ts.times, ts.values)
    f_max = float(np.max(np.linalg.norm(f_vals, axis=1)))
    L = estimate_lipschitz(model, a, ts, **lipschitz)
    return error_certificate(m, series_stats(ts), L, f_max_direct=f_max)


@dataclass(frozen=True)
class ComparisonBound:
    """Bound on |y(t) - z(t)| for two models fitted to the same data."""

    cert_f: ErrorCertificate
    cert_h: ErrorCertificate
    delta: Optional[float] = None
    lipschitz_cap: Optional[float] = None

    def components(self, t):
        t = np.asarray(t, dtype=float)
        f, h = self.cert_f, self.cert_h
        with np.errstate(over="ignore"):
            return (
                f.B * (np.sqrt(f.m) + np.sqrt(h.m)) * f.B,
                f.B * np.sqrt(1.0 + f.F_m**2) * np.expm1(f.L * (t - f.t0)),
                f.B * np.sqrt(1.0 + h.F_m**2) * np.expm1(h.L * (t - f.t0)),
            )

    def __call__(self, t):
        c0, c1, c2 = self.components(t)
        return c0 + c1 + c2

    def uniform(self, t):
        """Model-independent cap 2B(delta B + sqrt(1 + (delta + Delta)^2)(exp(cap t) - 1))."""
        if self.delta is None or self.lipschitz_cap is None:
            raise DataError("uniform bound needs delta and lipschitz_cap")
        f = self.cert_f
        t = np.asarray(t, dtype=float)
        root = np.sqrt(1.0 + (self.delta + f.Delta) ** 2)
        return 2.0 * f.B * (self.delta * f.B + root * np.expm1(self.lipschitz_cap * (t - f.t0)))


def compare_models(
    cert_f: ErrorCertificate,
    cert_h: ErrorCertificate,
    delta: Optional[float] = None,
    lipschitz_cap: Optional[float] = None,
) -> ComparisonBound:
    same = (cert_f.B, cert_f.Delta, cert_f.t0, cert_f.t_end) == (
        cert_h.B, cert_h.Delta, cert_h.t0, cert_h.t_end,
    )
    if not same:
        raise DataError("certificates were built from different data series")
    if (delta is None) != (lipschitz_cap is None):
        raise DataError("delta and lipschitz_cap must be given together")
    if delta is not None:
        if not max(cert_f.m, cert_h.m) < delta**2:
            raise CertificateError(f"objectives {cert_f.m!r}, {cert_h.m!r} are not below delta^2={delta**2!r}")
        if not max(cert_f.L, cert_h.L) < lipschitz_cap:
            raise CertificateError(f"Lipschitz constants {cert_f.L!r}, {cert_h.L!r} exceed cap {lipschitz_cap!r}")
    return ComparisonBound(cert_f, cert_h, delta, lipschitz_cap)


@dataclass(frozen=True)
class NoiseEnvelope:
    epsilon: float
    fits: tuple  # (lower, center, upper) FitResults
    certificates: tuple  # (lower, center, upper) ErrorCertificates
    series: tuple  # (lower, center, upper) TimeSeries

    def __call__(self, t):
        """Bound on the spread |y_upper(t) - y_lower(t)|: 2(eps + E) + E_upper + E_lower."""
        lower, center, upper = self.certificates
        return 2.0 * (self.epsilon + center(t)) + upper(t) + lower(t)

    @property
    def param_shifts(self):
        """Distances of the lower and upper refits from the center optimum."""
        c = self.fits[1].params
        return (
            float(np.linalg.norm(self.fits[0].params - c)),
            float(np.linalg.norm(self.fits[2].params - c)),
        )

    def to_dict(self):
        names = ("lower", "center", "upper")
        return {
            "epsilon": self.epsilon,
            "fits": {n: f.to_dict() for n, f in zip(names, self.fits)},
            "certificates": {n: c.to_dict() for n, c in zip(names, self.certificates)},
            "param_shift_lower": self.param_shifts[0],
            "param_shift_upper": self.param_shifts[1],
        }


def noise_analysis(
    model: ModelExpr,
    ts: TimeSeries,
    epsilon: float,
    opts: Optional[DescentOptions] = None,
    start=None,
    center: Optional[FitResult] = None,
    **lipschitz,
) -> NoiseEnvelope:
    """Fit the data, refit the -epsilon and +epsilon copies from that optimum, bound the spread.

    Either ``center`` (an existing fit of ``ts``) or ``start`` must be given.
    With epsilon == 0 the shifted copies equal the data and the center fit is
    reused for both.
    """
    if center is None:
        if start is None:
            raise DataError("noise analysis needs a start point or a center fit")
        center = steepest_descent(ode_objective(model, ts), start, opts)
    pair = perturb_series(ts, epsilon)
    if epsilon == 0:
        lower_fit = upper_fit = center
    else:
        lower_fit = steepest_descent(ode_objective(model, pair.lower), center.params, opts)
        upper_fit = steepest_descent(ode_objective(model, pair.upper), center.params, opts)
    fits = (lower_fit, center, upper_fit)
    series = (pair.lower, ts, pair.upper)
    for fit in fits:
        if not np.isfinite(fit.objective):
            raise NumericError("a noise refit ended with a non-finite objective")
    certs = tuple(certify_fit(model, f.params, s, m=f.objective, **lipschitz) for f, s in zip(fits, series))
    return NoiseEnvelope(float(epsilon), fits, certs, series)


def write_bound_csv(dest, t, values):
    write_csv(dest, ["t", "bound"], np.column_stack([t, values]))
