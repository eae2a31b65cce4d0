import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelfit.benchmarks import RICCATI_MODEL, riccati_series, riccati_solution
from modelfit.data import TimeSeries, series_stats
from modelfit.errors import DomainError, NumericError
from modelfit.expr import parse_model
from modelfit.integrate import (
    default_step,
    euler_piecewise,
    polygon_interpolant,
    rk4_solve,
    step_times,
)
from modelfit.objective import ode_objective

RICCATI = parse_model(RICCATI_MODEL, 2, 1)


# -- polygon --------------------------------------------------------------------


def test_polygon_midpoint():
    P = polygon_interpolant(TimeSeries([0, 1], [0, 2]))
    assert P(0.5).tolist() == [1.0]


@given(st.lists(st.floats(0.01, 5), min_size=1, max_size=15), st.integers(0, 2**32 - 1))
def test_polygon_interpolates_samples(gaps, seed):
    t = np.concatenate([[0.0], np.cumsum(gaps)])
    x = np.random.default_rng(seed).normal(size=(t.size, 2))
    P = polygon_interpolant(TimeSeries(t, x))
    np.testing.assert_allclose(P(t), x, rtol=1e-12, atol=1e-12)


def test_polygon_of_linear_data_is_the_line():
    t = np.array([0.0, 0.3, 1.0, 2.5])
    P = polygon_interpolant(TimeSeries(t, 4 - 3 * t))
    s = np.linspace(0, 2.5, 101)
    np.testing.assert_allclose(P(s)[:, 0], 4 - 3 * s, atol=1e-14)


def test_polygon_domain():
    P = polygon_interpolant(TimeSeries([0, 1], [0, 2]))
    with pytest.raises(DomainError):
        P(1.5)
    with pytest.raises(DomainError):
        P(np.nan)


# -- piecewise Euler ----------------------------------------------------------------


def test_euler_with_zero_model_is_piecewise_constant():
    ts = TimeSeries([0, 1, 2], [1, 5, 2])
    p = euler_piecewise(parse_model("0*x1", 0, 1), [], ts)
    assert p([0.0, 0.5, 1.0, 1.7, 2.0])[:, 0].tolist() == [1, 1, 5, 5, 5]


def test_euler_matching_quotients_reproduces_polygon():
    ts = TimeSeries([0, 1, 2], [1, 3, 2])
    # the quotients are 2 then -1, which the model a1 + a2*t reproduces at t = 0 and 1
    p = euler_piecewise(parse_model("a1 + a2*t", 2, 1), [2.0, -3.0], ts)
    P = polygon_interpolant(ts)
    s = np.linspace(0, 2, 41)
    np.testing.assert_allclose(p(s), P(s), atol=1e-14)
    np.testing.assert_allclose(p.left_limits()[:, 0], [3, 2])


def test_euler_right_continuity_and_jumps():
    ts = riccati_series(1.0, 2.0, 0.1)
    p = euler_piecewise(RICCATI, [1.0, 2.0], ts)
    np.testing.assert_array_equal(p(ts.times[:-1]), ts.values[:-1])
    jumps = p.left_limits()[:-1] - ts.values[1:-1]
    assert np.any(jumps != 0)


def test_euler_endpoint_error_within_sqrt_m_times_gap():
    ts = riccati_series(1.0, 2.0, 0.1)
    a = [1.0, 2.0]
    m = ode_objective(RICCATI, ts).value(a)
    B = series_stats(ts).B
    p = euler_piecewise(RICCATI, a, ts)
    err = np.abs(p.left_limits() - ts.values[1:]).max()
    assert err <= np.sqrt(m) * B


@settings(max_examples=25, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.sampled_from([0.05, 0.1, 0.2]))
def test_euler_polygon_gap_within_sqrt_m_times_gap(a1, a2, step):
    # each segment of p - P is linear with slope r_i, and |r_i| <= sqrt(m)
    ts = riccati_series(1.0, 2.0, step)
    a = [a1, a2]
    m = ode_objective(RICCATI, ts).value(a)
    B = series_stats(ts).B
    t = np.linspace(1.0, 2.0, 1000)
    gap = np.abs(euler_piecewise(RICCATI, a, ts)(t) - polygon_interpolant(ts)(t))
    assert gap.max() <= np.sqrt(m) * B * (1 + 1e-12)


def test_squared_gap_bound_is_not_uniform():
    # sqrt(m) * B^2 undercuts the gap when B < 1: the residual sits on one segment.
    ts = TimeSeries([0, 0.1, 0.2], [0, 0.1, 0.2])
    p = euler_piecewise(parse_model("a1", 1, 1), [2.0], ts)
    m = ode_objective(parse_model("a1", 1, 1), ts).value([2.0])
    gap = np.abs(p.left_limits() - ts.values[1:]).max()
    assert gap == pytest.approx(np.sqrt(m / 2) * 0.1)
    assert gap > np.sqrt(m) * 0.1**2


def test_euler_rejects_non_finite_model():
    ts = TimeSeries([0, 1], [0, 1])
    with pytest.raises(NumericError):
        euler_piecewise(parse_model("log(x1)", 0, 1), [], ts)


# -- RK4 -------------------------------------------------------------------------


def test_step_times_land_on_end():
    assert step_times(0.0, 1.0, 0.3).tolist() == pytest.approx([0, 0.3, 0.6, 0.9, 1.0])
    t = step_times(1.0, 2.0, 1e-3)
    assert t.size == 1001 and t[-1] == 2.0


def test_rk4_constant():
    y = rk4_solve(parse_model("0*x1", 0, 1), [], 0.0, [2.5], 1.0, 0.1)
    assert np.all(y.states == 2.5)


def test_rk4_exponential():
    y = rk4_solve(parse_model("x1", 0, 1), [], 0.0, [1.0], 1.0, 1e-3)
    assert abs(y.states[-1, 0] - np.e) < 1e-10


def test_rk4_order():
    model = parse_model("x1", 0, 1)
    errs = [abs(rk4_solve(model, [], 0.0, [1.0], 1.0, h).states[-1, 0] - np.e) for h in (0.1, 0.05)]
    ratio = errs[0] / errs[1]
    assert 8 <= ratio <= 32


def test_rk4_tracks_riccati_solution():
    y = rk4_solve(RICCATI, [1.0, 2.0], 0.0, [1.0], 0.5, 1e-4)
    np.testing.assert_allclose(y.states[:, 0], riccati_solution(y.times), atol=1e-6)


def test_rk4_truncates_at_blowup():
    y = rk4_solve(RICCATI, [1.0, 2.0], 0.0, [1.0], 1.0, 1e-4)
    assert y.truncated
    assert y.times[-1] < np.log(3) / 2 + 1e-3
    assert np.all(np.abs(y.states) <= 1e12)


def test_rk4_vector_system():
    rot = parse_model("x2; -x1", 0, 2)
    y = rk4_solve(rot, [], 0.0, [1.0, 0.0], np.pi, 1e-3)
    np.testing.assert_allclose(y.states[-1], [-1.0, 0.0], atol=1e-10)
    np.testing.assert_allclose(y(np.pi / 2), [0.0, -1.0], atol=1e-6)


def test_rk4_argument_checks(tmp_path):
    model = parse_model("x1", 0, 1)
    with pytest.raises(ValueError):
        rk4_solve(model, [], 0.0, [1.0], 1.0, 0.0)
    with pytest.raises(ValueError):
        rk4_solve(model, [], 1.0, [1.0], 0.5)
    with pytest.raises(NumericError):
        rk4_solve(parse_model("log(x1)", 0, 1), [], 0.0, [-1.0], 1.0)
    y = rk4_solve(model, [], 0.0, [1.0], 1.0, 0.25)
    y.write_csv(tmp_path / "traj.csv")
    lines = (tmp_path / "traj.csv").read_text().splitlines()
    assert lines[0] == "t,y1" and len(lines) == 6


def test_default_step():
    assert default_step(0.1) == pytest.approx(1e-4)
    assert default_step(1e-4) == pytest.approx(1e-5)
