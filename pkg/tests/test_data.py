import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modelfit.benchmarks import riccati_series
from modelfit.data import (
    GridField,
    TimeSeries,
    load_grid,
    load_time_series,
    perturb_series,
    series_stats,
    write_grid,
    write_time_series,
)
from modelfit.errors import DataError


def test_load_small_csv():
    ts = load_time_series("t,x1\n0,1\n0.5,2\n1,4\n")
    assert len(ts) == 3 and ts.dim == 1
    assert ts.values[:, 0].tolist() == [1.0, 2.0, 4.0]


def test_load_from_bytes_and_stream(tmp_path):
    text = "t,x1,x2\n0,1,2\n1,3,4\n"
    path = tmp_path / "s.csv"
    path.write_text(text)
    for source in (text.encode(), io.StringIO(text), str(path), path):
        ts = load_time_series(source)
        assert ts.dim == 2 and ts.values.tolist() == [[1, 2], [3, 4]]


@pytest.mark.parametrize(
    "text, message",
    [
        ("t,x1\n1,1\n1,2\n", "strictly increasing"),
        ("t,x1\n1,1\n0,2\n", "strictly increasing"),
        ("t,x1\n0,1\n", "at least 2"),
        ("t,x1\n0,1\n1,abc\n", "non-numeric"),
        ("t,x1\n0,1\n1,2,3\n", "expected 2 cells"),
        ("t,x1\n0,1\n1,nan\n", "non-finite"),
        ("time,x1\n0,1\n1,2\n", "header"),
        ("t,x2\n0,1\n1,2\n", "header"),
    ],
)
def test_load_rejects(text, message):
    with pytest.raises(DataError, match=message):
        load_time_series(text)


def test_riccati_samples_on_unit_interval():
    ts = riccati_series(1.0, 2.0, 0.1)
    assert len(ts) == 11
    assert ts.times[0] == 1.0 and ts.times[-1] == 2.0


def test_series_is_read_only():
    ts = TimeSeries([0, 1], [[1.0], [2.0]])
    with pytest.raises(ValueError):
        ts.values[0, 0] = 5.0


def test_stats_examples():
    s = series_stats(TimeSeries([0, 0.1, 0.3], [0, 0, 0]))
    assert (s.A, s.B, s.Delta) == (pytest.approx(0.1), pytest.approx(0.2), 0.0)
    s = series_stats(TimeSeries([0, 1, 2], [0, 1, 3]))
    assert (s.A, s.B, s.Delta) == (1.0, 1.0, 2.0)
    assert (s.t_start, s.t_end) == (0.0, 2.0)


def test_stats_use_euclidean_norm():
    s = series_stats(TimeSeries([0, 1], [[0, 0], [3, 4]]))
    assert s.Delta == 5.0


@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=20), st.floats(0, 1))
def test_perturb_shifts_by_epsilon(gaps, eps):
    t = np.concatenate([[0.0], np.cumsum(gaps)])
    ts = TimeSeries(t, np.sin(t))
    pair = perturb_series(ts, eps)
    np.testing.assert_array_equal(pair.lower.times, ts.times)
    np.testing.assert_allclose(pair.upper.values - pair.lower.values, 2 * eps, atol=1e-15)
    s = series_stats(ts)
    assert 0 < s.A <= s.B and s.Delta >= 0


def test_perturb_zero_returns_equal_copies():
    ts = riccati_series(1.0, 2.0, 0.1)
    pair = perturb_series(ts, 0.0)
    assert pair.lower == ts and pair.upper == ts


def test_negative_epsilon_rejected():
    with pytest.raises(DataError):
        perturb_series(riccati_series(1.0, 2.0, 0.1), -0.1)


def test_time_series_round_trip(tmp_path):
    ts = TimeSeries(np.linspace(0, 1, 7) ** 2, np.random.default_rng(1).normal(size=(7, 3)))
    path = tmp_path / "ts.csv"
    write_time_series(ts, path)
    assert load_time_series(path) == ts


def test_grid_round_trip(tmp_path):
    g = GridField.from_function(lambda X, T: X * np.exp(-T) / 3, np.linspace(0, 1, 4), np.linspace(0, 2, 5))
    path = tmp_path / "g.csv"
    write_grid(g, path)
    back = load_grid(path)
    np.testing.assert_array_equal(back.u, g.u)
    np.testing.assert_array_equal(back.xs, g.xs)


def test_grid_needs_rectangle():
    text = "x,t,u\n" + "".join(f"{x},{t},1\n" for x in range(3) for t in range(3) if (x, t) != (1, 1))
    with pytest.raises(DataError, match="non-rectangular"):
        load_grid(text)


def test_grid_needs_three_points_per_axis():
    with pytest.raises(DataError):
        GridField([0, 1], [0, 1, 2], np.zeros((2, 3)))
    with pytest.raises(DataError):
        GridField([0, 1, 2], [0, 1, 2], np.zeros((3, 2)))
