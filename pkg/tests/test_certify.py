import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelfit.benchmarks import RICCATI_MODEL, linear_solution, riccati_series, riccati_solution
from modelfit.certify import (
    ErrorCertificate,
    certify_fit,
    compare_models,
    error_certificate,
    estimate_lipschitz,
    noise_analysis,
    sampling_box,
    write_bound_csv,
)
from modelfit.data import SeriesStats, TimeSeries, series_stats
from modelfit.descent import steepest_descent
from modelfit.errors import CertificateError, DataError, LipschitzError
from modelfit.expr import parse_model
from modelfit.integrate import polygon_interpolant, rk4_solve
from modelfit.objective import ode_objective

RICCATI = parse_model(RICCATI_MODEL, 2, 1)
SUCCESS = riccati_series(1.0, 2.0, 0.1)


def stats(B=0.1, Delta=2.0, t0=0.0, t1=1.0):
    return SeriesStats(A=B, B=B, Delta=Delta, t_start=t0, t_end=t1)


# -- Lipschitz ----------------------------------------------------------------


def test_linear_model_lipschitz():
    ts = TimeSeries(np.linspace(0, 1, 11), np.linspace(1, 3, 11))
    L = estimate_lipschitz(parse_model("a1*x1", 1, 1), [2.0], ts)
    assert L.value == pytest.approx(2.2)
    assert "halton" in L.method


def test_constant_model_lipschitz():
    ts = TimeSeries([0, 1, 2], [1, 2, 3])
    assert estimate_lipschitz(parse_model("a1", 1, 1), [5.0], ts).value == 0.0


def test_riccati_lipschitz_matches_dense_scan():
    a = [1.0, 2.0]
    L = estimate_lipschitz(RICCATI, a, SUCCESS)
    box = sampling_box(SUCCESS)
    x = np.linspace(box[1, 0], box[1, 1], 10**6)
    assert L.value == pytest.approx(1.1 * np.max(np.abs(2 * x + 2)), rel=1e-12)


def test_time_dependence_enters_the_jacobian():
    ts = TimeSeries([0, 1, 2], [0, 0, 0])
    L = estimate_lipschitz(parse_model("a1*t", 1, 1), [3.0], ts)
    assert L.value == pytest.approx(3.3)


def test_sampling_box_inflates_each_axis():
    box = sampling_box(TimeSeries([0, 1, 2], [[1, 5], [3, 5], [2, 5]]))
    np.testing.assert_allclose(box[0], [-0.1, 2.1])
    np.testing.assert_allclose(box[1], [0.9, 3.1])
    np.testing.assert_allclose(box[2], [4.75, 5.25])


def test_singular_data_refused():
    ts = riccati_series(0.0, 1.0, 1e-3)
    with pytest.raises(LipschitzError) as info:
        estimate_lipschitz(RICCATI, [1.0, 2.0], ts)
    assert info.value.point is not None
    with pytest.raises(LipschitzError):
        certify_fit(RICCATI, [1.0, 2.0], ts)


def test_non_finite_jacobian_refused():
    ts = TimeSeries([0, 1, 2], [-0.5, 0.0, 0.5])
    with pytest.raises(LipschitzError, match="not finite"):
        estimate_lipschitz(parse_model("sqrt(abs(x1))", 0, 1), [], ts)


# -- certificate -----------------------------------------------------------------


def test_zero_objective_bound_vanishes_at_start():
    cert = error_certificate(0.0, stats(), 3.0)
    assert cert(0.0) == 0.0


def test_zero_objective_zero_lipschitz():
    cert = error_certificate(0.0, stats(), 0.0)
    assert np.all(cert(np.linspace(0, 1, 11)) == 0.0)


def test_formula_value():
    cert = error_certificate(1e-12, stats(B=0.1, Delta=2.0), 6.0)
    expected = 0.1 * (1e-6 * 0.1 + (1 + (1e-6 + 2) ** 2) ** 0.5 * (np.exp(3) - 1))
    assert cert(0.5) == pytest.approx(expected, rel=1e-14)
    assert cert.F_m == pytest.approx(2 + 1e-6)
    assert cert.M == pytest.approx(6 * 0.1 * np.sqrt(1 + cert.F_m**2))


def test_time_origin_is_first_sample():
    cert = error_certificate(1e-4, stats(t0=5.0, t1=6.0), 2.0)
    assert cert(5.0) == pytest.approx(0.1 * 1e-2 * 0.1)


@given(
    st.floats(0, 1), st.floats(1e-3, 1), st.floats(0, 10), st.floats(1e-3, 5),
    st.sampled_from(["m", "B", "Delta", "L"]),
)
def test_bound_monotone_in_each_input(m, B, Delta, L, which):
    base = dict(m=m, B=B, Delta=Delta, L=L)
    bigger = dict(base)
    bigger[which] *= 1.5
    t = np.linspace(0, 1, 50)

    def curve(p):
        return error_certificate(p["m"], stats(B=p["B"], Delta=p["Delta"]), p["L"])(t)

    lo, hi = curve(base), curve(bigger)
    assert np.all(hi >= lo)
    assert np.all(np.diff(lo) > 0)


def test_negative_inputs_rejected():
    with pytest.raises(DataError):
        error_certificate(-1.0, stats(), 1.0)
    with pytest.raises(DataError):
        error_certificate(1.0, stats(), -1.0)


def test_overflowing_bound_refused():
    with pytest.raises(CertificateError):
        error_certificate(1.0, stats(t1=1000.0), 5.0)


def test_certificate_covers_exact_model():
    ts = TimeSeries(np.linspace(0, 1, 21), linear_solution(np.linspace(0, 1, 21), -0.7, 1.3))
    model = parse_model("a1*x1", 1, 1)
    fit = steepest_descent(ode_objective(model, ts), [0.0])
    cert = certify_fit(model, fit.params, ts, m=fit.objective)
    y = rk4_solve(model, fit.params, 0.0, ts.values[0], 1.0, 1e-4)
    t = np.linspace(0, 1, 1000)
    gap = np.abs(polygon_interpolant(ts)(t) - y(t))[:, 0]
    assert np.all(gap <= cert(t) + 1e-8)
    assert cert.f_max_direct == pytest.approx(np.max(np.abs(fit.params[0] * ts.values)))


def test_certificate_on_riccati_fit():
    fit = steepest_descent(ode_objective(RICCATI, SUCCESS), [0.0, 0.0])
    cert = certify_fit(RICCATI, fit.params, SUCCESS, m=fit.objective)
    y = rk4_solve(RICCATI, fit.params, 1.0, SUCCESS.values[0], 2.0, 1e-4)
    t = np.linspace(1, 2, 1000)
    assert np.all(np.abs(polygon_interpolant(SUCCESS)(t) - y(t))[:, 0] <= cert(t) + 1e-8)
    d = cert.to_dict()
    assert d["bound_at_end"] == pytest.approx(float(cert(2.0)))
    assert d["L_method"].startswith("sampled-jacobian")


# -- comparison ------------------------------------------------------------------


def test_comparison_with_itself_doubles_terms():
    cert = error_certificate(1e-6, stats(), 2.0)
    cmp = compare_models(cert, cert)
    t = np.linspace(0, 1, 7)
    c0, c1, c2 = cmp.components(t)
    np.testing.assert_allclose(c1, c2)
    np.testing.assert_allclose(cmp(t), 2 * cert(t), rtol=1e-14)


def test_comparison_at_start():
    f = error_certificate(1e-4, stats(), 2.0)
    h = error_certificate(4e-4, stats(), 3.0)
    assert compare_models(f, h)(0.0) == pytest.approx((1e-2 + 2e-2) * 0.1**2)


def test_comparison_is_sum_of_single_bounds():
    f = error_certificate(1e-4, stats(), 2.0)
    h = error_certificate(4e-4, stats(), 3.0)
    t = np.linspace(0, 1, 9)
    np.testing.assert_allclose(compare_models(f, h)(t), f(t) + h(t), rtol=1e-14)


def test_comparison_covers_late_riccati_pair():
    ts = riccati_series(19.0, 20.0, 0.1)
    f = parse_model("a1*x1^2 + a2*x1", 2, 1)
    cf = certify_fit(f, [1.0, 2.0], ts)
    ch = certify_fit(f, [2.8, 5.6], ts)
    cmp = compare_models(cf, ch)
    x0 = [float(riccati_solution(19.0))]
    y = rk4_solve(f, [1.0, 2.0], 19.0, x0, 20.0, 1e-3)
    z = rk4_solve(f, [2.8, 5.6], 19.0, x0, 20.0, 1e-3)
    diff = np.abs(y.states - z.states)[:, 0]
    assert diff.max() < 1e-12
    assert np.all(diff <= cmp(y.times))


def test_comparison_requirements():
    f = error_certificate(1e-4, stats(), 2.0)
    with pytest.raises(DataError):
        compare_models(f, error_certificate(1e-4, stats(B=0.2), 2.0))
    with pytest.raises(DataError):
        compare_models(f, f, delta=0.1)
    with pytest.raises(CertificateError):
        compare_models(f, f, delta=1e-3, lipschitz_cap=5.0)
    with pytest.raises(CertificateError):
        compare_models(f, f, delta=0.1, lipschitz_cap=1.0)
    cmp = compare_models(f, f, delta=0.1, lipschitz_cap=5.0)
    t = np.linspace(0, 1, 11)
    assert np.all(cmp.uniform(t) >= cmp(t))


# -- noise ---------------------------------------------------------------------


def test_noise_zero_epsilon_is_four_single_bounds():
    center = steepest_descent(ode_objective(RICCATI, SUCCESS), [0.0, 0.0])
    env = noise_analysis(RICCATI, SUCCESS, 0.0, center=center)
    assert env.fits[0] is env.fits[1] is env.fits[2]
    t = np.linspace(1, 2, 11)
    np.testing.assert_allclose(env(t), 4 * env.certificates[1](t), rtol=1e-14)
    assert env.param_shifts == (0.0, 0.0)


def test_noise_exact_constant_data_gives_zero_envelope():
    ts = TimeSeries([0, 1, 2], [1.0, 1.0, 1.0])
    env = noise_analysis(parse_model("a1", 1, 1), ts, 0.0, start=[0.0])
    assert np.all(env(np.linspace(0, 2, 5)) == 0.0)


@settings(max_examples=5, deadline=None)
@given(st.sampled_from([0.002, 0.01, 0.02]))
def test_noise_envelope_covers_spread(eps):
    env = noise_analysis(RICCATI, SUCCESS, eps, start=[0.0, 0.0])
    lo, _, hi = env.fits
    y_lo = rk4_solve(RICCATI, lo.params, 1.0, SUCCESS.values[0] - eps, 2.0, 1e-4)
    y_hi = rk4_solve(RICCATI, hi.params, 1.0, SUCCESS.values[0] + eps, 2.0, 1e-4)
    t = np.linspace(1, 2, 500)
    assert np.all(np.abs(y_hi(t) - y_lo(t))[:, 0] <= env(t))
    assert env.to_dict()["epsilon"] == eps


def test_noise_needs_a_start():
    with pytest.raises(DataError):
        noise_analysis(RICCATI, SUCCESS, 0.01)


def test_bound_csv(tmp_path):
    cert = error_certificate(1e-4, stats(), 2.0)
    t = np.linspace(0, 1, 5)
    write_bound_csv(tmp_path / "b.csv", t, cert(t))
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert rows[0] == "t,bound" and len(rows) == 6
    assert isinstance(cert, ErrorCertificate)
