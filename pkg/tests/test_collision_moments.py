import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from homoflow.collision_moments import (COMPONENTS, CollisionKernel, MomentSeries, collision_b,
                                        fit_growth, integrate_moments, integrate_renormalized,
                                        leading_growth_coefficient, linear_system,
                                        moment_ratio_diagnostics, moment_rhs)
from homoflow.errors import ConfigError, ToleranceError, WindowError


def test_collision_b_oracles():
    assert collision_b(lambda x: 0.0) == 0.0
    assert collision_b(CollisionKernel(lambda x: 1.0)) == pytest.approx(4 * math.pi / 5, rel=1e-12)
    assert collision_b(lambda x: x * x) == pytest.approx(12 * math.pi / 35, rel=1e-12)


def test_collision_b_non_integrable():
    with pytest.raises(ToleranceError):
        collision_b(lambda x: 1.0 / (1.0 - x * x) ** 2)


def test_rhs_isotropic_equilibrium():
    assert np.array_equal(moment_rhs(2.5 * np.eye(3), 3.0, 0, 0, 0, 1.0), np.zeros((3, 3)))


def test_rhs_single_shear_substitution():
    d = moment_rhs(np.eye(3), 0.0, 0.0, 0.0, 1.0, 0.0)
    expected = np.zeros((3, 3))
    expected[0, 1] = expected[1, 0] = -1.0
    assert np.array_equal(d, expected)


def test_rhs_relaxation_preserves_trace():
    m = np.diag([2.0, 1.0, 1.0])
    d = moment_rhs(m, 0.0, 0, 0, 0, 0.7)
    assert np.allclose(d, -2 * 0.7 * (m - 4.0 / 3.0 * np.eye(3)))
    assert abs(np.trace(d)) < 1e-15


def test_linear_system_matches_rhs():
    a0, a1 = linear_system(0.4, 0.3, 1.2, 0.9)
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.normal(size=(3, 3))
        m = x + x.T
        t = rng.uniform(0, 10)
        y = np.array([m[0, 0], m[0, 1], m[0, 2], m[1, 1], m[1, 2], m[2, 2]])
        d = moment_rhs(m, t, 0.4, 0.3, 1.2, 0.9)
        dy = np.array([d[0, 0], d[0, 1], d[0, 2], d[1, 1], d[1, 2], d[2, 2]])
        assert np.allclose((a0 + t * a1) @ y, dy, atol=1e-13)


def test_renormalized_integrator_against_scipy():
    a = np.array([[0.1, 1.0], [-1.0, 0.2]])
    sol = integrate_renormalized(lambda t, y: a @ y, [1.0, 0.5], 10.0, rtol=1e-10,
                                 t_eval=np.linspace(0, 10, 6))
    ref = solve_ivp(lambda t, y: a @ y, (0, 10), [1.0, 0.5], rtol=1e-12, atol=1e-14,
                    t_eval=np.linspace(0, 10, 6))
    got = np.exp(sol.log_scale)[:, None] * sol.unit
    assert np.allclose(got, ref.y.T, rtol=1e-8, atol=1e-10)
    assert np.allclose(np.abs(sol.unit).max(axis=1), 1.0)


def test_relaxation_closed_form():
    t = np.linspace(0, 6, 13)
    s = integrate_moments(np.diag([2.0, 1.0, 1.0]), 0, 0, 0, 1.0, 6.0, t_eval=t)
    m = np.exp(s.log_scale)[:, None] * s.unit
    assert np.allclose(m[:, 0], 4 / 3 + (2 / 3) * np.exp(-2 * t), rtol=1e-8)
    assert np.allclose(m[:, 3], 4 / 3 - (1 / 3) * np.exp(-2 * t), rtol=1e-8)
    assert s.log_scale[-1] == pytest.approx(math.log(4 / 3 + (2 / 3) * math.exp(-12)), rel=1e-8)
    trace = m[:, 0] + m[:, 3] + m[:, 5]
    assert np.allclose(trace, 4.0, rtol=1e-9)


def test_triangular_shear_without_collisions():
    t = np.linspace(0, 5, 11)
    s = integrate_moments(np.eye(3), 0.0, 0.0, 1.0, 1e-300, 5.0, t_eval=t)
    m = np.exp(s.log_scale)[:, None] * s.unit
    assert np.allclose(m[:, 3], 1.0) and np.allclose(m[:, 5], 1.0)
    assert np.allclose(m[:, 1], -t, atol=1e-9)
    assert np.allclose(m[:, 0], 1 + t * t, rtol=1e-9)


def test_invalid_initial_data():
    with pytest.raises(ConfigError):
        integrate_moments(np.diag([1.0, -1.0, 1.0]), 1, 0, 1, 1, 1)
    with pytest.raises(ConfigError):
        integrate_moments(np.array([[1, 0.5, 0], [0, 1, 0], [0, 0, 1.0]]), 1, 0, 1, 1, 1)


@given(st.floats(0.1, 100.0))
def test_renormalization_is_exact(scale):
    t = np.linspace(0, 20, 5)
    m0 = np.array([[1.0, 0.2, 0.0], [0.2, 1.5, 0.1], [0.0, 0.1, 0.8]])
    a = integrate_moments(m0, 1, 0.3, 1, 1, 20.0, t_eval=t)
    b = integrate_moments(scale * m0, 1, 0.3, 1, 1, 20.0, t_eval=t)
    assert np.allclose(a.unit, b.unit, rtol=0, atol=1e-13)
    assert np.allclose(b.log_scale - a.log_scale, math.log(scale), atol=1e-12)


def test_unit_state_symmetric_matrix_view():
    s = integrate_moments(np.eye(3), 1, 0, 1, 1, 10.0, t_eval=np.linspace(0, 10, 3))
    mats = s.unit_matrices()
    assert np.array_equal(mats, np.transpose(mats, (0, 2, 1)))


def _synthetic_series(S):
    t = np.linspace(1, 200, 400)
    unit = np.zeros((t.size, 6))
    unit[:, 0] = 1.0
    return MomentSeries(t, unit, S(t), 1.0, 0.0, 1.0, 1.0)


def test_fit_growth_exact_model():
    fit = fit_growth(_synthetic_series(lambda t: 2 * t ** (5 / 3) - 3 * t + 1), (50, 150))
    assert fit.c1 == pytest.approx(2, abs=1e-8)
    assert fit.c2 == pytest.approx(-3, abs=1e-8)


def test_fit_growth_short_window():
    s = _synthetic_series(lambda t: t)
    with pytest.raises(WindowError):
        fit_growth(s, (100.0, 100.2))
    with pytest.raises(WindowError):
        fit_growth(s, (100.0, 101.0), max_condition=10.0)


@pytest.fixture(scope="module")
def shear_run():
    t = np.arange(0, 1501) * 0.1
    return integrate_moments(np.eye(3), 1.0, 0.0, 1.0, 1.0, 150.0, include_k2=False, t_eval=t)


def test_energy_residual_small(shear_run):
    r = shear_run.energy_residual()
    assert np.abs(r[5:-5]).max() < 1e-3


def test_growth_fit_matches_prediction(shear_run):
    fit = fit_growth(shear_run, (50, 150))
    assert fit.c1 == pytest.approx(leading_growth_coefficient(1, 1, 1), rel=0.05)
    assert fit.c2 == pytest.approx(-4 / 3, rel=0.2)


def test_ratio_diagnostics(shear_run):
    diag = moment_ratio_diagnostics(shear_run)
    i = int(np.searchsorted(shear_run.times, 100.0))
    for name in ("M13/M11", "M33/M13", "M11/M33"):
        measured, predicted = diag[name]
        assert measured[i] == pytest.approx(predicted[i], rel=0.15), name
    prod = np.prod([diag[n][1][i] for n in ("M13/M11", "M33/M13", "M11/M33")])
    assert prod == pytest.approx(1.0, rel=1e-12)


def test_anisotropy_grows(shear_run):
    r = shear_run.ratio("M11", "M22")
    late = r[shear_run.times > 50]
    assert np.all(np.diff(late) > 0)
    # M11/M22 grows like t^{2/3}
    assert late[-1] / late[0] == pytest.approx(3 ** (2 / 3), rel=0.1)


def test_ratio_nan_where_denominator_vanishes(shear_run):
    r = shear_run.ratio("M11", "M13")
    assert math.isnan(r[0]) and np.isfinite(r[1:]).all()


def test_csv_rows_columns(shear_run):
    row = next(shear_run.csv_rows())
    assert list(row) == ["t", "log_scale"] + ["U" + c[1:] for c in COMPONENTS]
