import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from homoflow.errors import ConfigError
from homoflow.frozen_flows import (AnisotropicGaussian, BumpTestFunction, CompactBump,
                                   FreeFlowRegime, FreeFlowSolution, collision_rate,
                                   collision_rate_decay, free_flow_mass, inverse_time_change,
                                   predicted_decay_slope, shear_energy_ratio,
                                   shear_free_flow, shear_free_flow_scaled, time_change,
                                   weak_limit_check)

G0 = AnisotropicGaussian((1.0, 0.7, 1.3))


@given(st.floats(0, 1), st.floats(-1.9, 3))
def test_time_change_roundtrip(u, gamma):
    # keep (2 + gamma) tau below 10 so the inverse is well conditioned
    tau = 10.0 * u / (2 + gamma)
    s = time_change(tau, gamma)
    assert 0 <= s < 1 / (2 + gamma)
    assert inverse_time_change(s, gamma) == pytest.approx(tau, rel=1e-8, abs=1e-10)


@given(st.floats(-1.9, 3), st.floats(0, 1), st.floats(0.01, 1))
def test_time_change_increasing(gamma, u, du):
    k = 2 + gamma
    assert time_change(10 * (u + du) / k, gamma) > time_change(10 * u / k, gamma)


def test_time_change_domain():
    with pytest.raises(ConfigError):
        time_change(1.0, -2.0)
    with pytest.raises(ConfigError):
        time_change(-1.0, 0.0)
    with pytest.raises(ConfigError):
        inverse_time_change(0.5, 0.0)


@pytest.mark.parametrize("regime,times", [
    ("HomogeneousDilatation", [0.0, 1.0, 3.0, 8.0]),
    ("CylindricalDilatation", [0.0, 1.0, 3.0, 8.0]),
    ("SimpleShear", [1.0, 2.0, 10.0, 1000.0]),
])
def test_rescaled_mass_conserved(regime, times):
    for t in times:
        assert free_flow_mass(regime, G0, t, K=1.0) == pytest.approx(1.0, abs=1e-8)


def test_compact_bump_mass_conserved():
    bump = CompactBump(radius=2.0)
    m0 = free_flow_mass("HomogeneousDilatation", bump, 0.0, half_width=2.0, n=121)
    for tau in (1.0, 4.0):
        m = free_flow_mass("HomogeneousDilatation", bump, tau, half_width=2.0, n=121)
        assert m == pytest.approx(m0, rel=1e-8)


def test_physical_density_decays_like_jacobian():
    for regime, expected in [(FreeFlowRegime.HOMOGENEOUS_DILATATION, lambda t: (1 + t) ** -3),
                             (FreeFlowRegime.CYLINDRICAL_DILATATION, lambda t: t ** -2),
                             (FreeFlowRegime.SIMPLE_SHEAR, lambda t: 1.0)]:
        sol = FreeFlowSolution(regime, G0, K=1.0)
        for t in (1.0, 5.0, 20.0):
            assert sol.tabulate(t).mass() == pytest.approx(expected(t), rel=1e-8)


def test_shear_scaled_matches_physical():
    K, tau = 1.3, 1.7
    t = math.exp(tau)
    xi = np.array([0.2, -0.4, 0.9])
    direct = t * shear_free_flow(G0, K, t, np.array([xi[0] * t, xi[1], xi[2]]))
    assert shear_free_flow_scaled(G0, K, tau, xi) == pytest.approx(direct, rel=1e-12)


def test_shear_energy_ratio():
    # int |w|^2 g = m11 + m33 + m22 (1 + K^2 (t-1)^2): ratio -> m22 / mass
    K = 1.0
    m = [G0.second_moment(i) for i in range(3)]
    for t in (10.0, 50.0, 1000.0):
        exact = (m[0] + m[2] + m[1] * (1 + K * K * (t - 1) ** 2)) / (K * K * t * t)
        assert shear_energy_ratio(G0, K, t) == pytest.approx(exact, rel=1e-8)
    assert shear_energy_ratio(G0, K, 1e4) == pytest.approx(m[1], rel=1e-3)


def test_predicted_slopes():
    assert predicted_decay_slope(-1.5) == (-0.5, False)
    assert predicted_decay_slope(-1.0) == (-1.0, True)
    assert predicted_decay_slope(0.5) == (-1.0, False)
    with pytest.raises(ConfigError):
        predicted_decay_slope(-2.0)


def test_collision_rate_at_zero_matches_moments():
    from homoflow.grids import tabulate
    assert collision_rate(G0, 0.0, 0.0) == pytest.approx(1.0, rel=1e-8)
    m2 = sum(G0.second_moment(i) for i in range(3))
    assert collision_rate(G0, 2.0, 0.0) == pytest.approx(m2, rel=1e-8)
    # |w| has a kink at the origin, so the lattice sum is only algebraically accurate
    tab = tabulate(G0, None, 9.0, 121)
    direct = tab.integrate(np.sqrt(tab.speed_squared()))
    assert collision_rate(G0, 1.0, 0.0) == pytest.approx(direct, rel=1e-4)


@pytest.mark.parametrize("gamma", [-1.5, -0.5, 0.5, 1.0])
def test_decay_slopes(gamma):
    fit = collision_rate_decay(G0, gamma, np.arange(0.0, 15.0))
    assert fit.slope == pytest.approx(fit.predicted, abs=0.02)
    assert not fit.logarithmic


def test_decay_log_correction():
    taus = np.arange(2.0, 15.0)
    fit = collision_rate_decay(G0, -1.0, taus)
    assert fit.logarithmic
    corrected = np.polyfit(taus, np.log(fit.rates / taus), 1)[0]
    assert corrected == pytest.approx(-1.0, abs=0.03)


def test_bump_test_function():
    phi = BumpTestFunction((0.0, 0.5, 0.0), (1.0, 2.0, 1.5))
    assert phi(0.0, 0.5, 0.0) == pytest.approx(1.0)
    assert phi(1.0, 0.5, 0.0) == 0.0
    assert phi(0.0, 3.0, 0.0) == 0.0
    assert np.all(phi(*np.random.default_rng(1).uniform(-3, 3, (3, 100))) <= 1.0)


PHIS = [BumpTestFunction((0.0, 0.0, 0.0), (2.0, 2.0, 2.0)),
        BumpTestFunction((1.0, 0.0, 0.0), (3.0, 3.0, 3.0)),
        BumpTestFunction((0.0, 1.0, 0.0), (2.0, 2.0, 2.0)),
        BumpTestFunction((-0.5, -0.5, 0.5), (2.5, 2.0, 3.0))]


@pytest.mark.parametrize("phi", PHIS)
def test_weak_limit_gap_shrinks(phi):
    rep = weak_limit_check(G0, 1.0, np.arange(2.0, 15.0), phi)
    assert rep.decreasing
    assert rep.gaps[-1] < 1e-4


def test_weak_limit_of_phi_independent_of_first_argument_is_exact():
    phi = BumpTestFunction((0.0, 0.0, 0.0), (1.0, 2.0, 2.0), ignore_first=True)
    rep = weak_limit_check(G0, 1.0, [0.0, 1.0, 5.0], phi)
    assert np.all(rep.gaps < 1e-12)


def test_slopes_near_one_bracket_the_logarithmic_case():
    taus = np.arange(0.0, 15.0)
    below = collision_rate_decay(G0, -0.9, taus).slope
    log_case = collision_rate_decay(G0, -1.0, taus).slope
    above = collision_rate_decay(G0, -1.1, taus).slope
    assert below < log_case < above


def test_weak_limit_transient_is_resolution_independent():
    # the signed gap of a centred bump crosses zero near tau = 0.7, so |gap| rises before decaying
    phi = BumpTestFunction((0.0, 0.0, 0.0), (2.0, 2.0, 2.0))
    coarse = weak_limit_check(G0, 1.0, [1.0, 2.0], phi)
    fine = weak_limit_check(G0, 1.0, [1.0, 2.0], phi, n=161)
    assert np.allclose(coarse.gaps, fine.gaps, atol=1e-5)
    assert fine.gaps[1] > fine.gaps[0]


def test_weak_limit_zero_shear_concentrates_on_plane():
    from homoflow.grids import tabulate
    phi = BumpTestFunction((0.5, 0.0, 0.0), (1.0, 2.0, 2.0))
    rep = weak_limit_check(G0, 0.0, [12.0], phi)
    grid = tabulate(G0, None, 9.0, 121)
    _, x2, x3 = grid.points
    assert rep.limit == pytest.approx(grid.integrate(phi(0.0, x2, x3)), rel=1e-12)
    assert rep.gaps[0] < 1e-4
