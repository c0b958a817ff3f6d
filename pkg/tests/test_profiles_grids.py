import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from homoflow.errors import ConfigError
from homoflow.grids import LatticeDensity, tabulate
from homoflow.profiles import InitialProfile


def test_lognormal_unit_mass():
    p = InitialProfile.lognormal_unit_mass(0.3, 0.7)
    assert p.moment(1.0) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("profile", [
    InitialProfile("gaussian", 0.2, 0.6, 1.3),
    InitialProfile("bump", -0.5, 1.5, 2.0),
    InitialProfile("table", grid=(-2.0, -1.0, 0.5, 2.0), values=(0.0, 1.0, 0.4, 0.0)),
])
@pytest.mark.parametrize("beta", [0.0, 0.5, 2.0])
def test_moment_against_quadrature(profile, beta):
    lo, hi = profile.support
    ref = integrate.quad(lambda x: float(profile(x)) * math.exp(beta * x), lo, hi,
                         epsrel=1e-12, limit=400, points=[-1.0, 0.5])[0]
    assert profile.moment(beta) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("kwargs", [dict(kind="nope"), dict(kind="gaussian", width=0.0),
                                    dict(kind="table", grid=(0.0, 0.0), values=(1.0, 1.0)),
                                    dict(kind="table", grid=(0.0, 1.0), values=(1.0, -1.0))])
def test_invalid_profiles(kwargs):
    with pytest.raises(ConfigError):
        InitialProfile(**kwargs)


@pytest.mark.parametrize("profile", [InitialProfile.lognormal_unit_mass(),
                                     InitialProfile("bump", 0.0, 1.0, 1.0)])
def test_log_density_sampler(profile):
    # samples follow G0(X) e^X / C_1: compare the sample mean of e^X with C_2 / C_1
    rng = np.random.default_rng(3)
    x = profile.sample_log_density(rng, 400_000)
    est = np.exp(x)
    expected = profile.moment(2.0) / profile.moment(1.0)
    assert est.mean() == pytest.approx(expected, abs=4 * est.std() / math.sqrt(est.size))


def test_lattice_gaussian_moments():
    tab = tabulate(lambda a, b, c: np.exp(-(a * a + b * b + c * c)) / math.pi ** 1.5, None, 7.0, 61)
    assert tab.mass() == pytest.approx(1.0, abs=1e-12)
    assert tab.integrate(tab.speed_squared()) == pytest.approx(1.5, abs=1e-12)


@given(st.floats(-1.5, 1.5), st.floats(0.5, 2.0))
def test_sheared_lattice_preserves_mass(shear, stretch):
    g = lambda a, b, c: np.exp(-0.5 * (a * a + b * b + c * c)) / (2 * math.pi) ** 1.5
    m = np.array([[stretch, shear, 0], [0, 1, 0], [0, 0, 1]])
    inv = np.linalg.inv(m)
    tab = tabulate(lambda a, b, c: g(*np.einsum("ij,j...->i...", m, np.stack([a, b, c]))) * abs(np.linalg.det(m)),
                   inv, 9.0, 49)
    assert tab.mass() == pytest.approx(1.0, abs=1e-10)


def test_lattice_validation():
    with pytest.raises(ConfigError):
        LatticeDensity(np.zeros((2, 2, 2)), np.zeros((3, 2, 2)), 1.0)
    with pytest.raises(ConfigError):
        LatticeDensity(np.zeros((2, 2, 2)), np.zeros((3, 2, 2, 2)), 0.0)
