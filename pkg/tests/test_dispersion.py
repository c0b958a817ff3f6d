import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import special

from homoflow.dispersion import (FrontCoefficients, asymptotic_root, front_coefficients,
                                 front_profile, front_profile_check, front_speed_closed_form,
                                 lambda_beta0, lambda_closed_form, lambda_transform,
                                 predicted_moment_growth, solve_root)
from homoflow.errors import ConfigError
from homoflow.toy_model_det import ToyField


@pytest.mark.parametrize("z", [1e-4, 0.03, 1.0, 7.5, 2.0 + 3.0j])
def test_lambda_beta_one(z):
    assert lambda_transform(z, 0.0, 1.0) == pytest.approx(1.0 / z, rel=1e-12)


@pytest.mark.parametrize("z", [1e-3, 0.2, 1.0, 20.0])
def test_lambda_beta_zero_exponential_integral(z):
    # independent evaluation: E1 via its series for z < 1, continued fraction above
    if z < 1:
        e1 = -np.euler_gamma - math.log(z) - sum((-z) ** n / (n * math.factorial(n))
                                                  for n in range(1, 40))
    else:
        frac = 0.0
        for n in range(200, 0, -1):
            frac = n / (1 + n / (z + frac))
        e1 = math.exp(-z) / (z + frac)
    ref = math.exp(z) * e1
    assert lambda_transform(z, 0.0, 0.0).real == pytest.approx(ref, rel=1e-11)
    assert lambda_beta0(z) == pytest.approx(ref, rel=1e-12)


def test_lambda_large_z():
    for beta in (0.5, 2.0):
        assert 1e4 * lambda_transform(1e4, 0.0, beta).real == pytest.approx(1.0, rel=1e-3)


@pytest.mark.parametrize("z,k,beta", [(0.01, 0.0, 2.0), (0.5, 0.3, 0.5), (0.02 + 0.01j, 0.1, 2.0),
                                      (3e-6, 0.0, 0.5), (1.5, -0.7, 3.0)])
def test_lambda_against_incomplete_gamma(z, k, beta):
    pytest.importorskip("mpmath")
    assert lambda_transform(z, k, beta) == pytest.approx(lambda_closed_form(z, k, beta), rel=1e-10)


def test_lambda_rejects_left_half_plane():
    with pytest.raises(ConfigError):
        lambda_transform(-0.1, 0.0, 1.0)


@given(st.floats(0.0, 3.0))
def test_lambda_positive_decreasing(beta):
    z = np.geomspace(1e-3, 10, 12)
    vals = np.array([lambda_transform(x, 0.0, beta).real for x in z])
    assert np.all(vals > 0) and np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("eps", [1e-5, 1e-3, 0.2])
def test_root_beta_one_is_epsilon(eps):
    assert solve_root(eps, 0.0, 1.0).z0 == pytest.approx(eps, rel=1e-12)


def test_root_beta_two_ratio_sequence():
    ratios = [solve_root(e, 0.0, 2.0).z0.real / math.sqrt(e) for e in (1e-3, 1e-4, 1e-5)]
    # z0/sqrt(eps) = sqrt(eps)/2 + sqrt(1 + eps/4) approaches one from above
    assert np.all(np.diff(np.abs(np.array(ratios) - 1)) < 0)
    assert abs(ratios[-1] - 1) < 0.01


@pytest.mark.parametrize("k", [0.05, 0.1, 0.5])
def test_nonzero_k_decays_slower(k):
    z0 = solve_root(1e-3, 0.0, 2.0).z0.real
    r = solve_root(1e-3, k, 2.0)
    assert r.z0.real < z0
    assert r.residual < 1e-10


@given(st.floats(1e-4, 1e-1), st.floats(0.25, 3.0), st.floats(-0.5, 0.5))
def test_root_residual_and_conjugate_symmetry(eps, beta, k):
    # the root turns by roughly k |log z0| / beta; past a quarter turn it
    # leaves the right half-plane and there is nothing to find
    s = complex(beta, -k)
    assume(abs(((math.log(eps) + special.loggamma(s)) / s).imag) < 1.0)
    a = solve_root(eps, k, beta)
    b = solve_root(eps, -k, beta)
    assert abs(1 - eps * lambda_transform(a.z0, k, beta)) < 1e-10
    assert b.z0 == pytest.approx(a.z0.conjugate(), rel=1e-9, abs=1e-14)


def test_root_monotone_in_epsilon_and_beta():
    eps = np.geomspace(1e-4, 1e-1, 5)
    betas = np.linspace(0.25, 3.0, 5)
    grid = np.array([[solve_root(e, 0.0, b).z0.real for b in betas] for e in eps])
    assert np.all(np.diff(grid, axis=0) > 0)
    assert np.all(np.diff(grid, axis=1) > 0)


def test_asymptotic_root_small_epsilon():
    for beta in (0.5, 2.0):
        z = solve_root(1e-6, 0.0, beta).z0.real
        assert z / asymptotic_root(1e-6, 0.0, beta).real == pytest.approx(1.0, rel=0.02)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("eps", [1e-2, 1e-3])
def test_front_diffusion_positive(beta, eps):
    c = front_coefficients(eps, beta)
    assert c.A2 > 0
    assert c.A1 < 0


def test_front_speed_matches_implicit_derivative():
    for beta in (0.5, 2.0):
        c = front_coefficients(1e-2, beta)
        assert c.A1 == pytest.approx(front_speed_closed_form(1e-2, beta), rel=1e-6)


def test_front_normalisation():
    c = front_coefficients(1e-3, 1.0)
    assert c.B == pytest.approx(1 / c.z0 ** 2, rel=1e-10)
    ratios = []
    for eps in (1e-2, 1e-3, 1e-4):
        c = front_coefficients(eps, 2.0)
        ratios.append(c.B * c.z0 ** 3 / special.gamma(3.0))
    assert np.all(np.diff(np.abs(np.array(ratios) - 1)) < 0)
    assert abs(ratios[-1] - 1) < 0.05


def test_predicted_growth():
    p1 = predicted_moment_growth(1e-4, 1.0, 2.0)
    assert p1.rate == pytest.approx(1e-4, rel=1e-12)
    assert p1.amplitude_asymptotic == pytest.approx(2e-4, rel=1e-12)
    p2 = predicted_moment_growth(1e-4, 1.0, 4.0)
    assert p2.amplitude == pytest.approx(2 * p1.amplitude, rel=1e-12)


def test_front_profile_synthetic_round_trip():
    coeffs = FrontCoefficients(0.05, 2.0, 0.3, -0.26, 0.05, 1.0)
    t = np.linspace(0, 200, 201)
    X = np.linspace(-40, 120, 8001)
    vals = np.array([np.exp(-2.0 * X) * front_profile((X + coeffs.A1 * s) / math.sqrt(coeffs.A2 * max(s, 1)))
                     for s in t])
    field = ToyField(t, X, vals, np.full(t.size, 0.05), 0.05 * t)
    chk = front_profile_check(field, coeffs)
    assert chk.sup_distance < 1e-6
    assert chk.peak_speed == pytest.approx(-coeffs.A1, rel=1e-3)
