"""Dispersion relation of the toy collision model at constant rate.

With constant collision rate eps the Laplace transform in t and Fourier
transform in X = log(rho) of the weighted field turn the renewal equation
into 1 = eps * Lambda(z, k) with

    Lambda(z, k) = int_0^inf exp(-z t) (1 + t)^{beta - 1 - i k} dt.

The root z0(k) with the largest real part sets the growth rate of the
beta-moment (k = 0) and, through its expansion in k, the drift speed and
spreading of the front in X.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ConfigError, ConvergenceError, ToleranceError

QUAD_EPSREL = 1e-12
ROOT_TOL = 1e-10


def _quad_complex(func, a, b, real_only=False):
    # QUADPACK warns when it cannot reach epsrel; the caller checks the
    # returned error estimate against its own (looser) bound instead
    opts = dict(epsabs=0.0, epsrel=QUAD_EPSREL, limit=400)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        re, re_err = integrate.quad(lambda t: func(t).real, a, b, **opts)
        if real_only:
            return complex(re, 0.0), re_err
        im, im_err = integrate.quad(lambda t: func(t).imag, a, b, **opts)
    return complex(re, im), math.hypot(re_err, im_err)


def lambda_transform(z: complex, k: float, beta: float, power: int = 0,
                     log_power: int = 0) -> complex:
    """int_0^inf t^power log(1+t)^log_power exp(-z t) (1+t)^{beta-1-ik} dt.

    ``power`` and ``log_power`` give the z- and k-derivatives (up to sign
    and factors of i).  Requires Re z > 0.
    """
    z = complex(z)
    if not z.real > 0:
        raise ConfigError(f"Lambda needs Re z > 0, got z={z}")
    expo = complex(beta - 1.0, -k)

    def integrand(t):
        val = np.exp(-z * t + expo * np.log1p(t))
        if power:
            val = val * t ** power
        if log_power:
            val = val * np.log1p(t) ** log_power
        return val

    # head on [0, 1/|z|] in the variable v = log(1+t), which flattens the
    # power law.  The tail starts at 1/|z| and runs along the ray on which
    # z t is real and positive; the integrand is analytic in the sector
    # swept by the rotation and decays in it, so the value is unchanged
    # while the oscillation exp(-i Im(z) t) disappears.
    split = 1.0 / abs(z)
    real = z.imag == 0.0 and k == 0.0
    head, e1 = _quad_complex(lambda v: integrand(np.expm1(v)) * np.exp(v),
                             0.0, math.log1p(split), real)
    ray = abs(z) / z
    tail, e2 = _quad_complex(lambda u: integrand(split + u * ray / abs(z)) * ray / abs(z),
                             0.0, np.inf, real)
    total = head + tail
    if not np.isfinite(total) or math.hypot(e1, e2) > 1e-10 * abs(total):
        raise ToleranceError(f"Lambda quadrature inaccurate at z={z}, k={k}, beta={beta}")
    return total


def lambda_closed_form(z: complex, k: float, beta: float) -> complex:
    """Independent evaluation via the upper incomplete gamma function.

    Lambda = e^z z^{-(beta - ik)} Gamma(beta - ik, z), evaluated with mpmath.
    """
    import mpmath

    mpmath.mp.dps = 30
    s = mpmath.mpc(beta, -k)
    zz = mpmath.mpc(z.real, z.imag) if isinstance(z, complex) else mpmath.mpf(z)
    val = mpmath.exp(zz) * zz ** (-s) * mpmath.gammainc(s, zz)
    return complex(val)


def lambda_beta0(z: float) -> float:
    """Lambda(z, 0) for beta = 0: e^z E1(z)."""
    return float(special.exp1(z) * np.exp(z))


@dataclass(frozen=True)
class DispersionRoot:
    epsilon: float
    beta: float
    k: float
    z0: complex
    residual: float


def _check_inputs(epsilon, beta):
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    if beta < 0:
        raise ConfigError("beta must be non-negative")


def _real_root(epsilon: float, beta: float) -> float:
    """Real root of eps * Lambda(z, 0) = 1 (Newton, safeguarded by a bracket)."""
    target = 1.0 / epsilon

    def f(z):
        return lambda_transform(z, 0.0, beta).real - target

    # Lambda decreases from +inf (z -> 0) to 0 (z -> inf)
    z = (math.gamma(beta) * epsilon) ** (1.0 / beta) if beta > 0 else epsilon
    lo, hi = 0.0, None
    probe = max(z, 1e-300)
    for _ in range(400):
        if f(probe) > 0:
            lo = probe
            probe *= 2.0
        else:
            hi = probe
            break
    if hi is None:
        raise ConvergenceError("could not bracket the dispersion root")
    if lo == 0.0:
        lo = hi
        while f(lo) <= 0:
            lo *= 0.5
            if lo < 1e-300:
                raise ConvergenceError("could not bracket the dispersion root from below")
    z = min(max(z, lo), hi)
    for _ in range(200):
        val = f(z)
        if val > 0:
            lo = z
        else:
            hi = z
        deriv = -lambda_transform(z, 0.0, beta, power=1).real
        step = val / deriv
        z_new = z - step
        if not lo < z_new < hi:
            z_new = 0.5 * (lo + hi)
        if abs(z_new - z) <= 1e-15 * z:
            z = z_new
            break
        z = z_new
    else:
        raise ConvergenceError("real dispersion root did not converge")
    return z


def _newton_complex(z, k, epsilon, beta, max_iter=60):
    for _ in range(max_iter):
        if not z.real > 0:
            return None
        lam = lambda_transform(z, k, beta)
        g = 1.0 - epsilon * lam
        dg = epsilon * lambda_transform(z, k, beta, power=1)
        if dg == 0 or not np.isfinite(dg):
            return None
        step = g / dg
        z_new = z - step
        if z_new.real <= 0:
            z_new = complex(0.5 * z.real, z_new.imag)
        # quadrature noise is ~1e-13 relative, so ask for no more than that
        if abs(z_new - z) <= 1e-13 * abs(z):
            return z_new
        z = z_new
    return None


def solve_root(epsilon: float, k: float = 0.0, beta: float = 1.0,
               max_k_step: float = 0.05) -> DispersionRoot:
    """Principal root z0(k) of 1 = eps * Lambda(z, k).

    The real root at k = 0 comes from a bracketed Newton iteration seeded at
    (Gamma(beta) eps)^{1/beta}; for k != 0 complex Newton is continued in k
    in steps of at most ``max_k_step``.
    """
    _check_inputs(epsilon, beta)
    z = complex(_real_root(epsilon, beta))
    if k != 0.0:
        n_steps = max(1, int(math.ceil(abs(k) / max_k_step)))
        ks = np.linspace(0.0, k, n_steps + 1)[1:]
        prev_k = 0.0
        for kk in ks:
            sub = 1
            while True:
                ok = True
                for j in range(1, sub + 1):
                    kj = prev_k + (kk - prev_k) * j / sub
                    z_try = _newton_complex(z, kj, epsilon, beta)
                    if z_try is None:
                        ok = False
                        break
                    z = z_try
                if ok:
                    break
                sub *= 2
                if sub > 64:
                    raise ConvergenceError(f"continuation in k failed near k={kk:g}")
            prev_k = kk
    resid = abs(1.0 - epsilon * lambda_transform(z, k, beta))
    if resid > ROOT_TOL:
        raise ConvergenceError(f"dispersion residual {resid:.2e} above tolerance")
    return DispersionRoot(epsilon, beta, k, z, resid)


def asymptotic_root(epsilon: float, k: float, beta: float) -> complex:
    """Small-eps approximation (eps Gamma(beta - ik))^{1/(beta - ik)}."""
    # loggamma keeps the branch continuous in k, so this follows the
    # continuation of the real root rather than another branch of the power
    s = complex(beta, -k)
    return complex(np.exp((math.log(epsilon) + special.loggamma(s)) / s))


@dataclass(frozen=True)
class FrontCoefficients:
    """z0(k) ~ z0(0) + i A1 k - A2 k^2 near k = 0."""

    epsilon: float
    beta: float
    z0: float
    A1: float
    A2: float
    B: float

    @property
    def front_speed(self) -> float:
        """dX/dt of the front centre X = -A1 t."""
        return -self.A1


def front_coefficients(epsilon: float, beta: float, dk: float = 2e-3) -> FrontCoefficients:
    """A1 = Im dz0/dk and A2 = -Re d2z0/dk2 / 2 by Richardson-extrapolated
    central differences; B = -dLambda/dz at the real root."""
    z0 = solve_root(epsilon, 0.0, beta).z0
    zp = {h: solve_root(epsilon, h, beta).z0 for h in (dk, 2 * dk)}
    # conjugate symmetry: z0(-k) = conj(z0(k))
    d1 = {h: (zp[h] - zp[h].conjugate()) / (2 * h) for h in zp}
    d2 = {h: (zp[h] - 2 * z0 + zp[h].conjugate()) / h ** 2 for h in zp}
    first = (4 * d1[dk] - d1[2 * dk]) / 3
    second = (4 * d2[dk] - d2[2 * dk]) / 3
    B = lambda_transform(z0, 0.0, beta, power=1).real
    return FrontCoefficients(epsilon, beta, z0.real, first.imag, -0.5 * second.real, B)


def front_speed_closed_form(epsilon: float, beta: float) -> float:
    """A1 from implicit differentiation: A1 = -P/B with
    P = int log(1+t) e^{-z0 t} (1+t)^{beta-1} dt, B = int t e^{-z0 t} (1+t)^{beta-1} dt."""
    z0 = solve_root(epsilon, 0.0, beta).z0
    P = lambda_transform(z0, 0.0, beta, log_power=1).real
    B = lambda_transform(z0, 0.0, beta, power=1).real
    return -P / B


@dataclass(frozen=True)
class GrowthPrediction:
    rate: float
    rate_asymptotic: float
    amplitude: float
    amplitude_asymptotic: float


def predicted_moment_growth(epsilon: float, beta: float, c_beta: float) -> GrowthPrediction:
    """Late-time lambda_beta(t) ~ amplitude * exp(rate * t) for constant eps.

    The amplitude is the residue C_beta / (eps B) at the principal root; the
    small-eps forms are rate (Gamma(beta) eps)^{1/beta} and amplitude
    C_beta rate / beta.
    """
    if beta <= 0:
        raise ConfigError("growth prediction needs beta > 0")
    root = solve_root(epsilon, 0.0, beta)
    z0 = root.z0.real
    B = lambda_transform(z0, 0.0, beta, power=1).real
    rate_asym = (math.gamma(beta) * epsilon) ** (1.0 / beta)
    return GrowthPrediction(z0, rate_asym, c_beta / (epsilon * B), c_beta * rate_asym / beta)


def front_profile(xi) -> np.ndarray:
    """Gaussian front shape exp(-xi^2/4)/sqrt(2)."""
    xi = np.asarray(xi, dtype=float)
    return np.exp(-0.25 * xi * xi) / math.sqrt(2.0)


@dataclass(frozen=True)
class FrontCheck:
    t: float
    sup_distance: float
    peak_speed: float
    predicted_speed: float


def front_profile_check(field, coeffs: FrontCoefficients, t_index: int = -1,
                        speed_window: tuple[int, int] | None = None) -> FrontCheck:
    """Compare the tilted field Psi = Phi e^{beta X} with the Gaussian front.

    Psi at time t is written in xi = (X + A1 t) / sqrt(A2 t) and both Psi
    and the front shape are normalised to unit integral in xi.  Returns the
    sup-distance relative to the peak of the normalised front, together
    with the measured speed of the Psi centroid over ``speed_window``
    (indices into the time grid, default: the last decade of times).
    """
    beta = coeffs.beta
    X = field.X
    times = field.t

    def psi(i):
        return field.values[i] * np.exp(beta * X)

    i = t_index % times.size
    t = times[i]
    if t <= 0:
        raise ConfigError("front check needs t > 0")
    width = math.sqrt(coeffs.A2 * t)
    xi = (X + coeffs.A1 * t) / width
    p = psi(i)
    norm = integrate.trapezoid(p, xi)
    q = front_profile(xi)
    qn = q / integrate.trapezoid(q, xi)
    if not norm > 0:
        raise ToleranceError("tilted field has no mass")
    dist = np.abs(p / norm - qn).max() / qn.max()

    if speed_window is None:
        j0 = int(np.searchsorted(times, 0.1 * t))
        speed_window = (max(j0, 1), i)
    j0, j1 = speed_window

    def centroid(j):
        w = psi(j)
        return integrate.trapezoid(w * X, X) / integrate.trapezoid(w, X)

    speed = (centroid(j1) - centroid(j0)) / (times[j1] - times[j0])
    return FrontCheck(float(t), float(dist), float(speed), coeffs.front_speed)
