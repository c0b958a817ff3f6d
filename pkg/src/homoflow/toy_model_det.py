"""Deterministic solvers for the toy collision model.

Particles carry a density rho and a clock zeta (time since the last
collision, plus one).  Between collisions rho stays fixed and zeta grows;
at rate eps(t) a particle collides and rho -> rho * zeta, zeta -> 1.  In
log variables X = log(rho), Z = log(zeta) the collision history obeys a
renewal equation, and the weighted moments

    lambda_beta(t) = int Phi(t, X) e^{beta X} dX

solve the linear Volterra equation

    lambda_beta(t) = eps(t) [C_beta (1+t)^{beta-1}
                              + int_0^t lambda_beta(t - xi) (1+xi)^{beta-1} dxi].

Weight beta corresponds to the (beta - 1)-th moment of rho*zeta; beta = 1
is the mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigError, ConvergenceError, ResolutionError
from .profiles import InitialProfile

RESCALE_THRESHOLD = 1e300
EpsilonSpec = float | Callable[[np.ndarray], np.ndarray]


def _power_integral(a: np.ndarray, h: float, q: float) -> np.ndarray:
    """int_a^{a+h} (1+xi)^q dxi, stable for h << 1 + a."""
    base = 1.0 + a
    lr = np.log1p(h / base)
    if abs(q + 1.0) < 1e-14:
        return lr
    return base ** (q + 1.0) * np.expm1((q + 1.0) * lr) / (q + 1.0)


def product_trapezoid_weights(h: float, n: int, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Cell weights for int_0^{t_i} y(t_i - xi) (1+xi)^p dxi with y piecewise linear.

    On cell m = [m h, (m+1) h] the kernel is integrated exactly against the
    two hat functions: A[m] multiplies y(t_i - m h), B[m] multiplies
    y(t_i - (m+1) h).
    """
    a = h * np.arange(n)
    i0 = _power_integral(a, h, p)
    i1 = _power_integral(a, h, p + 1.0) - (1.0 + a) * i0
    B = i1 / h
    return i0 - B, B


def _epsilon_values(epsilon: EpsilonSpec, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """eps on the grid and its running integral (Simpson on each cell)."""
    if callable(epsilon):
        vals = np.asarray(epsilon(times), dtype=float) * np.ones_like(times)
        mids = np.asarray(epsilon(0.5 * (times[1:] + times[:-1])), dtype=float) * np.ones(times.size - 1)
        cells = np.diff(times) / 6.0 * (vals[:-1] + 4.0 * mids + vals[1:])
        cumulative = np.concatenate([[0.0], np.cumsum(cells)])
    else:
        eps = float(epsilon)
        vals = np.full_like(times, eps)
        cumulative = eps * times
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ConfigError("collision rate must be finite and non-negative")
    return vals, cumulative


def _time_grid(T: float, dt: float) -> tuple[np.ndarray, float]:
    if not (T > 0 and dt > 0):
        raise ConfigError("need T > 0 and dt > 0")
    n = int(round(T / dt))
    if n < 2 or abs(n * dt - T) > 1e-9 * T:
        raise ConfigError("T must be a multiple of dt with at least two steps")
    return np.linspace(0.0, T, n + 1), T / n


@dataclass(frozen=True)
class ToyMomentSeries:
    """lambda_beta on a uniform time grid, stored in log form beyond overflow."""

    beta: float
    times: np.ndarray
    log_values: np.ndarray
    epsilon: np.ndarray

    @property
    def values(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_values)

    def growth_rate(self, window: tuple[float, float]) -> float:
        """Least-squares slope of log lambda over a time window."""
        sel = (self.times >= window[0]) & (self.times <= window[1])
        if sel.sum() < 3:
            raise ConfigError("growth window holds fewer than three samples")
        return float(np.polyfit(self.times[sel], self.log_values[sel], 1)[0])

    def log_slope(self, window: tuple[float, float]) -> float:
        """Least-squares slope of log lambda against log(1+t)."""
        sel = (self.times >= window[0]) & (self.times <= window[1])
        if sel.sum() < 3:
            raise ConfigError("window holds fewer than three samples")
        return float(np.polyfit(np.log1p(self.times[sel]), self.log_values[sel], 1)[0])

    def csv_rows(self):
        for t, lv, e in zip(self.times, self.log_values, self.epsilon):
            yield {"t": t, "lambda": math.exp(lv) if lv < 709 else math.inf,
                   "log_lambda": lv, "epsilon": e}


def _history_weights(h, n, p):
    A, B = product_trapezoid_weights(h, n, p)
    # weight of y(t_i - m h) for 1 <= m <= i - 1; the endpoint m = i uses B[i-1]
    inner = np.empty(n)
    inner[0] = A[0]
    inner[1:] = A[1:] + B[:-1]
    return A, B, inner


def solve_lambda_volterra(beta: float, epsilon: EpsilonSpec, profile: InitialProfile,
                          T: float, dt: float) -> ToyMomentSeries:
    """Second-order product-trapezoid solution of the lambda_beta equation.

    The kernel (1+xi)^{beta-1} is integrated exactly against piecewise
    linear lambda; the newest value enters implicitly and linearly.  When
    the stored values pass 1e300 the whole history is rescaled and the
    factor is carried in a log offset.
    """
    if beta < 0:
        raise ConfigError("beta must be non-negative")
    times, h = _time_grid(T, dt)
    n = times.size - 1
    eps, _ = _epsilon_values(epsilon, times)
    c_beta = profile.moment(beta)
    A, B, inner = _history_weights(h, n, beta - 1.0)
    kernel = (1.0 + times) ** (beta - 1.0)

    lam = np.zeros(n + 1)
    offset = 0.0
    log_vals = np.empty(n + 1)
    lam[0] = eps[0] * c_beta
    log_vals[0] = math.log(lam[0]) if lam[0] > 0 else -math.inf
    for i in range(1, n + 1):
        hist = B[i - 1] * lam[0]
        if i > 1:
            hist += np.dot(inner[1:i], lam[i - 1:0:-1])
        source = c_beta * kernel[i] * math.exp(-offset) if offset < 745 else 0.0
        lam[i] = eps[i] * (source + hist) / (1.0 - eps[i] * A[0])
        if lam[i] > RESCALE_THRESHOLD:
            lam[: i + 1] /= RESCALE_THRESHOLD
            offset += math.log(RESCALE_THRESHOLD)
        log_vals[i] = math.log(lam[i]) + offset if lam[i] > 0 else -math.inf
    return ToyMomentSeries(beta, times, log_vals, eps)


def exact_lambda_constant_rate(beta: float, epsilon: float, c_beta: float, t) -> np.ndarray:
    """Closed forms at constant eps for beta = 1 and beta = 2.

    beta = 1: eps C e^{eps t}.  beta = 2: Lambda(z) = 1/z + 1/z^2, so the
    transform eps C (z+1)/(z^2 - eps z - eps) inverts to two exponentials.
    """
    t = np.asarray(t, dtype=float)
    if beta == 1:
        return epsilon * c_beta * np.exp(epsilon * t)
    if beta == 2:
        disc = math.sqrt(epsilon ** 2 + 4 * epsilon)
        z0, z1 = 0.5 * (epsilon + disc), 0.5 * (epsilon - disc)
        return epsilon * c_beta * ((z0 + 1) * np.exp(z0 * t) - (z1 + 1) * np.exp(z1 * t)) / (z0 - z1)
    raise ConfigError("closed form only for beta in {1, 2}")


@dataclass(frozen=True)
class ToyField:
    """Phi(t_i, X_j) on uniform grids, with eps and its running integral."""

    t: np.ndarray
    X: np.ndarray
    values: np.ndarray
    epsilon: np.ndarray
    epsilon_integral: np.ndarray

    def moment(self, beta: float) -> np.ndarray:
        """lambda_beta(t_i) = int Phi e^{beta X} dX (trapezoid in X)."""
        return integrate.trapezoid(self.values * np.exp(beta * self.X), self.X, axis=1)

    def csv_rows(self):
        for i, t in enumerate(self.t):
            for x, v in zip(self.X, self.values[i]):
                yield {"t": t, "X": x, "phi": v}


def solve_field(profile: InitialProfile, epsilon: EpsilonSpec, x_range: tuple[float, float],
                dx: float, T: float, dt: float) -> ToyField:
    """March the renewal equation for the collision-history field Phi(t, X).

        Phi(t, X) = eps(t)/(1+t) G0(X - log(1+t))
                    + eps(t) int_0^t Phi(t - xi, X - log(1+xi)) dxi/(1+xi).

    The xi-integral uses the product trapezoid rule with the weight
    1/(1+xi) integrated exactly; shifted values come from linear
    interpolation in X with zero to the left of the grid.
    """
    times, h = _time_grid(T, dt)
    n = times.size - 1
    lo, hi = x_range
    if not dx > 0 or hi <= lo:
        raise ConfigError("bad X grid")
    X = np.arange(lo, hi + 0.5 * dx, dx)
    if dx > math.log1p(h):
        raise ResolutionError(
            f"X spacing {dx:g} exceeds the smallest shift log(1+dt) = {math.log1p(h):.3g}")
    s_lo, s_hi = profile.support
    if hi - lo < math.log1p(T) or lo > s_lo or hi < s_hi + math.log1p(T):
        raise ResolutionError("X grid does not cover the profile support plus log(1+T)")
    eps, eps_int = _epsilon_values(epsilon, times)
    A, B, inner = _history_weights(h, n, -1.0)

    shifts = np.log1p(h * np.arange(n + 1)) / dx
    q = np.floor(shifts).astype(int)
    theta = shifts - q
    pad = int(q[-1]) + 2
    nx = X.size
    phi = np.zeros((n + 1, nx + pad))
    cols = np.arange(nx) + pad

    phi[0, pad:] = eps[0] * profile(X)
    for i in range(1, n + 1):
        m = np.arange(1, i + 1)
        w = np.concatenate([inner[1:i], [B[i - 1]]])
        rows = (i - m)[:, None]
        c0 = cols[None, :] - q[m][:, None]
        shifted = (1.0 - theta[m])[:, None] * phi[rows, c0] + theta[m][:, None] * phi[rows, c0 - 1]
        hist = w @ shifted
        free = profile(X - math.log1p(times[i])) / (1.0 + times[i])
        phi[i, pad:] = eps[i] * (free + hist) / (1.0 - eps[i] * A[0])
    return ToyField(times, X, phi[:, pad:], eps, eps_int)


def reconstruct_total_moment(field: ToyField, profile: InitialProfile, beta: float,
                             t_index: int) -> float:
    """int int f (rho zeta)^{beta-1} d(rho) d(zeta) at t = field.t[t_index].

    Free-streaming part plus the collision history, both weighted by
    exp(-int_0^t eps):

        e^{-int eps} [C_beta (1+t)^{beta-1}
                      + int_0^t lambda_beta(t - xi) (1+xi)^{beta-1} dxi],

    with lambda_beta taken from the field and the xi-integral done by the
    product trapezoid rule.  beta = 1 gives the total mass.
    """
    i = t_index % field.t.size
    t = field.t[i]
    lam = field.moment(beta)
    hist = 0.0
    if i > 0:
        h = field.t[1] - field.t[0]
        A, B, inner = _history_weights(h, i, beta - 1.0)
        hist = A[0] * lam[i] + B[i - 1] * lam[0]
        if i > 1:
            hist += np.dot(inner[1:i], lam[i - 1:0:-1])
    total = profile.moment(beta) * (1.0 + t) ** (beta - 1.0) + hist
    return float(math.exp(-field.epsilon_integral[i]) * total)


@dataclass(frozen=True)
class SelfConsistentResult:
    """Self-consistent march: eps(t) = E[(rho zeta)^{-a}] fed back into the rate."""

    a: float
    times: np.ndarray
    epsilon: np.ndarray
    lam: ToyMomentSeries
    log_E: np.ndarray

    def t_epsilon(self) -> np.ndarray:
        return self.times * self.epsilon

    def csv_rows(self):
        for t, e, lv, le in zip(self.times, self.epsilon, self.lam.log_values, self.log_E):
            yield {"t": t, "epsilon": e, "t_epsilon": t * e, "log_lambda": lv, "int_epsilon": le}


def solve_selfconsistent(a: float, profile: InitialProfile, T: float, dt: float,
                         max_iter: int = 50) -> SelfConsistentResult:
    """Solve the nonlinear system where the rate is the (-a)-moment of rho*zeta.

    With beta = 1 - a, R(t) = C_beta (1+t)^{-a} + int lambda(t-xi)(1+xi)^{-a} dxi
    and E = exp(int eps), the rate is eps = R/E, E' = R and lambda = R^2/E.
    Each step solves for R_i by fixed-point iteration.
    """
    if not 0 < a < 1:
        raise ConfigError("self-consistent model needs 0 < a < 1")
    beta = 1.0 - a
    times, h = _time_grid(T, dt)
    n = times.size - 1
    c_beta = profile.moment(beta)
    A, B, inner = _history_weights(h, n, -a)
    kernel = (1.0 + times) ** (-a)

    R = np.empty(n + 1)
    E = np.empty(n + 1)
    lam = np.empty(n + 1)
    R[0], E[0] = c_beta, 1.0
    lam[0] = R[0] ** 2 / E[0]
    for i in range(1, n + 1):
        base = c_beta * kernel[i] + B[i - 1] * lam[0]
        if i > 1:
            base += np.dot(inner[1:i], lam[i - 1:0:-1])
        r = R[i - 1]
        for _ in range(max_iter):
            e = E[i - 1] + 0.5 * h * (R[i - 1] + r)
            r_new = base + A[0] * r * r / e
            if abs(r_new - r) <= 1e-14 * r_new:
                r = r_new
                break
            r = r_new
        else:
            raise ConvergenceError(f"fixed point did not converge at t={times[i]:g}; reduce dt")
        R[i] = r
        E[i] = E[i - 1] + 0.5 * h * (R[i - 1] + r)
        lam[i] = r * r / E[i]
    eps = R / E
    series = ToyMomentSeries(beta, times, np.log(lam), eps)
    return SelfConsistentResult(a, times, eps, series, np.log(E))


@dataclass(frozen=True)
class AdiabaticReport:
    """Late-time behaviour of lambda_beta for eps = A/(1+t).

    For beta > 1, ``measured`` is log lambda(T) and ``predicted`` is
    (Gamma(beta) A)^{1/beta} (beta/(beta-1)) T^{1-1/beta}.  For beta < 1 both
    are decay exponents of lambda in (1+t), fitted over [T/10, T] and
    predicted as -(2 - beta).
    """

    beta: float
    A: float
    T: float
    measured: float
    predicted: float

    @property
    def ratio(self) -> float:
        return self.measured / self.predicted if self.predicted else math.nan


def adiabatic_check(beta: float, A: float, T: float, dt: float,
                    profile: InitialProfile | None = None) -> AdiabaticReport:
    if beta == 1:
        raise ConfigError("beta = 1 is the marginal case; no adiabatic prediction")
    profile = profile or InitialProfile.lognormal_unit_mass()
    series = solve_lambda_volterra(beta, lambda t: A / (1.0 + t), profile, T, dt)
    if beta > 1:
        predicted = (math.gamma(beta) * A) ** (1 / beta) * beta / (beta - 1) * T ** (1 - 1 / beta)
        measured = float(series.log_values[-1])
    else:
        predicted = -(2.0 - beta)
        measured = series.log_slope((0.1 * T, T))
    return AdiabaticReport(beta, A, T, measured, predicted)
