"""Free transport (collisions switched off) in dilatation and shear flows, and
the decay of the collision rate that justifies neglecting collisions.

For L(t) dominated by the flow, the velocity density is transported along
characteristics w -> e^{-tau} w (dilatation) or w1 -> w1 - K t w2 (shear).
With tau = log(1+t) (homogeneous) or tau = log t (cylindrical, shear) the
rescaled profiles below conserve mass exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigError, ToleranceError
from .grids import LatticeDensity, tabulate

Profile3D = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def time_change(tau, gamma: float):
    """s = (1 - e^{-(2+gamma) tau}) / (2 + gamma), increasing with sup 1/(2+gamma)."""
    if gamma <= -2:
        raise ConfigError("time change needs gamma > -2")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ConfigError("tau must be non-negative")
    k = 2.0 + gamma
    return -np.expm1(-k * tau) / k


def inverse_time_change(s, gamma: float):
    if gamma <= -2:
        raise ConfigError("time change needs gamma > -2")
    k = 2.0 + gamma
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s >= 1.0 / k):
        raise ConfigError("s must lie in [0, 1/(2+gamma))")
    return -np.log1p(-k * s) / k


@dataclass(frozen=True)
class AnisotropicGaussian:
    """mass * N(center, diag(sigmas^2)) in three dimensions."""

    sigmas: tuple[float, float, float] = (1.0, 1.0, 1.0)
    mass: float = 1.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __call__(self, w1, w2, w3):
        s = self.sigmas
        c = self.center
        q = ((w1 - c[0]) / s[0]) ** 2 + ((w2 - c[1]) / s[1]) ** 2 + ((w3 - c[2]) / s[2]) ** 2
        norm = self.mass / ((2 * math.pi) ** 1.5 * s[0] * s[1] * s[2])
        return norm * np.exp(-0.5 * q)

    @property
    def half_width(self) -> float:
        return 9.0 * max(self.sigmas) + max(abs(x) for x in self.center)

    def second_moment(self, i: int) -> float:
        """int w_i^2 G0 dw."""
        return self.mass * (self.sigmas[i] ** 2 + self.center[i] ** 2)


@dataclass(frozen=True)
class CompactBump:
    """Smooth bump exp(1 - 1/(1 - |w - c|^2 / r^2)) supported in a ball."""

    radius: float = 2.0
    height: float = 1.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __call__(self, w1, w2, w3):
        c = self.center
        q = ((w1 - c[0]) ** 2 + (w2 - c[1]) ** 2 + (w3 - c[2]) ** 2) / self.radius ** 2
        out = np.zeros(np.broadcast(w1, w2, w3).shape)
        inside = q < 1.0
        out[inside] = self.height * np.exp(1.0 - 1.0 / (1.0 - q[inside]))
        return out

    @property
    def half_width(self) -> float:
        return self.radius + max(abs(x) for x in self.center)


def homogeneous_free_flow(G0: Profile3D, tau: float, w) -> np.ndarray:
    """Rescaled density e^{3 tau} G0(e^tau w)."""
    w = np.asarray(w, dtype=float)
    e = math.exp(tau)
    return e ** 3 * G0(e * w[0], e * w[1], e * w[2])


def cylindrical_free_flow(G0: Profile3D, tau: float, w) -> np.ndarray:
    """G(tau, w) = e^{2 tau} G0(e^tau w1, e^tau w2, w3)."""
    w = np.asarray(w, dtype=float)
    e = math.exp(tau)
    return e ** 2 * G0(e * w[0], e * w[1], w[2])


def shear_free_flow(G0: Profile3D, K: float, t: float, w) -> np.ndarray:
    """g(t, w) = G0(w1 + K w2 (t - 1), w2, w3), starting from G0 at t = 1."""
    if t < 1:
        raise ConfigError("shear free flow is parametrised from t = 1")
    w = np.asarray(w, dtype=float)
    return G0(w[0] + K * w[1] * (t - 1.0), w[1], w[2])


def shear_free_flow_scaled(G0: Profile3D, K: float, tau: float, xi) -> np.ndarray:
    """G(tau, xi) = e^tau G0(xi1 e^tau + K xi2 (e^tau - 1), xi2, xi3)."""
    xi = np.asarray(xi, dtype=float)
    e = math.exp(tau)
    return e * G0(xi[0] * e + K * xi[1] * (e - 1.0), xi[1], xi[2])


class FreeFlowRegime(enum.Enum):
    HOMOGENEOUS_DILATATION = "HomogeneousDilatation"
    CYLINDRICAL_DILATATION = "CylindricalDilatation"
    SIMPLE_SHEAR = "SimpleShear"


@dataclass(frozen=True)
class FreeFlowSolution:
    """Physical velocity density g(t, w) of a free flow started from G0.

    Homogeneous dilatation (L = I/(1+t)): g = G0((1+t) w).
    Cylindrical dilatation (L = diag(1,1,0)/t from t = 1): g = G0(t w1, t w2, w3).
    Simple shear (L = K e1 (x) e2 from t = 1): g = G0(w1 + K w2 (t-1), w2, w3).
    The density rho(t) = int g dw decays like the flow's Jacobian while the
    profile keeps its values; :meth:`tabulate` samples g on a lattice aligned
    with the transport map.
    """

    regime: FreeFlowRegime
    G0: Profile3D
    K: float = 0.0
    half_width: float = 9.0
    n: int = 73

    def transport_matrix(self, t: float) -> np.ndarray:
        """Linear map w -> argument of G0."""
        if self.regime is FreeFlowRegime.HOMOGENEOUS_DILATATION:
            return (1.0 + t) * np.eye(3)
        if t < 1:
            raise ConfigError("this free flow is parametrised from t = 1")
        if self.regime is FreeFlowRegime.CYLINDRICAL_DILATATION:
            return np.diag([t, t, 1.0])
        m = np.eye(3)
        m[0, 1] = self.K * (t - 1.0)
        return m

    def density(self, t: float, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if self.regime is FreeFlowRegime.SIMPLE_SHEAR:
            return shear_free_flow(self.G0, self.K, t, w)
        a = np.einsum("ij,j...->i...", self.transport_matrix(t), w)
        return self.G0(a[0], a[1], a[2])

    def tabulate(self, t: float, n: int | None = None) -> LatticeDensity:
        inv = np.linalg.inv(self.transport_matrix(t))
        return tabulate(lambda w1, w2, w3: self.density(t, np.stack([w1, w2, w3])),
                        inv, self.half_width, n or self.n)


def free_flow_mass(regime: str | FreeFlowRegime, G0: Profile3D, time: float,
                   K: float = 1.0, half_width: float = 9.0, n: int = 73) -> float:
    """Mass of the mass-conserving rescaled profile at ``time`` by lattice quadrature.

    ``time`` is tau for the dilatations (profiles e^{3 tau} G0(e^tau w) and
    e^{2 tau} G0(e^tau w1, e^tau w2, w3)) and t >= 1 for the shear.
    """
    regime = FreeFlowRegime(regime) if isinstance(regime, str) else regime
    if regime is FreeFlowRegime.HOMOGENEOUS_DILATATION:
        e = math.exp(time)
        mat = np.eye(3) / e
        dens = lambda a, b, c: homogeneous_free_flow(G0, time, np.stack([a, b, c]))
    elif regime is FreeFlowRegime.CYLINDRICAL_DILATATION:
        e = math.exp(time)
        mat = np.diag([1 / e, 1 / e, 1.0])
        dens = lambda a, b, c: cylindrical_free_flow(G0, time, np.stack([a, b, c]))
    else:
        mat = np.eye(3)
        mat[0, 1] = -K * (time - 1.0)
        dens = lambda a, b, c: shear_free_flow(G0, K, time, np.stack([a, b, c]))
    return tabulate(dens, mat, half_width, n).mass()


def shear_energy_ratio(G0: Profile3D, K: float, t: float, half_width: float = 9.0,
                       n: int = 73) -> float:
    """int g |w|^2 dw / (rho K^2 t^2) for the free shear flow."""
    sol = FreeFlowSolution(FreeFlowRegime.SIMPLE_SHEAR, G0, K, half_width, n)
    tab = sol.tabulate(t)
    return tab.integrate(tab.speed_squared()) / (tab.mass() * K * K * t * t)


# ---------------------------------------------------------------------------
# collision-rate decay

@dataclass(frozen=True)
class DecayFit:
    gamma: float
    taus: np.ndarray
    rates: np.ndarray
    slope: float
    predicted: float
    logarithmic: bool

    def csv_rows(self):
        for tau, r in zip(self.taus, self.rates):
            yield {"gamma": self.gamma, "tau": tau, "rate": r,
                   "fitted_slope": self.slope, "predicted_slope": self.predicted}


def predicted_decay_slope(gamma: float) -> tuple[float, bool]:
    """Predicted d log R / d tau, and whether a log(tau) correction is present."""
    if gamma <= -2:
        raise ConfigError("decay estimate needs gamma > -2")
    if abs(gamma + 1.0) < 1e-12:
        return -1.0, True
    if gamma > -1:
        return -1.0, False
    return -(2.0 + gamma), False


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(256)


def collision_rate(G0: Profile3D, gamma: float, tau: float, n_theta: int = 32,
                   r_max: float | None = None, w3_max: float | None = None) -> float:
    """R(tau) = e^{-tau} int |w|^gamma G(tau, w) dw at the origin.

    G is the cylindrical free flow.  In the variables xi = e^tau (w1, w2)
    this reads e^{-tau} int (e^{-2tau} |xi|^2 + w3^2)^{gamma/2} G0(xi, w3).
    Polar coordinates (r, theta) handle the plane (adaptive in r,
    trapezoid in theta); the w3-integral uses w3 = a sinh(u), a = e^{-tau} r,
    which turns the near-singular factor into the smooth a^{gamma+1}
    cosh(u)^{gamma+1}.
    """
    if gamma <= -2:
        raise ConfigError("collision rate needs gamma > -2")
    hw = getattr(G0, "half_width", 9.0)
    r_max = r_max or hw
    w3_max = w3_max or hw
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    ct, st = np.cos(theta)[:, None], np.sin(theta)[:, None]
    shrink = math.exp(-tau)

    def radial(r):
        if r == 0.0:
            return 0.0
        a = shrink * r
        U = math.asinh(w3_max / a)
        u = U * _GL_NODES
        w3 = a * np.sinh(u)
        vals = G0(r * ct, r * st, w3[None, :]) * np.cosh(u)[None, :] ** (gamma + 1.0)
        inner = U * (vals @ _GL_WEIGHTS)
        return r * a ** (gamma + 1.0) * inner.mean() * 2 * np.pi

    val, err = integrate.quad(radial, 0.0, r_max, epsabs=0.0, epsrel=1e-10, limit=200)
    if not np.isfinite(val) or err > 1e-6 * abs(val):
        raise ToleranceError(f"collision-rate quadrature unresolved at tau={tau}, gamma={gamma}")
    return shrink * val


def collision_rate_decay(G0: Profile3D, gamma: float, tau_grid: Sequence[float]) -> DecayFit:
    """Fit log R(tau) against tau, skipping the first 20% of the grid."""
    taus = np.asarray(tau_grid, dtype=float)
    if taus.size < 5:
        raise ConfigError("need at least five tau values")
    rates = np.array([collision_rate(G0, gamma, t) for t in taus])
    start = int(math.floor(0.2 * taus.size))
    slope = float(np.polyfit(taus[start:], np.log(rates[start:]), 1)[0])
    pred, log_case = predicted_decay_slope(gamma)
    return DecayFit(gamma, taus, rates, slope, pred, log_case)


# ---------------------------------------------------------------------------
# weak limit of the rescaled shear profile

@dataclass(frozen=True)
class BumpTestFunction:
    """Smooth compactly supported phi(xi) = prod_i exp(1 - 1/(1 - ((xi_i - c_i)/r_i)^2))."""

    center: tuple[float, float, float]
    radii: tuple[float, float, float]
    ignore_first: bool = False

    def __call__(self, x1, x2, x3):
        out = np.ones(np.broadcast(x1, x2, x3).shape)
        for k, (x, c, r) in enumerate(zip((x1, x2, x3), self.center, self.radii)):
            if k == 0 and self.ignore_first:
                continue
            u = (np.broadcast_to(x, out.shape) - c) / r
            f = np.zeros(out.shape)
            inside = np.abs(u) < 1
            f[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
            out *= f
        return out

    sup_norm = 1.0


@dataclass(frozen=True)
class WeakLimitReport:
    taus: np.ndarray
    pairings: np.ndarray
    limit: float
    gaps: np.ndarray          # |pairing - limit| / sup|phi|

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.gaps) < 0))


def weak_limit_check(G0: Profile3D, K: float, taus: Sequence[float], phi,
                     half_width: float = 9.0, n: int = 121) -> WeakLimitReport:
    """Pair the rescaled shear profile with phi and compare with its limit.

    With eta = xi1 e^tau + K xi2 (e^tau - 1) the pairing becomes
    int G0(eta, xi2, xi3) phi(eta e^{-tau} - K xi2 (1 - e^{-tau}), xi2, xi3),
    so no resolution of the collapsing xi1-direction is needed; the limit
    replaces the first argument of phi by -K xi2.
    """
    grid = tabulate(G0, None, half_width, n)
    eta, x2, x3 = grid.points
    pairings = []
    for tau in taus:
        e = math.exp(-tau)
        pairings.append(grid.integrate(phi(eta * e - K * x2 * (1.0 - e), x2, x3)))
    limit = grid.integrate(phi(-K * x2, x2, x3))
    sup = getattr(phi, "sup_norm", None)
    if sup is None:
        sup = float(np.abs(phi(*grid.points)).max())
    pairings = np.array(pairings)
    return WeakLimitReport(np.asarray(taus, float), pairings, limit,
                           np.abs(pairings - limit) / sup)
