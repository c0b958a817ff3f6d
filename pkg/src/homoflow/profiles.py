"""Initial profiles G0(X) in the log-density variable X = log(rho).

The toy model's initial density f0(rho) enters through G0(X) = f0(e^X), so
its weighted moments are C_beta = int G0(X) e^{beta X} dX and the total
mass int f0 d(rho) is C_1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ConfigError


@dataclass(frozen=True)
class InitialProfile:
    """G0(X) as one of three families.

    kind = "gaussian": amplitude * exp(-(X - center)^2 / (2 width^2))
    kind = "bump":     amplitude * exp(1 - 1/(1 - ((X - center)/width)^2)) on |X-center| < width
    kind = "table":    linear interpolation of (grid, values), zero outside
    """

    kind: str
    center: float = 0.0
    width: float = 1.0
    amplitude: float = 1.0
    grid: tuple = field(default=(), repr=False)
    values: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in ("gaussian", "bump", "table"):
            raise ConfigError(f"unknown profile kind {self.kind!r}")
        if self.kind == "table":
            g = np.asarray(self.grid, float)
            v = np.asarray(self.values, float)
            if g.ndim != 1 or g.size < 2 or g.shape != v.shape or np.any(np.diff(g) <= 0):
                raise ConfigError("table profile needs increasing grid and matching values")
            if np.any(v < 0):
                raise ConfigError("profile values must be non-negative")
        elif not self.width > 0 or self.amplitude < 0:
            raise ConfigError("profile needs width > 0 and amplitude >= 0")

    @classmethod
    def lognormal_unit_mass(cls, mu: float = 0.0, sigma: float = 0.5) -> "InitialProfile":
        """Gaussian in X normalised so the rho-mass C_1 equals one."""
        amp = 1.0 / (sigma * math.sqrt(2 * math.pi) * math.exp(mu + 0.5 * sigma ** 2))
        return cls("gaussian", mu, sigma, amp)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return self.amplitude * np.exp(-0.5 * ((x - self.center) / self.width) ** 2)
        if self.kind == "bump":
            u = (x - self.center) / self.width
            out = np.zeros_like(u)
            inside = np.abs(u) < 1
            out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
            return out
        return np.interp(x, self.grid, self.values, left=0.0, right=0.0)

    @property
    def support(self) -> tuple[float, float]:
        """Interval outside which G0 is zero or below 1e-16 of its peak."""
        if self.kind == "gaussian":
            half = self.width * math.sqrt(2 * math.log(1e16))
            return self.center - half, self.center + half
        if self.kind == "bump":
            return self.center - self.width, self.center + self.width
        return float(self.grid[0]), float(self.grid[-1])

    def moment(self, beta: float) -> float:
        """C_beta = int G0(X) e^{beta X} dX."""
        if self.kind == "gaussian":
            s = self.width
            return self.amplitude * s * math.sqrt(2 * math.pi) * math.exp(
                beta * self.center + 0.5 * (beta * s) ** 2)
        lo, hi = self.support
        if self.kind == "table":
            g = np.asarray(self.grid, float)
            return float(sum(integrate.quad(lambda x: self(x) * math.exp(beta * x), a, b,
                                            epsabs=0, epsrel=1e-12)[0]
                             for a, b in zip(g[:-1], g[1:])))
        return integrate.quad(lambda x: float(self(x)) * math.exp(beta * x), lo, hi,
                              epsabs=0, epsrel=1e-12, limit=200)[0]

    def sample_log_density(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw X from the mass-weighted law G0(X) e^X / C_1."""
        if self.kind == "gaussian":
            return rng.normal(self.center + self.width ** 2, self.width, size=n)
        lo, hi = self.support
        grid = np.linspace(lo, hi, 20001)
        dens = self(grid) * np.exp(grid)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        cdf /= cdf[-1]
        return np.interp(rng.random(n), cdf, grid)

    def serialize(self) -> dict:
        out = {"profile": self.kind, "profile_center": self.center,
               "profile_width": self.width, "profile_amplitude": self.amplitude}
        return out
