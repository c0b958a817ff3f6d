"""Entropy per particle and the ideal-gas form s/rho = log(E^{3/2}/rho) + C_G.

For any density g with mass rho = int g and energy E = int |w|^2 g / rho,
the profile constant

    C_G = -int g log g / int g - log[(int |w|^2 g)^{3/2} / (int g)^{5/2}]

makes s/rho = log(E^{3/2}/rho) + C_G an identity.  It is unchanged under
amplitude scaling and dilations of g, so C_G depends only on the shape.
Particle mass is normalised to 2, so the unit Maxwellian is
exp(-|w|^2)/pi^{3/2}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ToleranceError
from .grids import LatticeDensity, tabulate

LOG_CLAMP = 1e-300
TAIL_LEVEL = 1e-14


def maxwellian(rho: float = 1.0, theta: float = 1.0):
    """rho (pi theta)^{-3/2} exp(-|w|^2/theta): energy per particle 3 theta / 2."""
    norm = rho / (math.pi * theta) ** 1.5

    def g(w1, w2, w3):
        return norm * np.exp(-(w1 * w1 + w2 * w2 + w3 * w3) / theta)

    return g


def tabulate_maxwellian(rho: float = 1.0, theta: float = 1.0, n: int = 81,
                        half_width: float | None = None) -> LatticeDensity:
    hw = half_width if half_width is not None else 7.0 * math.sqrt(theta)
    return tabulate(maxwellian(rho, theta), None, hw, n)


def _neg_g_log_g(g: np.ndarray) -> np.ndarray:
    return -g * np.log(np.maximum(g, LOG_CLAMP))


def _check_tail(tab: LatticeDensity) -> float:
    """Mass fraction carried by cells below 1e-14 of the peak (reported, not removed)."""
    g = tab.values
    if np.any(g < 0):
        raise ToleranceError("density has negative values")
    small = g < TAIL_LEVEL * g.max()
    return float(g[small].sum() / g.sum())


def entropy_per_particle(tab: LatticeDensity) -> float:
    """s/rho = -int g log g / int g (0 log 0 = 0)."""
    rho = tab.mass()
    if not rho > 0:
        raise ToleranceError("density has no mass")
    s = float(np.sum(_neg_g_log_g(tab.values)) * tab.cell_volume)
    if not np.isfinite(s):
        raise ToleranceError("entropy integral diverges on this grid")
    return s / rho


def c_g(tab: LatticeDensity) -> float:
    """Shape constant C_G of a tabulated profile."""
    rho = tab.mass()
    energy = tab.integrate(tab.speed_squared())
    if not (rho > 0 and energy > 0) or not np.isfinite(energy):
        raise ToleranceError("mass or energy integral invalid")
    return entropy_per_particle(tab) - (1.5 * math.log(energy) - 2.5 * math.log(rho))


@dataclass(frozen=True)
class EntropyReport:
    """s = -int g log g, rho = int g, eps = int |w|^2 g (particle mass 2)."""

    s: float
    rho: float
    eps: float
    s_per_particle: float
    C_G: float
    residual: float
    tail_fraction: float

    def csv_row(self, time: float) -> dict:
        return {"t_or_tau": time, "s_per_particle": self.s_per_particle, "rho": self.rho,
                "eps": self.eps, "C_G": self.C_G, "residual": self.residual}


def normalized_profile(tab: LatticeDensity) -> LatticeDensity:
    """Rescale g to unit mass and int |xi|^2 G = 3/2 (the unit Maxwellian's values)."""
    rho = tab.mass()
    energy = tab.integrate(tab.speed_squared()) / rho
    lam = math.sqrt(energy / 1.5)
    return LatticeDensity(tab.values * lam ** 3 / rho, tab.points / lam,
                          tab.cell_volume / lam ** 3)


def ideal_form_residual(tab: LatticeDensity, rho: float | None = None) -> float:
    """s/rho - log(e^{3/2}/rho) - C_G(G), e = int |w|^2 g / rho the energy per particle.

    C_G is taken from the normalised profile G (unit mass, int |xi|^2 G = 3/2)
    so the residual checks the decomposition g = rho lambda^{-3} G(w/lambda).
    """
    return entropy_report(tab, rho).residual


def entropy_report(tab: LatticeDensity, rho: float | None = None) -> EntropyReport:
    mass = tab.mass()
    rho = mass if rho is None else rho
    if abs(rho - mass) > 1e-8 * mass:
        raise ToleranceError(f"density integrates to {mass}, not the stated rho={rho}")
    spp = entropy_per_particle(tab)
    energy = tab.integrate(tab.speed_squared())
    per_particle = energy / mass
    cg = c_g(normalized_profile(tab))
    resid = spp - math.log(per_particle ** 1.5 / rho) - cg
    return EntropyReport(spp * mass, mass, energy, spp, cg, resid, _check_tail(tab))


def maxwellian_c_g() -> float:
    """(3/2)(1 + ln pi - ln(3/2))."""
    return 1.5 * (1.0 + math.log(math.pi) - math.log(1.5))
