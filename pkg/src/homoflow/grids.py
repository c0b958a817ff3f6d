"""Tabulated 3D velocity densities on (possibly sheared) uniform lattices.

A lattice is the image w = M u + c of a uniform cube grid in u.  Sums of
smooth, rapidly decaying integrands over such a lattice (weights
|det M| du^3) are spectrally accurate, which is what makes 1e-8 mass checks
cheap.  Free flows are linear maps, so choosing M as the inverse transport
map keeps the lattice aligned with the transported density.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LatticeDensity:
    """Values g(w_k) at lattice points w_k (shape (3, n1, n2, n3)) with cell volume."""

    values: np.ndarray
    points: np.ndarray
    cell_volume: float

    def __post_init__(self):
        if self.points.shape != (3,) + self.values.shape:
            raise ConfigError("points must have shape (3,) + values.shape")
        if not self.cell_volume > 0:
            raise ConfigError("cell volume must be positive")

    def integrate(self, weight: np.ndarray | float = 1.0) -> float:
        """int g(w) weight(w) dw by the lattice sum."""
        return float(np.sum(self.values * weight) * self.cell_volume)

    def mass(self) -> float:
        return self.integrate()

    def speed_squared(self) -> np.ndarray:
        return np.sum(self.points ** 2, axis=0)


def cube_axes(half_width, n) -> list[np.ndarray]:
    hw = np.broadcast_to(np.asarray(half_width, float), (3,))
    nn = np.broadcast_to(np.asarray(n, int), (3,))
    return [np.linspace(-h, h, k) for h, k in zip(hw, nn)]


def tabulate(density: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
             matrix=None, half_width=8.0, n=81, offset=(0.0, 0.0, 0.0)) -> LatticeDensity:
    """Sample ``density(w1, w2, w3)`` on the lattice w = M u + offset, u in a cube grid."""
    m = np.eye(3) if matrix is None else np.asarray(matrix, float)
    det = abs(np.linalg.det(m))
    if not det > 0:
        raise ConfigError("lattice matrix must be invertible")
    axes = cube_axes(half_width, n)
    du = np.prod([ax[1] - ax[0] for ax in axes])
    u = np.stack(np.meshgrid(*axes, indexing="ij"))
    w = np.einsum("ij,j...->i...", m, u) + np.asarray(offset, float)[:, None, None, None]
    values = np.asarray(density(w[0], w[1], w[2]), dtype=float)
    return LatticeDensity(values, w, det * du)
