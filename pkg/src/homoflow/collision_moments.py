"""Second-moment system of the homoenergetic Boltzmann equation with
Maxwell molecules, for the combined orthogonal shear flow.

The second moments M_ij = int w_i w_j g dw of a Maxwell-molecule gas in the
flow L(t) obey the closed linear system

    dM/dt = -(L M + M L^T) - 2b (M - m I),    m = tr(M) / 3,

with L(t) = [[0, K3, K2 - t K1 K3], [0, 0, K1], [0, 0, 0]].  Because the
coefficients grow linearly in t, the moments grow like exp(c t^{5/3}).
They are integrated in renormalised form M = exp(S) U with |U|_inf = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigError, StiffnessError, ToleranceError, WindowError

# state ordering used throughout
COMPONENTS = ("M11", "M12", "M13", "M22", "M23", "M33")
_INDEX = {(0, 0): 0, (0, 1): 1, (0, 2): 2, (1, 1): 3, (1, 2): 4, (2, 2): 5}


@dataclass(frozen=True)
class CollisionKernel:
    """Maxwell-molecule kernel |v-v*|^gamma B(cos theta); only B enters b."""

    angular_profile: Callable[[float], float]
    gamma: float = 0.0


def collision_b(kernel: CollisionKernel | Callable[[float], float]) -> float:
    """b = 3 pi int_{-1}^{1} B(x) x^2 (1 - x^2) dx."""
    prof = kernel.angular_profile if isinstance(kernel, CollisionKernel) else kernel
    with np.errstate(all="raise"):
        try:
            res = integrate.quad(lambda x: prof(x) * x * x * (1.0 - x * x), -1.0, 1.0,
                                 epsabs=1e-14, epsrel=1e-12, limit=200, full_output=True)
        except (FloatingPointError, ZeroDivisionError, OverflowError) as exc:
            raise ToleranceError(f"angular profile not integrable: {exc}") from None
    val, err = res[0], res[1]
    if len(res) > 3 or not np.isfinite(val) or err > 1e-9 * max(abs(val), 1e-300):
        raise ToleranceError(f"angular integral did not converge (estimate {val}, err {err})")
    return 3.0 * np.pi * val


def shear_velocity_gradient(t: float, K1: float, K2: float, K3: float) -> np.ndarray:
    return np.array([[0.0, K3, K2 - t * K1 * K3],
                     [0.0, 0.0, K1],
                     [0.0, 0.0, 0.0]])


def moment_rhs(M: np.ndarray, t: float, K1: float, K2: float, K3: float,
               b: float, include_k2: bool = True) -> np.ndarray:
    """Right-hand side dM/dt for a symmetric 3x3 moment matrix."""
    L = shear_velocity_gradient(t, K1, K2 if include_k2 else 0.0, K3)
    m = np.trace(M) / 3.0
    return -(L @ M + M @ L.T) - 2.0 * b * (M - m * np.eye(3))


def linear_system(K1: float, K2: float, K3: float, b: float,
                  include_k2: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Matrices (A0, A1) with dy/dt = (A0 + t A1) y on the six-component state."""
    mats = []
    for t in (0.0, 1.0):
        cols = []
        for k in range(6):
            e = np.zeros(6)
            e[k] = 1.0
            cols.append(_to_vector(moment_rhs(_to_matrix(e), t, K1, K2, K3, b, include_k2)))
        mats.append(np.column_stack(cols))
    a0, a_at_1 = mats
    return a0, a_at_1 - a0


def _to_matrix(y):
    M = np.empty((3, 3))
    for (i, j), k in _INDEX.items():
        M[i, j] = M[j, i] = y[k]
    return M


def _to_vector(M):
    return np.array([M[i, j] for (i, j) in _INDEX])


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass
class RenormalizedSolution:
    """Samples y(t) = exp(log_scale) * unit with |unit|_inf = 1."""

    times: np.ndarray
    unit: np.ndarray
    log_scale: np.ndarray
    n_steps: int
    n_rejected: int


def integrate_renormalized(rhs: Callable[[float, np.ndarray], np.ndarray], y0, t_end: float,
                           t0: float = 0.0, rtol: float = 1e-9, t_eval=None,
                           h0: float | None = None, max_steps: int = 2_000_000
                           ) -> RenormalizedSolution:
    """Adaptive Dormand-Prince 5(4) for a linear ODE with log-scale tracking.

    After every accepted step the state is divided by its max-norm and the
    logarithm of that norm is added to a running scale, so solutions
    growing like exp(t^{5/3}) never overflow.  Since the stored state has
    unit max-norm, the error control is relative to the current size.
    ``t_eval`` (sorted, inside [t0, t_end]) forces steps to land on the
    requested output times; otherwise every accepted step is recorded.
    """
    y = np.asarray(y0, dtype=float).copy()
    norm = np.abs(y).max()
    if not norm > 0 or not np.isfinite(norm):
        raise ConfigError("initial state must be finite and non-zero")
    y /= norm
    s = float(np.log(norm))
    t = float(t0)
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval.size and (t_eval[0] < t0 or t_eval[-1] > t_end or np.any(np.diff(t_eval) <= 0)):
            raise ConfigError("t_eval must be increasing and inside the integration range")
        targets = list(t_eval)
    else:
        targets = None

    out_t, out_u, out_s = [], [], []
    if targets is None or (targets and targets[0] == t):
        out_t.append(t), out_u.append(y.copy()), out_s.append(s)
        if targets:
            targets.pop(0)

    h = h0 if h0 is not None else 1e-3 * max(1.0, abs(t_end - t0)) * rtol ** 0.2
    k = np.empty((7, y.size))
    k[0] = rhs(t, y)
    n_steps = n_rejected = 0
    while t < t_end:
        if n_steps + n_rejected > max_steps:
            raise StiffnessError(f"step budget exhausted at t={t:g}")
        stop = t_end if not targets else min(targets[0], t_end)
        h = min(h, stop - t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise StiffnessError(f"step size underflow at t={t:g} (h={h:.2e})")
        for i in range(1, 7):
            k[i] = rhs(t + _C[i] * h, y + h * (np.dot(_A[i], k[:i])))
        y_new = y + h * (_B5 @ k)
        err_vec = h * (_E @ k)
        scale = rtol * np.maximum(np.maximum(np.abs(y), np.abs(y_new)), np.abs(y).max())
        err = np.sqrt(np.mean((err_vec / scale) ** 2))
        if not np.isfinite(err):
            raise StiffnessError(f"non-finite error estimate at t={t:g}")
        if err <= 1.0:
            t_new = t + h
            if stop - t_new < 1e-12 * max(1.0, abs(stop)):
                t_new = stop
            n_steps += 1
            nrm = np.abs(y_new).max()
            y = y_new / nrm
            s += float(np.log(nrm))
            k[0] = k[6] / nrm  # FSAL, rescaled with the state
            t = t_new
            if targets is None:
                out_t.append(t), out_u.append(y.copy()), out_s.append(s)
            elif targets and t == targets[0]:
                out_t.append(t), out_u.append(y.copy()), out_s.append(s)
                targets.pop(0)
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            h *= min(5.0, max(0.2, fac))
        else:
            n_rejected += 1
            h *= max(0.2, 0.9 * err ** -0.2)
    return RenormalizedSolution(np.array(out_t), np.array(out_u), np.array(out_s),
                                n_steps, n_rejected)


@dataclass(frozen=True)
class MomentSeries:
    """Moment trajectory stored as M(t) = exp(S(t)) U(t), |U|_inf = 1.

    ``unit`` has shape (n, 6) in the ordering of :data:`COMPONENTS`.
    """

    times: np.ndarray
    unit: np.ndarray
    log_scale: np.ndarray
    K1: float
    K2: float
    K3: float
    b: float
    include_k2: bool = True

    def component(self, name: str) -> np.ndarray:
        """Unit-scaled component, e.g. ``component("M13")``."""
        return self.unit[:, COMPONENTS.index(name)]

    def unit_matrices(self) -> np.ndarray:
        return np.array([_to_matrix(u) for u in self.unit])

    def log_abs(self, name: str) -> np.ndarray:
        """log |M_ij(t)| without overflow."""
        with np.errstate(divide="ignore"):
            return self.log_scale + np.log(np.abs(self.component(name)))

    def ratio(self, num: str, den: str) -> np.ndarray:
        """Elementwise M_num / M_den; NaN where the denominator vanishes."""
        d = self.component(den)
        if np.all(np.abs(d) < 1e-300):
            raise ToleranceError(f"{den} vanishes along the whole series")
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(np.abs(d) < 1e-300, np.nan, self.component(num) / d)

    def energy_residual(self) -> np.ndarray:
        """Scaled residual of rho d(eps)/dt + M:L (rho = 1, eps = tr M / 2)."""
        from .flow_kinematics import energy_balance_residual

        a = shear_velocity_gradient(0.0, self.K1, self.K2 if self.include_k2 else 0.0, self.K3)
        mats = self.unit_matrices()
        eps = 0.5 * np.trace(mats, axis1=1, axis2=2)
        return energy_balance_residual(self.times, mats, a, 1.0, eps, log_scale=self.log_scale)

    def csv_rows(self):
        for t, s, u in zip(self.times, self.log_scale, self.unit):
            row = {"t": t, "log_scale": s}
            row.update({f"U{name[1:]}": v for name, v in zip(COMPONENTS, u)})
            yield row


def integrate_moments(M0, K1: float, K2: float, K3: float, b: float, T: float,
                      rtol: float = 1e-9, include_k2: bool = True, t_eval=None) -> MomentSeries:
    """Integrate the moment system from t = 0 to T with log-scale tracking."""
    M0 = np.asarray(M0, dtype=float)
    if M0.shape != (3, 3) or not np.allclose(M0, M0.T):
        raise ConfigError("initial moment matrix must be symmetric 3x3")
    if np.linalg.eigvalsh(M0).min() <= 0:
        raise ConfigError("initial moment matrix must be positive definite")
    if b <= 0 or T <= 0:
        raise ConfigError("need b > 0 and T > 0")
    a0, a1 = linear_system(K1, K2, K3, b, include_k2)
    sol = integrate_renormalized(lambda t, y: (a0 + t * a1) @ y, _to_vector(M0), T,
                                 rtol=rtol, t_eval=t_eval)
    return MomentSeries(sol.times, sol.unit, sol.log_scale, K1, K2, K3, b, include_k2)


@dataclass(frozen=True)
class GrowthFit:
    """Least-squares fit S(t) = c1 t^p + c2 t + c3 over a window."""

    c1: float
    c2: float
    c3: float
    exponent: float
    residual_rms: float
    condition: float
    n_points: int

    def predicted_c1(self, K1: float, K3: float, b: float) -> float:
        return leading_growth_coefficient(K1, K3, b)


def leading_growth_coefficient(K1: float, K3: float, b: float) -> float:
    """(3/5)(4b/3)^{1/3} (K1 K3)^{2/3}."""
    return 0.6 * (4.0 * b / 3.0) ** (1.0 / 3.0) * abs(K1 * K3) ** (2.0 / 3.0)


def subleading_growth_rate(b: float) -> float:
    """Coefficient of the linear term in S(t), -4b/3."""
    return -4.0 * b / 3.0


def fit_growth(series: MomentSeries, window: tuple[float, float],
               exponent: float = 5.0 / 3.0, max_condition: float = 1e10) -> GrowthFit:
    """Fit log-scale S(t) on the window by QR least squares.

    The regressors are rescaled to unit max on the window before the QR
    factorisation; the condition number of the triangular factor decides
    whether the window is usable.
    """
    lo, hi = window
    sel = (series.times >= lo) & (series.times <= hi)
    t = series.times[sel]
    if t.size < 4 or hi <= lo:
        raise WindowError(f"window [{lo}, {hi}] holds only {t.size} samples")
    y = series.log_scale[sel] + np.log(np.abs(series.unit[sel]).max(axis=1))
    cols = np.column_stack([t ** exponent, t, np.ones_like(t)])
    colscale = np.abs(cols).max(axis=0)
    q, r = np.linalg.qr(cols / colscale)
    cond = np.linalg.cond(r)
    if not np.isfinite(cond) or cond > max_condition:
        raise WindowError(f"regressors nearly collinear on window (condition {cond:.2e})")
    coef = np.linalg.solve(r, q.T @ y) / colscale
    resid = y - cols @ coef
    return GrowthFit(float(coef[0]), float(coef[1]), float(coef[2]), exponent,
                     float(np.sqrt(np.mean(resid ** 2))), float(cond), int(t.size))


def moment_ratio_diagnostics(series: MomentSeries) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Measured vs predicted moment ratios along the series.

    With S0'(t) = (4b/3)^{1/3} (K1 K3)^{2/3} t^{2/3} the leading-order
    predictions are M13/M11 ~ S0'/(2 t K1 K3), M33/M13 ~ S0'/(t K1 K3),
    M11/M33 ~ 3 S0'/(2b) and M22/M11 ~ 2b/(3 S0').  Returns a mapping from
    ratio name to (measured, predicted) arrays.
    """
    t = series.times
    kk = series.K1 * series.K3
    b = series.b
    if np.any(t <= 0):
        t = np.where(t <= 0, np.nan, t)
    ds = (4.0 * b / 3.0) ** (1.0 / 3.0) * abs(kk) ** (2.0 / 3.0) * t ** (2.0 / 3.0)
    return {
        "M13/M11": (series.ratio("M13", "M11"), ds / (2.0 * t * kk)),
        "M33/M13": (series.ratio("M33", "M13"), ds / (t * kk)),
        "M11/M33": (series.ratio("M11", "M33"), 1.5 * ds / b),
        "M22/M11": (series.ratio("M22", "M11"), 2.0 * b / (3.0 * ds)),
    }
