"""Kinematics of affine (homoenergetic) flows v(x, t) = L(t) x.

L(t) = (I + t A)^{-1} A solves dL/dt + L^2 = 0 with L(0) = A.  This module
evaluates L, the density and drift offset carried by the flow, checks the
energy balance of a moment series, and classifies A by the large-time
behaviour of L(t).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ClassificationError, ConfigError, HorizonError, ToleranceError

ZERO_SV_TOL = 1e-12      # relative threshold on singular values of A^3
PARAM_ZERO_TOL = 1e-8    # shear parameters below this count as absent
PROBE_TIMES = (1e2, 1e3, 1e4)
HORIZON_SEARCH_MAX = 1e15


@dataclass(frozen=True)
class DeformationMatrix:
    """Real 3x3 matrix A with its existence horizon for L(t)."""

    entries: np.ndarray
    horizon: float = field(init=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.shape != (3, 3):
            raise ConfigError(f"deformation matrix must be 3x3, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ConfigError("deformation matrix has non-finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "horizon", find_horizon(a))

    @classmethod
    def parse(cls, text: str) -> "DeformationMatrix":
        """Parse nine numbers (row-major) separated by spaces, commas or semicolons."""
        tokens = text.replace(",", " ").replace(";", " ").split()
        if len(tokens) != 9:
            raise ConfigError(f"expected 9 matrix entries, got {len(tokens)}")
        try:
            values = [float(tok) for tok in tokens]
        except ValueError as exc:
            raise ConfigError(f"bad matrix entry: {exc}") from None
        return cls(np.array(values).reshape(3, 3))

    def serialize(self) -> str:
        return " ".join(repr(float(v)) for v in self.entries.ravel())


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, DeformationMatrix):
        return a.entries
    return np.asarray(a, dtype=float)


def zero_multiplicity(a) -> int:
    """Algebraic multiplicity of the eigenvalue 0, i.e. dim ker A^3.

    Counting small eigenvalues directly is unreliable for defective A: a
    Jordan block of size k splits its zero eigenvalue into values of size
    (roundoff)^(1/k).  The rank of A^3 does not suffer from this.
    """
    a = _as_matrix(a)
    scale = max(1.0, np.abs(a).max()) ** 3
    s = np.linalg.svd(np.linalg.matrix_power(a, 3), compute_uv=False)
    return int(np.sum(s <= ZERO_SV_TOL * scale))


def _nonzero_eigenvalues(a):
    eig = np.linalg.eigvals(a)
    n0 = zero_multiplicity(a)
    return eig[np.argsort(np.abs(eig))][n0:]


def find_horizon(a) -> float:
    """First t > 0 with det(I + tA) = 0, or inf.

    Candidates are -1/lambda over the real negative non-zero eigenvalues
    of A (zero is decided by :func:`zero_multiplicity`, as in the
    classifier).  A sign change of det(I + tA) near the smallest
    candidate is bracketed by doubling the offset and refined by bisection;
    even-multiplicity roots leave no sign change and keep the eigenvalue
    estimate.  Searching det alone over very long times is unreliable: for
    nearly nilpotent A roundoff flips its sign around t ~ 1e8.
    """
    a = _as_matrix(a)
    eye = np.eye(3)

    def det(t):
        with np.errstate(divide="ignore", invalid="ignore"):   # exactly singular at the root
            return np.linalg.det(eye + t * a)

    eig = _nonzero_eigenvalues(a)
    real_neg = eig[(np.abs(eig.imag) <= 1e-9 * np.abs(eig)) & (eig.real < 0)]
    if real_neg.size == 0:
        return np.inf
    guess = float(np.min(-1.0 / real_neg.real))
    if guess > HORIZON_SEARCH_MAX:
        return np.inf

    offset = 1e-12 * guess
    while offset < 1e-3 * guess:
        lo, hi = guess - offset, guess + offset
        if det(lo) > 0.0 and det(hi) < 0.0:
            break
        offset *= 2.0
    else:
        return guess
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if det(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def evolve_L(a, t: float) -> np.ndarray:
    """L(t) = (I + tA)^{-1} A for 0 <= t < horizon."""
    dm = a if isinstance(a, DeformationMatrix) else DeformationMatrix(a)
    if t < 0:
        raise ConfigError("time must be non-negative")
    if not t < dm.horizon:
        raise HorizonError(f"t={t:g} is beyond the horizon {dm.horizon:g}")
    m = np.eye(3) + t * dm.entries
    cond = np.linalg.cond(m)
    if cond > 1e13:
        raise HorizonError(f"I + tA is numerically singular at t={t:g}")
    left = np.linalg.solve(m, dm.entries)
    # (I + tA)^{-1} commutes with A; check the solve honoured that up to
    # the accuracy the conditioning allows.
    right = np.linalg.solve(m.T, dm.entries.T).T
    scale = 1.0 + np.abs(left).max()
    if np.abs(left - right).max() > 1e-12 * cond * scale:
        raise ToleranceError("commutation check failed for (I+tA)^{-1}A")
    return left


def density_evolution(a, rho0: float, t: float) -> float:
    """Density rho0 / det(I + tA), cross-checked against exp(-int Tr L)."""
    dm = a if isinstance(a, DeformationMatrix) else DeformationMatrix(a)
    if not t < dm.horizon:
        raise HorizonError(f"t={t:g} is beyond the horizon {dm.horizon:g}")
    closed = rho0 / np.linalg.det(np.eye(3) + t * dm.entries)
    if t == 0:
        return float(closed)
    integral, err = integrate.quad(lambda s: np.trace(evolve_L(dm, s)), 0.0, t,
                                   epsabs=1e-13, epsrel=1e-12, limit=200)
    via_trace = rho0 * np.exp(-integral)
    if abs(via_trace - closed) > 1e-8 * abs(closed) + 1e-300:
        raise ToleranceError(
            f"density cross-check failed: {closed!r} vs {via_trace!r} (quad err {err:.1e})")
    return float(closed)


def drift_offset(a, b0, t: float) -> np.ndarray:
    """Drift vector B(t) = (I + tA)^{-1} B0 of the affine field L x + B."""
    dm = a if isinstance(a, DeformationMatrix) else DeformationMatrix(a)
    if not t < dm.horizon:
        raise HorizonError(f"t={t:g} is beyond the horizon {dm.horizon:g}")
    return np.linalg.solve(np.eye(3) + t * dm.entries, np.asarray(b0, dtype=float))


def energy_balance_residual(times, moments, a, rho, eps, log_scale=None) -> np.ndarray:
    """Residual rho d(eps)/dt + sum_ij M_ij L_ij along a moment series.

    ``moments`` has shape (n, 3, 3), ``rho`` and ``eps`` shape (n,).  When
    ``log_scale`` is given the moments and eps are stored divided by
    exp(log_scale) and the returned residual carries the same factor.
    Derivatives use second-order finite differences on the (possibly
    non-uniform) time grid.
    """
    times = np.asarray(times, dtype=float)
    moments = np.asarray(moments, dtype=float)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), times.shape)
    eps = np.asarray(eps, dtype=float)
    if times.size < 3:
        raise ConfigError("need at least three samples for the energy residual")
    deps = np.gradient(eps, times, edge_order=2)
    if log_scale is not None:
        deps = deps + np.gradient(np.asarray(log_scale, float), times, edge_order=2) * eps
    work = np.array([np.sum(m * evolve_L(a, t)) for m, t in zip(moments, times)])
    return rho * deps + work


class FlowCase(enum.Enum):
    HOMOGENEOUS_DILATATION = "HomogeneousDilatation"
    CYLINDRICAL_DILATATION = "CylindricalDilatation"
    CYLINDRICAL_DILATATION_SHEAR = "CylindricalDilatationShear"
    PLANAR_SHEAR = "PlanarShear"
    SIMPLE_SHEAR_DECAYING_PLANAR = "SimpleShearDecayingPlanar"
    SIMPLE_SHEAR = "SimpleShear"
    COMBINED_ORTHOGONAL_SHEAR = "CombinedOrthogonalShear"


@dataclass(frozen=True)
class FlowClassification:
    """Asymptotic class of L(t) in an orthonormal frame.

    ``frame`` holds the basis vectors e1, e2, e3 as columns (right-handed);
    ``residual`` is max over the probe times of
    t^2 * |frame^T L(t) frame - template(t)| above the roundoff floor.
    """

    case: FlowCase
    parameters: dict
    frame: np.ndarray
    residual: float

    @property
    def case_label(self) -> str:
        return self.case.value

    def template(self, t: float) -> np.ndarray:
        return asymptotic_template(self.case, self.parameters, t)

    def csv_row(self) -> dict:
        row = {"case_label": self.case_label}
        for key in ("K", "K1", "K2", "K3"):
            row[key] = self.parameters.get(key, float("nan"))
        row["residual"] = self.residual
        return row


def asymptotic_template(case: FlowCase, p: dict, t: float) -> np.ndarray:
    """Leading large-t form of L(t) in the canonical frame."""
    z = np.zeros((3, 3))
    if case is FlowCase.HOMOGENEOUS_DILATATION:
        return np.eye(3) / t
    if case in (FlowCase.CYLINDRICAL_DILATATION, FlowCase.CYLINDRICAL_DILATATION_SHEAR):
        z[0, 0] = z[1, 1] = 1.0 / t
        z[0, 2] = p.get("K", 0.0) / t
        return z
    if case is FlowCase.PLANAR_SHEAR:
        z[1, 2] = p["K"] / t
        z[2, 2] = 1.0 / t
        return z
    if case is FlowCase.SIMPLE_SHEAR_DECAYING_PLANAR:
        k1, k2, k3 = p["K1"], p["K2"], p["K3"]
        z[0, 1] = k2 + k1 * k3 / t
        z[0, 2] = k1 / t
        z[2, 1] = k3 / t
        z[2, 2] = 1.0 / t
        return z
    if case is FlowCase.SIMPLE_SHEAR:
        z[0, 1] = p["K"]
        return z
    if case is FlowCase.COMBINED_ORTHOGONAL_SHEAR:
        k1, k2, k3 = p["K1"], p["K2"], p["K3"]
        z[0, 1] = k3
        z[0, 2] = k2 - t * k1 * k3
        z[1, 2] = k1
        return z
    raise ValueError(case)


def _unit(v):
    n = np.linalg.norm(v)
    return v / n


def _complete_frame(e1, e2):
    e1 = _unit(e1)
    e2 = _unit(e2 - (e2 @ e1) * e1)
    return np.column_stack([e1, e2, np.cross(e1, e2)])


def _spectral_split(a, n0):
    """Projector onto V = range(A^n0) along W = ker(A^n0), plus bases of V, W."""
    p = np.linalg.matrix_power(a, n0)
    u, s, vt = np.linalg.svd(p)
    r = 3 - n0
    v_basis = u[:, :r]
    w_basis = vt[r:].T
    basis = np.column_stack([v_basis, w_basis])
    sel = np.diag([1.0] * r + [0.0] * n0)
    proj_v = basis @ sel @ np.linalg.inv(basis)
    return proj_v, v_basis, w_basis, u[:, r:]


def classify_flow(a) -> FlowClassification:
    """Classify A by the large-time behaviour of L(t) = (I+tA)^{-1}A.

    The zero eigenvalues of A (counted with algebraic multiplicity n0)
    decide the case.  With V the invariant subspace of the non-zero
    eigenvalues and W the generalised kernel, L(t) = N - tN^2 + P_V/t + O(t^-2)
    where P_V projects onto V along W and N = A restricted to W.  The frame
    and parameters are read off these two operators and then verified
    against L(t) at large probe times.
    """
    dm = a if isinstance(a, DeformationMatrix) else DeformationMatrix(a)
    am = dm.entries
    if np.isfinite(dm.horizon):
        raise HorizonError(f"L(t) blows up at t={dm.horizon:g}; no large-time class")
    n0 = zero_multiplicity(am)

    if n0 == 0:
        case, params, frame = FlowCase.HOMOGENEOUS_DILATATION, {}, np.eye(3)
    elif n0 == 3:
        case, params, frame = _classify_nilpotent(am)
    else:
        proj_v, v_basis, w_basis, v_perp = _spectral_split(am, n0)
        nil = am @ (np.eye(3) - proj_v)
        if n0 == 1:
            e3 = v_perp[:, 0]
            c = proj_v @ e3
            k = np.linalg.norm(c)
            e1 = c / k if k > PARAM_ZERO_TOL else v_basis[:, 0]
            frame = np.column_stack([e1, np.cross(e3, e1), e3])
            pv = frame.T @ proj_v @ frame
            k = pv[0, 2]
            if abs(k) > PARAM_ZERO_TOL:
                case = FlowCase.CYLINDRICAL_DILATATION_SHEAR
            else:
                case, k = FlowCase.CYLINDRICAL_DILATATION, 0.0
            params = {"K": float(k)}
        elif np.abs(nil).max() <= PARAM_ZERO_TOL * (1 + np.abs(am).max()):
            e3 = _unit(np.cross(w_basis[:, 0], w_basis[:, 1]))
            d = e3 - proj_v @ e3
            k = np.linalg.norm(d)
            e2 = -d / k if k > PARAM_ZERO_TOL else w_basis[:, 0]
            frame = np.column_stack([np.cross(e2, e3), e2, e3])
            pv = frame.T @ proj_v @ frame
            case, params = FlowCase.PLANAR_SHEAR, {"K": float(pv[1, 2])}
        else:
            u, _, _ = np.linalg.svd(nil)
            e1 = u[:, 0]
            v = v_basis[:, 0]
            c_vec = v - (v @ e1) * e1
            e3 = _unit(c_vec)
            frame = np.column_stack([e1, np.cross(e3, e1), e3])
            pv = frame.T @ proj_v @ frame
            # fix the sign freedom of the frame so that K1, K3 >= 0
            if pv[0, 2] < 0:
                frame = frame * np.array([1.0, -1.0, -1.0])
                pv = frame.T @ proj_v @ frame
            if pv[2, 1] < 0:
                frame = frame * np.array([-1.0, 1.0, -1.0])
                pv = frame.T @ proj_v @ frame
            nf = frame.T @ nil @ frame
            case = FlowCase.SIMPLE_SHEAR_DECAYING_PLANAR
            params = {"K1": float(pv[0, 2]), "K2": float(nf[0, 1]), "K3": float(pv[2, 1])}

    residual = _verify_template(am, case, params, frame)
    return FlowClassification(case, params, frame, residual)


def _classify_nilpotent(am):
    u, s, vt = np.linalg.svd(am)
    scale = max(s[0], 1.0)
    rank = int(np.sum(s > PARAM_ZERO_TOL * scale))
    if rank == 0:
        raise ClassificationError("A = 0: no flow, no asymptotic class")
    if rank == 1:
        frame = _complete_frame(u[:, 0], vt[0])
        return FlowCase.SIMPLE_SHEAR, {"K": float(s[0])}, frame
    a2 = am @ am
    u2, _, _ = np.linalg.svd(a2)
    e1 = u2[:, 0]
    range_a = u[:, :2]
    cand = range_a @ (range_a.T @ np.eye(3))
    # pick the column of the range projector least aligned with e1
    resid = cand - np.outer(e1, e1 @ cand)
    e2 = resid[:, np.argmax(np.linalg.norm(resid, axis=0))]
    frame = _complete_frame(e1, e2)
    af = frame.T @ am @ frame
    # sign freedom: make K3 and K1 non-negative (e3 = e1 x e2 throughout)
    if af[0, 1] < 0:
        frame = frame * np.array([1.0, -1.0, -1.0])
        af = frame.T @ am @ frame
    if af[1, 2] < 0:
        frame = frame * np.array([-1.0, -1.0, 1.0])
        af = frame.T @ am @ frame
    params = {"K1": float(af[1, 2]), "K2": float(af[0, 2]), "K3": float(af[0, 1])}
    return FlowCase.COMBINED_ORTHOGONAL_SHEAR, params, frame


def _verify_template(am, case, params, frame) -> float:
    """Return max t^2 |L - template| over the probe times.

    A correct template leaves an O(t^-2) remainder, so t^2 * error stays
    bounded; a wrong one shows up as growth of that product beyond the
    roundoff floor.  The floor (set by the conditioning of I + tA) is
    subtracted so exact templates report zero.
    """
    scaled = []
    for t in PROBE_TIMES:
        lt = frame.T @ evolve_L(am, t) @ frame
        tmpl = asymptotic_template(case, params, t)
        err = np.abs(lt - tmpl).max()
        cond = np.linalg.cond(np.eye(3) + t * am)
        floor = 1e-13 * cond * (1.0 + np.abs(tmpl).max())
        if scaled and err > max(10.0 * scaled[0] / t**2, floor):
            raise ClassificationError(
                f"template {case.value} does not fit L(t) at t={t:g} (error {err:.2e})")
        scaled.append(max(err - floor, 0.0) * t * t)
    return float(max(scaled))
