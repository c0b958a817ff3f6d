"""Event-driven Monte Carlo for the toy collision model.

Each particle carries its density rho and the time of its last collision;
its clock is zeta = 1 + t - t_last.  Collisions arrive as a Poisson process
with rate eps(t) and map rho -> rho * zeta, zeta -> 1.  In the
self-consistent mode eps(t) = E[(rho zeta)^{-a}] is re-estimated from the
ensemble at synchronisation times and extrapolated linearly in between;
collisions are then generated by thinning against the value at the sync
point (eps is non-increasing there, so it bounds the rate).

Particles are split into fixed-size chunks, each with its own counter-based
random stream derived from the seed and the chunk index.  Chunks may run on
several threads; reductions always run in chunk order, so results do not
depend on the thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .profiles import InitialProfile

DEFAULT_CHUNK = 1 << 16


def _chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


@dataclass
class _Chunk:
    rng: np.random.Generator
    rho: np.ndarray
    t_last: np.ndarray
    hazard: np.ndarray          # residual Exp(1) clock, in units of the bounding rate
    collisions: int = 0

    def advance(self, t0: float, t1: float, rate0: float, slope: float) -> None:
        """Move from t0 to t1 under rate rate0 + slope (t - t0), slope <= 0.

        Candidate events come from the constant bounding rate rate0 and are
        accepted with probability rate(t)/rate0.
        """
        if rate0 <= 0 or t1 <= t0:
            return
        cap = rate0 * (t1 - t0)
        active = np.flatnonzero(self.hazard < cap)
        h = self.hazard
        while active.size:
            tc = t0 + h[active] / rate0
            if slope != 0.0:
                accept_p = np.maximum(rate0 + slope * (tc - t0), 0.0) / rate0
                accept = self.rng.random(active.size) < accept_p
            else:
                accept = np.ones(active.size, dtype=bool)
            hit = active[accept]
            if hit.size:
                tch = tc[accept]
                self.rho[hit] *= 1.0 + tch - self.t_last[hit]
                self.t_last[hit] = tch
                self.collisions += int(hit.size)
            h[active] += self.rng.exponential(1.0, active.size)
            active = active[h[active] < cap]
        h -= cap

    def observables(self, t: float, a: float) -> tuple[float, float]:
        """Sums of (rho zeta)^{-a} and of -a (rho zeta)^{-a-1} rho."""
        x = self.rho * (1.0 + t - self.t_last)
        p = np.exp(-a * np.log(x))
        return float(np.sum(p)), float(-a * np.sum(p * self.rho / x))

    def product(self, t: float) -> np.ndarray:
        return self.rho * (1.0 + t - self.t_last)


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float


@dataclass
class MCRecord:
    t: float
    mass: float
    epsilon: float
    moments: dict[float, MomentEstimate]
    collisions: int


@dataclass
class MCTrajectory:
    mode: str
    n_particles: int
    seed: int
    records: list[MCRecord] = field(default_factory=list)

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def epsilon(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.records])

    def moment(self, order: float) -> tuple[np.ndarray, np.ndarray]:
        vals = np.array([r.moments[order].value for r in self.records])
        errs = np.array([r.moments[order].stderr for r in self.records])
        return vals, errs

    def csv_rows(self):
        for r in self.records:
            row = {"t": r.t, "mass": r.mass, "epsilon": r.epsilon, "collisions": r.collisions}
            for order, est in sorted(r.moments.items()):
                row[f"moment_beta_{order:g}"] = est.value
                row[f"se_beta_{order:g}"] = est.stderr
            yield row


def batch_means(x: np.ndarray, weights: np.ndarray | None = None) -> MomentEstimate:
    """Weighted mean with a batch-means standard error over ~sqrt(n) batches."""
    n = x.size
    if n == 0:
        raise ConfigError("empty ensemble")
    w = np.ones(n) if weights is None else weights
    nb = max(2, int(math.isqrt(n)))
    xs = np.array_split(x * w, nb)
    ws = np.array_split(w, nb)
    means = np.array([a.sum() / b.sum() for a, b in zip(xs, ws)])
    value = float(np.sum(x * w) / np.sum(w))
    return MomentEstimate(value, float(means.std(ddof=1) / math.sqrt(nb)))


def empirical_moment(products: np.ndarray, order: float,
                     weights: np.ndarray | None = None) -> MomentEstimate:
    """E[(rho zeta)^order] with a batch-means standard error."""
    return batch_means(np.exp(order * np.log(products)), weights)


def _sync_interval(t: float) -> float:
    return max(0.1, 0.01 * t)


def simulate(n_particles: int, profile: InitialProfile, T: float, seed: int,
             record_times, orders=(1.0,), mode: str = "constant", epsilon: float = 0.05,
             a: float = 0.5, threads: int | None = None, chunk_size: int = DEFAULT_CHUNK,
             ) -> MCTrajectory:
    """Run the particle model to time T, recording moments at ``record_times``.

    mode "constant": fixed rate ``epsilon``.  mode "selfconsistent": rate
    E[(rho zeta)^{-a}] from the ensemble, refreshed every max(0.1, 0.01 t)
    and at every record time.  The mass (sum of the equal particle weights)
    is exactly one throughout.
    """
    if n_particles < 4:
        raise ConfigError("need at least four particles")
    if mode not in ("constant", "selfconsistent"):
        raise ConfigError(f"unknown mode {mode!r}")
    if mode == "selfconsistent" and not 0 < a < 1:
        raise ConfigError("self-consistent mode needs 0 < a < 1")
    if mode == "constant" and not epsilon >= 0:
        raise ConfigError("epsilon must be non-negative")
    record_times = sorted(float(t) for t in record_times)
    if not record_times or record_times[0] < 0 or record_times[-1] > T:
        raise ConfigError("record times must lie in [0, T]")
    threads = threads or int(os.environ.get("HOMOFLOW_THREADS", "1"))

    chunks = []
    for c, start in enumerate(range(0, n_particles, chunk_size)):
        size = min(chunk_size, n_particles - start)
        rng = _chunk_rng(seed, c)
        x = profile.sample_log_density(rng, size)
        chunks.append(_Chunk(rng, np.exp(x), np.zeros(size), rng.exponential(1.0, size)))

    traj = MCTrajectory(mode, n_particles, seed)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def run_all(fn):
        if pool is None:
            return [fn(ch) for ch in chunks]
        return list(pool.map(fn, chunks))

    def rate_at(t):
        if mode == "constant":
            return epsilon, 0.0
        parts = run_all(lambda ch: ch.observables(t, a))
        s0 = math.fsum(p[0] for p in parts) / n_particles
        s1 = math.fsum(p[1] for p in parts) / n_particles
        return s0, min(s1, 0.0)

    def record(t):
        x = np.concatenate([ch.product(t) for ch in chunks])
        eps_now = rate_at(t)[0]
        moments = {float(o): empirical_moment(x, o) for o in orders}
        traj.records.append(MCRecord(t, 1.0, eps_now, moments,
                                     sum(ch.collisions for ch in chunks)))

    try:
        t = 0.0
        pending = list(record_times)
        while pending and pending[0] == 0.0:
            record(0.0)
            pending.pop(0)
        while pending:
            t_next = min(t + _sync_interval(t), pending[0]) if mode == "selfconsistent" else pending[0]
            r0, slope = rate_at(t)
            t_start = t
            run_all(lambda ch: ch.advance(t_start, t_next, r0, slope))
            t = t_next
            if t == pending[0]:
                record(t)
                pending.pop(0)
    finally:
        if pool is not None:
            pool.shutdown()
    return traj


@dataclass(frozen=True)
class EpsilonTraceFit:
    constant: float
    target: float
    stderr: float


def epsilon_trace_check(traj: MCTrajectory, a: float, window: tuple[float, float] | None = None
                        ) -> EpsilonTraceFit:
    """Mean of t*eps(t) over the records in ``window`` (default: the last decade)."""
    t = traj.times()
    eps = traj.epsilon()
    if window is None:
        window = (0.1 * t[-1], t[-1])
    sel = (t >= window[0]) & (t <= window[1]) & (t > 0)
    if sel.sum() < 1:
        raise ConfigError("no records in the epsilon window")
    vals = t[sel] * eps[sel]
    err = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
    return EpsilonTraceFit(float(vals.mean()), 1.0 - a, err)
