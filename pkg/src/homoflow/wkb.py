"""Cycle-based WKB growth prediction for linear systems dy/dt = (A0 + t A1) y.

Each coupling "y_i depends on y_j" becomes a directed edge j -> i.  A
coefficient a + b t contributes a thin edge (weight a) and a thick edge
(weight b).  For a closed cycle with L edges of which T are thick, the
WKB ansatz y ~ exp(S) with S ~ c t^{1 + T/L} balances the product C0 of
the edge weights against S'^L, giving

    c = |C0|^{1/L} Re(omega) / (1 + T/L),   omega^L = sign(C0).

The cycle with the largest T/L dominates the growth.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, NoCycleError, ResourceCapError

DEFAULT_CYCLE_CAP = 10_000


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    weight: float
    thick: bool


@dataclass(frozen=True)
class CouplingGraph:
    """Directed multigraph; at most one thin and one thick edge per (source, target)."""

    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        seen = set()
        for e in self.edges:
            key = (e.source, e.target, e.thick)
            if key in seen:
                kind = "thick" if e.thick else "thin"
                raise ConfigError(
                    f"duplicate {kind} edge {self.nodes[e.source]} -> {self.nodes[e.target]}")
            seen.add(key)

    def out_edges(self, node: int) -> list[Edge]:
        return [e for e in self.edges if e.source == node]


def graph_from_linear_system(names: Sequence[str], a0, a1, zero_tol: float = 0.0,
                             keep_diagonal: bool = False) -> CouplingGraph:
    """Coupling graph of dy/dt = (A0 + t A1) y.

    Thin self-couplings (diagonal of A0) only shift the linear part of S and
    are dropped unless ``keep_diagonal``; thick self-couplings are kept.
    """
    a0 = np.asarray(a0, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    n = len(names)
    if a0.shape != (n, n) or a1.shape != (n, n):
        raise ConfigError("coefficient matrices do not match the node list")
    edges = []
    for i in range(n):
        for j in range(n):
            if abs(a0[i, j]) > zero_tol and (i != j or keep_diagonal):
                edges.append(Edge(j, i, float(a0[i, j]), False))
            if abs(a1[i, j]) > zero_tol:
                edges.append(Edge(j, i, float(a1[i, j]), True))
    return CouplingGraph(tuple(names), tuple(edges))


def parse_graph(text: str) -> CouplingGraph:
    """Parse lines ``target source weight [thin|thick]`` ('#' starts a comment).

    Each line declares the coupling d(target)/dt += weight * source, or
    weight * t * source when marked thick; the edge runs source -> target.
    """
    nodes: list[str] = []
    index: dict[str, int] = {}
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ConfigError(f"line {lineno}: expected 'target source weight [thin|thick]'")
        kind = parts[3].lower() if len(parts) == 4 else "thin"
        if kind not in ("thin", "thick"):
            raise ConfigError(f"line {lineno}: edge kind must be thin or thick, got {parts[3]!r}")
        try:
            weight = float(parts[2])
        except ValueError:
            raise ConfigError(f"line {lineno}: bad weight {parts[2]!r}") from None
        if not np.isfinite(weight):
            raise ConfigError(f"line {lineno}: weight must be finite")
        for name in parts[:2]:
            if name not in index:
                index[name] = len(nodes)
                nodes.append(name)
        edges.append(Edge(index[parts[1]], index[parts[0]], weight, kind == "thick"))
    return CouplingGraph(tuple(nodes), tuple(edges))


def format_graph(graph: CouplingGraph) -> str:
    lines = []
    for e in graph.edges:
        kind = "thick" if e.thick else "thin"
        lines.append(f"{graph.nodes[e.target]} {graph.nodes[e.source]} {e.weight!r} {kind}")
    return "\n".join(lines) + "\n"


def _node_cycles(graph: CouplingGraph) -> Iterable[tuple[int, ...]]:
    """Elementary cycles as node sequences, each listed once from its smallest node."""
    n = len(graph.nodes)
    succ = [sorted({e.target for e in graph.edges if e.source == v}) for v in range(n)]
    for start in range(n):
        stack = [(start, iter(succ[start]))]
        path = [start]
        on_path = {start}
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                on_path.discard(path.pop())
                continue
            if nxt == start:
                yield tuple(path)
            elif nxt > start and nxt not in on_path:
                path.append(nxt)
                on_path.add(nxt)
                stack.append((nxt, iter(succ[nxt])))


def enumerate_cycles(graph: CouplingGraph, cap: int = DEFAULT_CYCLE_CAP) -> list[tuple[Edge, ...]]:
    """All elementary cycles as edge tuples, parallel thin/thick edges expanded."""
    by_pair: dict[tuple[int, int], list[Edge]] = {}
    for e in graph.edges:
        by_pair.setdefault((e.source, e.target), []).append(e)
    cycles = []
    for nodes in _node_cycles(graph):
        hops = [by_pair[(nodes[k], nodes[(k + 1) % len(nodes)])] for k in range(len(nodes))]
        for choice in itertools.product(*hops):
            cycles.append(tuple(choice))
            if len(cycles) > cap:
                raise ResourceCapError(f"more than {cap} cycles; raise the cap or prune the graph")
    return cycles


@dataclass(frozen=True)
class CycleReport:
    nodes: tuple[str, ...]
    length: int
    thick_count: int
    weight_product: float
    exponent: float
    amplitude: float
    omega: complex

    @property
    def ratio(self) -> float:
        return self.thick_count / self.length

    @property
    def leading_coefficient(self) -> float:
        """Coefficient c in S(t) ~ c t^exponent."""
        return self.amplitude * self.omega.real

    def describe(self) -> str:
        return "->".join(self.nodes + self.nodes[:1])


def growth_root(product: float, length: int) -> complex:
    """Root of omega^L = sign(product) with the largest real part (Im >= 0 on ties)."""
    if product == 0:
        raise ConfigError("cycle with zero weight product")
    offset = 0.0 if product > 0 else np.pi
    roots = [np.exp(1j * (offset + 2 * np.pi * k) / length) for k in range(length)]
    return max(roots, key=lambda w: (round(w.real, 12), w.imag))


def analyse_cycle(graph: CouplingGraph, cycle: Sequence[Edge]) -> CycleReport:
    L = len(cycle)
    T = sum(e.thick for e in cycle)
    c0 = float(np.prod([e.weight for e in cycle]))
    exponent = 1.0 + T / L
    amplitude = abs(c0) ** (1.0 / L) / exponent
    nodes = tuple(graph.nodes[e.source] for e in cycle)
    return CycleReport(nodes, L, T, c0, exponent, amplitude, growth_root(c0, L))


def dominant_cycles(graph: CouplingGraph, cap: int = DEFAULT_CYCLE_CAP) -> list[CycleReport]:
    """Cycles with the largest thick fraction T/L, best leading coefficient first."""
    cycles = enumerate_cycles(graph, cap)
    if not cycles:
        raise NoCycleError("coupling graph has no cycles; no WKB growth prediction")
    reports = [analyse_cycle(graph, c) for c in cycles]
    best = max(r.ratio for r in reports)
    top = [r for r in reports if abs(r.ratio - best) < 1e-12]
    return sorted(top, key=lambda r: -r.leading_coefficient)


def predict_S(report: CycleReport, t) -> np.ndarray:
    """Leading WKB estimate c t^{1 + T/L} of log y(t)."""
    return report.leading_coefficient * np.asarray(t, dtype=float) ** report.exponent


def moment_system_graph(K1: float, K3: float, b: float) -> CouplingGraph:
    """Coupling graph of the shear moment system with K2 switched off."""
    from .collision_moments import COMPONENTS, linear_system

    a0, a1 = linear_system(K1, 0.0, K3, b, include_k2=False)
    return graph_from_linear_system(COMPONENTS, a0, a1, zero_tol=1e-15)
