"""Directed (possibly time-varying) communication graphs and structural certificates.

Edge ``(i, j)`` means agent ``i`` transmits to agent ``j``; ``N_i`` is therefore the
set of in-neighbours of ``i``.  Self-loops are never stored.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import networkx as nx
import numpy as np

from .model import ObservationModel, globally_identifiable, hypothesis_pairs, source_set


@dataclass(frozen=True)
class DirectedGraph:
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        edges = frozenset((int(i), int(j)) for i, j in self.edges if i != j)
        for i, j in edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def undirected(cls, n: int, pairs: Iterable[tuple[int, int]]) -> DirectedGraph:
        pairs = list(pairs)
        return cls(n, frozenset(pairs) | frozenset((j, i) for i, j in pairs))

    @classmethod
    def complete(cls, n: int) -> DirectedGraph:
        return cls(n, frozenset((i, j) for i in range(n) for j in range(n) if i != j))

    @classmethod
    def star(cls, n: int, center: int = 0) -> DirectedGraph:
        return cls.undirected(n, [(center, j) for j in range(n) if j != center])

    @cached_property
    def _in(self) -> tuple[frozenset, ...]:
        buckets = [set() for _ in range(self.n)]
        for i, j in self.edges:
            buckets[j].add(i)
        return tuple(frozenset(b) for b in buckets)

    @cached_property
    def _out(self) -> tuple[frozenset, ...]:
        buckets = [set() for _ in range(self.n)]
        for i, j in self.edges:
            buckets[i].add(j)
        return tuple(frozenset(b) for b in buckets)

    def _check(self, i: int):
        if not 0 <= i < self.n:
            raise IndexError(f"agent {i} out of range for n={self.n}")

    def in_neighbors(self, i: int) -> frozenset:
        self._check(i)
        return self._in[i]

    def out_neighbors(self, i: int) -> frozenset:
        self._check(i)
        return self._out[i]

    @cached_property
    def in_mask(self) -> np.ndarray:
        """Boolean (n, n) array with ``mask[i, j]`` true iff j is an in-neighbour of i."""
        mask = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            mask[j, i] = True
        mask.setflags(write=False)
        return mask

    def is_symmetric(self) -> bool:
        return all((j, i) in self.edges for i, j in self.edges)

    def degree(self, i: int) -> int:
        return len(self.in_neighbors(i))

    def union(self, other: DirectedGraph) -> DirectedGraph:
        if other.n != self.n:
            raise ValueError("cannot union graphs of different size")
        return DirectedGraph(self.n, self.edges | other.edges)

    def induced(self, keep: Sequence[int]) -> DirectedGraph:
        """Subgraph on ``keep``, relabelled 0..len(keep)-1 in the given order."""
        relabel = {old: new for new, old in enumerate(keep)}
        return DirectedGraph(
            len(keep),
            frozenset((relabel[i], relabel[j]) for i, j in self.edges if i in relabel and j in relabel),
        )

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True)
class GraphSchedule:
    """G[t] for every t >= 0.

    ``static``: one graph forever.  ``periodic``: ``graphs[t % len(graphs)]``.
    ``explicit``: ``graphs[t]`` while defined, then the last graph forever.
    """

    kind: str
    graphs: tuple[DirectedGraph, ...]

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if self.kind not in ("static", "periodic", "explicit"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.graphs:
            raise ValueError("schedule needs at least one graph")
        if self.kind == "static" and len(self.graphs) != 1:
            raise ValueError("static schedule holds exactly one graph")
        if len({g.n for g in self.graphs}) != 1:
            raise ValueError("all graphs in a schedule must share n")

    @classmethod
    def static(cls, g: DirectedGraph) -> GraphSchedule:
        return cls("static", (g,))

    @classmethod
    def periodic(cls, graphs: Sequence[DirectedGraph]) -> GraphSchedule:
        return cls("periodic", tuple(graphs))

    @classmethod
    def explicit(cls, graphs: Sequence[DirectedGraph]) -> GraphSchedule:
        return cls("explicit", tuple(graphs))

    @property
    def n(self) -> int:
        return self.graphs[0].n

    @property
    def period(self) -> int:
        return len(self.graphs) if self.kind == "periodic" else 1

    @property
    def is_static(self) -> bool:
        return self.kind == "static" or len(set(self.graphs)) == 1

    def graph_at(self, t: int) -> DirectedGraph:
        if t < 0:
            raise ValueError("time must be non-negative")
        if self.kind == "static":
            return self.graphs[0]
        if self.kind == "periodic":
            return self.graphs[t % len(self.graphs)]
        return self.graphs[min(t, len(self.graphs) - 1)]

    def union_over(self, start: int, stop: int) -> DirectedGraph:
        """Union graph over the half-open interval ``[start, stop)``."""
        edges = set()
        for t in range(start, stop):
            edges |= self.graph_at(t).edges
        return DirectedGraph(self.n, frozenset(edges))


def in_neighbors(schedule: GraphSchedule, i: int, t: int) -> frozenset:
    return schedule.graph_at(t).in_neighbors(i)


def strongly_connected(g: DirectedGraph) -> bool:
    return nx.is_strongly_connected(g.to_networkx())


def default_horizon(schedule: GraphSchedule, T: int) -> int:
    """A horizon after which every length-T window repeats one already seen."""
    if schedule.kind == "explicit":
        # Past the explicit list every window is the last graph alone.
        return (math.ceil(len(schedule.graphs) / T) + 1) * T
    return math.lcm(schedule.period, T)


def jointly_strongly_connected(schedule: GraphSchedule, T: int, horizon: int | None = None) -> bool:
    """True iff the union over every window [rT, (r+1)T) with (r+1)T <= horizon is strongly connected."""
    if T < 1:
        raise ValueError("window length T must be >= 1")
    if horizon is None:
        horizon = default_horizon(schedule, T)
    if horizon < T:
        raise ValueError(f"horizon {horizon} shorter than window {T}")
    return all(
        strongly_connected(schedule.union_over(r * T, (r + 1) * T)) for r in range(horizon // T)
    )


def reachable_from(g: DirectedGraph, sources) -> frozenset:
    sources = frozenset(sources)
    if not sources:
        raise ValueError("sources must be non-empty")
    seen = set(sources)
    queue = deque(sources)
    while queue:
        u = queue.popleft()
        for v in g.out_neighbors(u):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return frozenset(seen)


def source_components(g: DirectedGraph) -> list[frozenset]:
    """Strongly connected components with no incoming edge from outside."""
    cond = nx.condensation(g.to_networkx())
    comps = [
        frozenset(cond.nodes[c]["members"]) for c in cond.nodes if cond.in_degree(c) == 0
    ]
    return sorted(comps, key=min)


def r_reachable(g: DirectedGraph, C, r: int) -> bool:
    C = frozenset(C)
    if not C:
        raise ValueError("C must be non-empty")
    return any(len(g.in_neighbors(i) - C) >= r for i in C)


class Robustness(NamedTuple):
    robust: bool
    witness: frozenset  # nodes never activated; empty when robust


def strongly_r_robust_wrt(g: DirectedGraph, S, r: int) -> Robustness:
    """Bootstrap percolation from ``S`` with threshold ``r``.

    A node activates once it has at least ``r`` active in-neighbours.  The graph is
    strongly r-robust w.r.t. S iff everything activates; otherwise the inactive
    remainder is a subset of V \\ S that is not r-reachable.
    """
    S = frozenset(S)
    if not S:
        raise ValueError("S must be non-empty")
    if r < 1:
        raise ValueError("r must be a positive integer")
    active = set(S)
    changed = True
    while changed:
        changed = False
        for i in range(g.n):
            if i not in active and len(g.in_neighbors(i) & active) >= r:
                active.add(i)
                changed = True
    inactive = frozenset(range(g.n)) - active
    return Robustness(not inactive, inactive)


# --- certification ---------------------------------------------------------------

MODES = ("min_rule_static", "min_rule_timevarying", "lfrhe")


@dataclass
class PairCheck:
    pair: tuple[int, int]
    sources: frozenset
    holds: bool
    reason: str = ""
    witness: frozenset = frozenset()

    def to_dict(self):
        return {
            "pair": list(self.pair),
            "sources": sorted(self.sources),
            "holds": self.holds,
            "reason": self.reason,
            "witness": sorted(self.witness),
        }


@dataclass
class CertificationReport:
    mode: str
    params: dict
    pairs: list[PairCheck]
    network_checks: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def verdict(self) -> bool:
        return all(p.holds for p in self.pairs) and all(
            c["holds"] for c in self.network_checks.values()
        )

    def to_dict(self):
        return {
            "mode": self.mode,
            "params": self.params,
            "verdict": "pass" if self.verdict else "fail",
            "pairs": [p.to_dict() for p in self.pairs],
            "network_checks": self.network_checks,
            "notes": self.notes,
        }

    def to_text(self, names=None) -> str:
        label = (lambda k: names[k]) if names else str
        params = ", ".join(f"{k}={v}" for k, v in self.params.items())
        lines = [f"certification mode: {self.mode}" + (f" ({params})" if params else "")]
        for pc in self.pairs:
            p, q = pc.pair
            status = "ok  " if pc.holds else "FAIL"
            line = f"  [{status}] ({label(p)}, {label(q)}) sources={sorted(pc.sources)}"
            if pc.reason:
                line += f": {pc.reason}"
            lines.append(line)
        for name, chk in self.network_checks.items():
            status = "ok  " if chk["holds"] else "FAIL"
            lines.append(f"  [{status}] {name}: {chk.get('detail', '')}")
        for note in self.notes:
            lines.append(f"  note: {note}")
        lines.append(f"verdict: {'PASS' if self.verdict else 'FAIL'}")
        return "\n".join(lines)


def certify(
    model: ObservationModel,
    schedule: GraphSchedule,
    mode: str,
    T: int | None = None,
    f: int | None = None,
    horizon: int | None = None,
) -> CertificationReport:
    """Check the structural hypotheses under which the chosen rule is guaranteed to learn.

    ``min_rule_timevarying`` needs global identifiability plus joint strong
    connectivity with window ``T``; ``min_rule_static`` needs every V \\ S(p, q)
    reachable from S(p, q); ``lfrhe`` needs strong (2f+1)-robustness w.r.t. every
    source set.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if model.n != schedule.n:
        raise ValueError(f"model has {model.n} agents but graph has {schedule.n}")
    if mode in ("min_rule_static", "lfrhe") and not schedule.is_static:
        raise ValueError(f"mode {mode} requires a time-invariant graph")

    g = schedule.graph_at(0)
    everyone = frozenset(range(model.n))
    pairs = []
    params = {}
    network = {}
    notes = []

    if mode == "lfrhe":
        if f is None or f < 0:
            raise ValueError("lfrhe certification needs f >= 0")
        params["f"] = f
        r = 2 * f + 1
    if mode == "min_rule_timevarying":
        if T is None or T < 1:
            raise ValueError("time-varying certification needs window T >= 1")
        params["T"] = T

    for p, q in hypothesis_pairs(model.m):
        S = source_set(model, p, q)
        if not S:
            pairs.append(PairCheck((p, q), S, False, "empty source set (not globally identifiable)"))
            continue
        if mode == "min_rule_timevarying":
            pairs.append(PairCheck((p, q), S, True))
        elif mode == "min_rule_static":
            missed = everyone - reachable_from(g, S)
            pairs.append(
                PairCheck(
                    (p, q), S, not missed,
                    f"agents {sorted(missed)} unreachable from sources" if missed else "",
                    missed,
                )
            )
        else:
            res = strongly_r_robust_wrt(g, S, r)
            pairs.append(
                PairCheck(
                    (p, q), S, res.robust,
                    "" if res.robust else f"{sorted(res.witness)} is not {r}-reachable",
                    res.witness,
                )
            )

    if mode == "min_rule_timevarying":
        h = default_horizon(schedule, T) if horizon is None else horizon
        ok = jointly_strongly_connected(schedule, T, h)
        network["joint_strong_connectivity"] = {
            "holds": ok,
            "detail": f"every window of length {T} up to t={h}",
        }
        if schedule.kind == "explicit":
            notes.append(f"explicit schedule: windows certified only up to t={h}")
    elif mode == "min_rule_static":
        bad = [
            sorted(c) for c in source_components(g)
            if not globally_identifiable(model, c)
        ]
        network["source_components_identifiable"] = {
            "holds": not bad,
            "detail": "every source component is globally identifiable"
            if not bad else f"components {bad} are not globally identifiable",
        }
    return CertificationReport(mode, params, pairs, network, notes)

