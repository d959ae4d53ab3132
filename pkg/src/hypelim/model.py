"""Observation models: hypotheses, per-agent likelihood tables, signal sampling."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np

# KL below this many nats means "observationally equivalent".
KL_ZERO_TOL = 1e-12
# Rows within this distance of 1 are renormalized, anything further is rejected.
ROW_SUM_TOL = 1e-9

STREAM_SIGNALS = 0


class InvalidModelError(ValueError):
    pass


def _as_probability_row(p, name="row") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidModelError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise InvalidModelError(f"{name} has non-positive entries: {p.tolist()}")
    if abs(p.sum() - 1.0) > ROW_SUM_TOL:
        raise InvalidModelError(f"{name} sums to {p.sum():.12g}, not 1")
    return p


def kl_divergence(p, q) -> float:
    """KL divergence D(p || q) in nats between two strictly positive distributions."""
    p = _as_probability_row(p, "p")
    q = _as_probability_row(q, "q")
    if p.shape != q.shape:
        raise InvalidModelError(f"dimension mismatch: {p.size} vs {q.size}")
    return max(float(np.sum(p * np.log(p / q))), 0.0)


@dataclass(frozen=True)
class HypothesisSet:
    names: tuple[str, ...]
    true_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(str(x) for x in self.names))
        if len(self.names) < 2:
            raise InvalidModelError("need at least two hypotheses")
        if len(set(self.names)) != len(self.names):
            raise InvalidModelError(f"duplicate hypothesis labels: {self.names}")
        if not 0 <= self.true_index < len(self.names):
            raise InvalidModelError(f"true_index {self.true_index} out of range")

    @property
    def m(self) -> int:
        return len(self.names)

    def index(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < self.m:
                raise InvalidModelError(f"hypothesis index {label} out of range")
            return int(label)
        try:
            return self.names.index(label)
        except ValueError:
            raise InvalidModelError(f"unknown hypothesis {label!r}") from None

    def with_truth(self, true_index: int) -> HypothesisSet:
        return HypothesisSet(self.names, self.index(true_index))


@dataclass(frozen=True, eq=False)
class AgentLikelihood:
    """Signal likelihoods of one agent; row p of ``table`` is l_i(. | theta_p)."""

    signal_names: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "signal_names", tuple(str(s) for s in self.signal_names))
        table = np.array(self.table, dtype=float)
        if table.ndim != 2:
            raise InvalidModelError("likelihood table must be 2-d (hypotheses x signals)")
        if table.shape[1] != len(self.signal_names):
            raise InvalidModelError(
                f"table has {table.shape[1]} columns but {len(self.signal_names)} signals"
            )
        if len(set(self.signal_names)) != len(self.signal_names) or not self.signal_names:
            raise InvalidModelError(f"bad signal labels: {self.signal_names}")
        if not np.all(np.isfinite(table)) or np.any(table <= 0):
            raise InvalidModelError("likelihoods must be strictly positive")
        sums = table.sum(axis=1)
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        if np.any(bad):
            raise InvalidModelError(f"likelihood rows {np.flatnonzero(bad).tolist()} do not sum to 1")
        table = table / sums[:, None]
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @classmethod
    def binary(cls, p_first: Sequence[float], signals=("w1", "w2")) -> AgentLikelihood:
        """Two-signal agent given l(w1 | theta) for each hypothesis."""
        p = np.asarray(p_first, dtype=float)
        return cls(tuple(signals), np.column_stack([p, 1.0 - p]))

    @cached_property
    def log_table(self) -> np.ndarray:
        out = np.log(self.table)
        out.setflags(write=False)
        return out

    @cached_property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.table, axis=1)
        c[:, -1] = 1.0
        return c

    def row(self, p: int) -> np.ndarray:
        return self.table[p]

    def __eq__(self, other):
        if not isinstance(other, AgentLikelihood):
            return NotImplemented
        return self.signal_names == other.signal_names and np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash((self.signal_names, self.table.tobytes()))


@dataclass(frozen=True)
class ObservationModel:
    hypotheses: HypothesisSet
    agents: tuple[AgentLikelihood, ...]

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.agents:
            raise InvalidModelError("need at least one agent")
        for i, a in enumerate(self.agents):
            if a.table.shape[0] != self.hypotheses.m:
                raise InvalidModelError(
                    f"agent {i} has {a.table.shape[0]} rows, expected {self.hypotheses.m}"
                )

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def m(self) -> int:
        return self.hypotheses.m

    @property
    def true_index(self) -> int:
        return self.hypotheses.true_index

    def with_truth(self, true_index: int) -> ObservationModel:
        return ObservationModel(self.hypotheses.with_truth(true_index), self.agents)

    def subset(self, keep: Sequence[int]) -> ObservationModel:
        """Model restricted to ``keep`` (relabelled 0..len(keep)-1 in the given order)."""
        return ObservationModel(self.hypotheses, tuple(self.agents[i] for i in keep))

    def kl(self, i: int, p: int, q: int) -> float:
        """K_i(theta_p, theta_q)."""
        a = self.agents[i]
        return kl_divergence(a.row(p), a.row(q))

    @cached_property
    def kl_matrix(self) -> np.ndarray:
        """Array ``[i, p, q]`` of K_i(theta_p, theta_q)."""
        out = np.zeros((self.n, self.m, self.m))
        for i in range(self.n):
            for p in range(self.m):
                for q in range(self.m):
                    if p != q:
                        out[i, p, q] = self.kl(i, p, q)
        out.setflags(write=False)
        return out


def source_set(model: ObservationModel, p: int, q: int) -> frozenset[int]:
    """Agents whose marginals separate theta_p from theta_q."""
    p, q = model.hypotheses.index(p), model.hypotheses.index(q)
    if p == q:
        raise ValueError("source set needs two distinct hypotheses")
    return frozenset(i for i in range(model.n) if model.kl(i, p, q) > KL_ZERO_TOL)


def hypothesis_pairs(m: int):
    return combinations(range(m), 2)


def globally_identifiable(model: ObservationModel, subset=None) -> bool:
    if subset is None:
        subset = range(model.n)
    subset = frozenset(subset)
    if not subset:
        raise ValueError("subset must be non-empty")
    return all(source_set(model, p, q) & subset for p, q in hypothesis_pairs(model.m))


def log_ratio_bound(model: ObservationModel) -> float:
    """The constant L: largest |log l_i(w|p) - log l_i(w|q)| over the whole model."""
    best = 0.0
    for a in model.agents:
        lt = a.log_table
        best = max(best, float(np.max(lt.max(axis=0) - lt.min(axis=0))))
    return best


def signal_streams(seed: int, n: int) -> list[np.random.Generator]:
    """One independent generator per agent, derived from ``seed``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return [
        np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_SIGNALS, i)))
        for i in range(n)
    ]


def sample_from_cdf(cdf: np.ndarray, u) -> np.ndarray:
    """Inverse-CDF draw: index of the first cumulative mass strictly above ``u``."""
    return np.searchsorted(cdf, u, side="right")


def sample_signals(model: ObservationModel, streams: Sequence[np.random.Generator]) -> np.ndarray:
    """Draw one signal per agent from its row at the true hypothesis."""
    t = model.true_index
    return np.array(
        [sample_from_cdf(a.cdf[t], rng.random()) for a, rng in zip(model.agents, streams, strict=True)],
        dtype=np.int64,
    )


def sample_signal_block(model: ObservationModel, streams, count: int) -> np.ndarray:
    """``count`` consecutive calls of :func:`sample_signals`, stacked as (count, n)."""
    t = model.true_index
    cols = [sample_from_cdf(a.cdf[t], rng.random(count)) for a, rng in zip(model.agents, streams, strict=True)]
    return np.stack(cols, axis=1).astype(np.int64) if cols else np.zeros((count, 0), dtype=np.int64)
