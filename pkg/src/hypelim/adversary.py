"""Byzantine agents: message-forging strategies and the f-local check."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .graphs import DirectedGraph

STREAM_ADVERSARY = 1


def _prob_vector(v, m=None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or (m is not None and v.size != m):
        raise ValueError(f"belief must be a vector of length {m}")
    if np.any(v < 0) or not np.all(np.isfinite(v)) or abs(v.sum() - 1.0) > 1e-9:
        raise ValueError(f"{v.tolist()} is not a probability vector")
    return v / v.sum()


def _log(v):
    with np.errstate(divide="ignore"):
        return np.log(v)


@dataclass(frozen=True)
class FixedBelief:
    """Honest until ``start_time``, then the same fixed vector to every out-neighbour."""

    belief: tuple
    start_time: int = 0

    def __post_init__(self):
        object.__setattr__(self, "belief", tuple(_prob_vector(self.belief).tolist()))


@dataclass(frozen=True)
class RandomBelief:
    """A fresh uniform point of the simplex per out-neighbour per step."""

    seed: int = 0


@dataclass(frozen=True)
class PerEdge:
    """Possibly different vectors per out-neighbour, from ``start_time`` on."""

    beliefs: Mapping[int, tuple]
    start_time: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "beliefs",
            {int(k): tuple(_prob_vector(v).tolist()) for k, v in dict(self.beliefs).items()},
        )

    def __hash__(self):
        return hash((tuple(sorted(self.beliefs.items())), self.start_time))


@dataclass(frozen=True)
class SilentConform:
    """Follows the honest rule; the degenerate attack."""


Strategy = Union[FixedBelief, RandomBelief, PerEdge, SilentConform]
STRATEGY_NAMES = {
    FixedBelief: "fixed_belief",
    RandomBelief: "random_belief",
    PerEdge: "per_edge",
    SilentConform: "silent_conform",
}


@dataclass(frozen=True)
class AdversarySpec:
    strategies: Mapping[int, Strategy] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "strategies", {int(k): v for k, v in dict(self.strategies).items()})

    def __hash__(self):
        return hash(tuple(sorted(self.strategies.items())))

    @property
    def byzantine(self) -> frozenset:
        return frozenset(self.strategies)

    def regular(self, n: int) -> list[int]:
        return [i for i in range(n) if i not in self.strategies]

    def validate(self, g: DirectedGraph, m: int):
        """Raise ValueError if the spec cannot run on graph ``g`` with ``m`` hypotheses."""
        for i, s in self.strategies.items():
            if not 0 <= i < g.n:
                raise ValueError(f"byzantine agent {i} out of range")
            if isinstance(s, FixedBelief):
                _prob_vector(s.belief, m)
            elif isinstance(s, PerEdge):
                missing = sorted(g.out_neighbors(i) - set(s.beliefs))
                if missing:
                    raise ValueError(f"per_edge strategy of agent {i} misses out-neighbours {missing}")
                for v in s.beliefs.values():
                    _prob_vector(v, m)
        if len(self.strategies) >= g.n:
            raise ValueError("at least one agent must be regular")

    def streams(self, seed: int) -> dict[int, np.random.Generator]:
        out = {}
        for i, s in self.strategies.items():
            key = (STREAM_ADVERSARY, i, s.seed if isinstance(s, RandomBelief) else 0)
            out[i] = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))
        return out


def f_local(spec: AdversarySpec, g: DirectedGraph, f: int) -> bool:
    bad = spec.byzantine
    return all(
        len(g.in_neighbors(i) & bad) <= f for i in range(g.n) if i not in bad
    )


def forge_messages(spec: AdversarySpec, sender: int, t: int, honest_belief,
                   rng: np.random.Generator | None, out_neighbors) -> dict[int, np.ndarray]:
    """Log-belief vector that ``sender`` delivers to each out-neighbour at time ``t``."""
    if sender not in spec.strategies:
        raise ValueError(f"agent {sender} is not byzantine")
    strategy = spec.strategies[sender]
    honest = np.asarray(honest_belief, dtype=float)
    targets = sorted(out_neighbors)
    if isinstance(strategy, SilentConform):
        return {j: honest.copy() for j in targets}
    if isinstance(strategy, FixedBelief):
        if t < strategy.start_time:
            return {j: honest.copy() for j in targets}
        forged = _log(np.asarray(strategy.belief))
        return {j: forged.copy() for j in targets}
    if isinstance(strategy, PerEdge):
        if t < strategy.start_time:
            return {j: honest.copy() for j in targets}
        return {j: _log(np.asarray(strategy.beliefs[j])) for j in targets}
    if isinstance(strategy, RandomBelief):
        m = honest.size
        return {j: _log(rng.dirichlet(np.ones(m))) for j in targets}
    raise TypeError(f"unknown strategy {strategy!r}")
