"""The two simulation setups used to exercise the rules (0-based agent indices).

Example 1: binary hypotheses on a star around agent 0, which is the only informative
agent.  Example 2: three hypotheses on the nine-node layered graph, with agent 4 as
the byzantine agent once the attack is switched on.
"""
from __future__ import annotations

from fractions import Fraction as F

from .adversary import AdversarySpec, FixedBelief
from .engine import SimulationConfig
from .graphs import DirectedGraph, GraphSchedule
from .model import AgentLikelihood, HypothesisSet, ObservationModel


def example1_model(n: int = 5, true_index: int = 1) -> ObservationModel:
    informative = AgentLikelihood.binary([0.7, 0.5])
    blank = AgentLikelihood.binary([0.5, 0.5])
    return ObservationModel(
        HypothesisSet(("theta1", "theta2"), true_index),
        (informative,) + (blank,) * (n - 1),
    )


def example1_graph(n: int = 5) -> DirectedGraph:
    return DirectedGraph.star(n, center=0)


def example2_model(true_index: int = 0) -> ObservationModel:
    groups = [
        (F(3, 4), F(1, 3), F(1, 3)),
        (F(2, 5), F(2, 5), F(1, 7)),
        (F(1, 2), F(1, 2), F(5, 6)),
    ]
    agents = []
    for first in groups:
        agents += [AgentLikelihood.binary([float(x) for x in first])] * 3
    return ObservationModel(HypothesisSet(("theta1", "theta2", "theta3"), true_index), tuple(agents))


def example2_graph() -> DirectedGraph:
    top, mid, bottom = (0, 1, 2), (3, 4, 5), (6, 7, 8)
    pairs = [(a, b) for a in top for b in mid] + [(b, c) for b in mid for c in bottom]
    return DirectedGraph.undirected(9, pairs)


EXAMPLE2_ADVERSARY = 4
ATTACK_START = 20


def example2_attack(true_index: int, m: int = 3) -> AdversarySpec:
    """Low belief (0.1) on the truth, the rest spread evenly over false hypotheses."""
    belief = [0.9 / (m - 1)] * m
    belief[true_index] = 0.1
    return AdversarySpec({EXAMPLE2_ADVERSARY: FixedBelief(tuple(belief), start_time=ATTACK_START)})


def example1_config(n: int = 5, rule: str = "min_rule", horizon: int = 10_000,
                    seed: int = 0, stride: int = 1) -> SimulationConfig:
    return SimulationConfig(
        model=example1_model(n),
        schedule=GraphSchedule.static(example1_graph(n)),
        rule=rule,
        f=1 if rule == "lfrhe" else None,
        horizon=horizon,
        seed=seed,
        stride=stride,
    )


def example2_config(true_index: int = 0, rule: str = "lfrhe", attack: bool = True,
                    horizon: int = 5_000, seed: int = 0, stride: int = 1, f: int = 1) -> SimulationConfig:
    return SimulationConfig(
        model=example2_model(true_index),
        schedule=GraphSchedule.static(example2_graph()),
        rule=rule,
        f=f if rule == "lfrhe" else None,
        adversary=example2_attack(true_index) if attack else AdversarySpec(),
        horizon=horizon,
        seed=seed,
        stride=stride,
    )
