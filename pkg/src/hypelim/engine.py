"""Seeded synchronous simulation of the learning rules."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rules
from .adversary import AdversarySpec, forge_messages
from .graphs import DirectedGraph, GraphSchedule
from .model import ObservationModel, sample_signal_block, signal_streams

RECORDABLE = frozenset({"beliefs", "local", "signals"})


class ConfigValidationError(ValueError):
    pass


class SimulationError(RuntimeError):
    """A belief invariant broke mid-run."""


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    model: ObservationModel
    schedule: GraphSchedule
    rule: str = "min_rule"
    f: int | None = None
    adversary: AdversarySpec = field(default_factory=AdversarySpec)
    horizon: int = 1000
    seed: int = 0
    priors: np.ndarray | None = None  # None means uniform
    stride: int = 1
    record: frozenset = RECORDABLE

    def validate(self):
        def bad(name, why):
            raise ConfigValidationError(f"{name}: {why}")

        if self.horizon < 1:
            bad("horizon", "must be >= 1")
        if self.stride < 1:
            bad("stride", "must be >= 1")
        if not 0 <= self.seed < 2**64:
            bad("seed", "must be a 64-bit non-negative integer")
        if self.rule not in rules.RULES:
            bad("rule", f"unknown rule {self.rule!r}; expected one of {rules.RULES}")
        if self.model.n != self.schedule.n:
            bad("graph", f"{self.schedule.n} nodes but the model has {self.model.n} agents")
        if self.rule == "lfrhe":
            if self.f is None or self.f < 0:
                bad("rule.f", "lfrhe needs an integer f >= 0")
            if not self.schedule.is_static:
                bad("graph", "lfrhe is only supported on a time-invariant graph")
        if self.rule in ("linear", "loglinear"):
            for g in set(self.schedule.graphs):
                if not g.is_symmetric():
                    bad("graph", f"{self.rule} baseline needs undirected graphs (lazy Metropolis)")
        if not RECORDABLE >= set(self.record):
            bad("record", f"unknown series {sorted(set(self.record) - RECORDABLE)}")
        if self.priors is not None:
            p = np.asarray(self.priors, dtype=float)
            if p.shape != (self.model.n, self.model.m):
                bad("priors", f"expected shape {(self.model.n, self.model.m)}, got {p.shape}")
            if np.any(p <= 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
                bad("priors", "each row must be strictly positive and sum to 1")
        try:
            self.adversary.validate(self._union_graph(), self.model.m)
        except ValueError as exc:
            bad("adversary", str(exc))

    def _union_graph(self) -> DirectedGraph:
        g = self.schedule.graphs[0]
        for h in self.schedule.graphs[1:]:
            g = g.union(h)
        return g

    def log_priors(self) -> np.ndarray:
        n, m = self.model.n, self.model.m
        if self.priors is None:
            return np.full((n, m), -np.log(m))
        return rules.log_normalize(np.log(np.asarray(self.priors, dtype=float)))

    def recorded_times(self) -> np.ndarray:
        times = list(range(0, self.horizon + 1, self.stride))
        if times[-1] != self.horizon:
            times.append(self.horizon)
        return np.array(times)

    def replace(self, **changes) -> SimulationConfig:
        from dataclasses import replace

        return replace(self, **changes)

    @property
    def digest(self) -> str:
        from .config import config_digest

        return config_digest(self)


@dataclass(eq=False)
class TrajectoryRecord:
    times: np.ndarray
    log_actual: np.ndarray | None   # (len(times), n, m)
    log_local: np.ndarray | None
    signals: np.ndarray | None      # (horizon, n); row t-1 holds the signals of step t
    byzantine: frozenset
    true_index: int
    seed: int
    rule: str
    digest: str

    @property
    def n(self) -> int:
        return self.log_actual.shape[1]

    @property
    def m(self) -> int:
        return self.log_actual.shape[2]

    @property
    def horizon(self) -> int:
        return int(self.times[-1])

    @property
    def regular(self) -> list[int]:
        return [i for i in range(self.n) if i not in self.byzantine]

    def index_of(self, t: int) -> int:
        k = int(np.searchsorted(self.times, t))
        if k >= len(self.times) or self.times[k] != t:
            raise KeyError(f"time {t} was not recorded (stride too coarse?)")
        return k

    def log_actual_at(self, t: int) -> np.ndarray:
        return self.log_actual[self.index_of(t)]


def _weights_for(g: DirectedGraph, cache: dict) -> rules.ConsensusWeights:
    if g not in cache:
        cache[g] = rules.lazy_metropolis_weights(g)
    return cache[g]


def run(config: SimulationConfig) -> TrajectoryRecord:
    """Run ``config.horizon`` synchronous rounds and return the recorded trajectory.

    Round t -> t+1: every agent draws its signal for t+1 and updates its local
    belief; byzantine agents forge their time-t messages; every agent then updates
    its actual belief from the time-t messages of its in-neighbours in G[t].
    Byzantine agents keep running the honest rule internally so that strategies
    which conform (or have not started attacking) can send the honest value.
    """
    config.validate()
    model, schedule = config.model, config.schedule
    n, m, horizon = model.n, model.m, config.horizon

    signals = sample_signal_block(model, signal_streams(config.seed, n), horizon)
    loglik = np.empty((horizon, n, m))
    for i, agent in enumerate(model.agents):
        loglik[:, i, :] = agent.log_table[:, signals[:, i]].T

    spec = config.adversary
    byzantine = sorted(spec.byzantine)
    regular = np.array([i not in spec.byzantine for i in range(n)])
    adv_streams = spec.streams(config.seed)

    times = config.recorded_times()
    slot = {int(t): k for k, t in enumerate(times)}
    keep_actual = "beliefs" in config.record
    keep_local = "local" in config.record
    rec_actual = np.empty((len(times), n, m)) if keep_actual else None
    rec_local = np.empty((len(times), n, m)) if keep_local else None

    local = config.log_priors()
    actual = local.copy()
    weight_cache: dict = {}

    def messages(t, g):
        """msgs[i, j] = what j delivers to i at time t; also the value recorded for byzantine j."""
        if not byzantine:
            return np.broadcast_to(actual[None], (n, n, m)), actual
        msgs = np.repeat(actual[None], n, axis=0)
        shown = actual.copy()
        for j in byzantine:
            outs = g.out_neighbors(j)
            forged = forge_messages(spec, j, t, actual[j], adv_streams[j], outs)
            for i, v in forged.items():
                msgs[i, j] = v
            if forged:
                shown[j] = forged[min(forged)]
        return msgs, shown

    def store(t, shown):
        k = slot.get(t)
        if k is None:
            return
        if keep_actual:
            rec_actual[k] = shown
        if keep_local:
            rec_local[k] = local

    for t in range(horizon):
        g = schedule.graph_at(t)
        mask = g.in_mask
        msgs, shown = messages(t, g)
        store(t, shown)

        local = rules.bayes_step(local, loglik[t])
        if config.rule == "min_rule":
            actual = rules.min_rule_step(msgs, mask, actual, local)
        elif config.rule == "lfrhe":
            actual = rules.lfrhe_step(msgs, mask, local, config.f)
        elif config.rule == "linear":
            actual = rules.linear_pool_step(msgs, _weights_for(g, weight_cache), actual, loglik[t])
        else:
            actual = rules.loglinear_pool_step(msgs, _weights_for(g, weight_cache), actual, loglik[t])
        _check_round(actual, local, regular, bool(byzantine), t + 1)

    _, shown = messages(horizon, schedule.graph_at(horizon))
    store(horizon, shown)

    return TrajectoryRecord(
        times=times,
        log_actual=rec_actual,
        log_local=rec_local,
        signals=signals if "signals" in config.record else None,
        byzantine=spec.byzantine,
        true_index=model.true_index,
        seed=config.seed,
        rule=config.rule,
        digest=config.digest,
    )


def _check_round(actual, local, regular, attacked, t):
    if np.isnan(actual).any() or np.isnan(local).any() or np.isposinf(actual).any():
        raise SimulationError(f"non-finite belief at t={t}")
    if not np.isfinite(local[regular]).all():
        raise SimulationError(f"local belief of a regular agent left the simplex interior at t={t}")
    # A forged zero may legitimately drive a regular agent's belief to exactly zero.
    if not attacked and not np.isfinite(actual).all():
        raise SimulationError(f"actual belief hit zero without any adversary at t={t}")


def _run_one(args):
    config, summarize = args
    record = run(config)
    return summarize(record) if summarize else record


def sweep(config: SimulationConfig, seeds: Sequence[int],
          summarize: Callable | None = None, workers: int = 1) -> list:
    """Independent runs over ``seeds``; results come back in seed order."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    jobs = [(config.replace(seed=int(s)), summarize) for s in seeds]
    if workers <= 1:
        return [_run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))
