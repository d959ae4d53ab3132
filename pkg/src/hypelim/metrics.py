"""Empirical rates, theoretical rate bounds and diagnostics computed from trajectories."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .engine import TrajectoryRecord
from .graphs import DirectedGraph, GraphSchedule, reachable_from
from .model import ObservationModel, log_ratio_bound, source_set
from .rules import ConsensusWeights, logsumexp

PROVENANCES = ("best_source", "reachable_source", "regular_source")
TAIL_FRACTION = 0.2
MIN_PROBE_SEEDS = 50


class IdentifiabilityWarning(UserWarning):
    pass


# --- empirical ------------------------------------------------------------------

def _false(record_or_model, theta):
    true = record_or_model.true_index
    if theta == true:
        raise ValueError("rejection rate is only defined for a false hypothesis")
    return theta


def rejection_rate(record: TrajectoryRecord, i: int, theta: int):
    """(t, q) for recorded t >= 1, with q = -log mu_{i,t}(theta) / t."""
    _false(record, theta)
    keep = record.times >= 1
    t = record.times[keep]
    return t, -record.log_actual[keep, i, theta] / t


def rejection_rates_at(record: TrajectoryRecord, t: int) -> np.ndarray:
    """q_{i,t}(theta) for every agent and hypothesis (the true column is meaningless)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return -record.log_actual_at(t) / t


def log_tv_error(record: TrajectoryRecord, regular_only: bool = False) -> np.ndarray:
    """log e_t over the recorded times, summing mu on false hypotheses."""
    agents = record.regular if regular_only else list(range(record.n))
    false = [p for p in range(record.m) if p != record.true_index]
    block = record.log_actual[:, agents][:, :, false]
    return logsumexp(block.reshape(len(record.times), -1), axis=1)


def tv_error(record: TrajectoryRecord, t: int, regular_only: bool = False) -> float:
    k = record.index_of(t)
    return float(np.exp(log_tv_error(record, regular_only)[k]))


def rate_from_log_errors(times, log_e, tail: float = TAIL_FRACTION) -> float:
    """min of -log e_t / t over the last ``tail`` fraction of the horizon."""
    times = np.asarray(times, dtype=float)
    log_e = np.asarray(log_e, dtype=float)
    horizon = times[-1]
    sel = (times >= 1) & (times >= (1.0 - tail) * horizon)
    if not sel.any():
        raise ValueError("tail window holds no time steps; increase the horizon")
    vals = -log_e[sel] / times[sel]
    return float(np.min(vals))  # -inf log errors give +inf, the "already exact" sentinel


def social_learning_rate(record: TrajectoryRecord, tail: float = TAIL_FRACTION,
                         regular_only: bool = False) -> float:
    return rate_from_log_errors(record.times, log_tv_error(record, regular_only), tail)


# --- theoretical ------------------------------------------------------------------

@dataclass
class Bounds:
    provenance: str
    true_index: int
    per_hypothesis: dict          # false theta -> bound (network-wide for best_source/regular_source)
    per_agent: np.ndarray | None  # (n, m) for reachable_source, nan on the true column
    network: float                # bound on the rate of social learning
    warnings: list = field(default_factory=list)

    def for_agent(self, i: int, theta: int) -> float:
        if self.per_agent is not None:
            return float(self.per_agent[i, theta])
        return self.per_hypothesis[theta]

    def to_dict(self):
        return {
            "provenance": self.provenance,
            "per_hypothesis": {int(k): v for k, v in self.per_hypothesis.items()},
            "per_agent": None if self.per_agent is None else np.where(
                np.isnan(self.per_agent), None, self.per_agent).tolist(),
            "network": self.network,
            "warnings": self.warnings,
        }


def _static_graph(graph) -> DirectedGraph:
    if isinstance(graph, GraphSchedule):
        if not graph.is_static:
            raise ValueError("this bound needs a time-invariant graph")
        return graph.graph_at(0)
    return graph


def theoretical_bounds(model: ObservationModel, graph=None, mode: str = "best_source",
                       regular=None) -> Bounds:
    """Asymptotic lower bounds on the rejection rates of every false hypothesis.

    ``best_source``: best source KL over the whole network (jointly strongly
    connected graphs).  ``reachable_source``: per agent, best KL among sources
    with a path to it (static graph).  ``regular_source``: worst KL among regular
    sources (LFRHE, static graph).
    """
    if mode not in PROVENANCES:
        raise ValueError(f"mode must be one of {PROVENANCES}")
    star = model.true_index
    false = [p for p in range(model.m) if p != star]
    notes = []
    per_h, per_agent = {}, None

    if mode == "reachable_source":
        g = _static_graph(graph)
        per_agent = np.full((model.n, model.m), np.nan)
    if mode == "regular_source":
        if regular is None:
            raise ValueError("regular_source bound needs the set of regular agents")
        regular = frozenset(regular)

    for theta in false:
        S = source_set(model, star, theta)
        if mode == "regular_source":
            S = S & regular
        if not S:
            notes.append(f"no source agent separates {model.hypotheses.names[theta]} from the truth")
            per_h[theta] = 0.0
            if per_agent is not None:
                per_agent[:, theta] = 0.0
            continue
        kls = {v: model.kl(v, star, theta) for v in S}
        if mode == "best_source":
            per_h[theta] = max(kls.values())
        elif mode == "regular_source":
            per_h[theta] = min(kls.values())
        else:
            reach = {v: reachable_from(g, {v}) for v in S}
            for i in range(model.n):
                vals = [k for v, k in kls.items() if i in reach[v]]
                per_agent[i, theta] = max(vals) if vals else 0.0
            per_h[theta] = float(np.min(per_agent[:, theta]))

    for note in notes:
        warnings.warn(note, IdentifiabilityWarning, stacklevel=2)
    network = min(per_h.values()) if per_h else 0.0
    return Bounds(mode, star, per_h, per_agent, network, notes)


def baseline_reference_rates(model: ObservationModel, weights: ConsensusWeights) -> dict:
    """sum_i nu_i K_i(theta*, theta) with nu the (uniform) eigenvector centrality."""
    if not weights.is_doubly_stochastic(1e-9):
        raise ValueError("reference rates assume doubly stochastic weights")
    if weights.n != model.n:
        raise ValueError("weights and model disagree on n")
    nu = weights.centrality()
    star = model.true_index
    return {
        theta: float(np.dot(nu, model.kl_matrix[:, star, theta]))
        for theta in range(model.m) if theta != star
    }


@dataclass
class RateReport:
    provenance: str
    horizon: int
    q_final: np.ndarray         # (n, m) rejection rates at the horizon
    bounds: np.ndarray          # (n, m) bound per agent and hypothesis, nan on the truth
    tolerance: float
    agents: list

    @property
    def passed(self) -> np.ndarray:
        ok = np.ones_like(self.q_final, dtype=bool)
        for i in self.agents:
            for theta in range(self.q_final.shape[1]):
                if not np.isnan(self.bounds[i, theta]):
                    ok[i, theta] = self.q_final[i, theta] >= self.bounds[i, theta] - self.tolerance
        return ok

    @property
    def all_passed(self) -> bool:
        return bool(self.passed[self.agents].all())


def rate_report(record: TrajectoryRecord, bounds: Bounds, tolerance: float = 0.02) -> RateReport:
    n, m = record.n, record.m
    table = np.full((n, m), np.nan)
    for i in range(n):
        for theta in bounds.per_hypothesis:
            table[i, theta] = bounds.for_agent(i, theta)
    agents = record.regular
    return RateReport(bounds.provenance, record.horizon, rejection_rates_at(record, record.horizon),
                      table, tolerance, agents)


# --- delay diagnostic -----------------------------------------------------------------

def best_source(model: ObservationModel, theta: int) -> int | None:
    """Lowest-index source agent with the largest K_v(theta*, theta)."""
    S = sorted(source_set(model, model.true_index, theta))
    if not S:
        return None
    kls = [model.kl(v, model.true_index, theta) for v in S]
    return S[int(np.argmax(kls))]


def delay_recursion(schedule: GraphSchedule, v: int, horizon: int) -> np.ndarray:
    """c_{i,t} for t = 0..horizon: 0 at ``v``, otherwise 1 + min over the inclusive neighbourhood."""
    n = schedule.n
    c = np.full((horizon + 1, n), np.inf)
    c[0, v] = 0.0
    for t in range(horizon):
        mask = schedule.graph_at(t).in_mask | np.eye(n, dtype=bool)
        c[t + 1] = 1.0 + np.where(mask, c[t][None, :], np.inf).min(axis=1)
        c[t + 1, v] = 0.0
    return c


@dataclass
class DelayDiagnostic:
    T: int
    c: dict            # theta -> (horizon+1, n) array of delays
    bound: int         # 2 (n - 1) T
    start: int         # (n - 1) T, first step at which the bound must hold
    violations: list   # (theta, t, agent, value)

    @property
    def holds(self) -> bool:
        return not self.violations


def delay_diagnostic(schedule: GraphSchedule, sources: dict, T: int | None, horizon: int) -> DelayDiagnostic:
    """Run the delay recursion for each hypothesis from its reference source and check
    c_{i,t} <= 2(n-1)T for every t >= (n-1)T."""
    if T is None:
        raise ValueError("delay diagnostic unavailable without a connectivity window T")
    n = schedule.n
    bound, start = 2 * (n - 1) * T, (n - 1) * T
    cs, violations = {}, []
    for theta, v in sources.items():
        c = delay_recursion(schedule, v, horizon)
        cs[theta] = c
        for t in range(start, horizon + 1):
            for i in np.flatnonzero(c[t] > bound):
                violations.append((theta, t, int(i), float(c[t, i])))
    return DelayDiagnostic(T, cs, bound, start, violations)


# --- concentration probe ------------------------------------------------------------

@dataclass
class ExceedanceCurve:
    times: np.ndarray
    fraction: np.ndarray
    threshold: float
    reference_slope: float   # eps^2 / (8 L^2); displayed, not asserted
    seeds: int

    def to_rows(self):
        return [
            {"t": int(t), "fraction": float(f), "threshold": self.threshold,
             "reference_slope": self.reference_slope, "seeds": self.seeds}
            for t, f in zip(self.times, self.fraction)
        ]


def exceedance_fraction(q: np.ndarray, threshold: float) -> np.ndarray:
    """Column-wise fraction of rows with q <= threshold; ``q`` is (seeds, times)."""
    return np.mean(np.asarray(q) <= threshold, axis=0)


def concentration_probe(records, model: ObservationModel, theta: int, eps: float,
                        grid, agent: int) -> ExceedanceCurve:
    """Fraction of seeds whose rejection rate at each grid time sits eps below the best KL."""
    records = list(records)
    if len(records) < MIN_PROBE_SEEDS:
        raise ValueError(f"concentration probe needs at least {MIN_PROBE_SEEDS} seeds, got {len(records)}")
    _false(model, theta)
    kbar = theoretical_bounds(model, mode="best_source").per_hypothesis[theta]
    grid = np.asarray(list(grid), dtype=int)
    q = np.array([[-r.log_actual_at(int(t))[agent, theta] / t for t in grid] for r in records])
    L = log_ratio_bound(model)
    slope = eps**2 / (8 * L**2) if L > 0 else float("inf")
    return ExceedanceCurve(grid, exceedance_fraction(q, kbar - eps), kbar - eps, slope, len(records))


# --- per-run summaries ----------------------------------------------------------------

def summarize(record: TrajectoryRecord) -> dict:
    """Final beliefs and rates of one run, JSON-ready."""
    final = record.log_actual[-1]
    mu = np.exp(final)
    star = record.true_index
    return {
        "seed": record.seed,
        "rule": record.rule,
        "horizon": record.horizon,
        "digest": record.digest,
        "byzantine": sorted(record.byzantine),
        "final_mu": mu.tolist(),
        "final_q": (-final / record.horizon).tolist(),
        "mu_true": mu[:, star].tolist(),
        "social_learning_rate": social_learning_rate(record, regular_only=bool(record.byzantine)),
    }
