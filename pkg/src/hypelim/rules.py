"""Belief-update rules, all in the log domain.

Each rule has a per-agent form taking an explicit inbox (the readable reference)
and a batched ``*_step`` form used by the engine.  A batched step takes a message
tensor ``msgs[i, j]`` holding what agent ``j`` sent to agent ``i`` this round, and
the in-neighbour mask of the round's graph; entries outside the mask are ignored.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graphs import DirectedGraph
from .model import AgentLikelihood

RULES = ("min_rule", "lfrhe", "linear", "loglinear")
NORM_TOL = 1e-9


class ProtocolError(ValueError):
    """A message does not have the shape the receiving agent expects."""


class UnsupportedBaselineError(ValueError):
    pass


def logsumexp(x, axis=-1, keepdims=False):
    x = np.asarray(x, dtype=float)
    top = np.max(x, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = top + np.log(np.sum(np.exp(x - top), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def log_normalize(x, axis=-1):
    x = np.asarray(x, dtype=float)
    return x - logsumexp(x, axis=axis, keepdims=True)


def is_normalized(log_rows, tol=NORM_TOL) -> bool:
    return bool(np.all(np.abs(logsumexp(log_rows, axis=-1)) <= tol))


@dataclass(frozen=True, eq=False)
class BeliefState:
    log_local: np.ndarray   # (n, m), log pi
    log_actual: np.ndarray  # (n, m), log mu

    def check(self, tol=NORM_TOL) -> bool:
        return (
            bool(np.all(np.isfinite(self.log_local)) and np.all(np.isfinite(self.log_actual)))
            and is_normalized(self.log_local, tol)
            and is_normalized(self.log_actual, tol)
        )


@dataclass(frozen=True, eq=False)
class InboxMessage:
    sender: int
    log_belief: np.ndarray


def _inbox_matrix(inbox: Sequence[InboxMessage], m: int) -> np.ndarray:
    for msg in inbox:
        if np.shape(msg.log_belief) != (m,):
            raise ProtocolError(
                f"message from {msg.sender} has shape {np.shape(msg.log_belief)}, expected ({m},)"
            )
    if not inbox:
        return np.empty((0, m))
    return np.stack([np.asarray(msg.log_belief, dtype=float) for msg in inbox])


# --- local Bayes ------------------------------------------------------------------

def bayes_local_update(log_row, agent: AgentLikelihood, signal: int) -> np.ndarray:
    return log_normalize(np.asarray(log_row, dtype=float) + agent.log_table[:, signal])


def bayes_step(log_local: np.ndarray, loglik: np.ndarray) -> np.ndarray:
    """All agents at once; ``loglik[i]`` is log l_i(s_i | .) for this round's signal."""
    return log_normalize(log_local + loglik)


# --- min-rule ---------------------------------------------------------------------

def min_rule_update(own_log_actual, inbox: Sequence[InboxMessage], new_log_local) -> np.ndarray:
    own = np.asarray(own_log_actual, dtype=float)
    local = np.asarray(new_log_local, dtype=float)
    stacked = np.vstack([own[None], _inbox_matrix(inbox, own.size), local[None]])
    return log_normalize(stacked.min(axis=0))


def min_rule_step(msgs, mask, own, local) -> np.ndarray:
    neighbour_min = np.where(mask[:, :, None], msgs, np.inf).min(axis=1)
    return log_normalize(np.minimum(np.minimum(own, neighbour_min), local))


# --- LFRHE ------------------------------------------------------------------------

def lfrhe_update(own_log_actual, inbox: Sequence[InboxMessage], new_log_local, f: int) -> np.ndarray:
    """Trim the f highest and f lowest neighbour values per hypothesis, then min with local.

    Own actual belief does not enter; with fewer than 2f+1 neighbours the local
    belief is returned unchanged.
    """
    if f < 0:
        raise ValueError("f must be non-negative")
    local = np.asarray(new_log_local, dtype=float)
    vals = _inbox_matrix(inbox, local.size)
    if len(vals) < 2 * f + 1:
        return local.copy()
    kept = np.sort(vals, axis=0)[f:len(vals) - f]
    return log_normalize(np.minimum(kept.min(axis=0), local))


def trimmed_values(values, f: int) -> np.ndarray:
    """Values surviving removal of the f largest and f smallest (ascending order)."""
    values = np.sort(np.asarray(values, dtype=float))
    return values[f:len(values) - f]


def lfrhe_step(msgs, mask, local, f: int) -> np.ndarray:
    # After dropping the f lowest, the smallest survivor is the (f+1)-th smallest value.
    degree = mask.sum(axis=1)
    vals = np.where(mask[:, :, None], msgs, np.inf)
    if vals.shape[1] > f:
        kth = np.partition(vals, f, axis=1)[:, f, :]
    else:
        kth = np.full_like(local, np.inf)
    filtered = log_normalize(np.minimum(kth, local))
    return np.where((degree >= 2 * f + 1)[:, None], filtered, local)


# --- consensus baselines --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConsensusWeights:
    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("weights must be a square matrix")
        if np.any(a < 0):
            raise ValueError("weights must be non-negative")
        if np.any(np.abs(a.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("weights are not row-stochastic")
        if np.any(np.diag(a) <= 0):
            raise ValueError("self weights must be strictly positive")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def supported_on(self, g: DirectedGraph) -> bool:
        allowed = g.in_mask | np.eye(g.n, dtype=bool)
        return bool(np.all((self.a > 0) <= allowed))

    def is_doubly_stochastic(self, tol=1e-12) -> bool:
        return bool(np.all(np.abs(self.a.sum(axis=0) - 1.0) <= tol))

    def centrality(self) -> np.ndarray:
        """Left Perron vector of the weight matrix, normalised to sum to 1."""
        vals, vecs = np.linalg.eig(self.a.T)
        v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
        return v / v.sum()

    @property
    def log_a(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.a)


def lazy_metropolis_weights(g: DirectedGraph) -> ConsensusWeights:
    if not g.is_symmetric():
        raise UnsupportedBaselineError("lazy Metropolis weights need an undirected (symmetric) graph")
    a = np.zeros((g.n, g.n))
    deg = [g.degree(i) for i in range(g.n)]
    for i, j in g.edges:
        a[i, j] = 1.0 / (2 * max(deg[i], deg[j]))
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(a, 1.0 - a.sum(axis=1))
    return ConsensusWeights(a)


def linear_pool_update(all_log_actual, weights: ConsensusWeights, agent: int,
                       own_agentlik: AgentLikelihood, signal: int) -> np.ndarray:
    """a_ii * (Bayes update of own actual belief) + sum_j a_ij * mu_j, in the log domain."""
    mu = np.asarray(all_log_actual, dtype=float)
    row = weights.a[agent]
    terms = [np.log(row[agent]) + bayes_local_update(mu[agent], own_agentlik, signal)]
    terms += [np.log(row[j]) + mu[j] for j in range(len(row)) if j != agent and row[j] > 0]
    return log_normalize(logsumexp(np.stack(terms), axis=0))


def linear_pool_step(msgs, weights: ConsensusWeights, own, loglik) -> np.ndarray:
    log_a = weights.log_a
    self_w = np.diag(log_a).copy()
    off = log_a.copy()
    np.fill_diagonal(off, -np.inf)
    posterior = bayes_step(own, loglik)
    neighbours = logsumexp(off[:, :, None] + msgs, axis=1)
    return log_normalize(np.logaddexp(self_w[:, None] + posterior, neighbours))


def loglinear_pool_update(all_log_actual, weights: ConsensusWeights, agent: int,
                          own_agentlik: AgentLikelihood, signal: int) -> np.ndarray:
    """l_i(s | .) times the a-weighted geometric mean of the inclusive neighbourhood."""
    mu = np.asarray(all_log_actual, dtype=float)
    row = weights.a[agent]
    pooled = sum(row[j] * mu[j] for j in range(len(row)) if row[j] > 0)
    return log_normalize(own_agentlik.log_table[:, signal] + pooled)


def loglinear_pool_step(msgs, weights: ConsensusWeights, own, loglik) -> np.ndarray:
    a = weights.a
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    weighted = np.where(off[:, :, None] > 0, off[:, :, None] * msgs, 0.0).sum(axis=1)
    return log_normalize(loglik + np.diag(a)[:, None] * own + weighted)
