import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hypelim import presets
from hypelim.model import (
    AgentLikelihood, HypothesisSet, InvalidModelError, ObservationModel, globally_identifiable,
    kl_divergence, log_ratio_bound, sample_from_cdf, sample_signal_block, sample_signals,
    signal_streams, source_set,
)

import oracles


def simplex(m, lo=1e-3):
    return st.lists(st.floats(lo, 1.0), min_size=m, max_size=m).map(lambda v: list(np.array(v) / sum(v)))


# --- KL ---------------------------------------------------------------------------

def test_kl_identical_is_zero():
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0


def test_kl_example_values():
    assert kl_divergence([0.5, 0.5], [0.7, 0.3]) == pytest.approx(0.087177, abs=1e-6)
    assert kl_divergence([0.7, 0.3], [0.5, 0.5]) == pytest.approx(0.082282, abs=1e-6)
    assert kl_divergence([0.5, 0.5], [0.7, 0.3]) == pytest.approx(oracles.kl([0.5, 0.5], [0.7, 0.3]), rel=1e-12)


@given(st.integers(2, 5).flatmap(lambda m: st.tuples(simplex(m), simplex(m))))
def test_kl_nonnegative_and_matches_oracle(pq):
    p, q = pq
    d = kl_divergence(p, q)
    assert d >= 0
    assert d == pytest.approx(max(oracles.kl(p, q), 0.0), abs=1e-12)


@given(st.integers(2, 5).flatmap(lambda m: st.tuples(simplex(m), simplex(m))))
def test_kl_zero_iff_equal(pq):
    p, q = pq
    d = kl_divergence(p, q)
    if np.allclose(p, q, atol=0, rtol=0):
        assert d == 0
    elif np.max(np.abs(np.array(p) - q)) > 1e-4:
        assert d > 0


def test_kl_rejects_bad_input():
    with pytest.raises(InvalidModelError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])
    with pytest.raises(InvalidModelError):
        kl_divergence([0.5, 0.6], [0.5, 0.5])
    with pytest.raises(InvalidModelError):
        kl_divergence([0.5, 0.5], [0.2, 0.3, 0.5])


# --- construction ------------------------------------------------------------------

def test_likelihood_validation():
    with pytest.raises(InvalidModelError):
        AgentLikelihood(("a", "b"), [[0.5, 0.6]])
    with pytest.raises(InvalidModelError):
        AgentLikelihood(("a", "b"), [[1.0, 0.0]])
    with pytest.raises(InvalidModelError):
        AgentLikelihood(("a",), [[0.5, 0.5]])
    a = AgentLikelihood.binary([0.7, 0.5])
    assert a.table.tolist() == [[0.7, pytest.approx(0.3)], [0.5, 0.5]]
    with pytest.raises(ValueError):
        a.table[0, 0] = 0.1


def test_model_shape_mismatch():
    with pytest.raises(InvalidModelError):
        ObservationModel(HypothesisSet(("a", "b", "c")), (AgentLikelihood.binary([0.5, 0.5]),))


def test_hypothesis_set():
    h = HypothesisSet(("theta1", "theta2"), 1)
    assert h.index("theta2") == 1 and h.index(0) == 0
    with pytest.raises(InvalidModelError):
        h.index("theta9")
    with pytest.raises(InvalidModelError):
        HypothesisSet(("a", "a"))


# --- source sets and identifiability -----------------------------------------------------

def test_source_set_example1(ex1):
    assert source_set(ex1, 0, 1) == {0}
    assert source_set(ex1, 1, 0) == {0}


def test_source_set_empty_for_identical_rows():
    m = ObservationModel(HypothesisSet(("a", "b")), (AgentLikelihood.binary([0.4, 0.4]),) * 3)
    assert source_set(m, 0, 1) == frozenset()


def test_source_set_example2(ex2):
    assert source_set(ex2, 1, 2) == {3, 4, 5, 6, 7, 8}
    assert source_set(ex2, 0, 1) == {0, 1, 2}
    assert source_set(ex2, 0, 2) == set(range(9))


def test_source_set_matches_oracle(ex2):
    for p in range(3):
        for q in range(3):
            if p != q:
                brute = {i for i, a in enumerate(ex2.agents) if oracles.kl(a.row(p), a.row(q)) > 1e-12}
                assert source_set(ex2, p, q) == brute


def test_global_identifiability(ex1, ex2):
    assert globally_identifiable(ex2)
    assert not globally_identifiable(ex1, subset={1})
    assert not globally_identifiable(ex2, subset={0, 1, 2})
    assert globally_identifiable(ex1, subset={0})


# --- L constant ----------------------------------------------------------------

def test_log_ratio_bound_examples(ex1, ex2):
    uniform = ObservationModel(HypothesisSet(("a", "b", "c")),
                               (AgentLikelihood(("x", "y"), [[0.5, 0.5]] * 3),) * 2)
    assert log_ratio_bound(uniform) == 0.0
    assert log_ratio_bound(ex2) == pytest.approx(math.log(3), abs=1e-9)
    assert log_ratio_bound(ex1) == pytest.approx(math.log(0.5 / 0.3), abs=1e-9)


def test_log_ratio_bound_brute_force(ex2):
    best = 0.0
    for a in ex2.agents:
        for w in range(2):
            for p in range(3):
                for q in range(3):
                    best = max(best, abs(math.log(a.table[p, w]) - math.log(a.table[q, w])))
    assert log_ratio_bound(ex2) == pytest.approx(best, abs=1e-12)


# --- sampling ----------------------------------------------------------------

def test_degenerate_row_always_first_signal():
    cdf = np.array([1.0, 1.0, 1.0])
    u = np.random.default_rng(0).random(1000)
    assert np.all(sample_from_cdf(cdf, u) == 0)


def test_sampling_deterministic(ex1):
    a = sample_signal_block(ex1, signal_streams(3, ex1.n), 500)
    b = sample_signal_block(ex1, signal_streams(3, ex1.n), 500)
    assert np.array_equal(a, b)
    c = sample_signal_block(ex1, signal_streams(4, ex1.n), 500)
    assert not np.array_equal(a, c)


def test_block_equals_stepwise(ex2):
    block = sample_signal_block(ex2, signal_streams(9, ex2.n), 50)
    streams = signal_streams(9, ex2.n)
    steps = np.stack([sample_signals(ex2, streams) for _ in range(50)])
    assert np.array_equal(block, steps)


def test_signal_frequencies():
    model = presets.example1_model(1, true_index=0)
    s = sample_signal_block(model, signal_streams(0, 1), 100_000)[:, 0]
    assert abs(np.mean(s == 0) - 0.7) < 0.01


def test_agent_streams_are_independent_of_n(ex1):
    # agent i's stream does not depend on how many agents follow it
    big = presets.example1_model(10)
    a = sample_signal_block(ex1, signal_streams(5, 5), 100)
    b = sample_signal_block(big, signal_streams(5, 10), 100)
    assert np.array_equal(a, b[:, :5])
