import math

import numpy as np
import pytest

from hypelim import metrics, presets
from hypelim.engine import TrajectoryRecord, run, sweep
from hypelim.graphs import DirectedGraph, GraphSchedule
from hypelim.model import AgentLikelihood, HypothesisSet, ObservationModel
from hypelim.rules import ConsensusWeights, lazy_metropolis_weights

import oracles
from conftest import random_digraph


def record(log_actual, times=None, true_index=0, byzantine=frozenset()):
    log_actual = np.asarray(log_actual, dtype=float)
    if times is None:
        times = np.arange(len(log_actual))
    return TrajectoryRecord(np.asarray(times), log_actual, None, None, frozenset(byzantine),
                            true_index, 0, "min_rule", "")


# --- empirical rates -------------------------------------------------------------

def test_rejection_rate_exponential_decay():
    t = np.arange(1, 50)
    rows = np.stack([np.log1p(-np.exp(-t)), -t.astype(float)], axis=1)
    log_mu = np.vstack([[np.log(0.5), np.log(0.5)], rows])[:, None, :]
    rec = record(log_mu)
    times, q = metrics.rejection_rate(rec, 0, 1)
    assert times[0] == 1 and np.allclose(q, 1.0)
    with pytest.raises(ValueError):
        metrics.rejection_rate(rec, 0, 0)


def test_rejection_rate_uniform_vanishes():
    m = 3
    rec = record(np.full((101, 1, m), -np.log(m)))
    times, q = metrics.rejection_rate(rec, 0, 2)
    assert np.allclose(q, np.log(m) / times)


def test_tv_error_examples():
    conc = np.array([[[0.0, -np.inf]] * 4])
    assert metrics.tv_error(record(conc), 0) == 0
    assert metrics.tv_error(record(np.full((1, 7, 2), np.log(0.5))), 0) == pytest.approx(3.5)
    assert metrics.tv_error(record(np.full((1, 9, 3), -np.log(3))), 0) == pytest.approx(6.0)
    rec = record(np.full((1, 9, 3), -np.log(3)), byzantine={4})
    assert metrics.tv_error(rec, 0, regular_only=True) == pytest.approx(8 * 2 / 3)


def test_rate_estimator_synthetic():
    t = np.arange(0, 10_001)
    rho = 0.03
    log_e = np.log(2.0) - rho * t
    assert metrics.rate_from_log_errors(t, log_e) == pytest.approx(rho, rel=0.01)
    const = np.full(len(t), np.log(0.3))
    assert metrics.rate_from_log_errors(t, const) < 1.3e-4
    assert metrics.rate_from_log_errors(t[:1001], const[:1001]) > metrics.rate_from_log_errors(t, const)


# --- bounds ---------------------------------------------------------------------

def test_thm1_example1_independent_of_n():
    for n in (5, 10):
        b = metrics.theoretical_bounds(presets.example1_model(n), mode="best_source")
        assert b.per_hypothesis[0] == pytest.approx(0.087177, abs=1e-6)
        assert b.per_hypothesis[0] == pytest.approx(oracles.kl([0.5, 0.5], [0.7, 0.3]))


def test_thm3_per_agent(ex1, star5):
    b = metrics.theoretical_bounds(ex1, GraphSchedule.static(star5), "reachable_source")
    assert np.allclose(b.per_agent[:, 0], oracles.kl([0.5, 0.5], [0.7, 0.3]))
    assert np.all(np.isnan(b.per_agent[:, 1]))
    # cut agent 0 off from agent 4: no source reaches it
    g = DirectedGraph.undirected(5, [(0, 1), (0, 2), (0, 3)])
    b = metrics.theoretical_bounds(ex1, g, "reachable_source")
    assert b.per_agent[4, 0] == 0 and b.network == 0


def test_thm5_example2():
    model = presets.example2_model(0)
    regular = [i for i in range(9) if i != 4]
    b5 = metrics.theoretical_bounds(model, mode="regular_source", regular=regular)
    want = min(oracles.kl(a.row(0), a.row(2)) for i, a in enumerate(model.agents) if i != 4)
    assert b5.per_hypothesis[2] == pytest.approx(want, abs=1e-12)
    b1 = metrics.theoretical_bounds(model, mode="best_source")
    assert b5.per_hypothesis[1] == pytest.approx(b1.per_hypothesis[1])
    with pytest.raises(ValueError):
        metrics.theoretical_bounds(model, mode="regular_source")


def test_thm1_equals_thm5_for_identical_sources():
    a = AgentLikelihood.binary([0.6, 0.3])
    model = ObservationModel(HypothesisSet(("x", "y")), (a,) * 4)
    b1 = metrics.theoretical_bounds(model, mode="best_source")
    b5 = metrics.theoretical_bounds(model, mode="regular_source", regular=range(4))
    assert b1.per_hypothesis == b5.per_hypothesis


def test_uninformative_model_warns():
    blank = AgentLikelihood.binary([0.5, 0.5])
    model = ObservationModel(HypothesisSet(("x", "y")), (blank,) * 3)
    with pytest.warns(metrics.IdentifiabilityWarning):
        b = metrics.theoretical_bounds(model, mode="best_source")
    assert b.per_hypothesis[1] == 0 and b.network == 0


def test_baseline_reference_rates():
    for n, want in ((5, 0.087177 / 5), (10, 0.087177 / 10)):
        model = presets.example1_model(n)
        ref = metrics.baseline_reference_rates(model, lazy_metropolis_weights(presets.example1_graph(n)))
        assert ref[0] == pytest.approx(want, abs=1e-6)
    a = AgentLikelihood.binary([0.6, 0.3])
    model = ObservationModel(HypothesisSet(("x", "y")), (a,) * 5)
    ref = metrics.baseline_reference_rates(model, lazy_metropolis_weights(presets.example1_graph(5)))
    assert ref[1] == pytest.approx(model.kl(0, 0, 1))
    with pytest.raises(ValueError):
        metrics.baseline_reference_rates(model, ConsensusWeights(np.tile([0.6, 0.1, 0.1, 0.1, 0.1], (5, 1))))


def test_rate_report_on_run():
    rec = run(presets.example1_config(5, horizon=3000, seed=2, stride=100))
    bounds = metrics.theoretical_bounds(presets.example1_model(5), mode="best_source")
    rep = metrics.rate_report(rec, bounds, 0.02)
    assert rep.all_passed
    assert rep.passed.shape == (5, 2)


# --- delay ---------------------------------------------------------------------

def test_best_source(ex2):
    assert metrics.best_source(presets.example1_model(5), 0) == 0
    k = [ex2.kl(v, 0, 2) for v in range(9)]
    assert metrics.best_source(ex2, 2) == int(np.argmax(k))


def test_delay_examples(star5, fig1b):
    s = GraphSchedule.static(star5)
    c = metrics.delay_recursion(s, 0, 10)
    assert np.all(c[1, 1:] == 1) and np.all(c[1:, 1:] <= 2)
    one = metrics.delay_recursion(GraphSchedule.static(DirectedGraph(1)), 0, 5)
    assert np.all(one == 0)
    d = metrics.delay_diagnostic(GraphSchedule.static(fig1b), {1: 0, 2: 3}, 1, 40)
    assert d.holds and d.bound == 16


def test_delay_matches_oracle(rng):
    for _ in range(10):
        n = int(rng.integers(2, 6))
        graphs = [random_digraph(rng, n, 0.4) for _ in range(3)]
        s = GraphSchedule.periodic(graphs)
        v = int(rng.integers(n))
        c = metrics.delay_recursion(s, v, 12)
        ref = oracles.delay(lambda t: s.graph_at(t).edges, n, v, 12)
        assert np.array_equal(c, np.array(ref, dtype=float))


def test_delay_needs_T():
    with pytest.raises(ValueError):
        metrics.delay_diagnostic(GraphSchedule.static(DirectedGraph(2)), {0: 0}, None, 10)


# --- concentration ----------------------------------------------------------------

def test_exceedance_fraction():
    q = np.array([[0.0, 0.1], [0.2, 0.3], [0.05, 0.4]])
    assert metrics.exceedance_fraction(q, 0.1).tolist() == [2 / 3, 1 / 3]


def test_exceedance_synthetic_decay():
    # q_t = K + Gaussian walk / t : exceedance of K - eps should fall like a Gaussian tail
    rng = np.random.default_rng(0)
    K, eps = 0.1, 0.05
    steps = rng.normal(K, 0.5, size=(2000, 400))
    walk = np.cumsum(steps, axis=1)
    grid = np.array([25, 50, 100, 200, 400])
    q = walk[:, grid - 1] / grid
    frac = metrics.exceedance_fraction(q, K - eps)
    assert np.all(np.diff(frac) < 0)
    assert frac[-1] < 0.1 * frac[0]


def test_concentration_probe_guards_and_boundary():
    cfg = presets.example1_config(5, horizon=300, stride=100)
    with pytest.raises(ValueError):
        metrics.concentration_probe(sweep(cfg, range(10)), cfg.model, 0, 0.01, [100], 3)
    recs = sweep(cfg, range(50))
    kbar = metrics.theoretical_bounds(cfg.model, mode="best_source").per_hypothesis[0]
    curve = metrics.concentration_probe(recs, cfg.model, 0, kbar, [100, 200, 300], 3)
    assert np.all(curve.fraction == 0)
    assert curve.reference_slope == pytest.approx(kbar**2 / (8 * math.log(0.5 / 0.3) ** 2))
    with pytest.raises(ValueError):
        metrics.concentration_probe(recs, cfg.model, 1, 0.01, [100], 3)


def test_summarize_is_json_ready():
    import json

    rec = run(presets.example2_config(0, horizon=50))
    s = metrics.summarize(rec)
    json.dumps(s)
    assert s["byzantine"] == [4] and len(s["mu_true"]) == 9
