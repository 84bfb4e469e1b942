import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import graphweld.factorgraph.learning as L
from graphweld.factorgraph import (BPConfig, FactorGraph, LearnConfig, NumericalError, Parameters, exact_inference,
                                   gradient, group_rule, learn, predict)
from graphweld.factorgraph.exact import exact_log_likelihood

from _helpers import random_loopy, random_params, random_tree


def _finite_difference(g, p, mask, values, h=1e-5):
    v = p.vector()
    out = np.zeros_like(v)
    for i in range(len(v)):
        e = np.zeros_like(v)
        e[i] = h
        up = exact_log_likelihood(g, Parameters.from_vector(v + e), mask, values)
        down = exact_log_likelihood(g, Parameters.from_vector(v - e), mask, values)
        out[i] = (up - down) / (2 * h)
    return out


@given(st.integers(0, 2**20), st.integers(4, 10))
@settings(max_examples=25)
def test_gradient_matches_finite_differences(seed, n):
    rng = np.random.default_rng(seed)
    g = random_loopy(rng, n)
    p = random_params(rng)
    mask = rng.random(n) < 0.6
    mask[0] = True
    values = rng.integers(0, 2, n).astype(np.int8)
    analytic = gradient(g, p, mask, values, engine="exact").gradient
    fd = _finite_difference(g, p, mask, values)
    scale = np.maximum(np.abs(fd), 1e-3)
    assert np.all(np.abs(analytic - fd) / scale <= 1e-4)


def test_gradient_vanishes_on_model_expectation():
    rng = np.random.default_rng(4)
    g = random_loopy(rng, 8)
    p = random_params(rng)
    ex = exact_inference(g, p)
    full = np.ones(8, bool)
    avg = sum(w * gradient(g, p, full, y, engine="exact").gradient
              for w, y in zip(ex.posterior, ex.assignments))
    assert np.max(np.abs(avg)) <= 1e-6


def test_zero_features_zero_alpha_gradient():
    g = FactorGraph(np.zeros((5, 3)), [(0, 1)], [[1, 2, 3]], [(0, 3, 4)])
    mask = np.ones(5, bool)
    res = gradient(g, Parameters(np.ones(3), 0.3, 0.2, 0.1), mask, np.array([1, 0, 1, 1, 0]), engine="exact")
    assert np.all(res.gradient[:3] == 0.0)


def test_lbp_gradient_exact_on_tree():
    rng = np.random.default_rng(8)
    g = random_tree(rng, 9)
    p = random_params(rng)
    mask = rng.random(9) < 0.5
    values = rng.integers(0, 2, 9).astype(np.int8)
    a = gradient(g, p, mask, values, BPConfig(tol=1e-13, max_iters=5000), engine="lbp")
    b = gradient(g, p, mask, values, engine="exact")
    assert np.allclose(a.gradient, b.gradient, atol=1e-8)


def test_unknown_engine():
    with pytest.raises(ValueError):
        gradient(FactorGraph(np.ones((1, 1))), Parameters.zeros(1), None, None, engine="magic")


def test_config_validation():
    with pytest.raises(ValueError):
        LearnConfig(learning_rate=0)
    with pytest.raises(ValueError):
        LearnConfig(normalize="median")
    with pytest.raises(ValueError):
        LearnConfig(frozen=("delta",))


def test_zero_problem_stays_at_zero():
    g = FactorGraph(np.zeros((4, 2)))
    r = learn(g, np.ones(4, bool), np.array([1, 0, 1, 0]), config=LearnConfig(epochs=20))
    assert np.all(r.params.vector() == 0.0)


def _separable(n=20):
    y = np.array([1] * (n // 2) + [0] * (n - n // 2), dtype=np.int8)
    return FactorGraph(y[:, None].astype(float)), y


def test_separable_toy_reaches_perfect_f1():
    g, y = _separable()
    fit = learn(g, np.ones(len(y), bool), y, config=LearnConfig(learning_rate=1.0, epochs=100))
    assert not fit.diverged
    pred = predict(g, fit.params).labels
    assert np.array_equal(pred, y)


@pytest.mark.parametrize("normalize", [None, "fisher", "count"])
def test_objective_monotone_at_small_rate(normalize):
    rng = np.random.default_rng(12)
    g = random_loopy(rng, 9)
    mask = rng.random(9) < 0.7
    values = rng.integers(0, 2, 9).astype(np.int8)
    cfg = LearnConfig(learning_rate=0.05, epochs=60, normalize=normalize, backtrack=False, engine="exact")
    r = learn(g, mask, values, config=cfg)
    assert np.all(np.diff(r.history) >= -1e-6)
    assert r.history[-1] > r.history[0]


def test_backtracking_rescues_large_rate():
    rng = np.random.default_rng(3)
    g = random_loopy(rng, 8)
    mask = np.ones(8, bool)
    values = rng.integers(0, 2, 8).astype(np.int8)
    r = learn(g, mask, values, config=LearnConfig(learning_rate=200.0, epochs=40, engine="exact"))
    assert not r.diverged and r.params.is_finite()
    assert np.all(np.diff(r.history) >= -1e-9)
    final = exact_log_likelihood(g, r.params, mask, values)
    assert final >= r.history[0]


def test_frozen_parameters_do_not_move():
    rng = np.random.default_rng(6)
    g = random_loopy(rng, 8)
    mask = np.ones(8, bool)
    values = rng.integers(0, 2, 8).astype(np.int8)
    r = learn(g, mask, values, config=LearnConfig(epochs=10, frozen=("gamma", "eta")))
    assert r.params.gamma == 0.0 and r.params.eta == 0.0 and r.params.beta != 0.0


def test_learn_is_deterministic():
    rng = np.random.default_rng(7)
    g = random_loopy(rng, 10)
    mask = rng.random(10) < 0.5
    values = rng.integers(0, 2, 10).astype(np.int8)
    cfg = LearnConfig(epochs=15, engine="lbp")
    assert np.array_equal(learn(g, mask, values, config=cfg).params.vector(),
                          learn(g, mask, values, config=cfg).params.vector())


def test_numerical_failure_aborts_with_last_finite_params(monkeypatch):
    g, y = _separable(6)
    real = L.gradient
    calls = []

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) == 4:
            raise NumericalError("boom")
        return real(*args, **kwargs)

    monkeypatch.setattr(L, "gradient", flaky)
    r = learn(g, np.ones(6, bool), y, config=LearnConfig(epochs=10, backtrack=False))
    assert r.diverged and "boom" in r.message
    assert r.params.is_finite() and len(r.history) == 3


def test_params_shape_mismatch():
    g, y = _separable(4)
    with pytest.raises(ValueError):
        learn(g, np.ones(4, bool), y, Parameters.zeros(3))


def test_predict_single_pair_probability():
    g = FactorGraph(np.array([[np.log(9.0)]]))
    pred = predict(g, Parameters(np.ones(1)))
    assert pred.labels.tolist() == [1]
    assert pred.probabilities[0] == pytest.approx(0.9)


def test_predict_empty():
    pred = predict(FactorGraph(np.zeros((0, 2))), Parameters.zeros(2))
    assert len(pred.labels) == 0


def test_group_rule_keeps_highest_marginal():
    g = FactorGraph(np.array([[2.0], [3.0], [1.0]]), groups=[[0, 1, 2]])
    pred = predict(g, Parameters(np.ones(1), gamma=0.0))
    assert pred.map_labels.tolist() == [1, 1, 1]
    assert pred.labels.tolist() == [0, 1, 0]
    assert predict(g, Parameters(np.ones(1)), apply_group_rule=False).labels.tolist() == [1, 1, 1]


@given(st.integers(0, 2**20))
@settings(max_examples=40)
def test_group_rule_property(seed):
    rng = np.random.default_rng(seed)
    n = 12
    groups = [list(rng.choice(n, int(rng.integers(2, 5)), replace=False)) for _ in range(4)]
    g = FactorGraph(np.zeros((n, 1)), groups=groups)
    labels = rng.integers(0, 2, n).astype(np.int8)
    probs = rng.random(n)
    out = group_rule(g, labels, probs)
    assert np.all(out <= labels)
    for grp in groups:
        assert sum(out[k] for k in grp) <= 1
    # a variable is switched off only if it lost to a higher-ranked positive member of one of its groups
    for k in np.flatnonzero(labels > out):
        assert any(k in grp and any(labels[j] and (probs[j], -j) > (probs[k], -k) for j in grp) for grp in groups)
    # the overall best positive variable always survives
    on = np.flatnonzero(labels)
    if len(on):
        best = max(on, key=lambda k: (probs[k], -k))
        assert out[best] == 1
