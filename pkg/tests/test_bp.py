import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit, logsumexp

from graphweld.factorgraph import (BPConfig, FactorGraph, NumericalError, Parameters, exact_inference,
                                   lbp_marginals, map_assignment)
from graphweld.factorgraph import _kernels as K

from _helpers import random_loopy, random_params, random_tree

TIGHT = BPConfig(tol=1e-13, max_iters=5000)


@given(st.integers(0, 2**20), st.integers(2, 10))
@settings(max_examples=50)
def test_tree_marginals_and_statistics_exact(seed, n):
    rng = np.random.default_rng(seed)
    g = random_tree(rng, n)
    p = random_params(rng)
    ex = exact_inference(g, p)
    r = lbp_marginals(g, p, TIGHT, statistics=True)
    assert r.converged
    assert np.max(np.abs(r.marginals - ex.marginals)) <= 1e-9
    assert np.max(np.abs(r.expected_statistics - ex.expected_statistics)) <= 1e-8
    assert np.allclose(r.statistic_variance[:g.n_features] >= 0, True)


@given(st.integers(0, 2**20), st.integers(2, 10))
@settings(max_examples=50)
def test_tree_map_matches_enumeration(seed, n):
    rng = np.random.default_rng(seed)
    g = random_tree(rng, n)
    p = random_params(rng)
    ex = exact_inference(g, p)
    m = map_assignment(g, p, TIGHT)
    # compare scores, since exact ties may resolve differently
    assert g.score(m.labels, p) == pytest.approx(ex.map_score, abs=1e-9)


@given(st.integers(0, 2**20), st.integers(2, 10), st.floats(0.2, 0.8))
@settings(max_examples=30)
def test_tree_exact_with_clamping(seed, n, frac):
    rng = np.random.default_rng(seed)
    g = random_tree(rng, n)
    p = random_params(rng)
    mask = rng.random(n) < frac
    values = rng.integers(0, 2, n).astype(np.int8)
    ex = exact_inference(g, p, mask, values)
    r = lbp_marginals(g, p, TIGHT, mask, values)
    assert np.max(np.abs(r.marginals - ex.marginals)) <= 1e-9
    assert np.all(r.marginals[mask] == values[mask])


def test_loopy_mean_error_small():
    rng = np.random.default_rng(5)
    errs = []
    for _ in range(60):
        g = random_loopy(rng, int(rng.integers(4, 11)))
        p = random_params(rng)
        errs.append(np.mean(np.abs(lbp_marginals(g, p).marginals - exact_inference(g, p).marginals)))
    assert np.mean(errs) <= 0.05


def test_single_variable_and_zero_params():
    g = FactorGraph(np.array([[math.log(3.0)]]))
    assert lbp_marginals(g, Parameters(np.ones(1))).marginals[0] == pytest.approx(0.75)
    rng = np.random.default_rng(0)
    h = random_loopy(rng, 9)
    assert np.allclose(lbp_marginals(h, Parameters.zeros(3)).marginals, 0.5)


def test_lone_negative_pair_maps_to_zero():
    g = FactorGraph(np.array([[1.0]]))
    assert map_assignment(g, Parameters(np.array([-0.5]))).labels.tolist() == [0]
    # exact tie breaks toward 0
    assert map_assignment(g, Parameters(np.array([0.0]))).labels.tolist() == [0]


def test_group_constraint_dominates_map():
    g = FactorGraph(np.array([[1.0], [1.0]]) * np.array([[2.0], [1.5]]), groups=[[0, 1]])
    p = Parameters(np.ones(1), gamma=10.0)
    m = map_assignment(g, p)
    assert m.labels.sum() == 1
    assert m.labels.tolist() == exact_inference(g, p).map_labels.tolist()


def test_deterministic_and_warm_start():
    rng = np.random.default_rng(9)
    g = random_loopy(rng, 10)
    p = random_params(rng)
    a, b = lbp_marginals(g, p), lbp_marginals(g, p)
    assert np.array_equal(a.marginals, b.marginals)
    warm = lbp_marginals(g, p, init=a.messages)
    assert warm.iterations <= a.iterations
    assert np.allclose(warm.marginals, a.marginals, atol=1e-5)


def test_non_finite_raises():
    g = FactorGraph(np.ones((3, 1)), pairs=[(0, 1)], triangles=[(0, 1, 2)])
    with pytest.raises(NumericalError):
        lbp_marginals(g, Parameters(np.array([np.nan])))


def test_large_graph_extreme_parameters_stay_finite():
    rng = np.random.default_rng(0)
    n = 20_000
    pairs = rng.integers(0, n, size=(30_000, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    tris = np.array([rng.choice(n, 3, replace=False) for _ in range(5000)])
    groups = [rng.choice(n, 4, replace=False) for _ in range(5000)]
    g = FactorGraph(rng.normal(size=(n, 2)) * 50, pairs, groups, tris)
    p = Parameters(np.array([30.0, -30.0]), 40.0, 60.0, -80.0)
    r = lbp_marginals(g, p, BPConfig(max_iters=20))
    assert np.all(np.isfinite(r.marginals)) and np.all((r.marginals >= 0) & (r.marginals <= 1))
    assert np.all(np.isfinite(map_assignment(g, p, BPConfig(max_iters=20)).beliefs))


def test_empty_graph():
    g = FactorGraph(np.zeros((0, 2)))
    r = lbp_marginals(g, Parameters.zeros(2), statistics=True)
    assert r.marginals.shape == (0,) and r.converged


# ---------------------------------------------------------------- kernels


def _tri_table(eta):
    return {y: (0.0 if sum(y) == 2 else eta) for y in itertools.product((0, 1), repeat=3)}


def _tri_message_oracle(v, eta, k):
    table = _tri_table(eta)
    logm = {0: [], 1: []}
    for y, s in table.items():
        inc = s + sum(v[j] * y[j] for j in range(3) if j != k)
        logm[y[k]].append(inc)
    return logsumexp(logm[1]) - logsumexp(logm[0])


@given(st.lists(st.floats(-30, 30), min_size=3, max_size=3), st.floats(-20, 20))
def test_triangle_sum_product_matches_table(v, eta):
    V = np.array([v])
    out = K.tri_sum_product_numpy(V, eta)
    for k in range(3):
        assert out[0, k] == pytest.approx(_tri_message_oracle(v, eta, k), abs=1e-9)


@given(st.lists(st.floats(-30, 30), min_size=3, max_size=3), st.floats(-20, 20))
def test_triangle_max_sum_matches_table(v, eta):
    table = _tri_table(eta)
    out = K.tri_max_sum_numpy(np.array([v]), eta)
    for k in range(3):
        best = {0: -np.inf, 1: -np.inf}
        for y, s in table.items():
            best[y[k]] = max(best[y[k]], s + sum(v[j] * y[j] for j in range(3) if j != k))
        assert out[0, k] == pytest.approx(best[1] - best[0], abs=1e-9)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(-5, 5))
def test_triangle_q_matches_table(v, eta):
    table = _tri_table(eta)
    w = {y: s + sum(v[j] * y[j] for j in range(3)) for y, s in table.items()}
    z = logsumexp(list(w.values()))
    q = sum(math.exp(s - z) for y, s in w.items() if sum(y) != 2)
    total, var = K.tri_q_numpy(np.array([v]), eta)
    assert total == pytest.approx(q, abs=1e-9)
    assert var == pytest.approx(q * (1 - q), abs=1e-9)


@pytest.mark.skipif(K.numba is None, reason="numba not installed")
def test_compiled_kernels_match_numpy():
    rng = np.random.default_rng(0)
    V = rng.normal(scale=8, size=(500, 3))
    for eta in (-30.0, -1.0, 0.0, 2.5, 40.0):
        assert np.allclose(K.tri_sum_product(V, eta), K.tri_sum_product_numpy(V, eta), atol=1e-12)
        assert np.allclose(K.tri_max_sum(V, eta), K.tri_max_sum_numpy(V, eta), atol=1e-12)
        assert np.allclose(K.tri_q(V, eta), K.tri_q_numpy(V, eta), atol=1e-9)
    n = 50
    b = rng.normal(size=n)
    idx = rng.integers(0, n, 200)
    fixed = rng.random(200) < 0.2
    val = rng.normal(size=200)
    F = rng.normal(size=200)
    V1, V2 = rng.normal(size=200), None
    V2 = V1.copy()
    r1 = K.damped_update(V1, F, b, idx, fixed, val, 0.5)
    r2 = K.damped_update_numpy(V2, F, b, idx, fixed, val, 0.5)
    assert np.allclose(V1, V2) and r1[0] == pytest.approx(r2[0]) and r1[1] == r2[1]
    assert np.all(V1[fixed] == val[fixed])
