import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphweld.factorgraph import (Factor, FactorGraph, FactorKind, Parameters, exact_inference, joint_log_prob,
                                   log_potential)
from graphweld.factorgraph.exact import all_assignments, exact_log_likelihood
from graphweld.factorgraph.graph import clamp_arrays

from _helpers import brute_force, random_loopy, random_params, random_tree

P = Parameters(np.array([0.5, -1.0]), beta=1.5, gamma=2.0, eta=3.0)


def test_local_potential():
    f = Factor(FactorKind.LOCAL, (0,), np.array([2.0, 1.0]))
    assert log_potential(f, [0], P) == 0.0
    assert log_potential(f, [1], P) == pytest.approx(0.0)
    f2 = Factor(FactorKind.LOCAL, (0,), np.array([4.0, 1.0]))
    assert log_potential(f2, [1], P) == pytest.approx(1.0)


def test_structural_potentials():
    g = Factor(FactorKind.GROUP, (0, 1, 2))
    assert log_potential(g, [1, 1, 0], P) == 0.0
    assert log_potential(g, [1, 0, 0], P) == 2.0
    assert log_potential(g, [0, 0, 0], P) == 2.0
    t = Factor(FactorKind.TRIANGLE, (0, 1, 2))
    assert log_potential(t, [1, 1, 1], P) == 3.0
    assert log_potential(t, [1, 1, 0], P) == 0.0
    assert log_potential(t, [1, 0, 0], P) == 3.0
    c = Factor(FactorKind.CORRELATION, (0, 1))
    assert log_potential(c, [1, 1], P) == 1.5
    assert log_potential(c, [1, 0], P) == 0.0


def test_potential_incomplete_assignment():
    with pytest.raises(ValueError):
        log_potential(Factor(FactorKind.TRIANGLE, (0, 1, 5)), [1, 0, 1], P)
    with pytest.raises(ValueError):
        log_potential(Factor(FactorKind.CORRELATION, (0, 1)), {0: 1}, P)
    with pytest.raises(ValueError):
        log_potential(Factor(FactorKind.CORRELATION, (0, 1)), [1, 2], P)


def test_joint_log_prob_examples():
    empty = FactorGraph(np.zeros((0, 2)))
    assert joint_log_prob(empty, np.zeros(0, int), P) == 0.0
    one = FactorGraph(np.array([[3.0, -2.0]]))
    zero = Parameters(np.zeros(2))
    assert joint_log_prob(one, [0], zero) == joint_log_prob(one, [1], zero) == 0.0
    with pytest.raises(ValueError):
        joint_log_prob(one, [0, 1], zero)


def test_graph_validation():
    with pytest.raises(ValueError):
        FactorGraph(np.zeros((2, 1)), pairs=[(0, 2)])
    with pytest.raises(ValueError):
        FactorGraph(np.zeros((2, 1)), pairs=[(1, 1)])
    with pytest.raises(ValueError):
        FactorGraph(np.zeros((3, 1)), groups=[[0]])
    with pytest.raises(ValueError):
        FactorGraph(np.zeros((3, 1)), triangles=[(0, 1, 1)])
    with pytest.raises(ValueError):
        FactorGraph(np.zeros((3, 1))).unary(Parameters(np.zeros(2)))


def test_factor_iteration_counts():
    g = FactorGraph(np.ones((5, 2)), [(0, 1)], [[0, 2, 3], [1, 4]], [(0, 1, 2)])
    kinds = [f.kind for f in g.factors()]
    assert kinds.count(FactorKind.LOCAL) == 5
    assert kinds.count(FactorKind.CORRELATION) == 1
    assert kinds.count(FactorKind.GROUP) == 2
    assert kinds.count(FactorKind.TRIANGLE) == 1
    sizes = {f.kind: len(f.members) for f in g.factors()}
    assert sizes[FactorKind.LOCAL] == 1 and sizes[FactorKind.CORRELATION] == 2 and sizes[FactorKind.TRIANGLE] == 3


@pytest.mark.parametrize("kind", [FactorKind.GROUP, FactorKind.TRIANGLE])
def test_constraint_semantics_exhaustive(kind):
    rng = np.random.default_rng(3)
    for _ in range(5):
        p = random_params(rng, 2)
        weight = p.gamma if kind is FactorKind.GROUP else p.eta
        violated = (lambda y: sum(y) >= 2) if kind is FactorKind.GROUP else (lambda y: sum(y) == 2)
        X = rng.normal(size=(3, 2))
        other = dict(pairs=[(0, 1)], groups=[[1, 2]] if kind is FactorKind.TRIANGLE else [],
                     triangles=[(0, 1, 2)] if kind is FactorKind.GROUP else None)
        base = FactorGraph(X, **other)
        extra = dict(other)
        if kind is FactorKind.GROUP:
            extra["groups"] = [[0, 1, 2]]
        else:
            extra["triangles"] = [(0, 1, 2)]
        with_f = FactorGraph(X, **extra)
        for y in itertools.product((0, 1), repeat=3):
            diff = joint_log_prob(with_f, y, p) - joint_log_prob(base, y, p)
            # other terms enter the dot product too, so equality holds up to rounding
            assert diff == pytest.approx(0.0 if violated(y) else weight, abs=1e-12)
        # with the factor alone, every violating assignment sits exactly one weight below every repaired one
        alone = FactorGraph(np.zeros((3, 2)), **({"groups": [[0, 1, 2]]} if kind is FactorKind.GROUP
                                                   else {"triangles": [(0, 1, 2)]}))
        ys = list(itertools.product((0, 1), repeat=3))
        for y in filter(violated, ys):
            for r in itertools.filterfalse(violated, ys):
                assert joint_log_prob(alone, r, p) - joint_log_prob(alone, y, p) == weight


def test_statistics_batch_matches_single():
    rng = np.random.default_rng(0)
    g = random_loopy(rng, 7)
    Y = all_assignments(7)
    batch = g.statistics(Y)
    for k in (0, 5, 77, 127):
        assert np.array_equal(batch[k], g.statistics(Y[k]))


def test_all_assignments_order():
    assert all_assignments(2).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    with pytest.raises(ValueError):
        all_assignments(21)


@given(st.integers(0, 2**20), st.integers(1, 8), st.booleans())
@settings(max_examples=40)
def test_exact_matches_per_factor_oracle(seed, n, clamp):
    rng = np.random.default_rng(seed)
    g = random_tree(rng, n) if n < 4 or seed % 2 else random_loopy(rng, n)
    p = random_params(rng)
    mask = values = None
    if clamp:
        mask = rng.random(n) < 0.4
        values = rng.integers(0, 2, n).astype(np.int8)
    marg, log_z, _, scores = brute_force(g, p, mask, values)
    ex = exact_inference(g, p, mask, values)
    assert np.allclose(ex.marginals, marg, atol=1e-12)
    assert ex.log_z == pytest.approx(log_z, abs=1e-10)
    assert ex.map_score == pytest.approx(scores.max(), abs=1e-10)
    assert np.isclose(ex.posterior.sum(), 1.0)


def test_single_variable_ln3():
    g = FactorGraph(np.array([[math.log(3.0)]]))
    assert exact_inference(g, Parameters(np.ones(1))).marginals[0] == pytest.approx(0.75)


def test_zero_parameters_uniform():
    rng = np.random.default_rng(1)
    g = random_loopy(rng, 8)
    ex = exact_inference(g, Parameters.zeros(3))
    assert np.allclose(ex.marginals, 0.5)
    assert np.allclose(ex.posterior, 1 / 256)


def test_log_likelihood_normalized():
    rng = np.random.default_rng(2)
    g = random_loopy(rng, 5)
    p = random_params(rng)
    mask = np.array([1, 1, 0, 1, 0], bool)
    total = 0.0
    for v in itertools.product((0, 1), repeat=3):
        values = np.zeros(5, np.int8)
        values[mask] = v
        total += math.exp(exact_log_likelihood(g, p, mask, values))
    assert total == pytest.approx(1.0)


def test_clamp_arrays_from_mapping():
    mask, values = clamp_arrays(4, {1: 1, 3: 0})
    assert mask.tolist() == [False, True, False, True]
    assert values.tolist() == [0, 1, 0, 0]


def test_without_removes_kinds():
    g = FactorGraph(np.ones((4, 1)), [(0, 1)], [[0, 2]], [(0, 1, 2)])
    h = g.without(FactorKind.GROUP, FactorKind.TRIANGLE)
    assert len(h.pairs) == 1 and h.n_groups == 0 and len(h.triangles) == 0


def test_parameters_vector_round_trip():
    v = P.vector()
    assert v.tolist() == [0.5, -1.0, 1.5, 2.0, 3.0]
    q = Parameters.from_vector(v)
    assert q.vector().tolist() == v.tolist() and q.is_finite()
    assert not Parameters(np.array([np.nan])).is_finite()
