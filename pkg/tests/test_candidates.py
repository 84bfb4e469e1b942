import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphweld.candidates import (CandidateIndex, CandidateSet, coverage, generate_candidates,
                                  threshold_sweep)
from graphweld.model import AccountRef
from graphweld.strings import jaro_winkler, normalize_name, segment_name
from graphweld.synthgen import SynthConfig, generate

from _helpers import collection

A0, B0 = AccountRef(0, 0), AccountRef(1, 0)


def test_identical_names_one_candidate():
    cs = generate_candidates(collection((["alice smith"], []), (["Alice Smith"], [])), 0.8)
    assert [(p.a, p.b, p.name_similarity) for p in cs] == [(A0, B0, 1.0)]


def test_no_shared_segment_no_candidate():
    assert len(generate_candidates(collection((["alice smith"], []), (["zed quux"], [])), 0.8)) == 0


def test_threshold_zero_keeps_block_members():
    cs = generate_candidates(collection((["wei wang"], []), (["li wang"], [])), 0.0)
    assert len(cs) == 1
    assert cs[0].name_similarity == pytest.approx(jaro_winkler("wei wang", "li wang"))


def test_threshold_bounds():
    with pytest.raises(ValueError):
        generate_candidates(collection((["a"], []), (["a"], [])), 1.5)


def test_candidate_set_dedup_and_canonical():
    cs = CandidateSet([(B0, A0, 0.9), (A0, B0, 0.9), (AccountRef(2, 1), AccountRef(0, 3), 0.85)])
    assert len(cs) == 2
    assert all(p.a.network < p.b.network for p in cs)
    assert [p.id for p in cs] == [0, 1]
    assert cs.get(B0, A0) == cs.index[(A0, B0)]
    with pytest.raises(ValueError):
        CandidateSet([(A0, AccountRef(0, 1), 1.0)])


def test_coverage_examples():
    cs = CandidateSet([(A0, B0, 1.0), (AccountRef(0, 1), AccountRef(1, 1), 0.9)])
    assert coverage(cs, {(A0, B0)}) == (1.0, 2, True)
    assert coverage(cs, {(A0, AccountRef(1, 1))}).rate == 0.0
    empty = coverage(cs, set())
    assert empty.rate == 1.0 and not empty.defined


name_pool = ["wei wang", "w wang", "li wang", "wei li", "anna berg", "ana berg", "anna bergs",
             "jo lee", "joe lee", "jo le", "mark twain", "marc twain", "wang wei"]


@st.composite
def small_collections(draw):
    nets = []
    for _ in range(draw(st.integers(2, 3))):
        nets.append((draw(st.lists(st.sampled_from(name_pool), min_size=1, max_size=6)), []))
    return collection(*nets)


def _brute(coll, threshold):
    out = set()
    for i, j in coll.network_pairs():
        for a, pa in enumerate(coll[i].profiles):
            for b, pb in enumerate(coll[j].profiles):
                na, nb = normalize_name(pa.name), normalize_name(pb.name)
                if set(na.split()) & set(nb.split()) and jaro_winkler(na, nb) >= threshold:
                    out.add((AccountRef(i, a), AccountRef(j, b)))
    return out


@given(small_collections(), st.sampled_from([0.0, 0.7, 0.8, 0.9, 1.0]))
@settings(max_examples=60)
def test_generation_matches_all_pairs_oracle(coll, threshold):
    cs = generate_candidates(coll, threshold)
    assert cs.key_set() == _brute(coll, threshold)
    for p in cs:
        assert p.name_similarity >= threshold
        sa = set(segment_name(coll.profile(p.a).name))
        assert sa & set(segment_name(coll.profile(p.b).name))


@given(small_collections())
@settings(max_examples=40)
def test_monotone_in_threshold(coll):
    truth = _brute(coll, 0.95)
    prev_size, prev_cov, prev_keys = None, None, None
    for t in (0.6, 0.7, 0.8, 0.9, 1.0):
        cs = generate_candidates(coll, t)
        cov = coverage(cs, truth)
        if prev_size is not None:
            assert cov.size <= prev_size and cov.rate <= prev_cov
            assert cs.key_set() <= prev_keys
        prev_size, prev_cov, prev_keys = cov.size, cov.rate, cs.key_set()


@given(small_collections(), st.sampled_from([0.7, 0.8]))
@settings(max_examples=40)
def test_incremental_equals_full(coll, threshold):
    idx = CandidateIndex(threshold)
    idx.add_collection(coll)
    assert idx.candidate_set() == generate_candidates(coll, threshold)


def test_incremental_single_arrival():
    coll = collection((["wei wang", "anna berg"], []), (["w wang"], []))
    idx = CandidateIndex(0.7)
    idx.add_collection(coll)
    added = idx.add_account(AccountRef(1, 1), "Anna Berg")
    assert [(a, b) for a, b, _ in added] == [(AccountRef(0, 1), AccountRef(1, 1))]
    with pytest.raises(ValueError):
        idx.add_account(AccountRef(1, 1), "again")


def test_block_cap_and_workers_do_not_change_output():
    _, coll, _ = generate(SynthConfig(persons=600, seed=3))
    ref = generate_candidates(coll, 0.8, workers=1)
    assert generate_candidates(coll, 0.8, block_cap=5, workers=1) == ref
    assert generate_candidates(coll, 0.8, workers=3) == ref


def test_sweep_matches_refiltering():
    _, coll, truth = generate(SynthConfig(persons=600, seed=3))
    base = generate_candidates(coll, 0.7)
    rows = threshold_sweep(base, truth.true_pairs, [0.7, 0.8, 0.9], coll.network_pairs())
    for row in rows:
        direct = generate_candidates(coll, row["threshold"])
        assert row["size.all"] == len(direct)
        assert row["coverage.all"] == pytest.approx(coverage(direct, truth.true_pairs).rate)
        assert row["size.all"] == sum(row[f"size.{i}-{j}"] for i, j in coll.network_pairs())
