"""Candidate pair generation: segment blocking followed by Jaro-Winkler filtering."""
from __future__ import annotations

import itertools
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .model import AccountRef, NetworkCollection
from .strings import jaro_winkler, segment_name

DEFAULT_THRESHOLD = 0.8
DEFAULT_BLOCK_CAP = 10_000


class CandidatePair(NamedTuple):
    id: int
    a: AccountRef
    b: AccountRef
    name_similarity: float


def worker_count() -> int:
    try:
        cap = int(os.environ.get("GRAPHWELD_THREADS", "0"))
    except ValueError:
        cap = 0
    n = os.cpu_count() or 1
    return max(1, min(cap, n) if cap > 0 else n)


class CandidateSet:
    """Candidate pairs sorted by ``(a, b)``; ``pairs[k].id == k``."""

    def __init__(self, triples: Iterable[tuple[AccountRef, AccountRef, float]] = ()):
        best: dict[tuple[AccountRef, AccountRef], float] = {}
        for a, b, s in triples:
            a, b = AccountRef(*a), AccountRef(*b)
            if a.network == b.network:
                raise ValueError(f"candidate {a}-{b} within one network")
            if a.network > b.network:
                a, b = b, a
            best[(a, b)] = float(s)
        self.pairs = [CandidatePair(k, a, b, best[(a, b)]) for k, (a, b) in enumerate(sorted(best))]
        self.index = {(p.a, p.b): p.id for p in self.pairs}
        self.by_account: dict[AccountRef, list[int]] = defaultdict(list)
        for p in self.pairs:
            self.by_account[p.a].append(p.id)
            self.by_account[p.b].append(p.id)
        self.by_account = dict(self.by_account)
        self._arrays = None

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[CandidatePair]:
        return iter(self.pairs)

    def __getitem__(self, k: int) -> CandidatePair:
        return self.pairs[k]

    def __eq__(self, other):
        if not isinstance(other, CandidateSet):
            return NotImplemented
        return self.pairs == other.pairs

    def key_set(self) -> set[tuple[AccountRef, AccountRef]]:
        return set(self.index)

    def get(self, a: AccountRef, b: AccountRef) -> int | None:
        if a.network > b.network:
            a, b = b, a
        return self.index.get((a, b))

    def arrays(self) -> dict[str, np.ndarray]:
        if self._arrays is None:
            n = len(self.pairs)
            arr = {
                "a_net": np.fromiter((p.a.network for p in self.pairs), dtype=np.int64, count=n),
                "a_id": np.fromiter((p.a.local_id for p in self.pairs), dtype=np.int64, count=n),
                "b_net": np.fromiter((p.b.network for p in self.pairs), dtype=np.int64, count=n),
                "b_id": np.fromiter((p.b.local_id for p in self.pairs), dtype=np.int64, count=n),
                "similarity": np.fromiter((p.name_similarity for p in self.pairs), dtype=float, count=n),
            }
            self._arrays = arr
        return self._arrays

    def network_pair_ids(self, i: int, j: int) -> np.ndarray:
        arr = self.arrays()
        return np.nonzero((arr["a_net"] == i) & (arr["b_net"] == j))[0]

    def filter(self, threshold: float) -> "CandidateSet":
        return CandidateSet((p.a, p.b, p.name_similarity) for p in self.pairs if p.name_similarity >= threshold)

    def subset(self, ids: Iterable[int]) -> "CandidateSet":
        return CandidateSet((self.pairs[k].a, self.pairs[k].b, self.pairs[k].name_similarity) for k in ids)


class _SimilarityCache:
    def __init__(self):
        self.cache: dict[tuple[str, str], float] = {}

    def __call__(self, x: str, y: str) -> float:
        key = (x, y) if x <= y else (y, x)
        s = self.cache.get(key)
        if s is None:
            s = self.cache[key] = jaro_winkler(*key)
        return s


def _blocks(names: list[str]) -> dict[str, list[int]]:
    blocks: dict[str, list[int]] = defaultdict(list)
    for local, name in enumerate(names):
        for seg in dict.fromkeys(name.split()):
            blocks[seg].append(local)
    return blocks


def _block_pairs(left: list[int], right: list[int], cap: int) -> Iterator[tuple[int, int]]:
    # oversized blocks are walked chunk by chunk instead of as a full product
    if len(left) + len(right) <= cap:
        yield from itertools.product(left, right)
        return
    for start in range(0, len(left), max(1, cap // 2)):
        for u in left[start:start + max(1, cap // 2)]:
            for v in right:
                yield u, v


def _pair_candidates(i: int, j: int, names: list[list[str]], threshold: float, cap: int) -> list[tuple[AccountRef, AccountRef, float]]:
    sim = _SimilarityCache()
    bi = _blocks(names[i])
    bj = _blocks(names[j])
    kept: dict[tuple[int, int], float] = {}
    seen: set[tuple[int, int]] = set()
    for seg in sorted(bi.keys() & bj.keys()):
        for u, v in _block_pairs(bi[seg], bj[seg], cap):
            if (u, v) in seen:
                continue
            seen.add((u, v))
            s = sim(names[i][u], names[j][v])
            if s >= threshold:
                kept[(u, v)] = s
    return [(AccountRef(i, u), AccountRef(j, v), s) for (u, v), s in kept.items()]


def normalized_names(collection: NetworkCollection) -> list[list[str]]:
    return [[" ".join(segment_name(p.name)) for p in net.profiles] for net in collection]


def generate_candidates(collection: NetworkCollection, threshold: float = DEFAULT_THRESHOLD,
                        block_cap: int = DEFAULT_BLOCK_CAP, workers: int | None = None) -> CandidateSet:
    """All cross-network pairs sharing a name segment with full-name similarity >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    names = normalized_names(collection)
    jobs = collection.network_pairs()
    workers = workers or worker_count()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda ij: _pair_candidates(*ij, names, threshold, block_cap), jobs))
    else:
        parts = [_pair_candidates(i, j, names, threshold, block_cap) for i, j in jobs]
    return CandidateSet(itertools.chain.from_iterable(parts))


class CandidateIndex:
    """Incrementally maintained candidate set for streaming account arrivals."""

    def __init__(self, threshold: float = DEFAULT_THRESHOLD):
        self.threshold = threshold
        self.blocks: dict[str, dict[int, list[int]]] = defaultdict(lambda: defaultdict(list))
        self.names: dict[AccountRef, str] = {}
        self.pairs: dict[tuple[AccountRef, AccountRef], float] = {}
        self._sim = _SimilarityCache()

    def add_account(self, ref: AccountRef, name: str) -> list[tuple[AccountRef, AccountRef, float]]:
        ref = AccountRef(*ref)
        if ref in self.names:
            raise ValueError(f"account {ref} already indexed")
        norm = " ".join(segment_name(name))
        self.names[ref] = norm
        segs = list(dict.fromkeys(norm.split()))
        added = []
        checked: set[AccountRef] = set()
        for seg in segs:
            for net, members in self.blocks[seg].items():
                if net == ref.network:
                    continue
                for local in members:
                    other = AccountRef(net, local)
                    if other in checked:
                        continue
                    checked.add(other)
                    s = self._sim(norm, self.names[other])
                    if s >= self.threshold:
                        key = (ref, other) if ref.network < other.network else (other, ref)
                        self.pairs[key] = s
                        added.append((key[0], key[1], s))
        for seg in segs:
            self.blocks[seg][ref.network].append(ref.local_id)
        return added

    def add_collection(self, collection: NetworkCollection):
        for net in collection:
            for local, p in enumerate(net.profiles):
                self.add_account(AccountRef(net.id, local), p.name)

    def candidate_set(self) -> CandidateSet:
        return CandidateSet((a, b, s) for (a, b), s in self.pairs.items())


class Coverage(NamedTuple):
    rate: float
    size: int
    defined: bool


def coverage(candidates: CandidateSet, true_pairs: Iterable[tuple[AccountRef, AccountRef]]) -> Coverage:
    """Fraction of true pairs present among candidates; ``defined`` is False for empty truth."""
    truth = set(true_pairs)
    if not truth:
        return Coverage(1.0, len(candidates), False)
    hit = sum(1 for t in truth if t in candidates.index)
    return Coverage(hit / len(truth), len(candidates), True)


def threshold_sweep(candidates: CandidateSet, true_pairs, thresholds, network_pairs) -> list[dict]:
    """Size and coverage per threshold; ``candidates`` must be generated at <= min(thresholds)."""
    truth = set(true_pairs)
    arr = candidates.arrays()
    rows = []
    for t in thresholds:
        keep = arr["similarity"] >= t
        row = {"threshold": float(t)}
        groups = [(f"{i}-{j}", (arr["a_net"] == i) & (arr["b_net"] == j), i, j) for i, j in network_pairs]
        groups.append(("all", np.ones(len(candidates), dtype=bool), None, None))
        for label, mask, i, j in groups:
            ids = np.nonzero(keep & mask)[0]
            sub_truth = truth if i is None else {p for p in truth if p[0].network == i and p[1].network == j}
            keys = {(candidates.pairs[k].a, candidates.pairs[k].b) for k in ids}
            hit = len(sub_truth & keys)
            row[f"size.{label}"] = int(len(ids))
            row[f"coverage.{label}"] = hit / len(sub_truth) if sub_truth else 1.0
        rows.append(row)
    return rows
