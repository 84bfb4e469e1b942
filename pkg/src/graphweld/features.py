"""Local features for candidate pairs and the correlation structures between them."""
from __future__ import annotations

import enum
import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .candidates import CandidateSet
from .model import AccountRef, NetworkCollection, ObservedNetwork, Profile
from .strings import normalized_levenshtein, segment_name

log = logging.getLogger(__name__)

DEFAULT_STRONG_FIELDS = ("email", "homepage")
STRONG_SENTINEL = 1.0
OPINION_LEADER_SHARE = 0.01
MIDDLE_CLASS_SHARE = 0.10

_TOKEN = re.compile(r"\w+", re.UNICODE)


class StatusTier(enum.IntEnum):
    OPINION_LEADER = 0
    MIDDLE_CLASS = 1
    MASSES = 2


_TIER_TAG = {StatusTier.OPINION_LEADER: "OL", StatusTier.MIDDLE_CLASS: "MC", StatusTier.MASSES: "MA"}


# ---------------------------------------------------------------- name uniqueness


@dataclass
class SegmentModel:
    """Add-one smoothed unigram model over name segments."""

    counts: Counter
    total: int
    smoothing: float = 1.0

    @property
    def vocabulary(self) -> int:
        return len(self.counts)

    def probability(self, segment: str) -> float:
        return (self.counts.get(segment, 0) + self.smoothing) / (self.total + self.smoothing * self.vocabulary)

    def log_probability(self, segment: str) -> float:
        return math.log(self.probability(segment))


def build_segment_model(collection: NetworkCollection) -> SegmentModel:
    counts: Counter = Counter()
    for net in collection:
        for p in net.profiles:
            counts.update(segment_name(p.name))
    if not counts:
        raise ValueError("no name segments in collection")
    return SegmentModel(counts, sum(counts.values()))


def name_uniqueness(model: SegmentModel, name: str) -> float:
    """Negative log-likelihood of the name's segments (natural log)."""
    segs = segment_name(name)
    if not segs:
        log.warning("empty name %r has uniqueness 0", name)
        return 0.0
    return -sum(model.log_probability(s) for s in segs)


def pair_uniqueness(model: SegmentModel, name_a: str, name_b: str) -> float:
    return 0.5 * (name_uniqueness(model, name_a) + name_uniqueness(model, name_b))


# ---------------------------------------------------------------- profiles


def strong_id_features(a: Profile, b: Profile, fields: Sequence[str] = DEFAULT_STRONG_FIELDS) -> list[tuple[float, float]]:
    """``(normalized edit distance, presence flag)`` per strong field."""
    out = []
    for f in fields:
        x, y = a.strong_ids.get(f), b.strong_ids.get(f)
        if x and y:
            out.append((normalized_levenshtein(x.lower(), y.lower()), 1.0))
        else:
            out.append((STRONG_SENTINEL, 0.0))
    return out


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.casefold())


class WeakProfileIndex:
    """TF-IDF vectors of the concatenated weak fields of every account.

    ``tf`` is the raw count and ``idf = ln(N / df)`` with ``N`` the number of
    accounts in the corpus.
    """

    def __init__(self, documents: Sequence[str]):
        vocab: dict[str, int] = {}
        rows, cols, vals = [], [], []
        for r, doc in enumerate(documents):
            for tok, c in Counter(tokenize(doc)).items():
                rows.append(r)
                cols.append(vocab.setdefault(tok, len(vocab)))
                vals.append(c)
        n = len(documents)
        tf = sp.csr_matrix((np.array(vals, dtype=float), (rows, cols)), shape=(n, len(vocab)))
        df = np.bincount(cols, minlength=len(vocab)) if cols else np.zeros(0)
        self.idf = np.log(n / np.maximum(df, 1)) if n else np.zeros(0)
        self.vocabulary = vocab
        self.matrix = (tf @ sp.diags(self.idf)).tocsr() if len(vocab) else tf
        self.norms = np.sqrt(np.asarray(self.matrix.multiply(self.matrix).sum(axis=1)).ravel())

    @classmethod
    def from_collection(cls, collection: NetworkCollection) -> "WeakProfileIndex":
        return cls([p.weak_document() for net in collection for p in net.profiles])

    def similarity(self, rows_a: np.ndarray, rows_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inner product and cosine between the given row pairs."""
        rows_a = np.asarray(rows_a, dtype=np.int64)
        rows_b = np.asarray(rows_b, dtype=np.int64)
        if not len(rows_a):
            return np.zeros(0), np.zeros(0)
        inner = np.asarray(self.matrix[rows_a].multiply(self.matrix[rows_b]).sum(axis=1)).ravel()
        denom = self.norms[rows_a] * self.norms[rows_b]
        cosine = np.divide(inner, denom, out=np.zeros_like(inner), where=denom > 0)
        return inner, np.clip(cosine, 0.0, 1.0)


def weak_profile_similarity(index: WeakProfileIndex, row_a: int, row_b: int) -> tuple[float, float]:
    inner, cos = index.similarity(np.array([row_a]), np.array([row_b]))
    return float(inner[0]), float(cos[0])


# ---------------------------------------------------------------- social status


def status_tiers(net: ObservedNetwork) -> np.ndarray:
    """Degree-rank tiers: top 1% opinion leaders, next 10% middle class, rest masses.

    Ties in degree are broken by ascending local id.
    """
    n = len(net)
    deg = np.array(net.degrees(), dtype=np.int64)
    order = np.lexsort((np.arange(n), -deg))
    n_ol = min(n, math.ceil(OPINION_LEADER_SHARE * n))
    n_mc = min(n - n_ol, math.ceil(MIDDLE_CLASS_SHARE * n))
    tiers = np.full(n, int(StatusTier.MASSES), dtype=np.int64)
    tiers[order[:n_ol]] = StatusTier.OPINION_LEADER
    tiers[order[n_ol:n_ol + n_mc]] = StatusTier.MIDDLE_CLASS
    return tiers


def status_shift_slot(tier_a: int, tier_b: int) -> int:
    return 3 * int(tier_a) + int(tier_b)


def status_shift_feature(tier_a: int, tier_b: int) -> np.ndarray:
    v = np.zeros(9)
    v[status_shift_slot(tier_a, tier_b)] = 1.0
    return v


# ---------------------------------------------------------------- feature matrix


def feature_schema(strong_fields: Sequence[str] = DEFAULT_STRONG_FIELDS) -> list[str]:
    names = ["uniqueness"]
    for f in strong_fields:
        names += [f"strong.{f}.distance", f"strong.{f}.present"]
    names += ["weak.inner", "weak.cosine"]
    names += [f"status.{_TIER_TAG[StatusTier(a)]}->{_TIER_TAG[StatusTier(b)]}" for a in range(3) for b in range(3)]
    names.append("name_similarity")
    return names


@dataclass
class FeatureMatrix:
    values: np.ndarray
    schema: list[str]

    def __len__(self):
        return self.values.shape[0]


def featurize(collection: NetworkCollection, candidates: CandidateSet,
              strong_fields: Sequence[str] = DEFAULT_STRONG_FIELDS,
              segment_model: SegmentModel | None = None,
              weak_index: WeakProfileIndex | None = None) -> FeatureMatrix:
    schema = feature_schema(strong_fields)
    n = len(candidates)
    X = np.zeros((n, len(schema)))
    if not n:
        return FeatureMatrix(X, schema)
    arr = candidates.arrays()
    offsets = np.array(collection.offsets())
    rows_a = offsets[arr["a_net"]] + arr["a_id"]
    rows_b = offsets[arr["b_net"]] + arr["b_id"]
    profiles = [p for net in collection for p in net.profiles]

    model = segment_model or build_segment_model(collection)
    uniq = np.array([name_uniqueness(model, p.name) for p in profiles])
    col = 0
    X[:, col] = 0.5 * (uniq[rows_a] + uniq[rows_b])
    col += 1

    has_strong = np.array([bool(p.strong_ids) for p in profiles])
    X[:, col:col + 2 * len(strong_fields):2] = STRONG_SENTINEL
    for k in np.nonzero(has_strong[rows_a] & has_strong[rows_b])[0]:
        feats = strong_id_features(profiles[rows_a[k]], profiles[rows_b[k]], strong_fields)
        for f, (dist, present) in enumerate(feats):
            X[k, col + 2 * f] = dist
            X[k, col + 2 * f + 1] = present
    col += 2 * len(strong_fields)

    weak = weak_index or WeakProfileIndex([p.weak_document() for p in profiles])
    X[:, col], X[:, col + 1] = weak.similarity(rows_a, rows_b)
    col += 2

    tiers = np.concatenate([status_tiers(net) for net in collection]) if len(profiles) else np.zeros(0, int)
    X[np.arange(n), col + 3 * tiers[rows_a] + tiers[rows_b]] = 1.0
    col += 9

    X[:, col] = arr["similarity"]
    return FeatureMatrix(X, schema)


# ---------------------------------------------------------------- correlation structure


class ConstrainedGroup(NamedTuple):
    account: AccountRef
    other_network: int
    members: tuple[int, ...]


@dataclass
class CorrelationStructure:
    cst: np.ndarray            # (E, 2) candidate ids, k < k'
    mc: list[ConstrainedGroup]
    lt: np.ndarray             # (T, 3) candidate ids of (u,v), (u,w), (v,w)

    def cst_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.cst}

    def mc_sets(self) -> set[frozenset[int]]:
        return {frozenset(g.members) for g in self.mc}

    def lt_set(self) -> set[frozenset[int]]:
        return {frozenset(map(int, t)) for t in self.lt}


def build_cst(candidates: CandidateSet, collection: NetworkCollection) -> np.ndarray:
    """Pairs of candidates ``(a,b)``, ``(a',b')`` with ties ``a-a'`` and ``b-b'``."""
    edges: set[tuple[int, int]] = set()
    index = candidates.index
    for p in candidates.pairs:
        na = collection[p.a.network].neighbors(p.a.local_id)
        nb = collection[p.b.network].neighbors(p.b.local_id)
        if not na or not nb:
            continue
        i, j = p.a.network, p.b.network
        for u in na:
            ru = AccountRef(i, u)
            for v in nb:
                k2 = index.get((ru, AccountRef(j, v)))
                if k2 is not None and k2 > p.id:
                    edges.add((p.id, k2))
    if not edges:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(edges), dtype=np.int64)


def build_mc(candidates: CandidateSet) -> list[ConstrainedGroup]:
    """One group per (account, opposing network) holding two or more candidates."""
    groups = []
    for acc in sorted(candidates.by_account):
        by_net: dict[int, list[int]] = defaultdict(list)
        for k in candidates.by_account[acc]:
            p = candidates.pairs[k]
            other = p.b if p.a == acc else p.a
            by_net[other.network].append(k)
        for net in sorted(by_net):
            if len(by_net[net]) >= 2:
                groups.append(ConstrainedGroup(acc, net, tuple(sorted(by_net[net]))))
    return groups


def build_lt(candidates: CandidateSet, n_networks: int | None = None) -> np.ndarray:
    """Closed correspondence triangles across three distinct networks."""
    if n_networks is not None and n_networks < 3:
        return np.zeros((0, 3), dtype=np.int64)
    partners: dict[AccountRef, dict[int, list[tuple[int, AccountRef]]]] = defaultdict(lambda: defaultdict(list))
    for p in candidates.pairs:
        partners[p.a][p.b.network].append((p.id, p.b))
    index = candidates.index
    out = []
    for p in candidates.pairs:
        u, v = p.a, p.b
        for c, lst in partners[u].items():
            if c <= v.network:
                continue
            for k_uw, w in lst:
                k_vw = index.get((v, w))
                if k_vw is not None:
                    out.append((p.id, k_uw, k_vw))
    if not out:
        return np.zeros((0, 3), dtype=np.int64)
    return np.array(sorted(out), dtype=np.int64)


def build_structure(candidates: CandidateSet, collection: NetworkCollection) -> CorrelationStructure:
    return CorrelationStructure(build_cst(candidates, collection), build_mc(candidates),
                                build_lt(candidates, len(collection)))
