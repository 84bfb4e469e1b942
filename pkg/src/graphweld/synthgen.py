"""Synthetic multi-view social networks with known ground truth.

A hidden global graph of persons is grown by preferential attachment; each
observed network keeps a random subset of persons and a random subset of the
ties among them.  Names come from Zipf-distributed pools so that popular names
are shared by many persons, and each account gets a possibly perturbed copy of
its owner's name plus noisy profile fields.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .model import AccountRef, NetworkBuilder, NetworkCollection, Profile

STRONG_FIELDS = ("email", "homepage")
WEAK_FIELDS = ("interests", "affiliation")

_ONSETS = ("b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s",
           "t", "v", "w", "z", "ch", "sh", "zh", "x", "y", "q", "br", "tr", "st")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ei", "ao", "ou", "an", "en", "in",
           "ang", "eng", "ong", "ia", "ie", "ar", "el", "on")
_DOMAINS = ("mail.com", "inbox.org", "post.net", "uni.edu", "lab.org")
_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class ConfigError(ValueError):
    pass


def _per_network(value, k: int, name: str) -> tuple:
    if isinstance(value, (int, float)):
        return (float(value),) * k
    value = tuple(value)
    if len(value) != k:
        raise ConfigError(f"{name} has {len(value)} entries for {k} networks")
    return value


@dataclass(frozen=True)
class SynthConfig:
    """Generator knobs.  Per-network settings accept a scalar or one value per network."""

    persons: int = 5000
    networks: int = 3
    participation: Sequence[float] = (0.5, 0.35, 0.08)
    # latent correlation of a person's memberships; marginals stay equal to participation
    participation_correlation: float = 0.0
    edge_retention: Sequence[float] = (0.95, 0.9, 0.9)
    name_pool_zipf_exponent: float = 0.9
    # given names are drawn from a flatter Zipf law than surnames; None reuses the surname exponent
    first_name_zipf_exponent: float | None = 0.3
    name_perturbation_rate: float = 0.15
    strong_id_presence: Sequence[float] = (0.15, 0.15, 0.15)
    weak_field_noise: float = 0.3
    seed: int = 7
    attachment: int = 3
    first_name_pool: int = 35
    last_name_pool: int = 600
    middle_name_rate: float = 0.2
    # probability that an account shows each of WEAK_FIELDS, one row per network
    weak_field_presence: Sequence[Sequence[float]] = ((0.7, 0.7), (0.6, 0.6), (0.6, 0.6))
    topic_vocabulary: int = 2000
    topics_per_person: int = 6
    affiliation_pool: int = 300
    duplication_target: int = 10

    def __post_init__(self):
        k = self.networks
        for name in ("participation", "edge_retention", "strong_id_presence"):
            object.__setattr__(self, name, tuple(float(x) for x in _per_network(getattr(self, name), k, name)))
        rows = _per_network(self.weak_field_presence, k, "weak_field_presence")
        rows = tuple(tuple(float(x) for x in _per_network(row, len(WEAK_FIELDS), "weak_field_presence row"))
                     for row in rows)
        object.__setattr__(self, "weak_field_presence", rows)

    def validate(self):
        if self.persons < 10:
            raise ConfigError(f"persons must be >= 10, got {self.persons}")
        if self.networks < 2:
            raise ConfigError(f"networks must be >= 2, got {self.networks}")
        if self.attachment < 1 or self.attachment >= self.persons:
            raise ConfigError(f"attachment must be in [1, persons), got {self.attachment}")
        probs = list(self.participation) + list(self.edge_retention) + list(self.strong_id_presence)
        probs += [self.name_perturbation_rate, self.weak_field_noise, self.middle_name_rate,
                  self.participation_correlation]
        probs += [p for row in self.weak_field_presence for p in row]
        bad = [p for p in probs if not 0.0 <= p <= 1.0]
        if bad:
            raise ConfigError(f"probabilities outside [0, 1]: {bad}")
        for name in ("first_name_pool", "last_name_pool", "topic_vocabulary", "affiliation_pool"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(map(list, v)) if k == "weak_field_presence" else list(v) if isinstance(v, tuple) else v)
                for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: {e}") from e

    def with_sparse_pair(self, pair=(1, 2), factor: float = 0.1) -> "SynthConfig":
        """Variant in which the profile overlap of one network pair is thinned.

        The two networks show complementary weak fields (each keeps one field at the
        usual rate and the other at ``factor`` times the rate) and their strong ids
        are thinned by ``factor``, so accounts on ``pair`` rarely share profile evidence
        while both still overlap normally with the remaining networks.
        """
        i, j = pair
        presence = [list(r) for r in self.weak_field_presence]
        presence[i][1] *= factor
        presence[j][0] *= factor
        strong = list(self.strong_id_presence)
        strong[i] *= factor
        strong[j] *= factor
        return replace(self, weak_field_presence=tuple(map(tuple, presence)), strong_id_presence=tuple(strong))


@dataclass(frozen=True)
class Person:
    first: str
    middle: str | None
    last: str
    email: str
    homepage: str
    interests: tuple[str, ...]
    affiliation: tuple[str, ...]

    @property
    def name(self) -> str:
        parts = [self.first] + ([self.middle] if self.middle else []) + [self.last]
        return " ".join(p.capitalize() for p in parts)


@dataclass
class GlobalGraph:
    persons: list[Person]
    edges: list[tuple[int, int]]

    def __len__(self):
        return len(self.persons)


@dataclass
class GroundTruth:
    person_accounts: dict[int, set[AccountRef]] = field(default_factory=dict)
    true_pairs: set[tuple[AccountRef, AccountRef]] = field(default_factory=set)

    @classmethod
    def from_person_accounts(cls, person_accounts: dict[int, set[AccountRef]]) -> "GroundTruth":
        pairs = set()
        for accs in person_accounts.values():
            ordered = sorted(accs)
            for x in range(len(ordered)):
                for y in range(x + 1, len(ordered)):
                    a, b = ordered[x], ordered[y]
                    if a.network != b.network:
                        pairs.add((a, b) if a.network < b.network else (b, a))
        return cls(person_accounts={p: set(a) for p, a in person_accounts.items()}, true_pairs=pairs)

    def pairs_between(self, i: int, j: int) -> set[tuple[AccountRef, AccountRef]]:
        return {p for p in self.true_pairs if p[0].network == i and p[1].network == j}


def _streams(seed: int, names: Sequence[str]) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def _word(rng: np.random.Generator, syllables: int) -> str:
    return "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                   for _ in range(syllables))


def _word_pool(rng: np.random.Generator, size: int, lo: int, hi: int, exclude=()) -> list[str]:
    seen = set(exclude)
    pool: list[str] = []
    while len(pool) < size:
        w = _word(rng, int(rng.integers(lo, hi + 1)))
        if w not in seen:
            seen.add(w)
            pool.append(w)
    return pool


def _zipf_probs(n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=float) ** exponent
    return w / w.sum()


def preferential_attachment(n: int, m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Barabasi-Albert growth seeded by an m-clique.

    Produces ``m*(m-1)/2 + m*(n-m)`` edges.
    """
    edges = [(u, v) for u in range(m) for v in range(u + 1, m)]
    if m == 1:
        # a single seed node has no degree to attach to; connect node 1 to it
        edges = []
    targets_pool = [u for e in edges for u in e] or [0]
    for t in range(m, n):
        chosen: set[int] = set()
        while len(chosen) < min(m, t):
            chosen.add(targets_pool[int(rng.integers(len(targets_pool)))])
        for u in sorted(chosen):
            edges.append((u, t))
            targets_pool.extend((u, t))
    return edges


def generate_global(config: SynthConfig) -> GlobalGraph:
    config.validate()
    rng = _streams(config.seed, ("graph", "names", "identity", "sample"))
    edges = preferential_attachment(config.persons, config.attachment, rng["graph"])

    r = rng["names"]
    firsts = _word_pool(r, config.first_name_pool, 1, 2)
    lasts = _word_pool(r, config.last_name_pool, 1, 2, exclude=firsts)
    fe = config.name_pool_zipf_exponent if config.first_name_zipf_exponent is None else config.first_name_zipf_exponent
    fp = _zipf_probs(len(firsts), fe)
    lp = _zipf_probs(len(lasts), config.name_pool_zipf_exponent)
    fi = r.choice(len(firsts), size=config.persons, p=fp)
    li = r.choice(len(lasts), size=config.persons, p=lp)
    has_middle = r.random(config.persons) < config.middle_name_rate
    mi = r.choice(len(firsts), size=config.persons, p=fp)

    r = rng["identity"]
    vocab = _word_pool(r, config.topic_vocabulary, 2, 3)
    vp = _zipf_probs(len(vocab), 1.0)
    inst_words = _word_pool(r, config.affiliation_pool, 2, 3, exclude=vocab)
    inst_kinds = ("university", "institute", "labs", "college", "research", "group")
    ip = _zipf_probs(len(inst_words), 1.0)
    persons = []
    for p in range(config.persons):
        first, last = firsts[fi[p]], lasts[li[p]]
        num = int(r.integers(100))
        email = f"{first}.{last}{num}@{_DOMAINS[int(r.integers(len(_DOMAINS)))]}"
        homepage = f"http://{_DOMAINS[int(r.integers(len(_DOMAINS)))]}/~{last}{first[0]}{num}"
        k = config.topics_per_person
        topics = tuple(sorted(set(vocab[t] for t in r.choice(len(vocab), size=k, p=vp))))
        inst = inst_words[int(r.choice(len(inst_words), p=ip))]
        affiliation = (inst, inst_kinds[int(r.integers(len(inst_kinds)))])
        persons.append(Person(first, firsts[mi[p]] if has_middle[p] else None, last,
                              email, homepage, topics, affiliation))
    return GlobalGraph(persons, edges)


def perturb_name(name: str, rate: float, rng: np.random.Generator) -> str:
    """With probability ``rate`` apply one name variation, otherwise return ``name``.

    Variations: initialism of the first segment, dropping a middle segment, or a
    single-character substitution/insertion/deletion.  An applied variation always
    changes the string.
    """
    if rate <= 0.0 or rng.random() >= rate:
        return name
    segs = name.split()
    ops = ["edit"]
    if len(segs) >= 2 and len(segs[0]) > 1:
        ops.append("initial")
    if len(segs) >= 3:
        ops.append("drop_middle")
    op = ops[int(rng.integers(len(ops)))]
    if op == "initial":
        segs[0] = segs[0][0]
    elif op == "drop_middle":
        del segs[1 + int(rng.integers(len(segs) - 2))]
    else:
        si = int(rng.integers(len(segs)))
        s = segs[si]
        kinds = ["sub", "ins"] + (["del"] if len(s) > 1 else [])
        kind = kinds[int(rng.integers(len(kinds)))]
        pos = int(rng.integers(len(s)))
        if kind == "sub":
            choices = [c for c in _LETTERS if c != s[pos].lower()]
            c = choices[int(rng.integers(len(choices)))]
            s = s[:pos] + (c.upper() if s[pos].isupper() else c) + s[pos + 1:]
        elif kind == "ins":
            pos = int(rng.integers(len(s) + 1))
            s = s[:pos] + _LETTERS[int(rng.integers(26))] + s[pos:]
        else:
            s = s[:pos] + s[pos + 1:]
        segs[si] = s
    return " ".join(segs)


def _noisy_tokens(tokens: Sequence[str], noise: float, rng: np.random.Generator) -> list[str]:
    return [t for t in tokens if rng.random() >= noise]


def sample_observed(world: GlobalGraph, config: SynthConfig) -> tuple[NetworkCollection, GroundTruth]:
    config.validate()
    rng = _streams(config.seed, ("graph", "names", "identity", "sample"))["sample"]
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(int(rng.integers(2**63))).spawn(config.networks)]
    n = len(world)
    rho = config.participation_correlation
    activity = rng.standard_normal(n)
    person_accounts: dict[int, set[AccountRef]] = {}
    builders = []
    for i in range(config.networks):
        r = streams[i]
        # Gaussian copula: shared activity plus private noise, thresholded at the marginal rate
        z = np.sqrt(rho) * activity + np.sqrt(1.0 - rho) * r.standard_normal(n)
        joined = np.nonzero(z < ndtri(config.participation[i]))[0]
        order = joined[r.permutation(len(joined))]
        local = {int(p): k for k, p in enumerate(order)}
        b = NetworkBuilder(i)
        presence = config.weak_field_presence[i]
        for p in order:
            person = world.persons[int(p)]
            name = perturb_name(person.name, config.name_perturbation_rate, r)
            strong = {}
            if r.random() < config.strong_id_presence[i]:
                strong["email"] = person.email
            if r.random() < config.strong_id_presence[i]:
                strong["homepage"] = person.homepage
            weak = {}
            for fname, tokens, pres in zip(WEAK_FIELDS, (person.interests, person.affiliation), presence):
                if r.random() < pres:
                    kept = _noisy_tokens(tokens, config.weak_field_noise, r)
                    if kept:
                        weak[fname] = " ".join(kept)
            b.add_account(Profile(name, strong, weak))
            person_accounts.setdefault(int(p), set()).add(AccountRef(i, local[int(p)]))
        keep = r.random(len(world.edges)) < config.edge_retention[i]
        for (u, v), kp in zip(world.edges, keep):
            if kp and u in local and v in local:
                b.add_edge(local[u], local[v])
        builders.append(b)
    collection = NetworkCollection(b.build() for b in builders)
    return collection, GroundTruth.from_person_accounts(person_accounts)


def generate(config: SynthConfig) -> tuple[GlobalGraph, NetworkCollection, GroundTruth]:
    world = generate_global(config)
    collection, truth = sample_observed(world, config)
    return world, collection, truth


def summary_statistics(world: GlobalGraph, collection: NetworkCollection, truth: GroundTruth) -> dict:
    stats: dict = {"persons": len(world), "global_edges": len(world.edges)}
    for net in collection:
        stats[f"net{net.id}.accounts"] = len(net)
        stats[f"net{net.id}.edges"] = len(net.edges)
    owner = {a: p for p, accs in truth.person_accounts.items() for a in accs}
    for i, j in collection.network_pairs():
        stats[f"pair{i}-{j}.true_pairs"] = len(truth.pairs_between(i, j))
        stats[f"pair{i}-{j}.cooccurred_ties"] = cooccurred_ties(collection, owner, i, j)
    counts = Counter(p.name for p in world.persons)
    stats["top_name_persons"] = counts.most_common(1)[0][1]
    stats["distinct_names"] = len(counts)
    return stats


def cooccurred_ties(collection: NetworkCollection, owner: dict[AccountRef, int], i: int, j: int) -> int:
    """Ties present in both networks between the same two persons."""
    def person_edges(k):
        return {tuple(sorted((owner[AccountRef(k, u)], owner[AccountRef(k, v)])))
                for u, v in collection[k].edges}
    return len(person_edges(i) & person_edges(j))


def name_frequency_ranks(world: GlobalGraph) -> list[int]:
    return [c for _, c in Counter(p.name for p in world.persons).most_common()]
