"""Networks, accounts, profiles, alignments and the global social graph.

Accounts are addressed positionally: ``AccountRef(network, local_id)``.
External string identifiers only exist in :mod:`graphweld.fileio`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence


class AccountRef(NamedTuple):
    network: int
    local_id: int

    def __str__(self) -> str:
        return f"{self.network}:{self.local_id}"


@dataclass(frozen=True)
class Profile:
    """Profile of one account.

    ``strong_ids`` hold (nearly) unique identifiers such as an email address,
    ``weak_fields`` hold free text (interests, affiliation, summary...).
    """

    name: str
    strong_ids: Mapping[str, str] = field(default_factory=dict)
    weak_fields: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "strong_ids", MappingProxyType(dict(self.strong_ids)))
        object.__setattr__(self, "weak_fields", MappingProxyType(dict(self.weak_fields)))

    def __eq__(self, other):
        if not isinstance(other, Profile):
            return NotImplemented
        return (self.name == other.name
                and dict(self.strong_ids) == dict(other.strong_ids)
                and dict(self.weak_fields) == dict(other.weak_fields))

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.strong_ids.items())),
                     tuple(sorted(self.weak_fields.items()))))

    def weak_document(self) -> str:
        return " ".join(self.weak_fields[k] for k in sorted(self.weak_fields))


def _edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


class ObservedNetwork:
    """An undirected simple graph of accounts with profiles.

    Instances are immutable; use :class:`NetworkBuilder` to grow one.
    Edges are stored as ``(u, v)`` tuples with ``u < v``.
    """

    __slots__ = ("id", "profiles", "edges", "_adj")

    def __init__(self, id: int, profiles: Sequence[Profile], edges: Iterable[tuple[int, int]] = ()):
        self.id = int(id)
        self.profiles = tuple(profiles)
        self.edges = frozenset(_edge(int(u), int(v)) for u, v in edges)
        adj: list[set[int]] = [set() for _ in self.profiles]
        for u, v in self.edges:
            if u == v or not (0 <= u < len(adj) and 0 <= v < len(adj)):
                # invalid edges are kept for validate() to report
                continue
            adj[u].add(v)
            adj[v].add(u)
        self._adj = tuple(frozenset(s) for s in adj)

    def __len__(self) -> int:
        return len(self.profiles)

    def __eq__(self, other):
        if not isinstance(other, ObservedNetwork):
            return NotImplemented
        return self.id == other.id and self.profiles == other.profiles and self.edges == other.edges

    def __repr__(self):
        return f"ObservedNetwork(id={self.id}, nodes={len(self)}, edges={len(self.edges)})"

    def neighbors(self, local_id: int) -> frozenset[int]:
        return neighbors(self, local_id)

    def degree(self, local_id: int) -> int:
        return degree(self, local_id)

    def degrees(self) -> list[int]:
        return [len(s) for s in self._adj]

    def has_edge(self, u: int, v: int) -> bool:
        return _edge(u, v) in self.edges

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def _check_id(net: ObservedNetwork, local_id: int):
    if not 0 <= local_id < len(net.profiles):
        raise IndexError(f"account {local_id} out of range for network {net.id} "
                         f"with {len(net.profiles)} accounts")


def neighbors(net: ObservedNetwork, local_id: int) -> frozenset[int]:
    _check_id(net, local_id)
    return net._adj[local_id]


def degree(net: ObservedNetwork, local_id: int) -> int:
    _check_id(net, local_id)
    return len(net._adj[local_id])


class NetworkBuilder:
    """Mutable construction helper; :meth:`build` freezes the result."""

    def __init__(self, id: int):
        self.id = id
        self.profiles: list[Profile] = []
        self.adj: list[set[int]] = []

    def add_account(self, profile: Profile) -> int:
        self.profiles.append(profile)
        self.adj.append(set())
        return len(self.profiles) - 1

    def add_edge(self, u: int, v: int) -> bool:
        """Add an undirected edge; returns False for self-loops and duplicates."""
        if u == v or v in self.adj[u]:
            return False
        self.adj[u].add(v)
        self.adj[v].add(u)
        return True

    def remove_edge(self, u: int, v: int) -> bool:
        if v not in self.adj[u]:
            return False
        self.adj[u].discard(v)
        self.adj[v].discard(u)
        return True

    def build(self) -> ObservedNetwork:
        edges = [(u, v) for u, nb in enumerate(self.adj) for v in nb if u < v]
        return ObservedNetwork(self.id, self.profiles, edges)


@dataclass(frozen=True)
class NetworkCollection:
    networks: tuple[ObservedNetwork, ...]

    def __init__(self, networks: Iterable[ObservedNetwork]):
        object.__setattr__(self, "networks", tuple(networks))

    def __len__(self) -> int:
        return len(self.networks)

    def __iter__(self) -> Iterator[ObservedNetwork]:
        return iter(self.networks)

    def __getitem__(self, i: int) -> ObservedNetwork:
        return self.networks[i]

    def profile(self, ref: AccountRef) -> Profile:
        return self.networks[ref.network].profiles[ref.local_id]

    def accounts(self) -> Iterator[AccountRef]:
        for net in self.networks:
            for i in range(len(net)):
                yield AccountRef(net.id, i)

    def total_accounts(self) -> int:
        return sum(len(n) for n in self.networks)

    def offsets(self) -> list[int]:
        """Start index of each network in a flat account numbering."""
        out, acc = [], 0
        for n in self.networks:
            out.append(acc)
            acc += len(n)
        return out

    def network_pairs(self) -> list[tuple[int, int]]:
        k = len(self.networks)
        return [(i, j) for i in range(k) for j in range(i + 1, k)]


class AlignedPair(NamedTuple):
    a: AccountRef
    b: AccountRef
    probability: float

    @classmethod
    def make(cls, a: AccountRef, b: AccountRef, probability: float) -> "AlignedPair":
        """Build with canonical ordering (``a.network < b.network``)."""
        if a.network == b.network:
            raise ValueError(f"aligned accounts {a} and {b} are on the same network")
        if a.network > b.network:
            a, b = b, a
        if not 0.0 <= probability <= 1.0:
            raise ValueError(f"probability {probability} outside [0, 1]")
        return cls(AccountRef(*a), AccountRef(*b), float(probability))


@dataclass(frozen=True)
class PersonNode:
    accounts: frozenset[AccountRef]

    def networks(self) -> list[int]:
        return sorted(a.network for a in self.accounts)


@dataclass
class GlobalSocialGraph:
    """Person nodes plus source-tagged multi-edges ``(p, q, source_network)``.

    ``dropped_edges`` counts observed edges whose endpoints ended up in the same
    person; ``removed_pairs`` lists aligned pairs discarded to restore the
    one-account-per-network rule.
    """

    persons: list[PersonNode]
    edges: list[tuple[int, int, int]]
    dropped_edges: int = 0
    removed_pairs: list[AlignedPair] = field(default_factory=list)

    def person_of(self) -> dict[AccountRef, int]:
        return {a: i for i, p in enumerate(self.persons) for a in p.accounts}


def validate(collection: NetworkCollection) -> list[str]:
    """Return human-readable invariant violations; empty means valid."""
    problems: list[str] = []
    ids = [n.id for n in collection.networks]
    if ids != list(range(len(ids))):
        problems.append(f"network ids not dense 0..K-1: {ids}")
    for net in collection.networks:
        n = len(net.profiles)
        for k, p in enumerate(net.profiles):
            if not isinstance(p.name, str) or not p.name.strip():
                problems.append(f"network {net.id} account {k}: empty name")
            for fname in list(p.strong_ids) + list(p.weak_fields):
                if fname != fname.lower():
                    problems.append(f"network {net.id} account {k}: field name {fname!r} not lowercase")
        for u, v in sorted(net.edges):
            if u == v:
                problems.append(f"network {net.id}: self-loop at {u}")
            elif not (0 <= u < n and 0 <= v < n):
                problems.append(f"network {net.id}: dangling edge ({u}, {v})")
    return problems
