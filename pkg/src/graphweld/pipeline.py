"""Global social graph construction from an alignment, and the crawl simulator."""
from __future__ import annotations

import heapq
import math
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .model import AccountRef, AlignedPair, GlobalSocialGraph, NetworkBuilder, NetworkCollection, PersonNode
from .strings import normalize_name


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        root = x
        while self.parent.get(root, root) != root:
            root = self.parent[root]
        while x != root:
            self.parent[x], x = root, self.parent.get(x, x)
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller ref becomes the root so results do not depend on input order
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _components(pairs: Sequence[AlignedPair]) -> list[tuple[list[AccountRef], list[AlignedPair]]]:
    uf = _UnionFind()
    for p in pairs:
        uf.union(p.a, p.b)
    members: dict = defaultdict(set)
    edges: dict = defaultdict(list)
    for p in pairs:
        r = uf.find(p.a)
        members[r].update((p.a, p.b))
        edges[r].append(p)
    return [(sorted(members[r]), edges[r]) for r in sorted(members)]


def _valid(accounts: Sequence[AccountRef]) -> bool:
    nets = [a.network for a in accounts]
    return len(nets) == len(set(nets))


def _repair(pairs: list[AlignedPair], removed: list[AlignedPair]) -> list[list[AccountRef]]:
    """Split components until each holds at most one account per network.

    Within an invalid component the weakest aligned pair (lowest probability,
    then largest accounts) is dropped and the remainder is re-examined.
    """
    out = []
    stack = [pairs]
    while stack:
        group = stack.pop()
        for accounts, edges in _components(group):
            if _valid(accounts):
                out.append(accounts)
                continue
            weakest = min(edges, key=lambda p: (p.probability, -p.a.network, -p.a.local_id,
                                                 -p.b.network, -p.b.local_id))
            removed.append(weakest)
            rest = [p for p in edges if p is not weakest]
            # accounts isolated by the drop become singletons later
            stack.append(rest)
    return out


def _canonical_alignment(alignment: Iterable) -> list[AlignedPair]:
    best: dict = {}
    for item in alignment:
        a, b = item[0], item[1]
        prob = item[2] if len(item) > 2 else 1.0
        p = AlignedPair.make(a, b, prob)
        key = (p.a, p.b)
        if key not in best or p.probability > best[key].probability:
            best[key] = p
    return [best[k] for k in sorted(best)]


def build_global_graph(collection: NetworkCollection, alignment: Iterable) -> GlobalSocialGraph:
    """Persons are connected components of the aligned-pair graph; every observed edge keeps its source."""
    pairs = _canonical_alignment(alignment)
    for p in pairs:
        for ref in (p.a, p.b):
            if not (0 <= ref.network < len(collection) and 0 <= ref.local_id < len(collection[ref.network])):
                raise ValueError(f"aligned account {ref} is not in the collection")
    removed: list[AlignedPair] = []
    groups = _repair(pairs, removed)
    covered = {a for g in groups for a in g}
    groups += [[a] for a in collection.accounts() if a not in covered]
    groups.sort(key=lambda g: g[0])
    persons = [PersonNode(frozenset(g)) for g in groups]
    owner = {a: k for k, g in enumerate(groups) for a in g}
    edges, dropped = [], 0
    for net in collection:
        for u, v in net.sorted_edges():
            p, q = owner[AccountRef(net.id, u)], owner[AccountRef(net.id, v)]
            if p == q:
                dropped += 1
            else:
                edges.append((min(p, q), max(p, q), net.id))
    edges.sort()
    removed.sort()
    return GlobalSocialGraph(persons, edges, dropped, removed)


def check_global_graph(collection: NetworkCollection, graph: GlobalSocialGraph) -> list[str]:
    """Invariant violations of a constructed graph; empty means valid."""
    problems = []
    seen = Counter(a for p in graph.persons for a in p.accounts)
    everyone = set(collection.accounts())
    if set(seen) != everyone or any(c != 1 for c in seen.values()):
        problems.append("persons do not partition the accounts")
    for k, p in enumerate(graph.persons):
        if not _valid(list(p.accounts)):
            problems.append(f"person {k} holds two accounts of one network")
    total = sum(len(n.edges) for n in collection)
    if len(graph.edges) != total - graph.dropped_edges:
        problems.append(f"{len(graph.edges)} multi-edges but {total} observed - {graph.dropped_edges} dropped")
    return problems


# --- crawling ---

Aligner = Callable[[NetworkCollection], Iterable[tuple[AccountRef, AccountRef]]]


@dataclass
class CrawlState:
    """Frontier as a lazy-deletion heap of ``(-credit, insertion, account)``."""

    budget: int
    obtained: list[set[AccountRef]]
    credit: dict[AccountRef, int] = field(default_factory=dict)
    inserted: dict[AccountRef, int] = field(default_factory=dict)
    heap: list = field(default_factory=list)
    processed: set = field(default_factory=set)
    increments: int = 0

    @classmethod
    def empty(cls, n_networks: int, budget: int) -> "CrawlState":
        return cls(budget, [set() for _ in range(n_networks)])

    def crawled(self, ref: AccountRef) -> bool:
        return ref in self.obtained[ref.network]

    def push(self, ref: AccountRef, credit: int = 0):
        if self.crawled(ref):
            return
        if ref not in self.inserted:
            self.inserted[ref] = len(self.inserted)
        self.credit[ref] = self.credit.get(ref, 0) + credit
        heapq.heappush(self.heap, (-self.credit[ref], self.inserted[ref], ref))

    def pop(self) -> AccountRef | None:
        while self.heap:
            neg, _, ref = heapq.heappop(self.heap)
            if self.crawled(ref) or -neg != self.credit.get(ref):
                continue
            return ref
        return None


def crawl_credit_update(state: CrawlState, pair, hidden: NetworkCollection) -> CrawlState:
    """Give one credit to every uncrawled neighbor of both endpoints; repeated pairs are ignored."""
    a, b = AccountRef(*pair[0]), AccountRef(*pair[1])
    key = (a, b) if a < b else (b, a)
    if key in state.processed:
        return state
    state.processed.add(key)
    for ref in key:
        for v in sorted(hidden[ref.network].neighbors(ref.local_id)):
            nb = AccountRef(ref.network, v)
            if not state.crawled(nb):
                state.push(nb, 1)
                state.increments += 1
    return state


def name_aligner(observed: NetworkCollection) -> list[tuple[AccountRef, AccountRef]]:
    """Cheap aligner: a shared strong id, or a normalized name unique in both networks."""
    out = set()
    keys = []
    for net in observed:
        names = Counter(normalize_name(p.name) for p in net.profiles)
        idx: dict = defaultdict(list)
        for i, p in enumerate(net.profiles):
            for f, v in p.strong_ids.items():
                idx[("id", f, v.strip().lower())].append(i)
            n = normalize_name(p.name)
            if names[n] == 1:
                idx[("name", n)].append(i)
        keys.append(idx)
    for i, j in observed.network_pairs():
        for k, left in keys[i].items():
            right = keys[j].get(k)
            if right and len(left) == 1 and len(right) == 1:
                out.add((AccountRef(i, left[0]), AccountRef(j, right[0])))
    return sorted(out)


@dataclass
class CrawlResult:
    obtained: NetworkCollection
    accounts: list[list[AccountRef]]
    order: list[AccountRef]
    overlap: int
    overlap_curve: list[tuple[int, int]]
    refills: list[int]
    alignments: int


def _subcollection(hidden: NetworkCollection, accounts: Sequence[Sequence[AccountRef]]) -> NetworkCollection:
    nets = []
    for net, accs in zip(hidden, accounts):
        b = NetworkBuilder(net.id)
        local = {}
        for ref in accs:
            local[ref.local_id] = b.add_account(net.profiles[ref.local_id])
        for ref in accs:
            for v in net.neighbors(ref.local_id):
                if v in local and ref.local_id < v:
                    b.add_edge(local[ref.local_id], local[v])
        nets.append(b.build())
    return NetworkCollection(nets)


def overlap_count(obtained: Sequence[set[AccountRef]], truth_pairs: Iterable[tuple[AccountRef, AccountRef]]) -> int:
    """True cross-network pairs whose accounts are both obtained."""
    return sum(1 for a, b in truth_pairs if a in obtained[a.network] and b in obtained[b.network])


def crawl_simulate(hidden: NetworkCollection, seeds: Sequence[AccountRef], budget: int, strategy: str = "credit",
                   align_every: float = 50, truth_pairs: Iterable[tuple[AccountRef, AccountRef]] = (),
                   aligner: Aligner | None = None, seed: int = 0) -> CrawlResult:
    """Fetch up to ``budget`` accounts, seeds first, then by credit (ties FIFO) or breadth-first.

    Fetching an account reveals its profile and its edges to already obtained
    accounts. Every ``align_every`` fetches the aligner runs on the obtained
    subnetworks; under the credit strategy each new aligned pair credits the
    uncrawled neighbors of both endpoints. An empty frontier is refilled with a
    uniformly random uncrawled account.
    """
    if strategy not in ("credit", "bfs"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if not (align_every > 0):
        raise ValueError("align_every must be positive")
    aligner = aligner or name_aligner
    truth_pairs = list(truth_pairs)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC4A71]))
    state = CrawlState.empty(len(hidden), max(0, int(budget)))
    order: list[AccountRef] = []
    per_net: list[list[AccountRef]] = [[] for _ in hidden]
    fifo: deque = deque()
    queued: set = set()
    refills: list[int] = []
    curve: list[tuple[int, int]] = []
    n_align = 0
    total = hidden.total_accounts()
    seeds = [AccountRef(*s) for s in seeds]
    for s in seeds:
        if not (0 <= s.network < len(hidden) and 0 <= s.local_id < len(hidden[s.network])):
            raise ValueError(f"seed {s} is not a hidden account")
    pending = deque(dict.fromkeys(seeds))

    def fetch(ref: AccountRef):
        state.obtained[ref.network].add(ref)
        order.append(ref)
        per_net[ref.network].append(ref)
        state.budget -= 1
        for v in sorted(hidden[ref.network].neighbors(ref.local_id)):
            nb = AccountRef(ref.network, v)
            if state.crawled(nb):
                continue
            if strategy == "credit":
                if nb not in state.inserted:
                    state.push(nb, 0)
            elif nb not in queued:
                queued.add(nb)
                fifo.append(nb)

    def next_account() -> AccountRef | None:
        while pending:
            s = pending.popleft()
            if not state.crawled(s):
                return s
        if strategy == "credit":
            ref = state.pop()
        else:
            ref = None
            while fifo:
                cand = fifo.popleft()
                if not state.crawled(cand):
                    ref = cand
                    break
        if ref is None and len(order) < total:
            rest = [a for a in hidden.accounts() if not state.crawled(a)]
            ref = rest[int(rng.integers(len(rest)))]
            refills.append(len(order))
        return ref

    while state.budget > 0 and len(order) < total:
        ref = next_account()
        if ref is None:
            break
        fetch(ref)
        if strategy == "credit" and math.isfinite(align_every) and len(order) % int(align_every) == 0:
            sub = _subcollection(hidden, per_net)
            for a, b in aligner(sub):
                n_align += 1
                ha, hb = per_net[a.network][a.local_id], per_net[b.network][b.local_id]
                crawl_credit_update(state, (ha, hb), hidden)
        if truth_pairs and len(order) % 100 == 0:
            curve.append((len(order), overlap_count(state.obtained, truth_pairs)))
    overlap = overlap_count(state.obtained, truth_pairs)
    curve.append((len(order), overlap))
    return CrawlResult(_subcollection(hidden, per_net), per_net, order, overlap, curve, refills, n_align)


def sample_seeds(hidden: NetworkCollection, per_network: int, seed: int) -> list[AccountRef]:
    """``per_network`` uniformly random accounts from each network, seeded."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED5]))
    out = []
    for net in hidden:
        k = min(per_network, len(net))
        out += [AccountRef(net.id, int(i)) for i in sorted(rng.choice(len(net), size=k, replace=False))]
    return out
