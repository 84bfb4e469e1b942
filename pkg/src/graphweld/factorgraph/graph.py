"""Factor graph over binary candidate labels.

Four factor kinds, all log-linear in the parameters:

* local ``f(y_k)``        -> ``alpha . x_k`` when ``y_k = 1``, else 0
* correlation ``g``       -> ``beta`` when both members are labeled 1
* group constraint ``h``  -> ``gamma`` when at most one member is labeled 1
* triangle ``q``          -> ``eta`` unless exactly two members are labeled 1

so the joint log-score of an assignment is ``theta . Psi(Y)`` with ``Psi`` the
summed feature functions.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np


class NumericalError(ArithmeticError):
    pass


class FactorKind(enum.Enum):
    LOCAL = "local"
    CORRELATION = "correlation"
    GROUP = "group"
    TRIANGLE = "triangle"


@dataclass(frozen=True)
class Factor:
    kind: FactorKind
    members: tuple[int, ...]
    features: np.ndarray | None = field(default=None, compare=False)


@dataclass
class Parameters:
    alpha: np.ndarray
    beta: float = 0.0
    gamma: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)

    @classmethod
    def zeros(cls, n_features: int) -> "Parameters":
        return cls(np.zeros(n_features))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.alpha, [self.beta, self.gamma, self.eta]])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "Parameters":
        v = np.asarray(v, dtype=float)
        return cls(v[:-3].copy(), float(v[-3]), float(v[-2]), float(v[-1]))

    def copy(self) -> "Parameters":
        return Parameters(self.alpha.copy(), self.beta, self.gamma, self.eta)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.vector())))


class FactorGraph:
    """Immutable factor graph; factor membership is stored as flat index arrays.

    Parameters
    ----------
    features : (N, D) array
        Local feature vector of each variable.
    pairs : (E, 2) int array
        Correlation factors.
    groups : sequence of index sequences
        Group-constraint factors, each with at least two members.
    triangles : (T, 3) int array
        Triangle factors.
    """

    def __init__(self, features: np.ndarray, pairs=None, groups: Sequence[Sequence[int]] = (), triangles=None):
        features = np.asarray(features, dtype=float)
        if features.ndim != 2:
            features = features.reshape(len(features), -1) if features.size else features.reshape(0, 0)
        self.features = np.ascontiguousarray(features)
        self.n_vars, self.n_features = self.features.shape
        self.pairs = np.asarray(pairs if pairs is not None else np.zeros((0, 2)), dtype=np.int64).reshape(-1, 2)
        self.triangles = np.asarray(triangles if triangles is not None else np.zeros((0, 3)),
                                    dtype=np.int64).reshape(-1, 3)
        groups = [tuple(int(x) for x in g) for g in groups]
        for g in groups:
            if len(g) < 2 or len(set(g)) != len(g):
                raise ValueError(f"group factor needs >= 2 distinct members, got {g}")
        sizes = np.array([len(g) for g in groups], dtype=np.int64)
        self.group_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.group_vars = np.array([x for g in groups for x in g], dtype=np.int64)
        self.group_of = np.repeat(np.arange(len(groups)), sizes)
        for arr, kind in ((self.pairs, "pair"), (self.triangles, "triangle"), (self.group_vars, "group")):
            if arr.size and (arr.min() < 0 or arr.max() >= self.n_vars):
                raise ValueError(f"{kind} factor references a variable outside 0..{self.n_vars - 1}")
        if len(self.pairs) and np.any(self.pairs[:, 0] == self.pairs[:, 1]):
            raise ValueError("correlation factor with repeated member")
        if len(self.triangles) and np.any(np.sort(self.triangles, 1)[:, 1:] == np.sort(self.triangles, 1)[:, :-1]):
            raise ValueError("triangle factor with repeated member")

    @property
    def n_groups(self) -> int:
        return len(self.group_ptr) - 1

    def groups(self) -> list[np.ndarray]:
        return [self.group_vars[self.group_ptr[g]:self.group_ptr[g + 1]] for g in range(self.n_groups)]

    @property
    def n_statistics(self) -> int:
        return self.n_features + 3

    def factors(self) -> Iterator[Factor]:
        for k in range(self.n_vars):
            yield Factor(FactorKind.LOCAL, (k,), self.features[k])
        for a, b in self.pairs:
            yield Factor(FactorKind.CORRELATION, (int(a), int(b)))
        for g in self.groups():
            yield Factor(FactorKind.GROUP, tuple(int(x) for x in g))
        for t in self.triangles:
            yield Factor(FactorKind.TRIANGLE, tuple(int(x) for x in t))

    def without(self, *kinds: FactorKind) -> "FactorGraph":
        """Copy with the given structural factor kinds removed."""
        return FactorGraph(self.features,
                           None if FactorKind.CORRELATION in kinds else self.pairs,
                           () if FactorKind.GROUP in kinds else self.groups(),
                           None if FactorKind.TRIANGLE in kinds else self.triangles)

    def unary(self, params: Parameters) -> np.ndarray:
        if params.alpha.shape != (self.n_features,):
            raise ValueError(f"alpha has shape {params.alpha.shape}, graph has {self.n_features} features")
        return self.features @ params.alpha

    def statistics(self, Y: np.ndarray) -> np.ndarray:
        """Summed feature functions ``Psi``; ``Y`` is (N,) or a batch (B, N) of 0/1 labels."""
        Y = np.asarray(Y, dtype=float)
        batch = Y.ndim == 2
        Y2 = Y if batch else Y[None, :]
        if Y2.shape[1] != self.n_vars:
            raise ValueError(f"assignment covers {Y2.shape[1]} of {self.n_vars} variables")
        out = np.empty((Y2.shape[0], self.n_statistics))
        out[:, :self.n_features] = Y2 @ self.features
        out[:, -3] = (Y2[:, self.pairs[:, 0]] * Y2[:, self.pairs[:, 1]]).sum(1) if len(self.pairs) else 0.0
        if self.n_groups:
            counts = np.add.reduceat(Y2[:, self.group_vars], self.group_ptr[:-1], axis=1)
            out[:, -2] = (counts <= 1).sum(1)
        else:
            out[:, -2] = 0.0
        if len(self.triangles):
            tc = Y2[:, self.triangles].sum(2)
            out[:, -1] = (tc != 2).sum(1)
        else:
            out[:, -1] = 0.0
        return out if batch else out[0]

    def score(self, Y: np.ndarray, params: Parameters) -> np.ndarray | float:
        s = self.statistics(Y) @ params.vector()
        return s if np.ndim(s) else float(s)


def _as_labels(assignment, members: Sequence[int]) -> list[int]:
    try:
        labels = [int(assignment[m]) for m in members]
    except (KeyError, IndexError) as e:
        raise ValueError(f"assignment does not cover factor members {tuple(members)}") from e
    if any(v not in (0, 1) for v in labels):
        raise ValueError(f"labels must be 0/1, got {labels}")
    return labels


def log_potential(factor: Factor, assignment: Mapping[int, int] | Sequence[int], params: Parameters) -> float:
    y = _as_labels(assignment, factor.members)
    if factor.kind is FactorKind.LOCAL:
        return float(params.alpha @ factor.features) if y[0] == 1 else 0.0
    if factor.kind is FactorKind.CORRELATION:
        return params.beta if y[0] == 1 and y[1] == 1 else 0.0
    if factor.kind is FactorKind.GROUP:
        return params.gamma if sum(y) <= 1 else 0.0
    if factor.kind is FactorKind.TRIANGLE:
        return params.eta if sum(y) != 2 else 0.0
    raise ValueError(f"unknown factor kind {factor.kind}")


def joint_log_prob(graph: FactorGraph, assignment: Sequence[int], params: Parameters) -> float:
    """Unnormalized log-probability: sum of all factor log-potentials."""
    y = np.asarray(assignment)
    if y.shape != (graph.n_vars,):
        raise ValueError(f"assignment has shape {y.shape}, expected ({graph.n_vars},)")
    if graph.n_vars == 0:
        return 0.0
    return graph.score(y, params)


def clamp_arrays(n: int, labels: Mapping[int, int] | None = None,
                 mask: np.ndarray | None = None, values: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Normalize observed labels to ``(mask, values)`` arrays of length n."""
    if labels is not None:
        mask = np.zeros(n, dtype=bool)
        values = np.zeros(n, dtype=np.int8)
        for k, v in labels.items():
            mask[k] = True
            values[k] = v
        return mask, values
    if mask is None:
        return np.zeros(n, dtype=bool), np.zeros(n, dtype=np.int8)
    return np.asarray(mask, dtype=bool), np.asarray(values, dtype=np.int8)


def iter_batches(total: int, size: int) -> Iterable[slice]:
    for start in range(0, total, size):
        yield slice(start, min(total, start + size))
