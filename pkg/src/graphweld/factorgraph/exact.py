"""Brute-force inference by enumerating every assignment; small graphs only."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .graph import FactorGraph, Parameters, clamp_arrays

MAX_EXACT_VARS = 20


def all_assignments(n: int) -> np.ndarray:
    """(2**n, n) array of 0/1 labels; row r is the binary expansion of r, variable 0 most significant."""
    if n > MAX_EXACT_VARS:
        raise ValueError(f"enumeration over {n} variables is too large (limit {MAX_EXACT_VARS})")
    r = np.arange(2 ** n, dtype=np.int64)[:, None]
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)[None, :]
    return ((r >> shifts) & 1).astype(np.int8)


@dataclass
class ExactResult:
    log_z: float
    marginals: np.ndarray
    map_labels: np.ndarray
    map_score: float
    expected_statistics: np.ndarray
    statistic_variance: np.ndarray
    posterior: np.ndarray
    assignments: np.ndarray


def exact_inference(graph: FactorGraph, params: Parameters, mask=None, values=None) -> ExactResult:
    """Exact posterior over assignments consistent with the clamped labels."""
    mask, values = clamp_arrays(graph.n_vars, mask=mask, values=values)
    Y = all_assignments(graph.n_vars)
    if mask.any():
        Y = Y[np.all(Y[:, mask] == values[mask], axis=1)]
    stats = graph.statistics(Y) if graph.n_vars else np.zeros((1, graph.n_statistics))
    scores = stats @ params.vector()
    log_z = float(logsumexp(scores))
    post = np.exp(scores - log_z)
    # ties go to the assignment with fewer ones, then to the lexicographically smallest
    best = np.flatnonzero(scores >= scores.max() - 1e-12 * max(1.0, abs(scores.max())))
    ones = Y[best].sum(1) if graph.n_vars else np.zeros(len(best))
    pick = best[np.lexsort((best, ones))[0]]
    return ExactResult(
        log_z=log_z,
        marginals=post @ Y if graph.n_vars else np.zeros(0),
        map_labels=Y[pick].astype(np.int8),
        map_score=float(scores[pick]),
        expected_statistics=post @ stats,
        statistic_variance=np.maximum(post @ stats ** 2 - (post @ stats) ** 2, 0.0),
        posterior=post,
        assignments=Y,
    )


def log_partition(graph: FactorGraph, params: Parameters) -> float:
    return exact_inference(graph, params).log_z


def exact_log_likelihood(graph: FactorGraph, params: Parameters, mask, values) -> float:
    """log P(observed labels), unobserved variables summed out."""
    return exact_inference(graph, params, mask, values).log_z - log_partition(graph, params)


def exact_gradient(graph: FactorGraph, params: Parameters, mask, values) -> np.ndarray:
    """E_clamped[Psi] - E_free[Psi], un-normalized."""
    return (exact_inference(graph, params, mask, values).expected_statistics
            - exact_inference(graph, params).expected_statistics)
