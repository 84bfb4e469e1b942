"""Loopy belief propagation (sum-product) and max-sum on binary factor graphs.

Messages are stored as log-odds, ``log m(1) - log m(0)``, one scalar per
(variable, factor) edge, so every factor kind is updated with closed-form
vectorized expressions instead of table enumeration. Group factors use the
"at most one true" aggregation and cost O(|group|).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import damped_update, tri_max_sum, tri_q, tri_sum_product
from .graph import FactorGraph, NumericalError, Parameters, clamp_arrays

# log-odds magnitude used for observed variables; sigmoid(500) == 1.0 in double
CLAMP = 500.0


@dataclass(frozen=True)
class BPConfig:
    max_iters: int = 200
    damping: float = 0.5
    tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must be in [0, 1)")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class Messages:
    """Variable-to-factor log-odds messages, one array per structural factor kind."""
    corr: np.ndarray
    group: np.ndarray
    tri: np.ndarray

    def copy(self) -> "Messages":
        return Messages(self.corr.copy(), self.group.copy(), self.tri.copy())


@dataclass
class BPResult:
    marginals: np.ndarray
    beliefs: np.ndarray
    converged: bool
    iterations: int
    max_delta: float
    messages: Messages
    expected_statistics: np.ndarray | None = None
    # sum of per-factor Bernoulli variances of each statistic (diagonal Fisher approximation)
    statistic_variance: np.ndarray | None = None

    @property
    def labels(self) -> np.ndarray:
        return (self.beliefs > 0).astype(np.int8)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _log1mexp(x):
    """log(1 - exp(x)) for x <= 0."""
    x = np.minimum(x, 0.0)
    out = np.empty_like(x)
    near = x > -0.6931471805599453
    with np.errstate(divide="ignore"):
        out[near] = np.log(-np.expm1(x[near]))
    out[~near] = np.log1p(-np.exp(x[~near]))
    return out


class _Cache:
    """Index arrays derived once per graph."""

    def __init__(self, g: FactorGraph):
        self.n = g.n_vars
        self.corr_vars = g.pairs.ravel()
        self.tri_vars = g.triangles.ravel()
        self.gvars = g.group_vars
        self.gof = g.group_of
        self.gstart = g.group_ptr[:-1]
        self.gsize = np.diff(g.group_ptr)
        self.has_groups = g.n_groups > 0

    def scatter(self, fc, fg, ft):
        out = np.zeros(self.n)
        if fc.size:
            out += np.bincount(self.corr_vars, weights=fc.ravel(), minlength=self.n)
        if fg.size:
            out += np.bincount(self.gvars, weights=fg, minlength=self.n)
        if ft.size:
            out += np.bincount(self.tri_vars, weights=ft.ravel(), minlength=self.n)
        return out

    def group_sum(self, x):
        return np.add.reduceat(x, self.gstart) if self.has_groups else np.zeros(0)

    def group_max(self, x):
        return np.maximum.reduceat(x, self.gstart) if self.has_groups else np.zeros(0)


def _log_one_plus_exclusive(c: _Cache, l: np.ndarray):
    """Per group member: log(1 + sum_{j != i} exp(l_j)) and the full-group log(1 + sum_j exp(l_j))."""
    M = c.group_max(l)
    Mi = M[c.gof]
    e = np.exp(l - Mi)
    R = c.group_sum(e)
    # the member holding the maximum would cancel catastrophically, so its
    # exclusive sum is recomputed with that entry zeroed
    is_max = l == Mi
    first = np.zeros(len(l), dtype=bool)
    idx = np.flatnonzero(is_max)
    _, pos = np.unique(c.gof[idx], return_index=True)
    first[idx[pos]] = True
    e_wo = np.where(first, 0.0, e)
    R_wo = c.group_sum(e_wo)
    excl = np.where(first, R_wo[c.gof], R[c.gof] - e)
    excl = np.maximum(excl, 0.0)
    with np.errstate(divide="ignore"):
        log_excl = np.logaddexp(-Mi, np.log(excl)) + Mi
        log_full = np.logaddexp(-M, np.log(R)) + M
    return log_excl, log_full


def _sum_product_factors(c: _Cache, p: Parameters, V: Messages):
    # correlation: P(other = 1) weighted by exp(beta)
    if V.corr.size:
        o = V.corr[:, ::-1]
        fc = _softplus(o + p.beta) - _softplus(o)
    else:
        fc = V.corr
    # triangle, in probability space: every term is a sum of non-negative products
    ft = tri_sum_product(V.tri, p.eta) if V.tri.size else V.tri
    # group: A = P(all others 0), B = P(at most one other is 1)
    if V.group.size:
        l = V.group
        sp = _softplus(l)
        S = c.group_sum(sp)
        log_a = -(S[c.gof] - sp)
        log_a = np.minimum(log_a, 0.0)
        log_excl, _ = _log_one_plus_exclusive(c, l)
        log_b = np.minimum(log_a + log_excl, 0.0)
        fg = (np.logaddexp(p.gamma + log_a, _log1mexp(log_a))
              - np.logaddexp(p.gamma + log_b, _log1mexp(log_b)))
    else:
        fg = V.group
    return fc, fg, ft


def _top3(c: _Cache, l: np.ndarray):
    """Largest three values per group, and the member positions holding the top two."""
    order = np.lexsort((np.arange(len(l)), -l, c.gof))
    s1 = c.gstart
    top1 = l[order[s1]]
    top2 = l[order[s1 + 1]]
    has3 = c.gsize >= 3
    top3 = np.full(len(s1), -np.inf)
    top3[has3] = l[order[s1[has3] + 2]]
    return top1, top2, top3, order[s1], order[s1 + 1]


def _max_sum_factors(c: _Cache, p: Parameters, V: Messages):
    if V.corr.size:
        o = V.corr[:, ::-1]
        fc = np.maximum(p.beta + o, 0.0) - np.maximum(o, 0.0)
    else:
        fc = V.corr
    ft = tri_max_sum(V.tri, p.eta) if V.tri.size else V.tri
    if V.group.size:
        l = V.group
        pos = np.maximum(l, 0.0)
        P = c.group_sum(pos)[c.gof] - pos
        top1, top2, top3, at1, at2 = _top3(c, l)
        m = np.arange(len(l))
        t1 = np.where(m == at1[c.gof], top2[c.gof], top1[c.gof])
        t2 = np.where((m == at1[c.gof]) | (m == at2[c.gof]), top3[c.gof], top2[c.gof])
        base = P + np.minimum(0.0, t1)
        m1 = np.maximum(p.gamma, base)
        with np.errstate(invalid="ignore"):
            two = base + np.minimum(0.0, t2)
        two = np.where(np.isfinite(two), two, -np.inf)
        m0 = np.maximum(p.gamma + np.maximum(0.0, t1), two)
        fg = m1 - m0
    else:
        fg = V.group
    return fc, fg, ft


def _initial_messages(g: FactorGraph, prior: np.ndarray) -> Messages:
    return Messages(prior[g.pairs].astype(float), prior[g.group_vars].astype(float), prior[g.triangles].astype(float))


def _check_finite(arrs, it, params):
    bad = sum(int(np.count_nonzero(~np.isfinite(a))) for a in arrs)
    if bad:
        raise NumericalError(
            f"{bad} non-finite messages at iteration {it} "
            f"(beta={params.beta:.4g}, gamma={params.gamma:.4g}, eta={params.eta:.4g}, "
            f"|alpha|max={np.max(np.abs(params.alpha)) if params.alpha.size else 0:.4g})")


def _run(g: FactorGraph, params: Parameters, config: BPConfig, mask, values, init, kernel):
    c = _Cache(g)
    unary = g.unary(params) if g.n_vars else np.zeros(0)
    if not np.all(np.isfinite(unary)):
        raise NumericalError("non-finite local factor scores")
    clamped = np.where(values == 1, CLAMP, -CLAMP)
    prior = np.where(mask, clamped, unary)
    V = init.copy() if init is not None else _initial_messages(g, prior)
    if init is not None and (V.corr.shape != g.pairs.shape or V.group.shape != g.group_vars.shape
                             or V.tri.shape != g.triangles.shape):
        raise ValueError("warm-start messages do not match the graph")
    # flat views: member index, clamped flag and clamp value per message slot
    slots = []
    for name, members in (("corr", g.pairs), ("group", g.group_vars), ("tri", g.triangles)):
        idx = np.ascontiguousarray(members.ravel(), dtype=np.int64)
        fixed, val = mask[idx], clamped[idx].astype(float)
        arr = np.ascontiguousarray(getattr(V, name), dtype=float)
        arr.ravel()[fixed] = val[fixed]
        setattr(V, name, arr)
        slots.append((name, idx, fixed, val))
    d = config.damping
    converged = False
    delta = 0.0
    it = 0
    for it in range(1, config.max_iters + 1):
        F = kernel(c, params, V)
        b = unary + c.scatter(*F)
        _check_finite((b,), it, params)
        delta = 0.0
        for (name, idx, fixed, val), f in zip(slots, F):
            arr = getattr(V, name)
            change, bad = damped_update(arr.reshape(-1), np.ravel(f), b, idx, fixed, val, d)
            if bad:
                _check_finite((arr,), it, params)
            delta = max(delta, change)
        if delta < config.tol:
            converged = True
            break
    F = kernel(c, params, V)
    _check_finite(F, it, params)
    beliefs = unary + c.scatter(*F)
    beliefs = np.where(mask, clamped, beliefs)
    return c, V, beliefs, converged, it, delta


def lbp_marginals(graph: FactorGraph, params: Parameters, config: BPConfig = BPConfig(),
                  mask=None, values=None, init: Messages | None = None,
                  statistics: bool = False) -> BPResult:
    """Sum-product marginals ``P(y_k = 1)``; observed variables are clamped via ``mask``/``values``."""
    mask, values = clamp_arrays(graph.n_vars, mask=mask, values=values)
    c, V, beliefs, conv, it, delta = _run(graph, params, config, mask, values, init, _sum_product_factors)
    marg = np.exp(_log_sigmoid(beliefs))
    marg = np.where(mask, values.astype(float), marg)
    res = BPResult(marg, beliefs, conv, it, delta, V)
    if statistics:
        res.expected_statistics, res.statistic_variance = _expected_statistics(graph, c, params, V, marg)
    return res


def map_assignment(graph: FactorGraph, params: Parameters, config: BPConfig = BPConfig(),
                   mask=None, values=None, init: Messages | None = None) -> BPResult:
    """Max-sum decoding; ``beliefs`` are max-marginal log-odds and label 1 requires a strictly positive one."""
    mask, values = clamp_arrays(graph.n_vars, mask=mask, values=values)
    c, V, beliefs, conv, it, delta = _run(graph, params, config, mask, values, init, _max_sum_factors)
    labels = (beliefs > 0).astype(float)
    return BPResult(labels, beliefs, conv, it, delta, V)


def _expected_statistics(g: FactorGraph, c: _Cache, p: Parameters, V: Messages, marg: np.ndarray):
    """Expected Psi under the factor beliefs at the current messages, and per-factor variance sums."""
    out = np.zeros(g.n_statistics)
    var = np.zeros(g.n_statistics)
    out[:g.n_features] = marg @ g.features
    var[:g.n_features] = (marg * (1.0 - marg)) @ (g.features ** 2)
    if V.corr.size:
        a, b = V.corr[:, 0], V.corr[:, 1]
        top = p.beta + a + b
        z = np.logaddexp(np.logaddexp(0.0, a), np.logaddexp(b, top))
        p11 = np.exp(top - z)
        out[-3] = float(p11.sum())
        var[-3] = float((p11 * (1.0 - p11)).sum())
    if V.group.size:
        l = V.group
        S = c.group_sum(_softplus(l))
        _, log_full = _log_one_plus_exclusive(c, l)
        log_s = np.minimum(-S + log_full, 0.0)
        x = p.gamma + log_s - _log1mexp(log_s)
        ph = np.exp(_log_sigmoid(x))
        out[-2] = float(ph.sum())
        var[-2] = float((ph * (1.0 - ph)).sum())
    if V.tri.size:
        out[-1], var[-1] = tri_q(V.tri, p.eta)
    return out, var
