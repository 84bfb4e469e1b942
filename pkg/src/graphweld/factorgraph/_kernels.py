"""Compiled triangle-factor kernels; the numpy versions are the reference and the fallback."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _tri_weights(eta: float) -> tuple[float, float]:
    # (weight of q = 0, weight of q = 1) scaled so the larger one is 1
    return (1.0, math.exp(eta)) if eta <= 0 else (math.exp(-eta), 1.0)


def tri_sum_product_numpy(V: np.ndarray, eta: float) -> np.ndarray:
    P, Q = expit(V), expit(-V)
    w0, w1 = _tri_weights(eta)
    out = np.empty_like(V)
    for k, (a, b) in enumerate(((1, 2), (0, 2), (0, 1))):
        pa, pb, qa, qb = P[:, a], P[:, b], Q[:, a], Q[:, b]
        # y_k = 1 violates iff exactly one other is 1; y_k = 0 violates iff both are
        num = w0 * (pa * qb + qa * pb) + w1 * (qa * qb + pa * pb)
        den = w0 * pa * pb + w1 * (qa + pa * qb)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[:, k] = np.log(num / den)
    return out


def tri_max_sum_numpy(V: np.ndarray, eta: float) -> np.ndarray:
    out = np.empty_like(V)
    for k, (i, j) in enumerate(((1, 2), (0, 2), (0, 1))):
        a, b = V[:, i], V[:, j]
        m1 = np.maximum(eta + np.maximum(0.0, a + b), np.maximum(a, b))
        m0 = np.maximum(eta + np.maximum(0.0, np.maximum(a, b)), a + b)
        out[:, k] = m1 - m0
    return out


def tri_q_numpy(V: np.ndarray, eta: float) -> tuple[float, float]:
    """Sum over triangles of P(q = 1) under the factor beliefs, and of its Bernoulli variance."""
    P, Q = expit(V), expit(-V)
    two = P[:, 0] * P[:, 1] * Q[:, 2] + P[:, 0] * Q[:, 1] * P[:, 2] + Q[:, 0] * P[:, 1] * P[:, 2]
    rest = (Q[:, 0] * Q[:, 1] * Q[:, 2] + P[:, 0] * Q[:, 1] * Q[:, 2] + Q[:, 0] * P[:, 1] * Q[:, 2]
            + Q[:, 0] * Q[:, 1] * P[:, 2] + P[:, 0] * P[:, 1] * P[:, 2])
    w0, w1 = _tri_weights(eta)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = w1 * rest / (w1 * rest + w0 * two)
    return float(q.sum()), float((q * (1.0 - q)).sum())


def damped_update_numpy(V, F, b, idx, fixed, fixed_val, d):
    """In-place ``V <- d V + (1 - d)(b[idx] - F)`` on flat arrays, then re-pin the clamped slots.

    Returns the largest absolute change and the number of non-finite results.
    """
    upd = d * V + (1.0 - d) * (b[idx] - F)
    upd[fixed] = fixed_val[fixed]
    delta = float(np.max(np.abs(upd - V))) if V.size else 0.0
    bad = int(np.count_nonzero(~np.isfinite(upd)))
    V[:] = upd
    return delta, bad


if numba is not None:

    @numba.njit(inline="always")
    def _sig(x):
        # (sigmoid(x), sigmoid(-x)) without cancellation
        if x >= 0.0:
            e = math.exp(-x)
            r = 1.0 / (1.0 + e)
            return r, e * r
        e = math.exp(x)
        r = 1.0 / (1.0 + e)
        return e * r, r

    @numba.njit(inline="always", error_model="numpy")
    def _tri_msg(w0, w1, pa, qa, pb, qb):
        num = w0 * (pa * qb + qa * pb) + w1 * (qa * qb + pa * pb)
        den = w0 * pa * pb + w1 * (qa + pa * qb)
        return math.log(num / den)

    @numba.njit(cache=True, nogil=True, error_model="numpy")
    def _tri_sum_product(V, w0, w1, out):
        for t in range(V.shape[0]):
            p0, q0 = _sig(V[t, 0])
            p1, q1 = _sig(V[t, 1])
            p2, q2 = _sig(V[t, 2])
            out[t, 0] = _tri_msg(w0, w1, p1, q1, p2, q2)
            out[t, 1] = _tri_msg(w0, w1, p0, q0, p2, q2)
            out[t, 2] = _tri_msg(w0, w1, p0, q0, p1, q1)

    @numba.njit(inline="always")
    def _tri_max(eta, a, b):
        m1 = max(eta + max(0.0, a + b), max(a, b))
        m0 = max(eta + max(0.0, max(a, b)), a + b)
        return m1 - m0

    @numba.njit(cache=True, nogil=True)
    def _tri_max_sum(V, eta, out):
        for t in range(V.shape[0]):
            a, b, c = V[t, 0], V[t, 1], V[t, 2]
            out[t, 0] = _tri_max(eta, b, c)
            out[t, 1] = _tri_max(eta, a, c)
            out[t, 2] = _tri_max(eta, a, b)

    @numba.njit(cache=True, nogil=True, error_model="numpy")
    def _tri_q(V, w0, w1):
        total = 0.0
        total_var = 0.0
        for t in range(V.shape[0]):
            p0, q0 = _sig(V[t, 0])
            p1, q1 = _sig(V[t, 1])
            p2, q2 = _sig(V[t, 2])
            two = p0 * p1 * q2 + p0 * q1 * p2 + q0 * p1 * p2
            rest = q0 * q1 * q2 + p0 * q1 * q2 + q0 * p1 * q2 + q0 * q1 * p2 + p0 * p1 * p2
            q = w1 * rest / (w1 * rest + w0 * two)
            total += q
            total_var += q * (1.0 - q)
        return total, total_var

    @numba.njit(cache=True, nogil=True)
    def _damped_update(V, F, b, idx, fixed, fixed_val, d):
        delta = 0.0
        bad = 0
        for k in range(V.shape[0]):
            if fixed[k]:
                u = fixed_val[k]
            else:
                u = d * V[k] + (1.0 - d) * (b[idx[k]] - F[k])
            if not math.isfinite(u):
                bad += 1
            else:
                change = abs(u - V[k])
                if change > delta:
                    delta = change
            V[k] = u
        return delta, bad

    def damped_update(V, F, b, idx, fixed, fixed_val, d):
        if not V.size:
            return 0.0, 0
        delta, bad = _damped_update(V, np.ascontiguousarray(F, dtype=np.float64), b, idx, fixed, fixed_val, float(d))
        return float(delta), int(bad)

    def tri_sum_product(V: np.ndarray, eta: float) -> np.ndarray:
        out = np.empty_like(V)
        w0, w1 = _tri_weights(eta)
        _tri_sum_product(np.ascontiguousarray(V), w0, w1, out)
        return out

    def tri_max_sum(V: np.ndarray, eta: float) -> np.ndarray:
        out = np.empty_like(V)
        _tri_max_sum(np.ascontiguousarray(V), float(eta), out)
        return out

    def tri_q(V: np.ndarray, eta: float) -> tuple[float, float]:
        w0, w1 = _tri_weights(eta)
        total, total_var = _tri_q(np.ascontiguousarray(V), w0, w1)
        return float(total), float(total_var)

else:  # pragma: no cover
    tri_sum_product = tri_sum_product_numpy
    tri_max_sum = tri_max_sum_numpy
    tri_q = tri_q_numpy
    damped_update = damped_update_numpy
