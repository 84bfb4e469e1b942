"""Comparison methods: exact-name matching, unique-name matching, logistic regression, CRF-style model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .candidates import CandidateSet
from .factorgraph import BPConfig, FactorGraph, FactorKind, LearnConfig, Parameters, learn, predict
from .features import SegmentModel, name_uniqueness
from .model import NetworkCollection
from .strings import normalize_name

UNM_DEFAULT_THRESHOLD = 20.0


def _same_name(collection: NetworkCollection, candidates: CandidateSet) -> np.ndarray:
    out = np.zeros(len(candidates), dtype=np.int8)
    for p in candidates:
        if normalize_name(collection.profile(p.a).name) == normalize_name(collection.profile(p.b).name):
            out[p.id] = 1
    return out


def snm(collection: NetworkCollection, candidates: CandidateSet) -> np.ndarray:
    """Label 1 iff the normalized full names are identical."""
    return _same_name(collection, candidates)


def unm(collection: NetworkCollection, candidates: CandidateSet, model: SegmentModel,
        threshold: float = UNM_DEFAULT_THRESHOLD) -> np.ndarray:
    """Same name and that name's uniqueness above ``threshold`` (nats)."""
    same = _same_name(collection, candidates)
    out = np.zeros_like(same)
    for k in np.flatnonzero(same):
        if name_uniqueness(model, collection.profile(candidates[k].a).name) > threshold:
            out[k] = 1
    return out


def calibrate_unm_threshold(collection: NetworkCollection, candidates: CandidateSet, model: SegmentModel,
                            ids: np.ndarray, labels: np.ndarray) -> float:
    """Uniqueness threshold maximizing F1 over the labeled candidates ``ids``."""
    same = _same_name(collection, candidates)
    ids = np.asarray(ids)
    ids = ids[same[ids] == 1]
    if not len(ids):
        return UNM_DEFAULT_THRESHOLD
    u = np.array([name_uniqueness(model, collection.profile(candidates[k].a).name) for k in ids])
    y = np.asarray(labels)[ids]
    total_pos = int(np.asarray(labels).sum())
    best_t, best_f = UNM_DEFAULT_THRESHOLD, -1.0
    for t in np.unique(np.concatenate([[u.min() - 1.0], u])):
        pred = u > t
        tp = int((pred & (y == 1)).sum())
        fp = int((pred & (y == 0)).sum())
        f = 2 * tp / (2 * tp + fp + (total_pos - tp)) if tp else 0.0
        if f > best_f:
            best_t, best_f = float(t), f
    return best_t


class SingleClassError(ValueError):
    pass


@dataclass
class LogisticRegression:
    """L2-regularized logistic regression fit by accelerated full-batch gradient ascent.

    The step size is the inverse of a Lipschitz bound of the gradient and the
    momentum schedule is Nesterov's, so the fit is deterministic and needs no
    tuning. ``X`` should already contain a bias column if one is wanted.
    """
    l2: float = 1e-3
    epochs: int = 500
    threshold: float = 0.5
    weights: np.ndarray | None = None

    def objective(self, X, y, w, sample_weight=None) -> float:
        w_s = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        w_s = w_s / w_s.sum()
        z = X @ w
        ll = y * z - np.logaddexp(0.0, z)
        return float(w_s @ ll - 0.5 * self.l2 * w @ w)

    def fit(self, X: np.ndarray, y: np.ndarray, sample_weight: np.ndarray | None = None) -> "LogisticRegression":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(np.unique(y)) < 2:
            raise SingleClassError("logistic regression needs examples of both classes")
        w_s = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        w_s = w_s / w_s.sum()
        lip = 0.25 * np.linalg.norm(X * np.sqrt(w_s)[:, None], 2) ** 2 + self.l2
        step = 1.0 / lip
        w = np.zeros(X.shape[1])
        v = w.copy()
        t = 1.0
        for _ in range(self.epochs):
            g = X.T @ (w_s * (y - expit(X @ v))) - self.l2 * v
            w_next = v + step * g
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            v = w_next + ((t - 1.0) / t_next) * (w_next - w)
            w, t = w_next, t_next
        self.weights = w
        return self

    def scores(self, X: np.ndarray) -> np.ndarray:
        if self.weights is None:
            raise RuntimeError("model is not fitted")
        return expit(np.asarray(X, dtype=float) @ self.weights)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.scores(X) >= self.threshold).astype(np.int8)


def logistic_regression(X_train, y_train, X_test, l2: float = 1e-3, epochs: int = 500,
                        sample_weight=None) -> tuple[np.ndarray, np.ndarray]:
    m = LogisticRegression(l2=l2, epochs=epochs).fit(X_train, y_train, sample_weight)
    return m.predict(X_test), m.scores(X_test)


def crf_graph(graph: FactorGraph) -> FactorGraph:
    return graph.without(FactorKind.GROUP, FactorKind.TRIANGLE)


def crf_baseline(graph: FactorGraph, mask, values, params0: Parameters | None = None,
                 config: LearnConfig = LearnConfig(), bp: BPConfig | None = None):
    """Local + correlation factors only, gamma and eta frozen at 0, no group rule."""
    g = crf_graph(graph)
    p0 = (params0 or Parameters.zeros(g.n_features)).copy()
    p0.gamma = p0.eta = 0.0
    cfg = LearnConfig(config.learning_rate, config.epochs, config.bp, config.engine, config.normalize,
                      tuple(sorted(set(config.frozen) | {"gamma", "eta"})), config.tol)
    fit = learn(g, mask, values, p0, cfg)
    pred = predict(g, fit.params, bp or config.bp, mask, values, apply_group_rule=False)
    return fit, pred
