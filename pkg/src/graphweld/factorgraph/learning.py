"""Parameter learning by gradient ascent, and prediction with the group rule."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bp import BPConfig, Messages, lbp_marginals, map_assignment
from .exact import exact_inference
from .graph import FactorGraph, NumericalError, Parameters, clamp_arrays

log = logging.getLogger(__name__)

PARAM_NAMES = ("beta", "gamma", "eta")
EXACT_LIMIT = 16


@dataclass
class GradientResult:
    gradient: np.ndarray
    observed: np.ndarray
    expected: np.ndarray
    objective: float
    converged: bool
    variance: np.ndarray | None = None
    warm: tuple[Messages | None, Messages | None] = (None, None)


def _engine(graph: FactorGraph, engine: str) -> str:
    if engine == "auto":
        return "exact" if graph.n_vars <= EXACT_LIMIT else "lbp"
    if engine not in ("exact", "lbp"):
        raise ValueError(f"unknown inference engine {engine!r}")
    return engine


def _surrogate(marginals: np.ndarray, mask: np.ndarray, values: np.ndarray) -> float:
    p = np.clip(marginals[mask], 1e-300, 1.0)
    q = np.clip(1.0 - marginals[mask], 1e-300, 1.0)
    return float(np.where(values[mask] == 1, np.log(p), np.log(q)).sum())


def gradient(graph: FactorGraph, params: Parameters, mask, values, config: BPConfig = BPConfig(),
             engine: str = "lbp", warm: tuple[Messages | None, Messages | None] = (None, None)) -> GradientResult:
    """Log-likelihood gradient ``E_clamped[Psi] - E_free[Psi]`` (not normalized).

    With the exact engine ``objective`` is the exact log-likelihood of the
    observed labels; with LBP it is the sum of log marginals of the observed
    labels under the free pass.
    """
    mask, values = clamp_arrays(graph.n_vars, mask=mask, values=values)
    engine = _engine(graph, engine)
    if engine == "exact":
        free = exact_inference(graph, params)
        clamped = exact_inference(graph, params, mask, values)
        return GradientResult(clamped.expected_statistics - free.expected_statistics,
                              clamped.expected_statistics, free.expected_statistics,
                              clamped.log_z - free.log_z, True, free.statistic_variance)
    warm_c, warm_f = warm
    converged = True
    if mask.all():
        observed = graph.statistics(values)
    else:
        rc = lbp_marginals(graph, params, config, mask, values, init=warm_c, statistics=True)
        observed, warm_c, converged = rc.expected_statistics, rc.messages, rc.converged
    rf = lbp_marginals(graph, params, config, init=warm_f, statistics=True)
    return GradientResult(observed - rf.expected_statistics, observed, rf.expected_statistics,
                          _surrogate(rf.marginals, mask, values), converged and rf.converged,
                          rf.statistic_variance, (warm_c, rf.messages))


@dataclass(frozen=True)
class LearnConfig:
    learning_rate: float = 0.05
    epochs: int = 100
    bp: BPConfig = BPConfig()
    engine: str = "auto"
    # per-coordinate step scaling: "fisher" divides by the model variance of
    # each statistic (plus one), "count" by the labeled / factor counts
    normalize: str | None = "fisher"
    frozen: tuple[str, ...] = ()
    tol: float = 0.0
    # halve the rate and retreat to the previous point when the objective drops
    backtrack: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.normalize not in (None, "fisher", "count"):
            raise ValueError(f"unknown normalize mode {self.normalize!r}")
        unknown = set(self.frozen) - set(PARAM_NAMES) - {"alpha"}
        if unknown:
            raise ValueError(f"unknown frozen parameters {sorted(unknown)}")


@dataclass
class LearnResult:
    params: Parameters
    history: list[float] = field(default_factory=list)
    converged_epochs: int = 0
    diverged: bool = False
    message: str = ""


def _freeze_mask(n_features: int, frozen) -> np.ndarray:
    keep = np.ones(n_features + 3)
    if "alpha" in frozen:
        keep[:n_features] = 0.0
    for k, name in enumerate(PARAM_NAMES):
        if name in frozen:
            keep[n_features + k] = 0.0
    return keep


def gradient_scale(graph: FactorGraph, mask) -> np.ndarray:
    counts = [max(1, int(np.count_nonzero(mask)))] * graph.n_features
    counts += [max(1, len(graph.pairs)), max(1, graph.n_groups), max(1, len(graph.triangles))]
    return 1.0 / np.asarray(counts, dtype=float)


def learn(graph: FactorGraph, mask, values, params0: Parameters | None = None,
          config: LearnConfig = LearnConfig()) -> LearnResult:
    """Gradient ascent ``theta <- theta + lr * grad`` on the (approximate) log-likelihood."""
    mask, values = clamp_arrays(graph.n_vars, mask=mask, values=values)
    theta = (params0 or Parameters.zeros(graph.n_features)).copy()
    if theta.alpha.shape != (graph.n_features,):
        raise ValueError("params0 does not match the graph's feature count")
    counts = gradient_scale(graph, mask)
    keep = _freeze_mask(graph.n_features, config.frozen)
    result = LearnResult(theta.copy())
    warm: tuple = (None, None)
    rate = config.learning_rate
    prev: tuple[Parameters, np.ndarray, float] | None = None
    for epoch in range(config.epochs):
        try:
            g = gradient(graph, theta, mask, values, config.bp, config.engine, warm)
        except NumericalError as e:
            g = None
            failure = f"epoch {epoch}: {e}"
        else:
            failure = None
            if not (np.isfinite(g.objective) and np.all(np.isfinite(g.gradient))):
                failure = f"epoch {epoch}: non-finite objective"
        worse = g is not None and prev is not None and g.objective < prev[2]
        if config.backtrack and prev is not None and (failure or worse):
            rate *= 0.5
            log.debug("epoch %d: objective fell, rate -> %g", epoch, rate)
            theta = Parameters.from_vector(prev[0].vector() + rate * prev[1])
            warm = (None, None) if failure else g.warm
            continue
        if failure:
            result.diverged, result.message = True, failure
            log.warning("learning aborted: %s", failure)
            return result
        result.params = theta.copy()
        result.history.append(g.objective)
        result.converged_epochs += int(g.converged)
        log.debug("epoch %d objective %.6f", epoch, g.objective)
        warm = g.warm
        if config.normalize == "fisher":
            scale = 1.0 / (1.0 + g.variance)
        elif config.normalize == "count":
            scale = counts
        else:
            scale = 1.0
        direction = scale * g.gradient * keep
        step = rate * direction
        if config.tol and np.max(np.abs(step)) < config.tol:
            break
        new = Parameters.from_vector(theta.vector() + step)
        if not new.is_finite():
            result.diverged, result.message = True, f"epoch {epoch}: non-finite parameters"
            return result
        prev = (theta.copy(), direction, g.objective)
        theta = new
    else:
        result.params = theta.copy()
    return result


@dataclass
class Prediction:
    labels: np.ndarray
    probabilities: np.ndarray
    map_labels: np.ndarray
    converged: bool


def group_rule(graph: FactorGraph, labels: np.ndarray, probabilities: np.ndarray) -> np.ndarray:
    """Within each group keep only the highest-probability member among those labeled 1."""
    out = labels.copy()
    if not graph.n_groups:
        return out
    gv, gof = graph.group_vars, graph.group_of
    on = labels[gv] == 1
    if not on.any():
        return out
    # rank positive members by (group, -probability, variable id); first per group wins
    idx = np.flatnonzero(on)
    order = idx[np.lexsort((gv[idx], -probabilities[gv[idx]], gof[idx]))]
    first = np.ones(len(order), dtype=bool)
    first[1:] = gof[order[1:]] != gof[order[:-1]]
    losers = gv[order[~first]]
    out[losers] = 0
    return out


def predict(graph: FactorGraph, params: Parameters, config: BPConfig = BPConfig(),
            mask=None, values=None, apply_group_rule: bool = True) -> Prediction:
    mask, values = clamp_arrays(graph.n_vars, mask=mask, values=values)
    if graph.n_vars == 0:
        empty = np.zeros(0)
        return Prediction(empty.astype(np.int8), empty, empty.astype(np.int8), True)
    marg = lbp_marginals(graph, params, config, mask, values)
    mp = map_assignment(graph, params, config, mask, values)
    map_labels = mp.labels
    labels = group_rule(graph, map_labels, marg.marginals) if apply_group_rule else map_labels.copy()
    return Prediction(labels, marg.marginals, map_labels, marg.converged and mp.converged)
