"""End-to-end synthetic experiment: five methods compared on held-out candidates."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import LogisticRegression, calibrate_unm_threshold, crf_baseline, snm, unm
from .candidates import CandidateSet, coverage, generate_candidates, threshold_sweep
from .evaluation import EvalReport, evaluate, format_report, pair_label
from .factorgraph import BPConfig, FactorGraph, LearnConfig, Parameters, learn, predict
from .features import CorrelationStructure, build_segment_model, build_structure, featurize
from .model import NetworkCollection
from .synthgen import GroundTruth, SynthConfig, generate

log = logging.getLogger(__name__)

METHODS = ("SNM", "UNM", "LR", "CRF", "FullModel")
SWEEP_THRESHOLDS = tuple(round(0.70 + 0.05 * k, 2) for k in range(7))


@dataclass(frozen=True)
class BenchmarkConfig:
    threshold: float = 0.8
    labeled_fraction: float = 0.5
    learn: LearnConfig = LearnConfig(learning_rate=1.0, epochs=8, bp=BPConfig(max_iters=30, tol=1e-3))
    bp: BPConfig = BPConfig()
    lr_l2: float = 1e-3
    lr_epochs: int = 500
    unm_threshold: float | None = None
    sweep: bool = True


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(0) if len(X) else np.zeros(X.shape[1])
        sd = X.std(0) if len(X) else np.ones(X.shape[1])
        return cls(mean, np.where(sd > 1e-12, sd, 1.0))

    def design(self, X: np.ndarray) -> np.ndarray:
        """Standardized features with a leading bias column."""
        return np.column_stack([np.ones(len(X)), (X - self.mean) / self.scale])


def build_graph(design: np.ndarray, structure: CorrelationStructure) -> FactorGraph:
    return FactorGraph(design, structure.cst, [g.members for g in structure.mc], structure.lt)


def candidate_labels(candidates: CandidateSet, truth: GroundTruth) -> np.ndarray:
    tp = truth.true_pairs
    return np.fromiter(((p.a, p.b) in tp for p in candidates), dtype=np.int8, count=len(candidates))


def split_labeled(n: int, fraction: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    return rng.random(n) < fraction


@dataclass
class BenchmarkResult:
    reports: dict[str, EvalReport]
    group_order: list[str]
    sweep: list[dict]
    stats: dict
    params: dict[str, Parameters] = field(default_factory=dict)
    # method -> [(a, b, probability)] over the evaluated (unlabeled) candidates
    alignments: dict[str, list] = field(default_factory=dict)
    collection: NetworkCollection | None = None

    def report_text(self) -> str:
        return format_report({m: self.reports[m] for m in METHODS}, self.group_order)

    def f1(self, method: str, group: str = "all") -> float:
        return self.reports[method][group].f1


def run_benchmark(synth: SynthConfig, config: BenchmarkConfig = BenchmarkConfig(),
                  seed: int | None = None) -> BenchmarkResult:
    seed = synth.seed if seed is None else seed
    timings = {}
    t = time.perf_counter()
    _, collection, truth = generate(synth)
    timings["generate"] = time.perf_counter() - t
    return run_on_collection(collection, truth, config, seed, timings)


def run_on_collection(collection: NetworkCollection, truth: GroundTruth,
                      config: BenchmarkConfig = BenchmarkConfig(), seed: int = 0,
                      timings: dict | None = None) -> BenchmarkResult:
    timings = dict(timings or {})
    clock = time.perf_counter
    pairs = collection.network_pairs()
    group_order = [pair_label(i, j) for i, j in pairs] + ["all"]

    t = clock()
    low = min(config.threshold, *SWEEP_THRESHOLDS) if config.sweep else config.threshold
    pool = generate_candidates(collection, low)
    candidates = pool.filter(config.threshold) if low < config.threshold else pool
    sweep = threshold_sweep(pool, truth.true_pairs, SWEEP_THRESHOLDS, pairs) if config.sweep else []
    timings["candidates"] = clock() - t

    t = clock()
    fm = featurize(collection, candidates)
    structure = build_structure(candidates, collection)
    timings["features"] = clock() - t

    y = candidate_labels(candidates, truth)
    labeled = split_labeled(len(candidates), config.labeled_fraction, seed)
    test = ~labeled
    values = np.where(labeled, y, 0).astype(np.int8)
    train_true = {(candidates[k].a, candidates[k].b) for k in np.flatnonzero(labeled & (y == 1))}
    test_truth = set(truth.true_pairs) - train_true

    reports, params, alignments = {}, {}, {}

    def record(name, labels, probs=None):
        ids = np.flatnonzero(test & (labels == 1))
        alignments[name] = [(candidates[k].a, candidates[k].b, 1.0 if probs is None else float(np.clip(probs[k], 0, 1)))
                            for k in ids]
        reports[name] = evaluate([(a, b) for a, b, _ in alignments[name]], test_truth, pairs)

    seg = build_segment_model(collection)
    record("SNM", snm(collection, candidates))
    thr = config.unm_threshold
    if thr is None:
        thr = calibrate_unm_threshold(collection, candidates, seg, np.flatnonzero(labeled), y)
    record("UNM", unm(collection, candidates, seg, thr))

    scaler = Standardizer.fit(fm.values)
    X = scaler.design(fm.values)
    t = clock()
    lr = LogisticRegression(l2=config.lr_l2, epochs=config.lr_epochs).fit(X[labeled], y[labeled])
    record("LR", lr.predict(X), lr.scores(X))
    timings["lr"] = clock() - t

    graph = build_graph(X, structure)
    init = Parameters(lr.weights.copy())

    t = clock()
    crf_fit, crf_pred = crf_baseline(graph, labeled, values, init, config.learn, config.bp)
    record("CRF", crf_pred.labels, crf_pred.probabilities)
    params["CRF"] = crf_fit.params
    timings["crf"] = clock() - t

    t = clock()
    fit = learn(graph, labeled, values, init, config.learn)
    pred = predict(graph, fit.params, config.bp, labeled, values)
    record("FullModel", pred.labels, pred.probabilities)
    params["FullModel"] = fit.params
    timings["full"] = clock() - t

    cov = coverage(candidates, truth.true_pairs)
    pos = int(y.sum())
    stats = {
        "candidates": len(candidates),
        "positives": pos,
        "negative_ratio": (len(candidates) - pos) / pos if pos else float("inf"),
        "coverage": cov.rate,
        "cst": len(structure.cst),
        "mc_groups": len(structure.mc),
        "lt": len(structure.lt),
        "labeled": int(labeled.sum()),
        "unm_threshold": thr,
        "full_diverged": fit.diverged,
        "crf_diverged": crf_fit.diverged,
        "timings": timings,
    }
    log.info("benchmark stats %s", stats)
    return BenchmarkResult(reports, group_order, sweep, stats, params, alignments, collection)
