"""``graphweld`` command line: generate, candidates, featurize, train, align, evaluate,
build-graph, crawl-sim and repro.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import LogisticRegression, SingleClassError
from .benchmark import BenchmarkConfig, Standardizer, build_graph, run_benchmark, split_labeled
from .candidates import DEFAULT_THRESHOLD, generate_candidates, worker_count
from .evaluation import evaluate, format_report, pair_label
from .factorgraph import BPConfig, LearnConfig, NumericalError, Parameters, learn, predict
from .features import build_structure, feature_schema, featurize
from .fileio import (TRUTH, FormatError, IdMap, ModelFile, digest, read_alignment, read_candidates,
                     read_collection, read_features, read_model, read_string_pairs, read_truth, write_alignment, write_candidates,
                     write_collection, write_features, write_global_graph, write_manifest, write_model,
                     write_sweep, write_text)
from .model import AccountRef
from .pipeline import build_global_graph, check_global_graph, crawl_simulate, sample_seeds
from .synthgen import ConfigError, SynthConfig, generate, summary_statistics

log = logging.getLogger("graphweld")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _manifest_path(out: Path) -> Path:
    return out / "run.manifest.txt" if out.is_dir() else out.with_name(out.name + ".manifest.txt")


def _finish(args, out: Path, inputs: list[Path], started: float, extra=()) -> None:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    entries = [("command", args.command), ("version", __version__), ("config", config),
               ("threads", worker_count())]
    entries += [(f"input.{p}", digest(p)) for p in inputs if p.exists()]
    entries += list(extra)
    entries.append(("wall_time_s", f"{time.perf_counter() - started:.3f}"))
    write_manifest(_manifest_path(out), entries)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise DataError(f"{what} {path} does not exist")
    return path


def _load(directory: Path):
    _require(directory / "manifest.txt", "network manifest")
    return read_collection(directory)


def _synth_config(args) -> SynthConfig:
    cfg = SynthConfig.from_file(args.config) if getattr(args, "config", None) else SynthConfig()
    cfg = cfg.from_dict({**cfg.to_dict(), "seed": args.seed})
    cfg.validate()
    return cfg


# --- subcommands ---

def cmd_generate(args) -> int:
    t = time.perf_counter()
    cfg = _synth_config(args)
    world, collection, truth = generate(cfg)
    write_collection(args.out, collection, truth=truth.true_pairs)
    stats = summary_statistics(world, collection, truth)
    write_manifest(args.out / "generation.txt",
                   [("config", cfg.to_dict())] + [(f"stat.{k}", v) for k, v in sorted(stats.items())])
    _finish(args, args.out, [args.config] if args.config else [], t)
    return 0


def cmd_candidates(args) -> int:
    t = time.perf_counter()
    collection, ids = _load(args.input)
    cands = generate_candidates(collection, args.threshold)
    write_candidates(args.out, cands, ids)
    _finish(args, args.out, [args.input], t, [("candidates", len(cands))])
    return 0


def _design_inputs(args, collection, ids):
    cands = read_candidates(_require(args.candidates, "candidates file"), ids)
    if getattr(args, "features", None):
        values, schema = read_features(_require(args.features, "features file"))
        if values.shape[0] != len(cands):
            raise DataError(f"{args.features} has {values.shape[0]} rows for {len(cands)} candidates")
    else:
        fm = featurize(collection, cands)
        values, schema = fm.values, fm.schema
    return cands, values, schema


def cmd_featurize(args) -> int:
    t = time.perf_counter()
    collection, ids = _load(args.input)
    cands = read_candidates(_require(args.candidates, "candidates file"), ids)
    fm = featurize(collection, cands)
    write_features(args.out, fm.values, fm.schema)
    _finish(args, args.out, [args.input, args.candidates], t)
    return 0


def _labels(cands, truth) -> np.ndarray:
    return np.fromiter(((p.a, p.b) in truth for p in cands), dtype=np.int8, count=len(cands))


def _learn_config(args) -> LearnConfig:
    return LearnConfig(learning_rate=args.learning_rate, epochs=args.epochs, bp=BPConfig(max_iters=30, tol=1e-3))


def cmd_train(args) -> int:
    t = time.perf_counter()
    collection, ids = _load(args.input)
    truth = read_truth(_require(args.truth, "truth file"), ids)
    cands, values, schema = _design_inputs(args, collection, ids)
    if schema != feature_schema():
        log.info("non-default feature schema with %d slots", len(schema))
    y = _labels(cands, truth)
    labeled = split_labeled(len(cands), args.labeled_fraction, args.seed)
    scaler = Standardizer.fit(values)
    X = scaler.design(values)
    try:
        lr = LogisticRegression().fit(X[labeled], y[labeled])
    except SingleClassError as e:
        raise DataError(f"labeled candidates hold one class only: {e}") from e
    graph = build_graph(X, build_structure(cands, collection))
    fit = learn(graph, labeled, np.where(labeled, y, 0), Parameters(lr.weights.copy()), _learn_config(args))
    if fit.diverged:
        raise NumericalError(f"learning diverged: {fit.message}")
    write_model(args.out, ModelFile(list(schema), scaler.mean, scaler.scale, fit.params))
    _finish(args, args.out, [args.input, args.candidates, args.truth] + ([args.features] if args.features else []), t,
            [("labeled", int(labeled.sum())), ("objective", fit.history[-1] if fit.history else None)])
    return 0


def cmd_align(args) -> int:
    t = time.perf_counter()
    collection, ids = _load(args.input)
    model = read_model(_require(args.model, "model file"))
    cands, values, schema = _design_inputs(args, collection, ids)
    if list(schema) != model.schema:
        raise DataError("feature schema does not match the model")
    X = Standardizer(model.mean, model.scale).design(values)
    graph = build_graph(X, build_structure(cands, collection))
    mask = values_c = None
    if args.truth:
        truth = read_truth(_require(args.truth, "truth file"), ids)
        mask = split_labeled(len(cands), args.labeled_fraction, args.seed)
        values_c = np.where(mask, _labels(cands, truth), 0)
    pred = predict(graph, model.params, BPConfig(), mask, values_c)
    keep = pred.labels == 1
    if mask is not None and args.exclude_labeled:
        keep &= ~mask
    pairs = [(cands[k].a, cands[k].b, float(min(1.0, max(0.0, pred.probabilities[k])))) for k in np.flatnonzero(keep)]
    write_alignment(args.out, pairs, ids)
    _finish(args, args.out, [args.input, args.model, args.candidates], t,
            [("aligned", len(pairs)), ("bp_converged", pred.converged)])
    return 0


def cmd_evaluate(args) -> int:
    t = time.perf_counter()
    pred_s = read_string_pairs(_require(args.pred, "prediction file"), "alignment")
    true_s = read_string_pairs(_require(args.truth, "truth file"), "truth")
    if args.input:
        _, ids = _load(args.input)
    else:
        # reconstruct an id map from the accounts mentioned in both files
        per: dict[str, set] = {}
        for pair in pred_s + true_s:
            for text in pair:
                net, sep, ext = text.partition(":")
                if not sep:
                    raise FormatError(f"account {text!r} is not of the form network:id")
                per.setdefault(net, set()).add(ext)
        names = sorted(per)
        ids = IdMap(names, [sorted(per[n]) for n in names])
    try:
        pred = [(ids.ref(a), ids.ref(b)) for a, b in pred_s]
        true = [(ids.ref(a), ids.ref(b)) for a, b in true_s]
    except KeyError as e:
        raise DataError(e.args[0]) from e
    k = len(ids.names)
    net_pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    rep = evaluate(pred, true, net_pairs)
    order = [pair_label(i, j) for i, j in net_pairs] + ["all"]
    write_text(args.report, format_report({args.method: rep}, order))
    _finish(args, args.report, [args.pred, args.truth], t,
            [(f"{g}.tp_fp_fn", [rep[g].tp, rep[g].fp, rep[g].fn]) for g in order])
    return 0


def cmd_build_graph(args) -> int:
    t = time.perf_counter()
    collection, ids = _load(args.input)
    alignment = read_alignment(_require(args.alignment, "alignment file"), ids)
    graph = build_global_graph(collection, alignment)
    problems = check_global_graph(collection, graph)
    if problems:
        raise DataError("; ".join(problems))
    args.out.mkdir(parents=True, exist_ok=True)
    write_global_graph(args.out, graph, ids)
    _finish(args, args.out, [args.input, args.alignment], t,
            [("persons", len(graph.persons)), ("multi_edges", len(graph.edges)),
             ("dropped_intra_person_edges", graph.dropped_edges), ("removed_pairs", len(graph.removed_pairs))])
    return 0


def cmd_crawl_sim(args) -> int:
    t = time.perf_counter()
    collection, ids = _load(args.input)
    truth_path = args.input / TRUTH
    truth = read_truth(truth_path, ids) if truth_path.exists() else set()
    seeds = sample_seeds(collection, args.seeds_per_network, args.seed)
    budget = args.budget if args.budget is not None else int(round(args.budget_fraction * collection.total_accounts()))
    res = crawl_simulate(collection, seeds, budget, args.strategy, args.align_every, truth, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    sub_ids = IdMap(ids.names, [[ids.ids[n][r.local_id] for r in accs] for n, accs in enumerate(res.accounts)])
    index = {r: AccountRef(r.network, k) for accs in res.accounts for k, r in enumerate(accs)}
    sub_truth = [(index[a], index[b]) for a, b in truth if a in index and b in index]
    write_collection(args.out / "obtained", res.obtained, sub_ids, truth=sub_truth)
    write_manifest(args.out / "crawl.txt", [
        ("strategy", args.strategy), ("budget", budget), ("fetched", len(res.order)),
        ("overlap", res.overlap), ("per_network", [len(a) for a in res.accounts]),
        ("refills", res.refills), ("aligner_pairs", res.alignments), ("overlap_curve", res.overlap_curve)])
    _finish(args, args.out, [args.input], t, [("overlap", res.overlap)])
    print(f"{args.strategy}\tbudget={budget}\toverlap={res.overlap}")
    return 0


def cmd_repro(args) -> int:
    t = time.perf_counter()
    cfg = _synth_config(args)
    if args.variant == "sparse":
        cfg = cfg.with_sparse_pair((1, 2), 0.1)
    result = run_benchmark(cfg, BenchmarkConfig(), seed=args.seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_text(out / "report.txt", result.report_text())
    write_sweep(out / "sweep.tsv", result.sweep)
    ids = IdMap.default(result.collection)
    write_alignment(out / "alignment.tsv", result.alignments["FullModel"], ids)
    graph = build_global_graph(result.collection, result.alignments["FullModel"])
    write_global_graph(out / "global", graph, ids)
    problems = check_global_graph(result.collection, graph)
    stats = {k: v for k, v in result.stats.items() if k != "timings"}
    write_manifest(out / "result.txt",
                   [("config", cfg.to_dict())] + [(f"stat.{k}", v) for k, v in sorted(stats.items())]
                   + [(f"params.{m}", [p.beta, p.gamma, p.eta]) for m, p in sorted(result.params.items())]
                   + [("global.persons", len(graph.persons)), ("global.multi_edges", len(graph.edges)),
                      ("global.dropped_intra_person_edges", graph.dropped_edges),
                      ("global.removed_pairs", len(graph.removed_pairs)), ("global.problems", problems)])
    _finish(args, out, [args.config] if args.config else [], t,
            [(f"time.{k}", round(v, 3)) for k, v in sorted(result.stats["timings"].items())])
    sys.stdout.write(result.report_text())
    return 0


# --- parser ---

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="graphweld", description="Align user accounts across social networks with a factor graph.")
    p.add_argument("--version", action="version", version=f"graphweld {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_):
        s = sub.add_parser(name, help=help_, description=help_)
        s.set_defaults(func=func)
        return s

    s = add("generate", cmd_generate, "write a seeded synthetic three-network collection and its ground truth")
    s.add_argument("--config", type=Path, help="JSON file of generator settings")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", type=Path, required=True, help="output directory")

    s = add("candidates", cmd_candidates, "block accounts by shared name segments and Jaro-Winkler similarity")
    s.add_argument("--in", dest="input", type=Path, required=True, help="network directory")
    s.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    s.add_argument("--out", type=Path, required=True)

    s = add("featurize", cmd_featurize, "compute local features of each candidate pair")
    s.add_argument("--in", dest="input", type=Path, required=True)
    s.add_argument("--candidates", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)

    s = add("train", cmd_train, "fit the factor graph model on a labeled share of the candidates")
    s.add_argument("--in", dest="input", type=Path, required=True)
    s.add_argument("--candidates", type=Path, required=True)
    s.add_argument("--features", type=Path, help="precomputed features (computed if omitted)")
    s.add_argument("--truth", type=Path, required=True)
    s.add_argument("--labeled-fraction", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=0, help="seed of the labeled split")
    s.add_argument("--epochs", type=int, default=8)
    s.add_argument("--learning-rate", type=float, default=1.0)
    s.add_argument("--out", type=Path, required=True, help="model file")

    s = add("align", cmd_align, "infer an alignment with a trained model")
    s.add_argument("--in", dest="input", type=Path, required=True)
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--candidates", type=Path, required=True)
    s.add_argument("--features", type=Path)
    s.add_argument("--truth", type=Path, help="clamp the labeled split used in training")
    s.add_argument("--labeled-fraction", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--exclude-labeled", action="store_true", help="omit pairs clamped from the labeled split")
    s.add_argument("--out", type=Path, required=True)

    s = add("evaluate", cmd_evaluate, "precision, recall and F1 of an alignment against ground truth")
    s.add_argument("--pred", type=Path, required=True)
    s.add_argument("--truth", type=Path, required=True)
    s.add_argument("--in", dest="input", type=Path, help="network directory (fixes network order)")
    s.add_argument("--method", default="FullModel", help="row label in the report")
    s.add_argument("--report", type=Path, required=True)

    s = add("build-graph", cmd_build_graph, "merge aligned accounts into a global multi-graph of persons")
    s.add_argument("--in", dest="input", type=Path, required=True)
    s.add_argument("--alignment", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)

    s = add("crawl-sim", cmd_crawl_sim, "simulate crawling the networks with credit-based or BFS scheduling")
    s.add_argument("--in", dest="input", type=Path, required=True, help="hidden network directory")
    s.add_argument("--strategy", choices=("credit", "bfs"), default="credit")
    budget = s.add_mutually_exclusive_group()
    budget.add_argument("--budget", type=int)
    budget.add_argument("--budget-fraction", type=float, default=0.2)
    s.add_argument("--align-every", type=float, default=50)
    s.add_argument("--seeds-per-network", type=int, default=3)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", type=Path, required=True)

    s = add("repro", cmd_repro, "run the complete synthetic comparison of all methods")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--config", type=Path, help="JSON file of generator settings")
    s.add_argument("--variant", choices=("default", "sparse"), default="default",
                   help="sparse thins profile evidence between networks 1 and 2")
    s.add_argument("--out", type=Path, required=True)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"graphweld: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FormatError, ConfigError, FileNotFoundError, KeyError, ValueError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"graphweld: {msg}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
